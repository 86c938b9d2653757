//! Monte Carlo validation of the fit's asymptotic normality.
//!
//! For a law `P` inside the existence domain, the scaled errors
//! `sqrt(n) (T(P_n) - T(P))` of fits to i.i.d. resamples approach a centered
//! normal limit. [`mc_normality`] measures this at desk scale: fixed-seed
//! replicates, moment-based normality statistics per coordinate, and the
//! fraction of resamples that stayed inside the domain. The influence
//! functions provide the matching first-order covariance
//! ([`sandwich_covariance`]), and [`gc_diagnostic`] watches the uniform
//! law-of-large-numbers convergence of the objective's per-point terms over
//! a parameter grid.
//!
//! Parameters are flattened as `(mu, upper triangle of Sigma)` throughout.

use crate::calculus::InfluenceOperator;
use crate::domain::tail_condition;
use crate::error::{Error, Result};
use crate::model::{rho, Sample, TConfig};
use crate::rng::{stream_rng, CTX_GC_GRID, CTX_GC_SAMPLE, CTX_MC_REPLICATE};
use crate::solver::{fit_location_scatter, LocationScatterEstimate};
use crate::symmat::{tri_len, PosDefMatrix, SymMatrix};
use rand::distr::weighted::WeightedIndex;
use rand::prelude::*;
use rayon::prelude::*;

/// Moment statistics per flattened coordinate.
#[derive(Debug, Clone, serde::Serialize)]
pub struct NormalityStats {
    pub skewness: Vec<f64>,
    pub excess_kurtosis: Vec<f64>,
}

/// Tail-mass condition evaluated on the input law.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct TailCheck {
    pub radius: f64,
    pub delta: f64,
    pub holds: bool,
}

/// Result of a Monte Carlo normality run.
#[derive(Debug, Clone, serde::Serialize)]
pub struct McReport {
    /// Resample size.
    pub n: usize,
    /// Requested replicate count.
    pub replicates: usize,
    /// Replicates whose resample left the domain or whose fit failed;
    /// excluded from the statistics.
    pub excluded: usize,
    /// Fraction of replicates that produced a fit.
    pub domain_hit_rate: f64,
    /// One row per successful replicate: `sqrt(n) (T(P_n) - T(P))`.
    pub scaled_errors: Vec<Vec<f64>>,
    pub mean_vector: Vec<f64>,
    /// Sample covariance of the rows; absent with fewer than two rows.
    pub covariance_matrix: Option<SymMatrix>,
    /// Absent with fewer than four rows.
    pub normality: Option<NormalityStats>,
    /// Present when a tail check was requested.
    pub tail_check: Option<TailCheck>,
}

/// Optional knobs for [`mc_normality`].
#[derive(Debug, Clone, Copy, Default)]
pub struct McOptions {
    /// Evaluate the tail condition on the input law at `(radius, delta)`.
    pub tail: Option<(f64, f64)>,
}

/// Flattened parameter vector `(mu, vech Sigma)` of an estimate.
pub fn flatten_estimate(estimate: &LocationScatterEstimate) -> Vec<f64> {
    let mut v = estimate.mu.clone();
    v.extend(estimate.sigma.upper_triangle());
    v
}

/// Number of flattened parameters for dimension `d`.
pub fn param_len(dim: usize) -> usize {
    dim + tri_len(dim)
}

fn draw_resample(p: &Sample, n: usize, rng: &mut impl Rng) -> Result<Sample> {
    let weights = WeightedIndex::new(p.weights())
        .map_err(|e| Error::InvalidSample(format!("cannot sample weights: {e}")))?;
    let points: Vec<Vec<f64>> = (0..n)
        .map(|_| p.point(weights.sample(rng)).to_vec())
        .collect();
    Sample::uniform(points)
}

/// Draws `replicates` i.i.d. resamples of size `n` from `p`, fits each, and
/// summarizes the scaled errors against the population fit `T(p)`.
///
/// Deterministic in `seed`: every replicate uses its own counter-based
/// stream and results are merged in replicate order, so the report does not
/// depend on the parallel schedule.
pub fn mc_normality(
    p: &Sample,
    cfg: &TConfig,
    n: usize,
    replicates: usize,
    seed: u64,
    options: &McOptions,
) -> Result<McReport> {
    if n == 0 || replicates == 0 {
        return Err(Error::ConfigError(
            "sample size and replicate count must be positive".into(),
        ));
    }
    let reference = flatten_estimate(&fit_location_scatter(p, cfg)?);
    let sqrt_n = (n as f64).sqrt();

    let rows: Vec<Option<Vec<f64>>> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(seed, r as u64, CTX_MC_REPLICATE);
            let resample = draw_resample(p, n, &mut rng).ok()?;
            match fit_location_scatter(&resample, cfg) {
                Ok(fit) => Some(
                    flatten_estimate(&fit)
                        .iter()
                        .zip(&reference)
                        .map(|(a, b)| sqrt_n * (a - b))
                        .collect(),
                ),
                // out-of-domain or non-converged resamples are excluded
                Err(Error::DomainViolation(_))
                | Err(Error::NoConvergence { .. })
                | Err(Error::InvariantViolation(_)) => None,
                Err(_) => None,
            }
        })
        .collect();

    let scaled_errors: Vec<Vec<f64>> = rows.into_iter().flatten().collect();
    let kept = scaled_errors.len();
    let excluded = replicates - kept;
    if kept == 0 {
        return Err(Error::NoConvergence {
            iterations: 0,
            residual: f64::NAN,
            min_eigenvalue_trace: Vec::new(),
        });
    }

    let p_len = reference.len();
    let mut mean_vector = vec![0.0; p_len];
    for row in &scaled_errors {
        for (m, v) in mean_vector.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean_vector {
        *m /= kept as f64;
    }

    let covariance_matrix = (kept >= 2).then(|| {
        SymMatrix::from_fn(p_len, |i, j| {
            scaled_errors
                .iter()
                .map(|row| (row[i] - mean_vector[i]) * (row[j] - mean_vector[j]))
                .sum::<f64>()
                / (kept - 1) as f64
        })
    });

    let normality = (kept >= 4).then(|| {
        let mut skewness = vec![0.0; p_len];
        let mut excess_kurtosis = vec![0.0; p_len];
        for i in 0..p_len {
            let centered: Vec<f64> = scaled_errors
                .iter()
                .map(|row| row[i] - mean_vector[i])
                .collect();
            let m2 = centered.iter().map(|v| v * v).sum::<f64>() / kept as f64;
            let m3 = centered.iter().map(|v| v * v * v).sum::<f64>() / kept as f64;
            let m4 = centered.iter().map(|v| v * v * v * v).sum::<f64>() / kept as f64;
            skewness[i] = if m2 > 0.0 { m3 / m2.powf(1.5) } else { 0.0 };
            excess_kurtosis[i] = if m2 > 0.0 { m4 / (m2 * m2) - 3.0 } else { 0.0 };
        }
        NormalityStats {
            skewness,
            excess_kurtosis,
        }
    });

    let tail_check = match options.tail {
        Some((radius, delta)) => Some(TailCheck {
            radius,
            delta,
            holds: tail_condition(p, radius, delta, cfg)?,
        }),
        None => None,
    };

    Ok(McReport {
        n,
        replicates,
        excluded,
        domain_hit_rate: kept as f64 / replicates as f64,
        scaled_errors,
        mean_vector,
        covariance_matrix,
        normality,
        tail_check,
    })
}

/// First-order asymptotic covariance assembled from the implicit influence
/// functions: `sum_x P({x}) IF(x) IF(x)'` over the atoms of `p`, in the
/// flattened parameter coordinates.
pub fn sandwich_covariance(p: &Sample, cfg: &TConfig) -> Result<SymMatrix> {
    let operator = InfluenceOperator::new(p, cfg)?;
    let p_len = param_len(p.dim());
    let mut sandwich = SymMatrix::zeros(p_len);
    for (x, w) in p.iter() {
        let influence = operator.influence_at(x)?.flatten();
        sandwich.add_outer(&influence, w);
    }
    Ok(sandwich)
}

/// One row of the uniform-convergence diagnostic.
#[derive(Debug, Clone, serde::Serialize)]
pub struct GcRow {
    pub n: usize,
    /// `sup_theta |P_n h(theta) - P h(theta)|` over the parameter grid.
    pub sup_deviation: f64,
}

/// Per-point objective term at parameters `(mu, Sigma)`:
/// `h(y) = 1/2 log det Sigma + rho((y - mu)' Sigma^{-1} (y - mu)) - rho(y'y)`.
fn h_term(y: &[f64], mu: &[f64], sigma: &PosDefMatrix, cfg: &TConfig) -> Result<f64> {
    let centered: Vec<f64> = y.iter().zip(mu).map(|(a, b)| a - b).collect();
    let s = sigma.inv_quad_form(&centered).max(0.0);
    let s0: f64 = y.iter().map(|v| v * v).sum();
    Ok(0.5 * sigma.log_det() + rho(s, cfg)? - rho(s0, cfg)?)
}

fn expectation_h(sample: &Sample, mu: &[f64], sigma: &PosDefMatrix, cfg: &TConfig) -> Result<f64> {
    let mut acc = 0.0;
    for (y, w) in sample.iter() {
        acc += w * h_term(y, mu, sigma, cfg)?;
    }
    Ok(acc)
}

/// Draws one resample per entry of `n_list` and reports the supremum over a
/// random parameter grid of the gap between resample and population
/// averages of the per-point objective terms.
///
/// The grid holds `grid_size` parameter points drawn uniformly from the
/// ball of the given radius around the fitted `(mu, Sigma)` in the
/// flattened chart; perturbations that leave the positive-definite cone are
/// halved until they return.
pub fn gc_diagnostic(
    p: &Sample,
    cfg: &TConfig,
    radius: f64,
    grid_size: usize,
    n_list: &[usize],
    seed: u64,
) -> Result<Vec<GcRow>> {
    if radius.is_nan() || radius <= 0.0 {
        return Err(Error::DomainError(format!(
            "radius must be positive, got {radius}"
        )));
    }
    if grid_size == 0 {
        return Err(Error::ConfigError("grid size must be positive".into()));
    }
    let fit = fit_location_scatter(p, cfg)?;
    let d = p.dim();
    let p_len = param_len(d);
    let sigma_hat = fit.sigma_pd()?;

    let mut grid: Vec<(Vec<f64>, PosDefMatrix)> = Vec::with_capacity(grid_size);
    for g in 0..grid_size {
        let mut rng = stream_rng(seed, g as u64, CTX_GC_GRID);
        let mut direction: Vec<f64> = (0..p_len)
            .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect();
        let norm = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
        let u: f64 = rng.random();
        let r = radius * u.powf(1.0 / p_len as f64);
        for v in &mut direction {
            *v *= r / norm;
        }
        // halve the perturbation until Sigma stays positive definite
        let mut scale = 1.0;
        let entry = loop {
            let mu: Vec<f64> = (0..d).map(|i| fit.mu[i] + scale * direction[i]).collect();
            let mut sigma = sigma_hat.matrix().clone();
            let mut idx = d;
            for i in 0..d {
                for j in i..d {
                    sigma.set(i, j, sigma.get(i, j) + scale * direction[idx]);
                    idx += 1;
                }
            }
            match PosDefMatrix::new(sigma) {
                Ok(pd) => break (mu, pd),
                Err(_) => scale *= 0.5,
            }
        };
        grid.push(entry);
    }

    let mut rows = Vec::with_capacity(n_list.len());
    for (j, &n) in n_list.iter().enumerate() {
        if n == 0 {
            return Err(Error::ConfigError("sample sizes must be positive".into()));
        }
        let mut rng = stream_rng(seed, j as u64, CTX_GC_SAMPLE);
        let resample = draw_resample(p, n, &mut rng)?;
        let mut sup = 0.0f64;
        for (mu, sigma) in &grid {
            let gap = (expectation_h(&resample, mu, sigma, cfg)?
                - expectation_h(p, mu, sigma, cfg)?)
            .abs();
            sup = sup.max(gap);
        }
        rows.push(GcRow {
            n,
            sup_deviation: sup,
        });
    }
    Ok(rows)
}
