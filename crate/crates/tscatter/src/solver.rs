//! Fixed-point solvers for the scatter and location-scatter functionals.
//!
//! The pure-scatter fit repeats the substitution step
//!
//! ```text
//! B  <-  sum_i w_i u(y_i' B^{-1} y_i) y_i y_i'
//! ```
//!
//! until the relative Frobenius change falls below `tol_step`. The update's
//! fixed point is the unique critical point of the adjusted objective, and
//! the objective is non-increasing along the iteration, which the solver
//! records as a diagnostic trace together with condition numbers.
//!
//! The location-scatter fit lifts the sample one dimension up, runs the
//! pure-scatter solver with `nu' = nu - 1`, and reads `(mu, Sigma)` off the
//! block structure of the solution. At the solution the corner entry is one
//! and the fitted weights average to one; both identities are verified and
//! enforced to `1e-8`.

use crate::calculus;
use crate::domain::{in_u, in_v, THRESHOLD_SLACK};
use crate::error::{Error, Result};
use crate::model::{lift_sample, objective, u_weight, unembed, Sample, TConfig};
use crate::rng::{stream_rng, CTX_MULTISTART};
use crate::symmat::{sym_eigenvalues, PosDefMatrix, SymMatrix};
use rand::Rng;
use rand_distr::StandardNormal;

/// Slack on the structural identities (`corner = 1`, fitted weight sum = 1)
/// that a converged location-scatter fit must satisfy.
pub const STRUCTURAL_TOLERANCE: f64 = 1e-8;

/// Convergence diagnostics of one fixed-point run.
#[derive(Debug, Clone, serde::Serialize)]
pub struct SolveReport {
    pub converged: bool,
    pub iterations: usize,
    /// Frobenius norm of `B - sum_i w_i u(s_i) y_i y_i'` at the final iterate.
    pub fixed_point_residual: f64,
    /// Euclidean norm of the objective gradient at the final iterate.
    pub gradient_norm: f64,
    /// Objective value at each visited iterate, final one included;
    /// non-increasing up to 1e-12 slack per step.
    pub objective_trace: Vec<f64>,
    /// Condition number of each visited iterate, final one included.
    pub condition_number_trace: Vec<f64>,
}

/// Starting point of the iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InitStrategy {
    /// The identity matrix; parameter-free default.
    Identity,
    /// Second-moment matrix regularized by `1e-8 * trace * I`. On a lifted
    /// sample this is the embedding of the sample mean and covariance.
    Covariance,
}

/// Knobs of the fit entry points.
#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    /// Skip the existence-domain pre-check. Failure then surfaces as
    /// `NoConvergence` with a collapsing smallest-eigenvalue trace.
    pub skip_domain_check: bool,
    pub init: InitStrategy,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            skip_domain_check: false,
            init: InitStrategy::Identity,
        }
    }
}

/// Location-scatter fit `(mu, Sigma)` with its structural diagnostics.
#[derive(Debug, Clone, serde::Serialize)]
pub struct LocationScatterEstimate {
    pub mu: Vec<f64>,
    /// Fitted scatter matrix; positive definite unless `degenerate`.
    pub sigma: SymMatrix,
    /// Set by the univariate extension when one atom carries enough mass to
    /// pin the fit at `(atom, 0)`.
    pub degenerate: bool,
    /// Corner entry of the lifted solution; one at an exact fix point.
    pub gamma_check: f64,
    /// Average of the fitted weights `u((y - mu)' Sigma^{-1} (y - mu))`
    /// under the sample; one at an exact fixed point.
    pub weight_sum: f64,
    /// The lifted pure-scatter solution the estimate was read from.
    #[serde(skip)]
    pub lifted: Option<PosDefMatrix>,
    pub report: SolveReport,
}

impl LocationScatterEstimate {
    /// The scatter matrix as a positive-definite matrix; fails when the
    /// estimate is degenerate.
    pub fn sigma_pd(&self) -> Result<PosDefMatrix> {
        PosDefMatrix::new(self.sigma.clone())
    }
}

fn second_moment_init(q: &Sample) -> Result<PosDefMatrix> {
    let d = q.dim();
    let mut m = SymMatrix::zeros(d);
    for (y, w) in q.iter() {
        m.add_outer(y, w);
    }
    let ridge = 1e-8 * m.trace();
    for i in 0..d {
        m.set(i, i, m.get(i, i) + ridge);
    }
    PosDefMatrix::new(m)
}

/// One substitution step: `sum_i w_i u(y_i' B^{-1} y_i) y_i y_i'`.
fn substitution_step(q: &Sample, b: &PosDefMatrix, cfg: &TConfig) -> Result<SymMatrix> {
    let mut next = SymMatrix::zeros(q.dim());
    for (y, w) in q.iter() {
        let s = b.inv_quad_form(y);
        next.add_outer(y, w * u_weight(s, cfg)?);
    }
    Ok(next)
}

/// Pure-scatter fit with default options (domain pre-check on, identity
/// start). See [`fit_scatter_with`].
pub fn fit_scatter(q: &Sample, cfg: &TConfig) -> Result<(PosDefMatrix, SolveReport)> {
    fit_scatter_with(q, cfg, &FitOptions::default(), None)
}

/// Pure-scatter fit of the sample `q`.
///
/// Requires `a0 = nu + d > d`, i.e. any positive `nu`. Unless skipped, the
/// existence domain is checked first and a law outside it is rejected with
/// `DomainViolation` and a witness. `init_override` takes precedence over
/// `options.init`.
pub fn fit_scatter_with(
    q: &Sample,
    cfg: &TConfig,
    options: &FitOptions,
    init_override: Option<&PosDefMatrix>,
) -> Result<(PosDefMatrix, SolveReport)> {
    let d = q.dim();
    if cfg.dim() != d {
        return Err(Error::DimensionError {
            expected: cfg.dim(),
            got: d,
        });
    }
    if !options.skip_domain_check {
        let report = in_u(q, cfg)?;
        if !report.member {
            return Err(Error::DomainViolation(Box::new(report)));
        }
    }

    let mut b = match init_override {
        Some(m) => {
            if m.dim() != d {
                return Err(Error::DimensionError {
                    expected: d,
                    got: m.dim(),
                });
            }
            m.clone()
        }
        None => match options.init {
            InitStrategy::Identity => PosDefMatrix::identity(d),
            InitStrategy::Covariance => second_moment_init(q)?,
        },
    };

    let mut objective_trace = Vec::new();
    let mut condition_trace = Vec::new();
    let mut min_eig_trace = Vec::new();
    let mut iterations = 0;

    for _ in 0..cfg.max_iter {
        objective_trace.push(objective(q, &b, cfg)?);
        let eigs = sym_eigenvalues(b.matrix())?;
        let (min_eig, max_eig) = (eigs[0], eigs[eigs.len() - 1]);
        min_eig_trace.push(min_eig);
        condition_trace.push(max_eig / min_eig);

        let next = substitution_step(q, &b, cfg)?;
        let last_step = next.sub(b.matrix()).frobenius_norm();
        let scale = b.matrix().frobenius_norm();
        iterations += 1;
        b = match PosDefMatrix::new(next) {
            Ok(pd) => pd,
            Err(Error::NotPositiveDefinite { .. }) => {
                // Mass collapsing onto a subspace: the iterates lose rank,
                // which is how a law outside the domain manifests here.
                return Err(Error::NoConvergence {
                    iterations,
                    residual: last_step,
                    min_eigenvalue_trace: min_eig_trace,
                });
            }
            Err(e) => return Err(e),
        };
        if last_step < cfg.tol_step * scale {
            break;
        }
    }
    objective_trace.push(objective(q, &b, cfg)?);
    {
        let eigs = sym_eigenvalues(b.matrix())?;
        min_eig_trace.push(eigs[0]);
        condition_trace.push(eigs[eigs.len() - 1] / eigs[0]);
    }

    let (fp_residual, gradient_norm) = verify_critical_point(q, &b, cfg)?;
    let converged = fp_residual < cfg.tol_fp && gradient_norm < cfg.tol_fp;
    if !converged {
        return Err(Error::NoConvergence {
            iterations,
            residual: fp_residual,
            min_eigenvalue_trace: min_eig_trace,
        });
    }
    Ok((
        b,
        SolveReport {
            converged,
            iterations,
            fixed_point_residual: fp_residual,
            gradient_norm,
            objective_trace,
            condition_number_trace: condition_trace,
        },
    ))
}

/// Location-scatter fit with default options. See
/// [`fit_location_scatter_with`].
pub fn fit_location_scatter(p: &Sample, cfg: &TConfig) -> Result<LocationScatterEstimate> {
    fit_location_scatter_with(p, cfg, &FitOptions::default())
}

/// Fits `(mu, Sigma)` by solving the lifted pure-scatter problem with
/// `nu' = nu - 1` in dimension `d + 1` and unpacking the block solution.
///
/// Requires `nu > 1`. The affine existence domain is checked up front
/// (unless skipped); the lifted linear-subspace check is equivalent and is
/// not repeated. At the solution the corner entry of the lifted matrix and
/// the sample average of the fitted weights must both equal one within
/// [`STRUCTURAL_TOLERANCE`], otherwise the fit is rejected.
pub fn fit_location_scatter_with(
    p: &Sample,
    cfg: &TConfig,
    options: &FitOptions,
) -> Result<LocationScatterEstimate> {
    let lifted_cfg = cfg.lifted()?;
    if cfg.dim() != p.dim() {
        return Err(Error::DimensionError {
            expected: cfg.dim(),
            got: p.dim(),
        });
    }
    if !options.skip_domain_check {
        let report = in_v(p, cfg)?;
        if !report.member {
            return Err(Error::DomainViolation(Box::new(report)));
        }
    }
    let lifted = lift_sample(p);
    let lifted_options = FitOptions {
        skip_domain_check: true,
        init: options.init,
    };
    let (a, report) = fit_scatter_with(&lifted, &lifted_cfg, &lifted_options, None)?;
    let emb = unembed(&a)?;

    let gamma_check = emb.gamma;
    if (gamma_check - 1.0).abs() >= STRUCTURAL_TOLERANCE {
        return Err(Error::InvariantViolation(format!(
            "corner entry of the lifted solution is {gamma_check}, expected 1"
        )));
    }
    let mut weight_sum = 0.0;
    for (y, w) in p.iter() {
        let centered: Vec<f64> = y.iter().zip(&emb.mu).map(|(a, b)| a - b).collect();
        weight_sum += w * u_weight(emb.sigma.inv_quad_form(&centered), cfg)?;
    }
    if (weight_sum - 1.0).abs() >= STRUCTURAL_TOLERANCE {
        return Err(Error::InvariantViolation(format!(
            "fitted weights average to {weight_sum}, expected 1"
        )));
    }
    Ok(LocationScatterEstimate {
        mu: emb.mu,
        sigma: emb.sigma.matrix().clone(),
        degenerate: false,
        gamma_check,
        weight_sum,
        lifted: Some(a),
        report,
    })
}

/// Total location-scale fit on the line.
///
/// When one atom carries mass at least `nu / (nu + 1)` the fit degenerates
/// to that atom with scale zero (such an atom is unique since the mass
/// exceeds one half for `nu > 1`); otherwise the law is inside the existence
/// domain and the regular fit applies. Mass within the domain checker's
/// threshold slack of the cutoff is treated as degenerate, so the two
/// branches cover the line with no gap.
pub fn fit_univariate(p: &Sample, cfg: &TConfig) -> Result<LocationScatterEstimate> {
    if p.dim() != 1 {
        return Err(Error::DimensionError {
            expected: 1,
            got: p.dim(),
        });
    }
    if cfg.dim() != 1 {
        return Err(Error::DimensionError {
            expected: 1,
            got: cfg.dim(),
        });
    }
    let nu = cfg.nu();
    if nu <= 1.0 {
        return Err(Error::ConfigError(format!(
            "univariate fit requires nu > 1, got {nu}"
        )));
    }
    let cutoff = nu / (nu + 1.0) - THRESHOLD_SLACK;
    let heaviest = (0..p.len()).max_by(|&i, &j| p.weight(i).total_cmp(&p.weight(j)));
    if let Some(i) = heaviest {
        if p.weight(i) >= cutoff {
            return Ok(LocationScatterEstimate {
                mu: vec![p.point(i)[0]],
                sigma: SymMatrix::zeros(1),
                degenerate: true,
                gamma_check: 1.0,
                weight_sum: 1.0,
                lifted: None,
                report: SolveReport {
                    converged: true,
                    iterations: 0,
                    fixed_point_residual: 0.0,
                    gradient_norm: 0.0,
                    objective_trace: Vec::new(),
                    condition_number_trace: Vec::new(),
                },
            });
        }
    }
    fit_location_scatter(p, cfg)
}

/// Fixed-point residual and gradient norm of the objective at `b`.
///
/// Both vanish together exactly at the critical point: the residual is the
/// Frobenius norm of `b - sum_i w_i u(s_i) y_i y_i'`, the gradient is the
/// derivative of the objective in the inverse-matrix parameters.
pub fn verify_critical_point(q: &Sample, b: &PosDefMatrix, cfg: &TConfig) -> Result<(f64, f64)> {
    let step = substitution_step(q, b, cfg)?;
    let fp_residual = step.sub(b.matrix()).frobenius_norm();
    let gradient_norm = calculus::gradient(q, b, cfg)?.norm();
    Ok((fp_residual, gradient_norm))
}

/// Runs the scatter fit from `k` random positive-definite starts
/// (`G G' + 0.1 I` with standard normal `G`) and reports whether all runs
/// land on the same matrix within `1e-6` in Frobenius norm.
pub fn multistart_uniqueness_probe(q: &Sample, cfg: &TConfig, k: usize, seed: u64) -> Result<bool> {
    let report = in_u(q, cfg)?;
    if !report.member {
        return Err(Error::DomainViolation(Box::new(report)));
    }
    let d = q.dim();
    let options = FitOptions {
        skip_domain_check: true,
        init: InitStrategy::Identity,
    };
    let mut reference: Option<SymMatrix> = None;
    for j in 0..k {
        let mut rng = stream_rng(seed, j as u64, CTX_MULTISTART);
        let g: Vec<f64> = (0..d * d).map(|_| rng.sample(StandardNormal)).collect();
        let mut init = SymMatrix::from_fn(d, |i, jj| {
            (0..d).map(|l| g[i * d + l] * g[jj * d + l]).sum()
        });
        for i in 0..d {
            init.set(i, i, init.get(i, i) + 0.1);
        }
        let init = PosDefMatrix::new(init)?;
        let (b, _) = fit_scatter_with(q, cfg, &options, Some(&init))?;
        match &reference {
            None => reference = Some(b.matrix().clone()),
            Some(first) => {
                if b.matrix().sub(first).frobenius_norm() >= 1e-6 {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}
