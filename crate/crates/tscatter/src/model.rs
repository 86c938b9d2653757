//! Ingredients of the elliptically symmetric t model.
//!
//! The model is driven by a tail-weight parameter `nu > 0` and dimension `d`.
//! Its two scalar functions are
//!
//! ```text
//! rho(s)      = ((nu + d) / 2) * log((nu + s) / nu)
//! u_weight(s) = (nu + d) / (nu + s)
//! ```
//!
//! with `u = 2 rho'`. The product `s * u(s)` increases strictly to the mass
//! bound `a0 = nu + d`, which governs the existence domains checked by the
//! `domain` module.
//!
//! The adjusted scatter objective for a finitely supported law `Q` and a
//! positive-definite `A` is
//!
//! ```text
//! objective(Q, A) = (1/2) log det A + sum_i w_i [rho(y_i' A^{-1} y_i) - rho(y_i' y_i)]
//! ```
//!
//! The per-point offset `rho(y' y)` (the objective evaluated at the identity)
//! keeps the sum finite without moving the minimizer.
//!
//! Location-scatter on `R^d` reduces to pure scatter on `R^{d+1}`: a triple
//! `(mu, Sigma, gamma)` corresponds to the block matrix
//!
//! ```text
//! A(Sigma, mu, gamma) = gamma * [ Sigma + mu mu'   mu ]
//!                               [ mu'               1 ]
//! ```
//!
//! and a sample is lifted by appending a unit coordinate to every point.

use crate::error::{Error, Result};
use crate::symmat::{PosDefMatrix, SymMatrix};

/// Absolute distance below which two atoms are considered coincident and
/// merged on construction.
pub const MERGE_TOLERANCE: f64 = 1e-12;

/// Slack allowed on the total weight of a sample.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-12;

/// Model configuration: tail-weight `nu`, dimension, and solver tolerances.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct TConfig {
    nu: f64,
    dim: usize,
    /// Relative Frobenius step below which the fixed-point iteration stops.
    pub tol_step: f64,
    /// Residual target that a converged fit must meet.
    pub tol_fp: f64,
    /// Iteration cap for the fixed-point solver.
    pub max_iter: usize,
}

impl TConfig {
    /// Configuration with default solver tolerances
    /// (`tol_step = 1e-12`, `tol_fp = 1e-9`, `max_iter = 1000`).
    pub fn new(nu: f64, dim: usize) -> Result<Self> {
        if !nu.is_finite() || nu <= 0.0 {
            return Err(Error::ConfigError(format!(
                "nu must be a positive finite real, got {nu}"
            )));
        }
        if dim == 0 {
            return Err(Error::ConfigError("dimension must be positive".into()));
        }
        Ok(TConfig {
            nu,
            dim,
            tol_step: 1e-12,
            tol_fp: 1e-9,
            max_iter: 1000,
        })
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// The mass bound `a0 = nu + d`, the supremum of `s * u_weight(s)`.
    pub fn a0(&self) -> f64 {
        self.nu + self.dim as f64
    }

    pub fn with_tolerances(mut self, tol_step: f64, tol_fp: f64) -> Result<Self> {
        if tol_step.is_nan() || tol_step <= 0.0 || tol_fp.is_nan() || tol_fp <= 0.0 {
            return Err(Error::ConfigError("tolerances must be positive".into()));
        }
        self.tol_step = tol_step;
        self.tol_fp = tol_fp;
        Ok(self)
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Result<Self> {
        if max_iter == 0 {
            return Err(Error::ConfigError("max_iter must be positive".into()));
        }
        self.max_iter = max_iter;
        Ok(self)
    }

    /// Configuration of the pure-scatter problem one dimension up that the
    /// location-scatter fit reduces to: `nu' = nu - 1`, dimension `d + 1`.
    /// Requires `nu > 1`; the mass bound `a0` is unchanged.
    pub fn lifted(&self) -> Result<TConfig> {
        if self.nu <= 1.0 {
            return Err(Error::ConfigError(format!(
                "location-scatter requires nu > 1, got {}",
                self.nu
            )));
        }
        Ok(TConfig {
            nu: self.nu - 1.0,
            dim: self.dim + 1,
            tol_step: self.tol_step,
            tol_fp: self.tol_fp,
            max_iter: self.max_iter,
        })
    }
}

/// Finitely supported law on `R^d`: atoms with nonnegative weights summing
/// to one.
///
/// Construction canonicalizes: atoms are sorted lexicographically and atoms
/// closer than [`MERGE_TOLERANCE`] are merged with summed weights. Two
/// descriptions of the same measure therefore compare equal, and integrals
/// against them agree bit for bit.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct Sample {
    dim: usize,
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl Sample {
    /// Weighted sample. Weights must be nonnegative, finite and sum to one
    /// within [`WEIGHT_SUM_TOLERANCE`].
    pub fn new(points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidSample("sample has no atoms".into()));
        }
        if points.len() != weights.len() {
            return Err(Error::DimensionError {
                expected: points.len(),
                got: weights.len(),
            });
        }
        let dim = points[0].len();
        if dim == 0 {
            return Err(Error::InvalidSample(
                "points must have dimension >= 1".into(),
            ));
        }
        for p in &points {
            if p.len() != dim {
                return Err(Error::DimensionError {
                    expected: dim,
                    got: p.len(),
                });
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidSample("non-finite point coordinate".into()));
            }
        }
        for &w in &weights {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::InvalidSample(format!("invalid weight {w}")));
            }
        }
        let total = compensated_sum(&weights);
        if (total - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(Error::InvalidSample(format!(
                "weights sum to {total}, expected 1"
            )));
        }
        let (points, weights) = canonicalize(points, weights);
        Ok(Sample {
            dim,
            points,
            weights,
        })
    }

    /// Uniform empirical law of a point list. Coincident points are merged
    /// and each merged atom receives `count / n` as a single exact division,
    /// so an `m`-fold replicated list produces the identical sample.
    pub fn uniform(points: Vec<Vec<f64>>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidSample("sample has no atoms".into()));
        }
        let n = points.len();
        let ones = vec![1.0; n];
        let dim = points[0].len();
        for p in &points {
            if p.len() != dim {
                return Err(Error::DimensionError {
                    expected: dim,
                    got: p.len(),
                });
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidSample("non-finite point coordinate".into()));
            }
        }
        let (points, counts) = canonicalize(points, ones);
        let weights = counts.iter().map(|&c| c / n as f64).collect();
        Ok(Sample {
            dim,
            points,
            weights,
        })
    }

    /// Single unit atom.
    pub fn dirac(point: Vec<f64>) -> Result<Self> {
        Sample::new(vec![point], vec![1.0])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of distinct atoms.
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i]
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> {
        self.points
            .iter()
            .map(Vec::as_slice)
            .zip(self.weights.iter().copied())
    }

    /// Largest Euclidean norm over the atoms.
    pub fn max_radius(&self) -> f64 {
        self.points.iter().map(|p| norm(p)).fold(0.0, f64::max)
    }

    /// The mixture `(1 - t) self + t other`.
    pub fn mixture(&self, other: &Sample, t: f64) -> Result<Sample> {
        if self.dim != other.dim {
            return Err(Error::DimensionError {
                expected: self.dim,
                got: other.dim,
            });
        }
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::DomainError(format!(
                "mixture parameter must lie in [0, 1], got {t}"
            )));
        }
        let mut points = self.points.clone();
        let mut weights: Vec<f64> = self.weights.iter().map(|w| w * (1.0 - t)).collect();
        points.extend(other.points.iter().cloned());
        weights.extend(other.weights.iter().map(|w| w * t));
        Sample::new(points, weights)
    }

    /// The contaminated law `(1 - t) self + t delta_x`.
    pub fn contaminate(&self, x: &[f64], t: f64) -> Result<Sample> {
        self.mixture(&Sample::dirac(x.to_vec())?, t)
    }
}

/// Neumaier compensated summation; order-stable and accurate enough to keep
/// the weight-sum check from rejecting long uniform weight lists.
fn compensated_sum(values: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for &v in values {
        let t = sum + v;
        comp += if sum.abs() >= v.abs() {
            (sum - t) + v
        } else {
            (v - t) + sum
        };
        sum = t;
    }
    sum + comp
}

fn norm(p: &[f64]) -> f64 {
    p.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Sorts atoms lexicographically and merges clusters closer than
/// [`MERGE_TOLERANCE`], summing their weights.
fn canonicalize(points: Vec<Vec<f64>>, weights: Vec<f64>) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&i, &j| {
        points[i]
            .iter()
            .zip(&points[j])
            .map(|(a, b)| a.total_cmp(b))
            .find(|c| *c != std::cmp::Ordering::Equal)
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut out_points: Vec<Vec<f64>> = Vec::with_capacity(points.len());
    let mut out_weights: Vec<f64> = Vec::with_capacity(points.len());
    for idx in order {
        let p = &points[idx];
        let w = weights[idx];
        // Sorting puts coincident atoms next to each other up to ties in the
        // leading coordinate, so scanning back while the leading coordinate
        // is within tolerance finds every merge partner.
        let mut merged = false;
        for k in (0..out_points.len()).rev() {
            if (out_points[k][0] - p[0]).abs() > MERGE_TOLERANCE {
                break;
            }
            if dist(&out_points[k], p) < MERGE_TOLERANCE {
                out_weights[k] += w;
                merged = true;
                break;
            }
        }
        if !merged {
            out_points.push(p.clone());
            out_weights.push(w);
        }
    }
    (out_points, out_weights)
}

/// Radial part of the adjusted objective:
/// `rho(s) = ((nu + d) / 2) log((nu + s) / nu)`.
pub fn rho(s: f64, cfg: &TConfig) -> Result<f64> {
    if s < 0.0 {
        return Err(Error::DomainError(format!("rho requires s >= 0, got {s}")));
    }
    Ok(0.5 * cfg.a0() * ((cfg.nu() + s) / cfg.nu()).ln())
}

/// Reweighting function `u(s) = (nu + d) / (nu + s)`, equal to `2 rho'(s)`.
pub fn u_weight(s: f64, cfg: &TConfig) -> Result<f64> {
    if s < 0.0 {
        return Err(Error::DomainError(format!(
            "u_weight requires s >= 0, got {s}"
        )));
    }
    Ok(cfg.a0() / (cfg.nu() + s))
}

/// Adjusted scatter objective
/// `(1/2) log det A + sum_i w_i [rho(y_i' A^{-1} y_i) - rho(y_i' y_i)]`.
pub fn objective(q: &Sample, a: &PosDefMatrix, cfg: &TConfig) -> Result<f64> {
    if q.dim() != a.dim() {
        return Err(Error::DimensionError {
            expected: a.dim(),
            got: q.dim(),
        });
    }
    let mut acc = 0.0;
    for (y, w) in q.iter() {
        let s = a.inv_quad_form(y);
        let s0 = y.iter().map(|v| v * v).sum::<f64>();
        acc += w * (rho(s.max(0.0), cfg)? - rho(s0, cfg)?);
    }
    Ok(0.5 * a.log_det() + acc)
}

/// A location-scatter triple `(mu, Sigma, gamma)` together with its
/// block-matrix image `A(Sigma, mu, gamma)` one dimension up.
#[derive(Debug, Clone)]
pub struct Embedding {
    pub mu: Vec<f64>,
    pub sigma: PosDefMatrix,
    pub gamma: f64,
    pub a: PosDefMatrix,
}

impl Embedding {
    pub fn dim(&self) -> usize {
        self.mu.len()
    }
}

/// Builds `A = gamma * [[Sigma + mu mu', mu], [mu', 1]]`.
pub fn embed(mu: &[f64], sigma: &PosDefMatrix, gamma: f64) -> Result<Embedding> {
    let d = sigma.dim();
    if mu.len() != d {
        return Err(Error::DimensionError {
            expected: d,
            got: mu.len(),
        });
    }
    if !gamma.is_finite() || gamma <= 0.0 {
        return Err(Error::DomainError(format!(
            "gamma must be positive, got {gamma}"
        )));
    }
    let a = SymMatrix::from_fn(d + 1, |i, j| {
        let block = if i < d && j < d {
            sigma.get(i, j) + mu[i] * mu[j]
        } else if i < d {
            mu[i]
        } else if j < d {
            mu[j]
        } else {
            1.0
        };
        gamma * block
    });
    Ok(Embedding {
        mu: mu.to_vec(),
        sigma: sigma.clone(),
        gamma,
        a: PosDefMatrix::new(a)?,
    })
}

/// Recovers `(mu, Sigma, gamma)` from a positive-definite `A` of size
/// `d + 1`: `gamma` is the corner entry, `mu` the scaled last column, and
/// `Sigma = A_top / gamma - mu mu'`. Fails with `NotPositiveDefinite` when
/// `A` is outside the image of [`embed`].
pub fn unembed(a: &PosDefMatrix) -> Result<Embedding> {
    let d1 = a.dim();
    if d1 < 2 {
        return Err(Error::DimensionError {
            expected: 2,
            got: d1,
        });
    }
    let d = d1 - 1;
    let gamma = a.get(d, d);
    if gamma <= 0.0 {
        return Err(Error::DomainError(format!(
            "corner entry must be positive, got {gamma}"
        )));
    }
    let mu: Vec<f64> = (0..d).map(|i| a.get(i, d) / gamma).collect();
    let sigma = SymMatrix::from_fn(d, |i, j| a.get(i, j) / gamma - mu[i] * mu[j]);
    Ok(Embedding {
        sigma: PosDefMatrix::new(sigma)?,
        mu,
        gamma,
        a: a.clone(),
    })
}

/// Appends a unit coordinate to every atom; weights are unchanged.
pub fn lift_sample(p: &Sample) -> Sample {
    let points = p
        .points()
        .iter()
        .map(|y| {
            let mut z = y.clone();
            z.push(1.0);
            z
        })
        .collect();
    Sample {
        dim: p.dim() + 1,
        points,
        weights: p.weights().to_vec(),
    }
}

/// Both sides of the lift identity
/// `(y', 1) A^{-1} (y', 1)' = gamma^{-1} (1 + (y - mu)' Sigma^{-1} (y - mu))`.
pub fn quadform_identity_check(y: &[f64], emb: &Embedding) -> (f64, f64) {
    let mut z = y.to_vec();
    z.push(1.0);
    let lhs = emb.a.inv_quad_form(&z);
    let centered: Vec<f64> = y.iter().zip(&emb.mu).map(|(a, b)| a - b).collect();
    let rhs = (1.0 + emb.sigma.inv_quad_form(&centered)) / emb.gamma;
    (lhs, rhs)
}
