//! Affine maps, moment oracles, and equivariance checks.
//!
//! A location functional is affinely equivariant when `mu(f P) = A mu(P) + v`
//! for `f(x) = A x + v`, and a scatter functional when
//! `Sigma(f P) = A Sigma(P) A'`. The sample mean and covariance satisfy this
//! for arbitrary, even singular, `A`; the fitted t functionals satisfy it for
//! nonsingular maps on their existence domain, which is itself affine
//! invariant. This module provides the push-forward, the moment oracles, and
//! defect measurements for both statements.

use crate::error::{Error, Result};
use crate::model::{Sample, TConfig};
use crate::rng::{stream_rng, CTX_AFFINE_TRIAL};
use crate::solver::fit_location_scatter;
use crate::symmat::SymMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

/// An affine map `x -> A x + v`; `A` may be singular.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct AffineMap {
    dim: usize,
    /// Row-major `d x d` entries of `A`.
    matrix: Vec<f64>,
    shift: Vec<f64>,
}

impl AffineMap {
    pub fn new(matrix_rows: &[Vec<f64>], shift: Vec<f64>) -> Result<Self> {
        let dim = matrix_rows.len();
        if shift.len() != dim {
            return Err(Error::DimensionError {
                expected: dim,
                got: shift.len(),
            });
        }
        let mut matrix = Vec::with_capacity(dim * dim);
        for row in matrix_rows {
            if row.len() != dim {
                return Err(Error::DimensionError {
                    expected: dim,
                    got: row.len(),
                });
            }
            matrix.extend_from_slice(row);
        }
        if matrix.iter().chain(&shift).any(|v| !v.is_finite()) {
            return Err(Error::DomainError("non-finite affine map entry".into()));
        }
        Ok(AffineMap { dim, matrix, shift })
    }

    pub fn identity(dim: usize) -> Self {
        let mut matrix = vec![0.0; dim * dim];
        for i in 0..dim {
            matrix[i * dim + i] = 1.0;
        }
        AffineMap {
            dim,
            matrix,
            shift: vec![0.0; dim],
        }
    }

    /// Pure linear map with zero shift.
    pub fn linear(matrix_rows: &[Vec<f64>]) -> Result<Self> {
        let dim = matrix_rows.len();
        AffineMap::new(matrix_rows, vec![0.0; dim])
    }

    /// Pure translation.
    pub fn translation(shift: Vec<f64>) -> Self {
        let dim = shift.len();
        let mut id = AffineMap::identity(dim);
        id.shift = shift;
        id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix_entry(&self, i: usize, j: usize) -> f64 {
        self.matrix[i * self.dim + j]
    }

    pub fn matrix_rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim)
            .map(|i| self.matrix[i * self.dim..(i + 1) * self.dim].to_vec())
            .collect()
    }

    pub fn shift(&self) -> &[f64] {
        &self.shift
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.dim);
        (0..self.dim)
            .map(|i| {
                self.shift[i]
                    + (0..self.dim)
                        .map(|j| self.matrix[i * self.dim + j] * x[j])
                        .sum::<f64>()
            })
            .collect()
    }

    /// Determinant of the linear part by partial-pivoting elimination.
    pub fn det(&self) -> f64 {
        let d = self.dim;
        let mut m = self.matrix.clone();
        let mut det = 1.0;
        for col in 0..d {
            let pivot_row = (col..d)
                .max_by(|&a, &b| m[a * d + col].abs().total_cmp(&m[b * d + col].abs()))
                .unwrap();
            let pivot = m[pivot_row * d + col];
            if pivot == 0.0 {
                return 0.0;
            }
            if pivot_row != col {
                for j in 0..d {
                    m.swap(col * d + j, pivot_row * d + j);
                }
                det = -det;
            }
            det *= pivot;
            for row in col + 1..d {
                let factor = m[row * d + col] / pivot;
                for j in col..d {
                    m[row * d + j] -= factor * m[col * d + j];
                }
            }
        }
        det
    }

    /// Singularity at working precision: `|det A|` below `1e-12` times the
    /// Hadamard bound on the determinant.
    pub fn is_singular(&self) -> bool {
        let d = self.dim;
        let hadamard: f64 = (0..d)
            .map(|i| {
                (0..d)
                    .map(|j| self.matrix[i * d + j].powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .product();
        self.det().abs() < 1e-12 * hadamard.max(1e-300)
    }
}

/// Image measure of `p` under `f`: points are mapped, weights kept, and
/// coincident images merge with summed weights.
pub fn affine_push(p: &Sample, f: &AffineMap) -> Result<Sample> {
    if f.dim() != p.dim() {
        return Err(Error::DimensionError {
            expected: p.dim(),
            got: f.dim(),
        });
    }
    let points = p.points().iter().map(|x| f.apply(x)).collect();
    Sample::new(points, p.weights().to_vec())
}

/// Weighted mean and weighted second central moment (population
/// convention: total weight in the denominator, which is one).
pub fn sample_mean_cov(x: &Sample) -> (Vec<f64>, SymMatrix) {
    let d = x.dim();
    let mut mean = vec![0.0; d];
    for (pt, w) in x.iter() {
        for i in 0..d {
            mean[i] += w * pt[i];
        }
    }
    let mut cov = SymMatrix::zeros(d);
    for (pt, w) in x.iter() {
        let centered: Vec<f64> = pt.iter().zip(&mean).map(|(a, b)| a - b).collect();
        cov.add_outer(&centered, w);
    }
    (mean, cov)
}

/// Fits `p` and its image under the nonsingular map `f` and returns the
/// equivariance defects
/// `(|mu(fP) - (A mu(P) + v)|, |Sigma(fP) - A Sigma(P) A'|_F)`.
///
/// The existence domain is affine invariant, so `f p` being rejected when
/// `p` was accepted indicates a defect in the checker, not in the data; the
/// resulting `DomainViolation` is passed through.
pub fn check_equivariance(p: &Sample, cfg: &TConfig, f: &AffineMap) -> Result<(f64, f64)> {
    if f.is_singular() {
        return Err(Error::DomainError(
            "equivariance check requires a nonsingular map".into(),
        ));
    }
    let fit_p = fit_location_scatter(p, cfg)?;
    let pushed = affine_push(p, f)?;
    let fit_fp = fit_location_scatter(&pushed, cfg)?;

    let mapped_mu = f.apply(&fit_p.mu);
    let mu_defect = fit_fp
        .mu
        .iter()
        .zip(&mapped_mu)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let conjugated = fit_p.sigma.congruence(&f.matrix);
    let sigma_defect = fit_fp.sigma.sub(&conjugated).frobenius_norm();
    Ok((mu_defect, sigma_defect))
}

/// Defect of the singular-equivariance identity for the covariance oracle:
/// `|cov(f X) - A cov(X) A'|_F` for an arbitrary, possibly singular, map.
pub fn covariance_singular_equivariance_check(x: &Sample, f: &AffineMap) -> Result<f64> {
    let pushed = affine_push(x, f)?;
    let (_, cov_pushed) = sample_mean_cov(&pushed);
    let (_, cov) = sample_mean_cov(x);
    let conjugated = cov.congruence(&f.matrix);
    Ok(cov_pushed.sub(&conjugated).frobenius_norm())
}

/// Draws a random affine map with standard normal entries, redrawing until
/// the linear part is comfortably nonsingular. Deterministic in
/// `(seed, trial)`.
pub fn random_nonsingular_map(dim: usize, seed: u64, trial: u64) -> AffineMap {
    let mut rng = stream_rng(seed, trial, CTX_AFFINE_TRIAL);
    loop {
        let rows: Vec<Vec<f64>> = (0..dim)
            .map(|_| (0..dim).map(|_| rng.sample(StandardNormal)).collect())
            .collect();
        let shift: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let map = AffineMap::new(&rows, shift).expect("finite entries");
        if !map.is_singular() && map.det().abs() > 0.05 {
            return map;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::counterexample::{limits, make_pk, make_qk};
    use approx::assert_relative_eq;

    fn cfg(nu: f64, dim: usize) -> TConfig {
        TConfig::new(nu, dim).unwrap()
    }

    #[test]
    fn push_identity_is_noop() {
        let p = make_pk(1).unwrap();
        let q = affine_push(&p, &AffineMap::identity(2)).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn push_zero_map_collapses() {
        let p = make_pk(1).unwrap();
        let zero = AffineMap::new(&[vec![0.0, 0.0], vec![0.0, 0.0]], vec![2.0, -1.0]).unwrap();
        let q = affine_push(&p, &zero).unwrap();
        assert_eq!(q.len(), 1);
        assert_eq!(q.point(0), &[2.0, -1.0]);
        assert!((q.weight(0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn push_rotation_swaps_axes_of_qk() {
        // a quarter turn maps the four-atom law at k = 1 onto the law with
        // axis weights exchanged
        let q = make_qk(1).unwrap();
        let rot = AffineMap::linear(&[vec![0.0, -1.0], vec![1.0, 0.0]]).unwrap();
        let rotated = affine_push(&q, &rot).unwrap();
        let expected = Sample::new(
            vec![
                vec![0.0, -1.0],
                vec![1.0, 0.0],
                vec![-1.0, 0.0],
                vec![0.0, 1.0],
            ],
            vec![1.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0, 1.0 / 3.0],
        )
        .unwrap();
        assert_eq!(rotated, expected);
    }

    #[test]
    fn mean_cov_oracle_values() {
        let (mean, cov) = sample_mean_cov(&make_qk(1).unwrap());
        assert_eq!(mean, vec![0.0, 0.0]);
        assert_relative_eq!(cov.get(0, 0), 2.0 / 3.0, max_relative = 1e-14);
        assert_relative_eq!(cov.get(1, 1), 1.0 / 3.0, max_relative = 1e-14);
        assert_eq!(cov.get(0, 1), 0.0);

        let (mean, cov) = sample_mean_cov(&Sample::dirac(vec![3.0, -2.0]).unwrap());
        assert_eq!(mean, vec![3.0, -2.0]);
        assert_eq!(cov.frobenius_norm(), 0.0);

        let cross = Sample::uniform(vec![
            vec![1.0, 0.0],
            vec![-1.0, 0.0],
            vec![0.0, 1.0],
            vec![0.0, -1.0],
        ])
        .unwrap();
        let (mean, cov) = sample_mean_cov(&cross);
        assert_eq!(mean, vec![0.0, 0.0]);
        assert_relative_eq!(cov.get(0, 0), 0.5, max_relative = 1e-14);
        assert_relative_eq!(cov.get(1, 1), 0.5, max_relative = 1e-14);
    }

    #[test]
    fn equivariance_identity_and_shift() {
        let p = make_pk(1).unwrap();
        let c = cfg(2.0, 2);
        let (dm, ds) = check_equivariance(&p, &c, &AffineMap::identity(2)).unwrap();
        assert!(dm < 1e-12 && ds < 1e-12);

        let shift = AffineMap::translation(vec![4.0, -3.0]);
        let (dm, ds) = check_equivariance(&p, &c, &shift).unwrap();
        assert!(dm < 1e-8 && ds < 1e-8);
    }

    #[test]
    fn equivariance_random_maps() {
        let p = make_qk(2).unwrap();
        let c = cfg(2.0, 2);
        for trial in 0..10 {
            let f = random_nonsingular_map(2, 17, trial);
            let (dm, ds) = check_equivariance(&p, &c, &f).unwrap();
            assert!(dm < 1e-8 && ds < 1e-7, "trial {trial}: {dm} {ds}");
        }
    }

    #[test]
    fn equivariance_rejects_singular_map() {
        let p = make_pk(1).unwrap();
        let singular = AffineMap::linear(&[vec![1.0, 0.0], vec![2.0, 0.0]]).unwrap();
        assert!(check_equivariance(&p, &cfg(2.0, 2), &singular).is_err());
    }

    #[test]
    fn covariance_singular_equivariance() {
        let x = make_pk(3).unwrap();
        let zero = AffineMap::linear(&[vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap();
        assert_eq!(
            covariance_singular_equivariance_check(&x, &zero).unwrap(),
            0.0
        );

        // rank-1 projector onto the first axis
        let proj = AffineMap::linear(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let defect = covariance_singular_equivariance_check(&x, &proj).unwrap();
        assert!(defect < 1e-12);
        let pushed = affine_push(&x, &proj).unwrap();
        let (_, cov) = sample_mean_cov(&pushed);
        assert_eq!(cov.get(1, 1), 0.0);
        assert_eq!(cov.get(0, 1), 0.0);

        for trial in 0..20 {
            let f = random_nonsingular_map(2, 5, trial);
            let defect = covariance_singular_equivariance_check(&x, &f).unwrap();
            assert!(defect < 1e-12, "trial {trial}: {defect}");
        }
    }

    #[test]
    fn mean_singular_equivariance() {
        let x = make_qk(2).unwrap();
        let proj = AffineMap::new(&[vec![1.0, 0.5], vec![2.0, 1.0]], vec![0.3, -0.7]).unwrap();
        let (mean, _) = sample_mean_cov(&x);
        let (pushed_mean, _) = sample_mean_cov(&affine_push(&x, &proj).unwrap());
        let mapped = proj.apply(&mean);
        for i in 0..2 {
            assert!((pushed_mean[i] - mapped[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn scatter_sequences_separate_in_the_limit() {
        // the two sequences approach the same law but their fitted
        // first-axis scatter entries stay apart by b - a = 1/2 at nu = 2
        let c = cfg(2.0, 2);
        let lim = limits(&c).unwrap();
        let fit_p = fit_location_scatter(&make_pk(100).unwrap(), &c).unwrap();
        let fit_q = fit_location_scatter(&make_qk(100).unwrap(), &c).unwrap();
        assert!((fit_p.sigma.get(0, 0) - lim.a).abs() < 1e-2);
        assert!((fit_q.sigma.get(0, 0) - lim.b).abs() < 1e-2);
        assert!(((fit_q.sigma.get(0, 0) - fit_p.sigma.get(0, 0)) - 0.5).abs() < 1e-2);
    }

    #[test]
    fn fitted_scatter_not_proportional_to_covariance() {
        // covariance diagonal ratio is 2; the fitted ratio b/c differs for
        // every finite nu
        for nu in [1.5, 2.0, 5.0, 25.0] {
            let c = cfg(nu, 2);
            let fit = fit_location_scatter(&make_qk(1).unwrap(), &c).unwrap();
            let ratio = fit.sigma.get(0, 0) / fit.sigma.get(1, 1);
            assert!((ratio - 2.0).abs() > 1e-3, "nu {nu}: ratio {ratio}");
        }
    }
}
