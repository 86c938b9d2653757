//! Minimal dense symmetric-matrix kernel.
//!
//! Everything the rest of the crate needs from linear algebra lives here:
//! Cholesky factorization with a scale-relative pivot floor, log-determinants,
//! triangular solves, quadratic forms, and symmetric eigenvalues via cyclic
//! Jacobi sweeps. Matrices are dense and small (desk scale, d up to a few
//! dozen), so no blocked or sparse paths are provided.

use crate::error::{Error, Result};

/// Relative floor for Cholesky pivots: a pivot at or below
/// `PD_TOLERANCE * max diagonal entry` is treated as a semidefinite failure.
pub const PD_TOLERANCE: f64 = 1e-12;

/// Maximum number of cyclic Jacobi sweeps before giving up.
const MAX_JACOBI_SWEEPS: usize = 64;

/// Number of free parameters of a symmetric `d x d` matrix.
pub fn tri_len(dim: usize) -> usize {
    dim * (dim + 1) / 2
}

/// Position of the pair `(i, j)`, `i <= j`, in the row-major upper-triangle
/// ordering `(0,0), (0,1), ..., (0,d-1), (1,1), ...`.
pub fn tri_index(dim: usize, i: usize, j: usize) -> usize {
    debug_assert!(i <= j && j < dim);
    i * dim + j - i * (i + 1) / 2
}

/// Upper-triangle index pairs in the order used by [`tri_index`].
pub fn tri_pairs(dim: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..dim).flat_map(move |i| (i..dim).map(move |j| (i, j)))
}

/// Dense symmetric matrix with full row-major storage.
///
/// Symmetry is structural: all mutation goes through [`SymMatrix::set`],
/// which writes both mirrored entries. Serializes as nested rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl serde::Serialize for SymMatrix {
    fn serialize<S: serde::Serializer>(
        &self,
        serializer: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_seq(
            (0..self.dim).map(|i| self.data[i * self.dim..(i + 1) * self.dim].to_vec()),
        )
    }
}

impl SymMatrix {
    pub fn zeros(dim: usize) -> Self {
        SymMatrix {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = SymMatrix::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = 1.0;
        }
        m
    }

    pub fn diagonal(entries: &[f64]) -> Self {
        let mut m = SymMatrix::zeros(entries.len());
        for (i, &v) in entries.iter().enumerate() {
            m.data[i * m.dim + i] = v;
        }
        m
    }

    /// Builds a matrix from `f(i, j)`, evaluated once per pair `i <= j`.
    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = SymMatrix::zeros(dim);
        for i in 0..dim {
            for j in i..dim {
                let v = f(i, j);
                m.data[i * dim + j] = v;
                m.data[j * dim + i] = v;
            }
        }
        m
    }

    /// Validates a full square array: exact symmetry and finite entries.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimensionError {
                    expected: dim,
                    got: row.len(),
                });
            }
        }
        for i in 0..dim {
            for j in 0..dim {
                let v = rows[i][j];
                if !v.is_finite() {
                    return Err(Error::DomainError(format!(
                        "non-finite matrix entry at ({i}, {j})"
                    )));
                }
                if rows[j][i] != v {
                    return Err(Error::DomainError(format!(
                        "matrix is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(SymMatrix::from_fn(dim, |i, j| rows[i][j]))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.dim + j] = v;
        self.data[j * self.dim + i] = v;
    }

    /// Adds `c * v v'` in place.
    pub fn add_outer(&mut self, v: &[f64], c: f64) {
        debug_assert_eq!(v.len(), self.dim);
        for i in 0..self.dim {
            let ci = c * v[i];
            for j in 0..self.dim {
                self.data[i * self.dim + j] += ci * v[j];
            }
        }
    }

    pub fn scale(&mut self, c: f64) {
        for v in &mut self.data {
            *v *= c;
        }
    }

    pub fn scaled(&self, c: f64) -> SymMatrix {
        let mut m = self.clone();
        m.scale(c);
        m
    }

    pub fn add(&self, other: &SymMatrix) -> SymMatrix {
        debug_assert_eq!(self.dim, other.dim);
        let mut m = self.clone();
        for (a, b) in m.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        m
    }

    pub fn sub(&self, other: &SymMatrix) -> SymMatrix {
        debug_assert_eq!(self.dim, other.dim);
        let mut m = self.clone();
        for (a, b) in m.data.iter_mut().zip(&other.data) {
            *a -= b;
        }
        m
    }

    /// Matrix-vector product.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.dim);
        (0..self.dim)
            .map(|i| {
                let row = &self.data[i * self.dim..(i + 1) * self.dim];
                row.iter().zip(v).map(|(a, b)| a * b).sum()
            })
            .collect()
    }

    /// Quadratic form `y' M y`.
    pub fn quad_form(&self, y: &[f64]) -> f64 {
        debug_assert_eq!(y.len(), self.dim);
        let mut total = 0.0;
        for i in 0..self.dim {
            let mut row = 0.0;
            for j in 0..self.dim {
                row += self.get(i, j) * y[j];
            }
            total += y[i] * row;
        }
        total
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs_diag(&self) -> f64 {
        (0..self.dim)
            .map(|i| self.get(i, i).abs())
            .fold(0.0, f64::max)
    }

    /// Congruence `B M B'` for a general (not necessarily symmetric) `B`
    /// given as row-major `dim x dim` entries.
    pub fn congruence(&self, b: &[f64]) -> SymMatrix {
        let d = self.dim;
        debug_assert_eq!(b.len(), d * d);
        // tmp = B M
        let mut tmp = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                let mut s = 0.0;
                for k in 0..d {
                    s += b[i * d + k] * self.get(k, j);
                }
                tmp[i * d + j] = s;
            }
        }
        SymMatrix::from_fn(d, |i, j| {
            let mut s = 0.0;
            for k in 0..d {
                s += tmp[i * d + k] * b[j * d + k];
            }
            s
        })
    }

    /// Entries flattened over the upper triangle in [`tri_index`] order.
    pub fn upper_triangle(&self) -> Vec<f64> {
        tri_pairs(self.dim).map(|(i, j)| self.get(i, j)).collect()
    }

    /// Inverse of [`SymMatrix::upper_triangle`].
    pub fn from_upper_triangle(dim: usize, entries: &[f64]) -> Self {
        debug_assert_eq!(entries.len(), tri_len(dim));
        SymMatrix::from_fn(dim, |i, j| entries[tri_index(dim, i, j)])
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim)
            .map(|i| self.data[i * self.dim..(i + 1) * self.dim].to_vec())
            .collect()
    }
}

/// Lower-triangular Cholesky factor `L` with `L L' = M`.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    dim: usize,
    lower: Vec<f64>,
}

impl CholeskyFactor {
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.lower[i * self.dim + j]
    }

    /// `2 * sum_i log L_ii`, the log-determinant of the factored matrix.
    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.dim).map(|i| self.get(i, i).ln()).sum::<f64>()
    }

    /// Solves `M x = b` by forward then back substitution.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = self.forward(b);
        // back substitution with L'
        for i in (0..self.dim).rev() {
            let mut s = x[i];
            for j in i + 1..self.dim {
                s -= self.get(j, i) * x[j];
            }
            x[i] = s / self.get(i, i);
        }
        x
    }

    /// Forward substitution `L w = b`.
    fn forward(&self, b: &[f64]) -> Vec<f64> {
        let mut w = b.to_vec();
        for i in 0..self.dim {
            let mut s = w[i];
            for j in 0..i {
                s -= self.get(i, j) * w[j];
            }
            w[i] = s / self.get(i, i);
        }
        w
    }

    /// Quadratic form `y' M^{-1} y` computed as `|L^{-1} y|^2`.
    pub fn inv_quad_form(&self, y: &[f64]) -> f64 {
        self.forward(y).iter().map(|v| v * v).sum()
    }

    /// Reassembles `L L'`.
    pub fn reconstruct(&self) -> SymMatrix {
        SymMatrix::from_fn(self.dim, |i, j| {
            (0..=i.min(j))
                .map(|k| self.get(i, k) * self.get(j, k))
                .sum()
        })
    }

    pub fn lower_rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self.get(i, j)).collect())
            .collect()
    }
}

/// Cholesky factorization with the scale-relative pivot floor.
///
/// The floor is `PD_TOLERANCE * max diagonal entry` of the input; any pivot
/// at or below it yields [`Error::NotPositiveDefinite`].
pub fn cholesky(m: &SymMatrix) -> Result<CholeskyFactor> {
    let dim = m.dim();
    let floor = PD_TOLERANCE * m.max_abs_diag();
    let mut lower = vec![0.0; dim * dim];
    for j in 0..dim {
        for i in j..dim {
            let mut s = m.get(i, j);
            for k in 0..j {
                s -= lower[i * dim + k] * lower[j * dim + k];
            }
            if i == j {
                // NaN pivots (overflow upstream) must fail, not factor
                if s.is_nan() || s <= floor {
                    return Err(Error::NotPositiveDefinite {
                        index: j,
                        pivot: s,
                        floor,
                    });
                }
                lower[j * dim + j] = s.sqrt();
            } else {
                lower[i * dim + j] = s / lower[j * dim + j];
            }
        }
    }
    Ok(CholeskyFactor { dim, lower })
}

/// Symmetric positive-definite matrix with its cached Cholesky factor.
#[derive(Debug, Clone)]
pub struct PosDefMatrix {
    mat: SymMatrix,
    chol: CholeskyFactor,
}

impl PosDefMatrix {
    /// Factorizes on construction; fails if any pivot hits the floor.
    pub fn new(mat: SymMatrix) -> Result<Self> {
        let chol = cholesky(&mat)?;
        Ok(PosDefMatrix { mat, chol })
    }

    pub fn identity(dim: usize) -> Self {
        PosDefMatrix::new(SymMatrix::identity(dim)).expect("identity is positive definite")
    }

    pub fn dim(&self) -> usize {
        self.mat.dim()
    }

    pub fn matrix(&self) -> &SymMatrix {
        &self.mat
    }

    pub fn into_matrix(self) -> SymMatrix {
        self.mat
    }

    pub fn cholesky_factor(&self) -> &CholeskyFactor {
        &self.chol
    }

    pub fn log_det(&self) -> f64 {
        self.chol.log_det()
    }

    /// Solves `M x = v`.
    pub fn solve(&self, v: &[f64]) -> Vec<f64> {
        self.chol.solve(v)
    }

    /// `y' M^{-1} y`.
    pub fn inv_quad_form(&self, y: &[f64]) -> f64 {
        self.chol.inv_quad_form(y)
    }

    /// Dense inverse, assembled column by column from triangular solves.
    pub fn inverse(&self) -> Result<PosDefMatrix> {
        let dim = self.dim();
        let mut cols = Vec::with_capacity(dim);
        let mut e = vec![0.0; dim];
        for j in 0..dim {
            e[j] = 1.0;
            cols.push(self.solve(&e));
            e[j] = 0.0;
        }
        // Symmetrize to wash out the last-ulp asymmetry of separate solves.
        let inv = SymMatrix::from_fn(dim, |i, j| 0.5 * (cols[j][i] + cols[i][j]));
        PosDefMatrix::new(inv)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.mat.get(i, j)
    }
}

/// Eigenvalues and eigenvectors of a symmetric matrix by cyclic Jacobi sweeps.
///
/// Returns eigenvalues in ascending order and eigenvectors as columns of a
/// row-major `dim x dim` array, permuted consistently. Sweeps stop when the
/// off-diagonal Frobenius norm falls below `1e-12 * (1 + |M|_F)`.
pub fn sym_eigen(m: &SymMatrix) -> Result<(Vec<f64>, Vec<f64>)> {
    let dim = m.dim();
    let mut a = m.clone();
    let mut vecs = vec![0.0; dim * dim];
    for i in 0..dim {
        vecs[i * dim + i] = 1.0;
    }
    let tol = 1e-12 * (1.0 + m.frobenius_norm());
    let mut off = off_diag_norm(&a);
    let mut sweeps = 0;
    while off > tol {
        if sweeps >= MAX_JACOBI_SWEEPS {
            return Err(Error::ConvergenceFailure {
                sweeps,
                off_norm: off,
            });
        }
        for p in 0..dim {
            for q in p + 1..dim {
                let apq = a.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let app = a.get(p, p);
                let aqq = a.get(q, q);
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    1.0 / (theta - (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // rotate rows/columns p and q
                for k in 0..dim {
                    if k != p && k != q {
                        let akp = a.get(k, p);
                        let akq = a.get(k, q);
                        a.set(k, p, c * akp - s * akq);
                        a.set(k, q, s * akp + c * akq);
                    }
                }
                a.set(p, p, app - t * apq);
                a.set(q, q, aqq + t * apq);
                a.set(p, q, 0.0);
                for k in 0..dim {
                    let vkp = vecs[k * dim + p];
                    let vkq = vecs[k * dim + q];
                    vecs[k * dim + p] = c * vkp - s * vkq;
                    vecs[k * dim + q] = s * vkp + c * vkq;
                }
            }
        }
        off = off_diag_norm(&a);
        sweeps += 1;
    }
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&i, &j| a.get(i, i).total_cmp(&a.get(j, j)));
    let values: Vec<f64> = order.iter().map(|&i| a.get(i, i)).collect();
    let mut sorted_vecs = vec![0.0; dim * dim];
    for (new_col, &old_col) in order.iter().enumerate() {
        for k in 0..dim {
            sorted_vecs[k * dim + new_col] = vecs[k * dim + old_col];
        }
    }
    Ok((values, sorted_vecs))
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn sym_eigenvalues(m: &SymMatrix) -> Result<Vec<f64>> {
    sym_eigen(m).map(|(values, _)| values)
}

fn off_diag_norm(a: &SymMatrix) -> f64 {
    let dim = a.dim();
    let mut s = 0.0;
    for i in 0..dim {
        for j in i + 1..dim {
            s += 2.0 * a.get(i, j) * a.get(i, j);
        }
    }
    s.sqrt()
}
