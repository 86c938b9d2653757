//! Existence-domain checks for finitely supported laws.
//!
//! A scatter fit in `R^d` with mass bound `a0` exists exactly when no proper
//! linear subspace of dimension `q` carries mass `1 - (d - q)/a0` or more;
//! the location-scatter fit asks the same of affine subspaces. These are
//! exact membership tests: every candidate subspace spanned by atoms is
//! enumerated, so the verdict comes with a witness.

use crate::error::{Error, Result};
use crate::model::{Sample, TConfig};

/// A point is counted as lying in a candidate subspace when its projection
/// residual is below `1e-9 * (1 + |point|)`.
pub const CONTAINMENT_TOLERANCE: f64 = 1e-9;

/// Mass within this distance of the threshold counts as a violation.
pub const THRESHOLD_SLACK: f64 = 1e-12;

/// Upper bound on the number of candidate subsets the exact search will
/// enumerate before refusing with `ExplicitLimitation`.
pub const ENUMERATION_BUDGET: u128 = 1_000_000;

/// Extremal mass found in one subspace dimension.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct DimensionMass {
    /// Subspace dimension searched.
    pub q: usize,
    /// Largest mass carried by any single subspace of dimension `q`.
    pub max_mass: f64,
    /// Membership threshold `1 - (d - q) / a0`.
    pub threshold: f64,
    /// Atom indices lying in the extremal subspace.
    pub witness: Vec<usize>,
}

/// Outcome of a domain-membership check, with per-dimension evidence.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct DomainReport {
    /// True when every dimension stays strictly below its threshold.
    pub member: bool,
    /// Whether affine subspaces (location-scatter) or linear subspaces
    /// through the origin (pure scatter) were searched.
    pub affine: bool,
    /// Mass bound used for the thresholds.
    pub a0: f64,
    pub per_dimension: Vec<DimensionMass>,
}

impl DomainReport {
    /// The dimension entry closest to (or furthest past) its threshold.
    pub fn worst(&self) -> Option<&DimensionMass> {
        self.per_dimension
            .iter()
            .max_by(|a, b| (a.max_mass - a.threshold).total_cmp(&(b.max_mass - b.threshold)))
    }
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut result: u128 = 1;
    for i in 0..k {
        result = result * (n - i) as u128 / (i + 1) as u128;
    }
    result
}

/// Orthonormalized span of the chosen direction vectors (Gram-Schmidt with
/// rank truncation).
fn orthonormal_basis(directions: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for v in directions {
        let mut w = v.clone();
        for b in &basis {
            let c: f64 = w.iter().zip(b).map(|(x, y)| x * y).sum();
            for (wi, bi) in w.iter_mut().zip(b) {
                *wi -= c * bi;
            }
        }
        let n: f64 = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        let scale: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 * (1.0 + scale) {
            for wi in &mut w {
                *wi /= n;
            }
            basis.push(w);
        }
    }
    basis
}

/// Distance from `p` (relative to `origin`) to the span of `basis`.
fn residual(p: &[f64], origin: Option<&[f64]>, basis: &[Vec<f64>]) -> f64 {
    let mut w: Vec<f64> = match origin {
        Some(o) => p.iter().zip(o).map(|(a, b)| a - b).collect(),
        None => p.to_vec(),
    };
    for b in basis {
        let c: f64 = w.iter().zip(b).map(|(x, y)| x * y).sum();
        for (wi, bi) in w.iter_mut().zip(b) {
            *wi -= c * bi;
        }
    }
    w.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn point_norm(p: &[f64]) -> f64 {
    p.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Iterates over all `k`-subsets of `0..n` in lexicographic order.
fn for_each_subset(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    if k == 0 || k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        // advance
        let mut i = k;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if idx[i] != i + n - k {
                break;
            }
            if i == 0 {
                return;
            }
        }
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Largest total weight carried by a single `q`-dimensional affine (if
/// `affine`) or linear (otherwise) subspace, together with the indices of
/// the atoms the extremal subspace contains.
///
/// Candidates are the spans of subsets of `q + 1` atoms (affine) or of `q`
/// atoms together with the origin (linear); a maximizing subspace of this
/// form always exists because the extremal subspace can be replaced by the
/// span of the atoms it contains.
pub fn max_subspace_mass(p: &Sample, q: usize, affine: bool) -> Result<(f64, Vec<usize>)> {
    let d = p.dim();
    if q >= d {
        return Err(Error::DimensionError {
            expected: d - 1,
            got: q,
        });
    }
    let n = p.len();
    let subset_size = if affine { q + 1 } else { q };

    // Linear q = 0 is the origin itself; no enumeration needed.
    if subset_size == 0 {
        let mut mass = 0.0;
        let mut witness = Vec::new();
        for (i, (y, w)) in p.iter().enumerate() {
            if point_norm(y) < CONTAINMENT_TOLERANCE * (1.0 + point_norm(y)) {
                mass += w;
                witness.push(i);
            }
        }
        return Ok((mass, witness));
    }

    let k = subset_size.min(n);
    let candidates = binomial(n, k);
    if candidates > ENUMERATION_BUDGET {
        return Err(Error::ExplicitLimitation {
            candidates,
            budget: ENUMERATION_BUDGET,
        });
    }

    let mut best_mass = f64::NEG_INFINITY;
    let mut best_witness: Vec<usize> = Vec::new();
    for_each_subset(n, k, |subset| {
        let (origin, directions): (Option<&[f64]>, Vec<Vec<f64>>) = if affine {
            let o = p.point(subset[0]);
            (
                Some(o),
                subset[1..]
                    .iter()
                    .map(|&i| p.point(i).iter().zip(o).map(|(a, b)| a - b).collect())
                    .collect(),
            )
        } else {
            (None, subset.iter().map(|&i| p.point(i).to_vec()).collect())
        };
        let basis = orthonormal_basis(&directions);
        let mut mass = 0.0;
        let mut witness = Vec::new();
        for (i, (y, w)) in p.iter().enumerate() {
            if residual(y, origin, &basis) < CONTAINMENT_TOLERANCE * (1.0 + point_norm(y)) {
                mass += w;
                witness.push(i);
            }
        }
        if mass > best_mass {
            best_mass = mass;
            best_witness = witness;
        }
    });
    Ok((best_mass, best_witness))
}

fn membership(p: &Sample, cfg: &TConfig, affine: bool) -> Result<DomainReport> {
    let d = p.dim();
    let a0 = cfg.a0();
    let mut per_dimension = Vec::with_capacity(d);
    let mut member = true;
    for q in 0..d {
        let threshold = 1.0 - (d - q) as f64 / a0;
        let (max_mass, witness) = max_subspace_mass(p, q, affine)?;
        if max_mass >= threshold - THRESHOLD_SLACK {
            member = false;
        }
        per_dimension.push(DimensionMass {
            q,
            max_mass,
            threshold,
            witness,
        });
    }
    Ok(DomainReport {
        member,
        affine,
        a0,
        per_dimension,
    })
}

/// Membership in the location-scatter existence domain: every affine
/// subspace of dimension `q < d` must carry mass strictly below
/// `1 - (d - q) / a0`. Requires `a0 > d + 1`.
pub fn in_v(p: &Sample, cfg: &TConfig) -> Result<DomainReport> {
    if cfg.dim() != p.dim() {
        return Err(Error::DimensionError {
            expected: cfg.dim(),
            got: p.dim(),
        });
    }
    if cfg.a0() <= p.dim() as f64 + 1.0 {
        return Err(Error::ConfigError(format!(
            "affine membership needs a0 > d + 1 (a0 = {}, d = {})",
            cfg.a0(),
            p.dim()
        )));
    }
    membership(p, cfg, true)
}

/// Membership in the pure-scatter existence domain: every proper linear
/// subspace of dimension `q <= d - 1` must carry mass strictly below
/// `1 - (d - q) / a0`. Requires `a0 > d`.
pub fn in_u(q: &Sample, cfg: &TConfig) -> Result<DomainReport> {
    if cfg.dim() != q.dim() {
        return Err(Error::DimensionError {
            expected: cfg.dim(),
            got: q.dim(),
        });
    }
    if cfg.a0() <= q.dim() as f64 {
        return Err(Error::ConfigError(format!(
            "linear membership needs a0 > d (a0 = {}, d = {})",
            cfg.a0(),
            q.dim()
        )));
    }
    membership(q, cfg, false)
}

/// Tail-mass condition: total weight outside the ball of radius `m_radius`
/// is at most `(1 - delta) / (nu + d)`.
pub fn tail_condition(p: &Sample, m_radius: f64, delta: f64, cfg: &TConfig) -> Result<bool> {
    if m_radius.is_nan() || m_radius <= 0.0 {
        return Err(Error::DomainError(format!(
            "radius must be positive, got {m_radius}"
        )));
    }
    if delta.is_nan() || delta <= 0.0 || delta >= 1.0 {
        return Err(Error::DomainError(format!(
            "delta must lie in (0, 1), got {delta}"
        )));
    }
    let outside: f64 = p
        .iter()
        .filter(|(y, _)| point_norm(y) > m_radius)
        .map(|(_, w)| w)
        .sum();
    Ok(outside <= (1.0 - delta) / cfg.a0())
}
