//! Two sequences of planar laws that converge weakly to the same collinear
//! limit while their fitted scatter matrices approach different limits.
//!
//! Both sequences are symmetric under reflection of either axis, so the
//! location fit is zero and the scatter fit is diagonal. The first-axis
//! entries converge to `a(nu)` and `b(nu)` respectively, which differ for
//! every finite `nu`; the limit law itself sits on a line, outside every
//! existence domain. This is the standard demonstration that no nontrivial
//! equivariant scatter functional can be weakly continuous everywhere.

use crate::error::{Error, Result};
use crate::model::{Sample, TConfig};

/// Log-spaced sweep used by the command-line reproduction.
pub const DEFAULT_K_SWEEP: [usize; 6] = [1, 2, 5, 10, 25, 100];

/// Closed-form limits of the diagonal scatter entries along the sweeps.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct LimitTriple {
    /// First-axis limit along the five-atom sequence: `2 (1 - 1/nu) / 3`.
    pub a: f64,
    /// First-axis limit along the four-atom sequence: `(2 + 1/nu) / 3`.
    pub b: f64,
    /// Second-axis entry of the four-atom fit at `k = 1`: `(1 - 1/nu) / 3`.
    pub c: f64,
}

/// Five atoms: four corners `(+-1, +-1/k)` with weight 1/6 each and the
/// origin with weight 1/3.
pub fn make_pk(k: usize) -> Result<Sample> {
    if k == 0 {
        return Err(Error::DomainError("k must be at least 1".into()));
    }
    let e = 1.0 / k as f64;
    Sample::new(
        vec![
            vec![-1.0, -e],
            vec![-1.0, e],
            vec![1.0, -e],
            vec![1.0, e],
            vec![0.0, 0.0],
        ],
        vec![1.0 / 6.0, 1.0 / 6.0, 1.0 / 6.0, 1.0 / 6.0, 1.0 / 3.0],
    )
}

/// Four atoms: `(+-1, 0)` with weight 1/3 each and `(0, +-1/k)` with weight
/// 1/6 each.
pub fn make_qk(k: usize) -> Result<Sample> {
    if k == 0 {
        return Err(Error::DomainError("k must be at least 1".into()));
    }
    let e = 1.0 / k as f64;
    Sample::new(
        vec![vec![-1.0, 0.0], vec![0.0, -e], vec![0.0, e], vec![1.0, 0.0]],
        vec![1.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0, 1.0 / 3.0],
    )
}

/// Evaluates the closed-form limits at the configuration's `nu`.
/// Requires `nu > 1` and a planar configuration.
pub fn limits(cfg: &TConfig) -> Result<LimitTriple> {
    if cfg.dim() != 2 {
        return Err(Error::ConfigError(format!(
            "the limit formulas are planar (d = 2), got d = {}",
            cfg.dim()
        )));
    }
    let nu = cfg.nu();
    if nu <= 1.0 {
        return Err(Error::ConfigError(format!(
            "limits require nu > 1, got {nu}"
        )));
    }
    let inv = 1.0 / nu;
    Ok(LimitTriple {
        a: 2.0 * (1.0 - inv) / 3.0,
        b: (2.0 + inv) / 3.0,
        c: (1.0 - inv) / 3.0,
    })
}
