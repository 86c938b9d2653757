//! Location and scatter functionals of the elliptically symmetric t family
//! on finitely supported laws.
//!
//! The crate fits the heavy-tail-robust analog of the mean and covariance:
//! a location vector `mu` and a positive-definite scatter matrix `Sigma`
//! defined through a reweighting function `u(s) = (nu + d)/(nu + s)`. The
//! fit exists exactly when the law does not concentrate too much mass on
//! any lower-dimensional subspace; the [`domain`] module decides that
//! exactly, with witnesses. The [`solver`] computes the fit by lifting the
//! sample one dimension up and iterating the scatter fixed point, the
//! [`calculus`] module differentiates the fit (gradients, Hessians,
//! influence functions), and [`asymptotics`] validates the central-limit
//! behavior by seeded Monte Carlo.
//!
//! ```
//! use tscatter::{fit_location_scatter, Sample, TConfig};
//!
//! let sample = Sample::uniform(vec![
//!     vec![1.0, 0.4],
//!     vec![-0.8, 0.1],
//!     vec![0.2, -1.1],
//!     vec![0.0, 0.9],
//! ])?;
//! let cfg = TConfig::new(3.0, 2)?;
//! let fit = fit_location_scatter(&sample, &cfg)?;
//! assert!((fit.weight_sum - 1.0).abs() < 1e-8);
//! # Ok::<(), tscatter::Error>(())
//! ```

// index-heavy matrix kernels keep the classical loop shapes
#![allow(clippy::needless_range_loop)]

pub mod asymptotics;
pub mod calculus;
pub mod counterexample;
pub mod domain;
pub mod equivariance;
mod error;
pub mod model;
pub mod rng;
pub mod solver;
pub mod symmat;

pub use error::{Error, Result};
pub use model::{
    embed, lift_sample, objective, quadform_identity_check, rho, u_weight, unembed, Embedding,
    Sample, TConfig,
};
pub use solver::{
    fit_location_scatter, fit_scatter, fit_univariate, multistart_uniqueness_probe,
    verify_critical_point, FitOptions, InitStrategy, LocationScatterEstimate, SolveReport,
};
pub use symmat::{cholesky, sym_eigenvalues, PosDefMatrix, SymMatrix};

// The guide chapters double as doctests so their snippets stay in sync
// with the library.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub struct Introduction;
    #[doc = include_str!("../../../book/src/matrices.md")]
    pub struct Matrices;
    #[doc = include_str!("../../../book/src/model.md")]
    pub struct Model;
    #[doc = include_str!("../../../book/src/domains.md")]
    pub struct Domains;
    #[doc = include_str!("../../../book/src/solver.md")]
    pub struct Solver;
    #[doc = include_str!("../../../book/src/calculus.md")]
    pub struct Calculus;
    #[doc = include_str!("../../../book/src/asymptotics.md")]
    pub struct Asymptotics;
    #[doc = include_str!("../../../book/src/equivariance.md")]
    pub struct Equivariance;
    #[doc = include_str!("../../../book/src/cli.md")]
    pub struct Cli;
}
