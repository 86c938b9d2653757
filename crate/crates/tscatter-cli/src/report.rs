//! JSON emission with fixed-width floats.
//!
//! Every floating value is written with 17 significant digits (scientific
//! notation), enough to round-trip any binary64 value, so a report is
//! byte-identical across runs with the same inputs and seed.

use std::io;

use serde::Serialize;

/// Identifier of the report layout.
pub const SCHEMA: &str = "tscatter/1";

struct SigFigFormatter;

impl serde_json::ser::Formatter for SigFigFormatter {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W>(&mut self, writer: &mut W, value: f32) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        write!(writer, "{value:.16e}")
    }
}

/// Serializes with the 17-significant-digit float convention.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut out = Vec::new();
    let mut serializer = serde_json::Serializer::with_formatter(&mut out, SigFigFormatter);
    value
        .serialize(&mut serializer)
        .expect("report serialization cannot fail");
    String::from_utf8(out).expect("JSON is UTF-8")
}

/// Everything a run was configured with; embedded in every report.
#[derive(Debug, Clone, Default, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub input: Option<String>,
    pub output: Option<String>,
    pub nu: Option<f64>,
    pub seed: Option<u64>,
    pub tol_step: Option<f64>,
    pub tol_fp: Option<f64>,
    pub max_iter: Option<usize>,
    pub skip_domain_check: Option<bool>,
    pub init: Option<String>,
    pub n: Option<usize>,
    pub replicates: Option<usize>,
    pub x: Option<Vec<f64>>,
    pub trials: Option<usize>,
    pub k_max: Option<usize>,
    pub emit_samples: Option<String>,
    pub radius: Option<f64>,
    pub grid_size: Option<usize>,
    pub n_list: Option<Vec<usize>>,
    pub tail_m: Option<f64>,
    pub tail_delta: Option<f64>,
}

/// Top-level report envelope.
#[derive(Serialize)]
pub struct Report<T: Serialize> {
    pub schema: &'static str,
    pub config: RunConfig,
    pub result: T,
}

impl<T: Serialize> Report<T> {
    pub fn new(config: RunConfig, result: T) -> Self {
        Report {
            schema: SCHEMA,
            config,
            result,
        }
    }
}

/// Machine-readable error payload written to stderr.
#[derive(Serialize)]
pub struct ErrorObject<'a> {
    pub code: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<&'a tscatter::domain::DomainReport>,
}

/// Exit code and machine-readable code for a library error.
pub fn classify(error: &tscatter::Error) -> (i32, &'static str) {
    use tscatter::Error::*;
    match error {
        DomainViolation(_) => (2, "domain_violation"),
        NoConvergence { .. } => (3, "no_convergence"),
        ConfigError(_) => (1, "config"),
        NotPositiveDefinite { .. } => (1, "not_positive_definite"),
        ConvergenceFailure { .. } => (1, "eigen_convergence"),
        DimensionError { .. } => (1, "dimension"),
        DomainError(_) => (1, "invalid_argument"),
        InvalidSample(_) => (1, "invalid_sample"),
        ExplicitLimitation { .. } => (1, "enumeration_budget"),
        InvariantViolation(_) => (1, "invariant"),
    }
}
