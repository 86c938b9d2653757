//! Command-line front end: CSV samples in, JSON reports out.
//!
//! Exit codes: 0 success, 1 usage or configuration errors, 2 law outside
//! the existence domain, 3 solver non-convergence. Errors also emit a
//! machine-readable object `{code, message, witness?}` on stderr.

mod io;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use report::{classify, to_json, ErrorObject, Report, RunConfig};
use tscatter::asymptotics::{gc_diagnostic, mc_normality, sandwich_covariance, McOptions};
use tscatter::calculus::influence;
use tscatter::counterexample::{limits, make_pk, make_qk, DEFAULT_K_SWEEP};
use tscatter::domain::in_v;
use tscatter::equivariance::{check_equivariance, random_nonsingular_map};
use tscatter::solver::{fit_location_scatter_with, fit_univariate, FitOptions};
use tscatter::{Error, InitStrategy, Sample, SymMatrix, TConfig};

#[derive(Parser)]
#[command(
    name = "tscatter",
    version,
    about = "Robust location and scatter via t reweighting: fitting, domain checks, influence, Monte Carlo"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the location vector and scatter matrix of a CSV sample.
    Fit(FitArgs),
    /// Check membership in the existence domain, with witnesses.
    CheckDomain(CheckDomainArgs),
    /// Influence of the fit at a contamination point, by two routes.
    Influence(InfluenceArgs),
    /// Monte Carlo check of asymptotic normality of the fit.
    McNormality(McArgs),
    /// Fit equivariance under random nonsingular affine maps.
    EquivarianceTest(EquivarianceArgs),
    /// Reproduce the two scatter sequences with different limits.
    Counterexample(CounterexampleArgs),
    /// Uniform law-of-large-numbers diagnostic over a parameter grid.
    GcDiagnostic(GcArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum InitArg {
    Identity,
    Covariance,
}

impl From<InitArg> for InitStrategy {
    fn from(value: InitArg) -> Self {
        match value {
            InitArg::Identity => InitStrategy::Identity,
            InitArg::Covariance => InitStrategy::Covariance,
        }
    }
}

#[derive(Args)]
struct SolverArgs {
    /// Tail-weight parameter of the t family.
    #[arg(long)]
    nu: f64,
    /// Relative step size at which the fixed-point iteration stops.
    #[arg(long, default_value_t = 1e-12)]
    tol_step: f64,
    /// Residual a converged fit must meet.
    #[arg(long, default_value_t = 1e-9)]
    tol_fp: f64,
    #[arg(long, default_value_t = 1000)]
    max_iter: usize,
    /// Skip the existence-domain pre-check.
    #[arg(long)]
    skip_domain_check: bool,
    /// Starting matrix of the iteration.
    #[arg(long, value_enum, default_value_t = InitArg::Identity)]
    init: InitArg,
}

impl SolverArgs {
    fn config(&self, dim: usize) -> Result<TConfig, Error> {
        TConfig::new(self.nu, dim)?
            .with_tolerances(self.tol_step, self.tol_fp)?
            .with_max_iter(self.max_iter)
    }

    fn options(&self) -> FitOptions {
        FitOptions {
            skip_domain_check: self.skip_domain_check,
            init: self.init.into(),
        }
    }

    fn fill(&self, config: &mut RunConfig) {
        config.nu = Some(self.nu);
        config.tol_step = Some(self.tol_step);
        config.tol_fp = Some(self.tol_fp);
        config.max_iter = Some(self.max_iter);
        config.skip_domain_check = Some(self.skip_domain_check);
        config.init = Some(
            match self.init {
                InitArg::Identity => "identity",
                InitArg::Covariance => "covariance",
            }
            .to_string(),
        );
    }
}

#[derive(Args)]
struct FitArgs {
    /// CSV sample (columns x1..xd plus optional weight).
    input: PathBuf,
    #[command(flatten)]
    solver: SolverArgs,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct CheckDomainArgs {
    input: PathBuf,
    #[arg(long)]
    nu: f64,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct InfluenceArgs {
    input: PathBuf,
    #[command(flatten)]
    solver: SolverArgs,
    /// Contamination point, comma-separated coordinates.
    #[arg(long, value_parser = parse_point)]
    x: std::vec::Vec<f64>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct McArgs {
    input: PathBuf,
    #[command(flatten)]
    solver: SolverArgs,
    /// Resample size.
    #[arg(long)]
    n: usize,
    /// Number of replicates.
    #[arg(short = 'r', long = "replicates")]
    replicates: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also evaluate the tail condition at this radius.
    #[arg(long)]
    tail_m: Option<f64>,
    /// Slack parameter of the tail condition.
    #[arg(long)]
    tail_delta: Option<f64>,
    /// Compare the Monte Carlo covariance against the influence-function
    /// covariance in the report.
    #[arg(long)]
    sandwich: bool,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct EquivarianceArgs {
    input: PathBuf,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct CounterexampleArgs {
    #[arg(long)]
    nu: f64,
    /// Largest index of the sweep; the sweep is log-spaced up to this value.
    #[arg(long, default_value_t = 100)]
    k_max: usize,
    #[arg(long, default_value_t = 1e-12)]
    tol_step: f64,
    #[arg(long, default_value_t = 1e-9)]
    tol_fp: f64,
    #[arg(long, default_value_t = 1000)]
    max_iter: usize,
    /// Also write the swept laws as CSV samples (pk_<k>.csv, qk_<k>.csv)
    /// into this directory.
    #[arg(long)]
    emit_samples: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct GcArgs {
    input: PathBuf,
    #[command(flatten)]
    solver: SolverArgs,
    /// Radius of the parameter ball around the fit.
    #[arg(long, default_value_t = 0.5)]
    radius: f64,
    #[arg(long, default_value_t = 100)]
    grid_size: usize,
    /// Sample sizes, comma-separated.
    #[arg(long, value_parser = parse_sizes, default_value = "100,1000,10000")]
    n_list: std::vec::Vec<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    output: Option<PathBuf>,
}

fn parse_point(raw: &str) -> Result<Vec<f64>, String> {
    raw.split(',')
        .map(|part| part.trim().parse::<f64>().map_err(|e| e.to_string()))
        .collect()
}

fn parse_sizes(raw: &str) -> Result<Vec<usize>, String> {
    raw.split(',')
        .map(|part| part.trim().parse::<usize>().map_err(|e| e.to_string()))
        .collect()
}

enum CliError {
    Usage(String),
    Lib(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Lib(e)
    }
}

impl From<String> for CliError {
    fn from(message: String) -> Self {
        CliError::Usage(message)
    }
}

fn emit(json: String, output: &Option<PathBuf>) -> Result<(), CliError> {
    match output {
        Some(path) => std::fs::write(path, json + "\n")
            .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display()))),
        None => {
            println!("{json}");
            Ok(())
        }
    }
}

fn base_config(command: &str, input: Option<&PathBuf>, output: &Option<PathBuf>) -> RunConfig {
    RunConfig {
        command: command.to_string(),
        input: input.map(|p| p.display().to_string()),
        output: output.as_ref().map(|p| p.display().to_string()),
        ..RunConfig::default()
    }
}

#[derive(Serialize)]
struct EquivarianceTrial {
    trial: usize,
    mu_defect: f64,
    sigma_defect: f64,
    mu_scale: f64,
    sigma_scale: f64,
    pass: bool,
}

#[derive(Serialize)]
struct EquivarianceResult {
    trials: Vec<EquivarianceTrial>,
    max_relative_mu_defect: f64,
    max_relative_sigma_defect: f64,
    all_pass: bool,
}

#[derive(Serialize)]
struct CounterexampleRow {
    k: usize,
    sigma11: f64,
    sigma22: f64,
    mu_norm: f64,
}

#[derive(Serialize)]
struct CounterexampleResult {
    five_atom_rows: Vec<CounterexampleRow>,
    four_atom_rows: Vec<CounterexampleRow>,
    limits: tscatter::counterexample::LimitTriple,
}

#[derive(Serialize)]
struct McResult {
    #[serde(flatten)]
    mc: tscatter::asymptotics::McReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    sandwich_covariance: Option<SymMatrix>,
}

#[derive(Serialize)]
struct GcResult {
    rows: Vec<tscatter::asymptotics::GcRow>,
    decreasing: bool,
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Fit(args) => {
            let sample = io::read_sample(&args.input)?;
            let cfg = args.solver.config(sample.dim())?;
            let mut config = base_config("fit", Some(&args.input), &args.output);
            args.solver.fill(&mut config);
            let estimate = if sample.dim() == 1 && !args.solver.skip_domain_check {
                fit_univariate(&sample, &cfg)?
            } else {
                fit_location_scatter_with(&sample, &cfg, &args.solver.options())?
            };
            emit(to_json(&Report::new(config, estimate)), &args.output)
        }
        Command::CheckDomain(args) => {
            let sample = io::read_sample(&args.input)?;
            let cfg = TConfig::new(args.nu, sample.dim())?;
            let mut config = base_config("check-domain", Some(&args.input), &args.output);
            config.nu = Some(args.nu);
            let report = in_v(&sample, &cfg)?;
            let member = report.member;
            emit(to_json(&Report::new(config, &report)), &args.output)?;
            if !member {
                return Err(CliError::Lib(Error::DomainViolation(Box::new(report))));
            }
            Ok(())
        }
        Command::Influence(args) => {
            let sample = io::read_sample(&args.input)?;
            let cfg = args.solver.config(sample.dim())?;
            let mut config = base_config("influence", Some(&args.input), &args.output);
            args.solver.fill(&mut config);
            config.x = Some(args.x.clone());
            let assessment = influence(&sample, &cfg, &args.x)?;
            emit(to_json(&Report::new(config, assessment)), &args.output)
        }
        Command::McNormality(args) => {
            let sample = io::read_sample(&args.input)?;
            let cfg = args.solver.config(sample.dim())?;
            let mut config = base_config("mc-normality", Some(&args.input), &args.output);
            args.solver.fill(&mut config);
            config.n = Some(args.n);
            config.replicates = Some(args.replicates);
            config.seed = Some(args.seed);
            config.tail_m = args.tail_m;
            config.tail_delta = args.tail_delta;
            let tail = match (args.tail_m, args.tail_delta) {
                (Some(m), Some(delta)) => Some((m, delta)),
                (None, None) => None,
                _ => {
                    return Err(CliError::Usage(
                        "--tail-m and --tail-delta must be given together".into(),
                    ))
                }
            };
            let mc = mc_normality(
                &sample,
                &cfg,
                args.n,
                args.replicates,
                args.seed,
                &McOptions { tail },
            )?;
            let sandwich = if args.sandwich {
                Some(sandwich_covariance(&sample, &cfg)?)
            } else {
                None
            };
            emit(
                to_json(&Report::new(
                    config,
                    McResult {
                        mc,
                        sandwich_covariance: sandwich,
                    },
                )),
                &args.output,
            )
        }
        Command::EquivarianceTest(args) => {
            let sample = io::read_sample(&args.input)?;
            let cfg = args.solver.config(sample.dim())?;
            let mut config = base_config("equivariance-test", Some(&args.input), &args.output);
            args.solver.fill(&mut config);
            config.trials = Some(args.trials);
            config.seed = Some(args.seed);

            let base_fit = fit_location_scatter_with(&sample, &cfg, &args.solver.options())?;
            let mut trials = Vec::with_capacity(args.trials);
            let mut max_mu = 0.0f64;
            let mut max_sigma = 0.0f64;
            let mut all_pass = true;
            for trial in 0..args.trials {
                let map = random_nonsingular_map(sample.dim(), args.seed, trial as u64);
                let (mu_defect, sigma_defect) = check_equivariance(&sample, &cfg, &map)?;
                let mapped_mu = map.apply(&base_fit.mu);
                let mu_scale = 1.0 + mapped_mu.iter().map(|v| v * v).sum::<f64>().sqrt();
                let rows: Vec<f64> = map.matrix_rows().into_iter().flatten().collect();
                let sigma_scale = 1.0 + base_fit.sigma.congruence(&rows).frobenius_norm();
                let pass = mu_defect < 1e-8 * mu_scale && sigma_defect < 1e-8 * sigma_scale;
                all_pass &= pass;
                max_mu = max_mu.max(mu_defect / mu_scale);
                max_sigma = max_sigma.max(sigma_defect / sigma_scale);
                trials.push(EquivarianceTrial {
                    trial,
                    mu_defect,
                    sigma_defect,
                    mu_scale,
                    sigma_scale,
                    pass,
                });
            }
            emit(
                to_json(&Report::new(
                    config,
                    EquivarianceResult {
                        trials,
                        max_relative_mu_defect: max_mu,
                        max_relative_sigma_defect: max_sigma,
                        all_pass,
                    },
                )),
                &args.output,
            )
        }
        Command::Counterexample(args) => {
            let mut config = base_config("counterexample", None, &args.output);
            config.nu = Some(args.nu);
            config.k_max = Some(args.k_max);
            config.tol_step = Some(args.tol_step);
            config.tol_fp = Some(args.tol_fp);
            config.max_iter = Some(args.max_iter);
            config.emit_samples = args.emit_samples.as_ref().map(|p| p.display().to_string());
            if args.k_max == 0 {
                return Err(CliError::Usage("--k-max must be at least 1".into()));
            }
            let cfg = TConfig::new(args.nu, 2)?
                .with_tolerances(args.tol_step, args.tol_fp)?
                .with_max_iter(args.max_iter)?;
            let fit_row = |sample: &Sample, k: usize| -> Result<CounterexampleRow, Error> {
                let fit = tscatter::fit_location_scatter(sample, &cfg)?;
                Ok(CounterexampleRow {
                    k,
                    sigma11: fit.sigma.get(0, 0),
                    sigma22: fit.sigma.get(1, 1),
                    mu_norm: fit.mu.iter().map(|v| v * v).sum::<f64>().sqrt(),
                })
            };
            let mut ks: Vec<usize> = DEFAULT_K_SWEEP
                .iter()
                .copied()
                .filter(|&k| k <= args.k_max)
                .collect();
            if ks.last() != Some(&args.k_max) {
                ks.push(args.k_max);
            }
            if let Some(dir) = &args.emit_samples {
                std::fs::create_dir_all(dir)
                    .map_err(|e| format!("cannot create {}: {e}", dir.display()))?;
            }
            let mut five_atom_rows = Vec::new();
            let mut four_atom_rows = Vec::new();
            for &k in &ks {
                let pk = make_pk(k)?;
                let qk = make_qk(k)?;
                if let Some(dir) = &args.emit_samples {
                    io::write_sample(&pk, &dir.join(format!("pk_{k}.csv")))?;
                    io::write_sample(&qk, &dir.join(format!("qk_{k}.csv")))?;
                }
                five_atom_rows.push(fit_row(&pk, k)?);
                four_atom_rows.push(fit_row(&qk, k)?);
            }
            let result = CounterexampleResult {
                five_atom_rows,
                four_atom_rows,
                limits: limits(&cfg)?,
            };
            emit(to_json(&Report::new(config, result)), &args.output)
        }
        Command::GcDiagnostic(args) => {
            let sample = io::read_sample(&args.input)?;
            let cfg = args.solver.config(sample.dim())?;
            let mut config = base_config("gc-diagnostic", Some(&args.input), &args.output);
            args.solver.fill(&mut config);
            config.radius = Some(args.radius);
            config.grid_size = Some(args.grid_size);
            config.n_list = Some(args.n_list.clone());
            config.seed = Some(args.seed);
            let rows = gc_diagnostic(
                &sample,
                &cfg,
                args.radius,
                args.grid_size,
                &args.n_list,
                args.seed,
            )?;
            let decreasing = rows
                .windows(2)
                .all(|w| w[1].sup_deviation <= w[0].sup_deviation);
            emit(
                to_json(&Report::new(config, GcResult { rows, decreasing })),
                &args.output,
            )
        }
    }
}

fn configure_threads() -> Result<(), CliError> {
    if let Ok(raw) = std::env::var("TSCATTER_THREADS") {
        let threads: usize = raw.parse().ok().filter(|&t| t >= 1).ok_or_else(|| {
            CliError::Usage(format!(
                "TSCATTER_THREADS must be a positive integer, got {raw:?}"
            ))
        })?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot configure thread pool: {e}")))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help and version requests are not errors
            if e.kind() == clap::error::ErrorKind::DisplayHelp
                || e.kind() == clap::error::ErrorKind::DisplayVersion
            {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            eprintln!(
                "{}",
                to_json(&ErrorObject {
                    code: "usage",
                    message: e.to_string(),
                    witness: None,
                })
            );
            return ExitCode::from(1);
        }
    };
    let outcome = configure_threads().and_then(|()| run(cli));
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(message)) => {
            eprintln!(
                "{}",
                to_json(&ErrorObject {
                    code: "usage",
                    message,
                    witness: None,
                })
            );
            ExitCode::from(1)
        }
        Err(CliError::Lib(error)) => {
            let (code, tag) = classify(&error);
            eprintln!(
                "{}",
                to_json(&ErrorObject {
                    code: tag,
                    message: error.to_string(),
                    witness: error.domain_report(),
                })
            );
            ExitCode::from(code as u8)
        }
    }
}
