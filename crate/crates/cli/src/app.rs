//! Command-line front end.
//!
//! Exit codes are stable: [`EXIT_OK`], [`EXIT_IO`], [`EXIT_USAGE`],
//! [`EXIT_SCHEMA`], [`EXIT_VALIDATION`], [`EXIT_NUMERICAL`].

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use c2ed2_core::cce::{self, AttOptions, EstimatorOptions, ObservedFactor};
use c2ed2_core::montecarlo::Estimator;
use c2ed2_core::panel::{build_group_index, validate_assumptions};
use clap::{Args, Parser, Subcommand};

use crate::io::{read_observed_factors, read_panel, ColumnSchema, IngestError};
use crate::render::{render_estimate, render_study, EstimateReport, OutputFormat};
use crate::study::{parse_preset, run_parallel, study_arms, DesignOverrides, StudyError, StudyFile};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_SCHEMA: i32 = 3;
pub const EXIT_VALIDATION: i32 = 4;
pub const EXIT_NUMERICAL: i32 = 5;

#[derive(Debug, Parser)]
#[command(name = "c2ed2", version, about = "Factor-proxy imputation difference-in-differences for fixed-T panels")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate group-time ATTs on a long-format panel CSV.
    Estimate(EstimateArgs),
    /// Run a Monte Carlo study of the estimator and two-way fixed-effects baselines.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = "unit")]
    pub unit_col: String,
    #[arg(long, default_value = "time")]
    pub time_col: String,
    /// First treated period label; 0 or empty marks never-treated units.
    #[arg(long, default_value = "group")]
    pub group_col: String,
    #[arg(long, default_value = "y")]
    pub outcome_col: String,
    #[arg(long, value_delimiter = ',')]
    pub covariate_cols: Vec<String>,
    /// Comma list of `constant`, `trend` and `file:PATH`.
    #[arg(long, value_delimiter = ',')]
    pub observed_factors: Vec<String>,
    /// Fit a separate slope for each treated group.
    #[arg(long)]
    pub groupwise_beta: bool,
    /// Also report pre-treatment placebo cells.
    #[arg(long)]
    pub placebo: bool,
    #[arg(long, value_enum, default_value = "text")]
    pub output_format: OutputFormat,
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Continue past validation failures, reporting them as warnings.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// table1 (parallel trends) or table2 (diverging trends).
    #[arg(long)]
    pub preset: Option<String>,
    /// TOML study file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Replications per design [default: 1000].
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, env = "C2ED2_THREADS")]
    pub threads: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub t: Option<usize>,
    #[arg(long)]
    pub g: Option<usize>,
    #[arg(long)]
    pub rho: Option<f64>,
    /// Two comma-separated values.
    #[arg(long, value_delimiter = ',', value_name = "A,B", allow_negative_numbers = true)]
    pub theta: Option<Vec<f64>>,
    #[arg(long, allow_negative_numbers = true)]
    pub delta: Option<f64>,
    /// Two comma-separated values.
    #[arg(long, value_delimiter = ',', value_name = "A,B", allow_negative_numbers = true)]
    pub tau: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value = "text")]
    pub output_format: OutputFormat,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("{0}")]
    Ingest(#[from] IngestError),
    #[error("validation failed: {}", .0.join("; "))]
    Validation(Vec<String>),
    #[error(transparent)]
    Estimation(c2ed2_core::Error),
    #[error(transparent)]
    Study(#[from] StudyError),
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

fn classify_core(e: &c2ed2_core::Error) -> i32 {
    use c2ed2_core::Error as E;
    match e {
        e if e.is_numerical() => EXIT_NUMERICAL,
        E::Shape(_) | E::NonFinite { .. } | E::ObservedFactorLength { .. } => EXIT_SCHEMA,
        E::Config(_) => EXIT_USAGE,
        _ => EXIT_VALIDATION,
    }
}

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Ingest(e) if e.is_io() => EXIT_IO,
            AppError::Ingest(e) if e.is_validation() => EXIT_VALIDATION,
            AppError::Ingest(IngestError::Panel(e)) => classify_core(e),
            AppError::Ingest(_) => EXIT_SCHEMA,
            AppError::Validation(_) => EXIT_VALIDATION,
            AppError::Estimation(e) => classify_core(e),
            AppError::Study(StudyError::Io { .. }) => EXIT_IO,
            AppError::Study(StudyError::Core(e)) => classify_core(e),
            AppError::Study(_) | AppError::Usage(_) => EXIT_USAGE,
            AppError::Io { .. } => EXIT_IO,
        }
    }
}

fn observed_factors(specs: &[String], periods: &[f64]) -> Result<Vec<ObservedFactor>, AppError> {
    let mut out = Vec::new();
    for spec in specs.iter().map(|s| s.trim()).filter(|s| !s.is_empty()) {
        match spec {
            "constant" => out.push(ObservedFactor::Constant),
            "trend" => out.push(ObservedFactor::Trend),
            s if s.starts_with("file:") => out.extend(read_observed_factors(Path::new(&s[5..]), periods)?),
            other => {
                return Err(AppError::Usage(format!(
                    "unknown observed factor `{other}` (expected constant, trend or file:PATH)"
                )))
            }
        }
    }
    Ok(out)
}

/// Ingest, index, validate, estimate. Validation failures abort unless
/// `--force` is set, in which case they are carried into the report.
pub fn cmd_estimate(args: &EstimateArgs) -> Result<EstimateReport, AppError> {
    let schema = ColumnSchema {
        unit: args.unit_col.clone(),
        time: args.time_col.clone(),
        group: args.group_col.clone(),
        outcome: args.outcome_col.clone(),
        covariates: args.covariate_cols.iter().map(|c| c.trim().to_string()).filter(|c| !c.is_empty()).collect(),
    };
    let data = read_panel(&args.input, &schema)?;
    let observed = observed_factors(&args.observed_factors, data.period_labels())?;
    let index = build_group_index(&data).map_err(AppError::Estimation)?;
    let validation = validate_assumptions(&data, &index, observed.len());

    let mut failures = validation.failures();
    let singletons: Vec<usize> = validation.group_sizes.iter().filter(|g| g.size < 2).map(|g| g.group).collect();
    for g in &singletons {
        failures.push(format!(
            "group {} has a single unit; variances need at least 2",
            data.period_labels()[g - 1]
        ));
    }
    let mut warnings = validation.warnings();
    if !failures.is_empty() {
        if !args.force {
            return Err(AppError::Validation(failures));
        }
        warnings.extend(failures.iter().map(|f| format!("forced past validation failure: {f}")));
    }
    let att = AttOptions { placebo: args.placebo, variances: singletons.is_empty() };
    if !att.variances {
        warnings.push("inference disabled because a treated group has a single unit".into());
    }
    let options = EstimatorOptions { observed, groupwise_beta: args.groupwise_beta, att };
    let est = cce::estimate(&data, &index, &options).map_err(AppError::Estimation)?;
    let forced = !failures.is_empty();
    Ok(EstimateReport::new(&data, est, validation, failures, warnings, forced))
}

fn pair(values: &Option<Vec<f64>>, name: &str) -> Result<Option<[f64; 2]>, AppError> {
    match values.as_deref() {
        None => Ok(None),
        Some([a, b]) => Ok(Some([*a, *b])),
        Some(_) => Err(AppError::Usage(format!("--{name} takes exactly two values"))),
    }
}

/// Default number of replications.
pub const DEFAULT_REPS: usize = 1000;

pub fn cmd_simulate(args: &SimulateArgs) -> Result<String, AppError> {
    let file = match &args.config {
        Some(path) => StudyFile::read(path)?,
        None => StudyFile::default(),
    };
    let flags = DesignOverrides {
        n_units: args.n,
        n_periods: args.t,
        g_treat: args.g,
        rho: args.rho,
        theta: pair(&args.theta, "theta")?,
        delta_g: args.delta,
        tau_g: pair(&args.tau, "tau")?,
        ..DesignOverrides::default()
    };
    let overrides = file.design.merged(&flags);
    let preset = args.preset.as_deref().or(file.preset.as_deref()).map(parse_preset).transpose()?;
    let reps = args.reps.or(file.reps).unwrap_or(DEFAULT_REPS);
    let seed = args.seed.or(file.seed).ok_or_else(|| AppError::Usage("a --seed is required".into()))?;
    if args.threads == Some(0) {
        return Err(AppError::Usage("--threads must be at least 1".into()));
    }
    let arms = study_arms(preset, &overrides)?;
    let reports = arms
        .iter()
        .map(|arm| run_parallel(&arm.label, &arm.config, &Estimator::ALL, reps, seed, args.threads))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(render_study(&reports, args.output_format))
}

fn emit(text: &str, output: Option<&Path>) -> Result<(), AppError> {
    match output {
        Some(path) => std::fs::write(path, text).map_err(|source| AppError::Io { path: path.display().to_string(), source }),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes()).map_err(|source| AppError::Io { path: "<stdout>".into(), source })
        }
    }
}

pub fn run(cli: &Cli) -> Result<(), AppError> {
    match &cli.command {
        Command::Estimate(args) => {
            let report = cmd_estimate(args)?;
            for w in &report.diagnostics.warnings {
                eprintln!("warning: {w}");
            }
            emit(&render_estimate(&report, args.output_format), args.output.as_deref())
        }
        Command::Simulate(args) => emit(&cmd_simulate(args)?, args.output.as_deref()),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
