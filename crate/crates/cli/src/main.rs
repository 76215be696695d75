//! `cross-impact`: equilibrium solving, simulation, estimator fitting and
//! synthetic sweeps from the command line. Every subcommand writes a single
//! JSON report `{version, config, results, warnings}`; failures add an
//! `error` field and exit with 2 (invalid input) or 3 (numerical failure).

mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use cross_impact::Error;
use serde::Serialize;

use report::{ErrorInfo, Meta, Report, REPORT_VERSION};

#[derive(Debug, Parser)]
#[command(name = "cross-impact", version, about = "Multivariate Kyle model and cross-impact estimators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve for the equilibrium impact matrix of a given economy.
    Equilibrium(EquilibriumArgs),
    /// Monte Carlo simulation of the equilibrium economy.
    Simulate(SimulateArgs),
    /// Fit cross-impact estimators on a moments or series file.
    Fit(FitArgs),
    /// Comparison table of the estimator diagnostics.
    Diagnose(FitArgs),
    /// Liquidity or correlation sweep over synthetic two-asset bases.
    Sweep(SweepArgs),
    /// Generate random two-asset base blocks for sweeps.
    GenBases(GenBasesArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct OutputArgs {
    /// Path of the JSON report (stdout when omitted).
    #[arg(long, short = 'o')]
    pub output: Option<PathBuf>,
    /// Leave out run metadata (timestamp, command line) for byte-identical reports.
    #[arg(long)]
    pub no_meta: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Factor {
    Cholesky,
    PrincipalComponent,
}

impl From<Factor> for cross_impact::FactorKind {
    fn from(f: Factor) -> Self {
        match f {
            Factor::Cholesky => cross_impact::FactorKind::Cholesky,
            Factor::PrincipalComponent => cross_impact::FactorKind::PrincipalComponent,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct ModelArgs {
    /// Fundamental price covariance Σ₀ (matrix CSV).
    #[arg(long)]
    pub sigma0: PathBuf,
    /// Noise-trader volume covariance Ω (matrix CSV).
    #[arg(long)]
    pub omega: PathBuf,
    /// Prior mean price p₀ as comma-separated values (zeros by default).
    #[arg(long, allow_hyphen_values = true)]
    pub p0: Option<String>,
    #[arg(long, value_enum, default_value = "cholesky")]
    pub factor: Factor,
}

#[derive(Debug, Args, Serialize)]
pub struct EquilibriumArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Also enumerate the 2ⁿ symmetric roots and flag the equilibrium.
    #[arg(long)]
    pub saddles: bool,
    /// Write Λ as a matrix CSV.
    #[arg(long)]
    pub lambda_out: Option<PathBuf>,
    #[command(flatten)]
    #[serde(skip)]
    pub out: OutputArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 100_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Asset labels, comma separated.
    #[arg(long)]
    pub labels: Option<String>,
    /// Write the observable moments (Σ̂, Ω̂ᵈ, R̂ᵈ) as a moments CSV.
    #[arg(long)]
    pub moments_out: Option<PathBuf>,
    /// Write the simulated price changes and imbalances as a series CSV.
    #[arg(long)]
    pub series_out: Option<PathBuf>,
    #[command(flatten)]
    #[serde(skip)]
    pub out: OutputArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InputFormat {
    Auto,
    Moments,
    Series,
}

#[derive(Debug, Args, Serialize)]
pub struct FitArgs {
    /// Moments or series CSV.
    #[arg(long, short = 'i')]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "auto")]
    pub format: InputFormat,
    /// Estimators to run: `all` or a comma-separated subset of mle, elm, kyle.
    #[arg(long, default_value = "all")]
    pub method: String,
    /// Kyle scale: `auto` for the loss-optimal k*, or a positive number.
    #[arg(long, default_value = "auto")]
    pub kyle_k: String,
    /// Loss weighting matrix M (matrix CSV; identity by default).
    #[arg(long)]
    pub loss_m: Option<PathBuf>,
    /// Normalize prices and volumes to unit variance before fitting.
    #[arg(long)]
    pub normalize: bool,
    /// Write the four-observable comparison table as CSV.
    #[arg(long)]
    pub table_csv: Option<PathBuf>,
    #[command(flatten)]
    #[serde(skip)]
    pub out: OutputArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct SweepArgs {
    #[arg(long, value_parser = parse_sweep_kind)]
    pub kind: cross_impact::synthetic::SweepKind,
    /// `start:end:count` or comma-separated values; 50 points over the default range when omitted.
    #[arg(long)]
    pub grid: Option<String>,
    /// `random:<count>` or a bases CSV file.
    #[arg(long, default_value = "random:6")]
    pub bases: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub loss_m: Option<PathBuf>,
    /// Write the long-format curves CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[command(flatten)]
    #[serde(skip)]
    pub out: OutputArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct GenBasesArgs {
    #[arg(long, default_value_t = 6)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Bases CSV to write.
    #[arg(long)]
    pub bases_out: Option<PathBuf>,
    #[command(flatten)]
    #[serde(skip)]
    pub out: OutputArgs,
}

fn parse_sweep_kind(s: &str) -> Result<cross_impact::synthetic::SweepKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// What a subcommand produced before the envelope is added.
pub struct Outcome {
    pub results: serde_json::Value,
    pub warnings: Vec<cross_impact::estimators::Warning>,
}

fn exit_code(e: &Error) -> u8 {
    if e.is_numerical() {
        3
    } else {
        2
    }
}

fn emit(out: &OutputArgs, config: serde_json::Value, outcome: Result<Outcome, Error>) -> ExitCode {
    let (results, warnings, error) = match &outcome {
        Ok(o) => (o.results.clone(), o.warnings.clone(), None),
        Err(e) => (serde_json::Value::Null, Vec::new(), Some(ErrorInfo::from(e))),
    };
    let report = Report {
        version: REPORT_VERSION,
        config,
        results,
        warnings,
        error,
        meta: (!out.no_meta).then(Meta::now),
    };
    let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
    text.push('\n');
    let written = match &out.output {
        Some(path) => std::fs::write(path, &text).map_err(|e| Error::Io(format!("{}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    };
    if let Err(e) = &outcome {
        eprintln!("error: {e}");
        return ExitCode::from(exit_code(e));
    }
    if let Err(e) = written {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    macro_rules! run {
        ($args:expr, $f:path) => {{
            let config = serde_json::to_value(&$args).expect("config serializes");
            emit(&$args.out, config, $f(&$args))
        }};
    }
    match cli.command {
        Command::Equilibrium(a) => run!(a, commands::equilibrium),
        Command::Simulate(a) => run!(a, commands::simulate),
        Command::Fit(a) => run!(a, commands::fit),
        Command::Diagnose(a) => run!(a, commands::diagnose),
        Command::Sweep(a) => run!(a, commands::sweep),
        Command::GenBases(a) => run!(a, commands::gen_bases),
    }
}
