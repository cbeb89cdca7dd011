//! `holdcond`: command-line front end.
//!
//! Reports go to stdout as JSON or CSV. On failure stdout stays empty, a
//! JSON error body goes to stderr and the exit code is 1 (input), 2
//! (numeric) or 3 (infeasible).

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use holdcond::hitting::TRANSIENCE_TOL;
use holdcond::montecarlo::with_threads;
use holdcond::Error;

#[derive(Debug, Parser)]
#[command(name = "holdcond", version, about = "Waiting-time asymptotics for chains held at an origin state")]
struct Cli {
    /// Monte Carlo worker threads (results do not depend on it).
    #[arg(long, global = true, env = "HOLDCOND_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Classify a chain and report decay parameters and the limit vector.
    Analyze(AnalyzeArgs),
    /// Coin-run root and constant, optionally with the exact table.
    Coin(CoinArgs),
    /// Decay rate and constant for a Poisson stream of returns.
    Poisson(PoissonArgs),
    /// Survival curve from the renewal equation.
    Renewal(RenewalArgs),
    /// Monte Carlo estimates.
    Simulate(SimulateArgs),
    /// Build a conditioned or transformed chain.
    Condition(ConditionArgs),
    /// Tail ratio s_i(t - v) / s_j(t).
    Tails(TailsArgs),
    /// Subexponential diagnostic on first-entry times to the origin.
    DiagnoseSubexp(DiagnoseArgs),
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    /// Chain spec (JSON).
    spec: PathBuf,
    /// Never-hit probabilities at or below this count as zero.
    #[arg(long, default_value_t = TRANSIENCE_TOL)]
    transience_tol: f64,
    /// Paths for a Monte Carlo check of the predicted tail (off by default).
    #[arg(long)]
    mc_paths: Option<usize>,
    /// Time at which the Monte Carlo check is made.
    #[arg(long, default_value_t = 10.0)]
    mc_time: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct CoinArgs {
    /// Head probability.
    #[arg(long)]
    p: f64,
    /// Run length.
    #[arg(long)]
    k: usize,
    /// Print the exact-vs-asymptote table for n = 0..=N as CSV.
    #[arg(long)]
    n: Option<usize>,
}

#[derive(Debug, Args)]
struct PoissonArgs {
    /// Self-return rate.
    #[arg(long)]
    r: f64,
}

#[derive(Debug, Args)]
struct RenewalArgs {
    spec: PathBuf,
    #[arg(long)]
    t_max: f64,
    /// Grid step; must divide the wait threshold, at most 1/50 of it.
    #[arg(long, default_value_t = 0.01)]
    dt: f64,
    /// Start state: `i`, `0` or `0:u`.
    #[arg(long, default_value = "0")]
    start: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SimMode {
    /// P(τ > t) for the raw chain.
    Survival,
    /// P(X_t = state) for a conditioned chain.
    Conditioned,
    /// P(X_t = state | τ > T) by rejection.
    Rejection,
    /// Rejection against the conditioned chain on [0, horizon] (JSON).
    Compare,
    /// E[e^{φ(t∧τ)} p(X_{t∧τ})] with the limit vector p.
    Harmonic,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    spec: PathBuf,
    #[arg(long, value_enum, default_value_t = SimMode::Survival)]
    mode: SimMode,
    #[arg(long, default_value_t = 10_000)]
    n_paths: usize,
    #[arg(long)]
    horizon: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Start state: `i`, `0` or `0:u`.
    #[arg(long, default_value = "0")]
    start: String,
    /// Comma-separated times; default is `points` equally spaced up to the horizon.
    #[arg(long, value_delimiter = ',')]
    t_grid: Option<Vec<f64>>,
    #[arg(long, default_value_t = 20)]
    points: usize,
    /// State whose occupation probability is estimated.
    #[arg(long, default_value_t = 0)]
    state: usize,
    /// Conditioning horizon T for rejection and compare.
    #[arg(long)]
    condition_horizon: Option<f64>,
    /// Conditioned chain (JSON); defaults to the limit chain of the spec.
    #[arg(long)]
    chain: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ConditionMode {
    Limit,
    Vague,
    Hlambda,
    Subexp,
}

#[derive(Debug, Args)]
struct ConditionArgs {
    spec: PathBuf,
    #[arg(long, value_enum)]
    mode: ConditionMode,
    /// Tilt for `hlambda`.
    #[arg(long, default_value_t = 0.0)]
    lambda: f64,
    /// Tail coefficients a_1..a_n for `subexp` (comma-separated); defaults
    /// to the birth–death harmonic vector.
    #[arg(long, value_delimiter = ',')]
    a: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
struct TailsArgs {
    spec: PathBuf,
    /// Numerator start: `i`, `0` or `0:u`.
    #[arg(long)]
    i: String,
    /// Denominator start.
    #[arg(long)]
    j: String,
    #[arg(long, default_value_t = 0.0)]
    v: f64,
    #[arg(long)]
    t: f64,
    #[arg(long, default_value_t = 10_000)]
    n_paths: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct DiagnoseArgs {
    spec: PathBuf,
    /// Interior state the first-entry times start from.
    #[arg(long, default_value_t = 1)]
    state: usize,
    #[arg(long, default_value_t = 100_000)]
    n_samples: usize,
    /// Convolution order.
    #[arg(long, default_value_t = 2)]
    order: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Censoring time for the simulated first-entry times.
    #[arg(long, default_value_t = 1e4)]
    horizon: f64,
    /// Slack on the bound `order`.
    #[arg(long, default_value_t = 0.25)]
    tolerance: f64,
}

/// A failure with its exit code.
pub struct Failure {
    kind: &'static str,
    message: String,
    code: u8,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure { kind: e.kind(), message: e.to_string(), code: e.exit_code() as u8 }
    }
}

impl Failure {
    fn input(kind: &'static str, message: impl Into<String>) -> Self {
        Failure { kind, message: message.into(), code: 1 }
    }

    fn report(&self) -> ExitCode {
        let body = serde_json::json!({ "error": self.kind, "message": self.message, "exit_code": self.code });
        eprintln!("{body}");
        ExitCode::from(self.code)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => return Failure::input("usage", e.to_string().trim_end()).report(),
    };
    let result = match cli.threads {
        None => commands::run(cli.command),
        Some(0) => Err(Failure::input("usage", "--threads must be at least 1")),
        Some(n) => with_threads(n, || commands::run(cli.command)).map_err(Failure::from).and_then(|r| r),
    };
    match result {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(f) => f.report(),
    }
}
