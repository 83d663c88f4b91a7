//! `odc`: structured LQR local search from the command line.

mod commands;
mod output;
mod spec;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use odc_core::search::SearchMethod;
use odc_core::OdcError;

use spec::{parse_box, ExperimentSpec, Overrides};

#[derive(Debug, Parser)]
#[command(name = "odc", version, about = "Local search for optimal decentralized control")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON run specification; flags override its values.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_parser = parse_method)]
    method: Option<SearchMethod>,
    /// Initial Armijo step.
    #[arg(long, global = true, value_name = "F")]
    sbar: Option<f64>,
    /// Armijo backtracking factor.
    #[arg(long, global = true, value_name = "F")]
    beta: Option<f64>,
    /// Armijo sufficient-decrease constant.
    #[arg(long, global = true, value_name = "F")]
    alpha: Option<f64>,
    /// Coupling of the chain benchmarks.
    #[arg(long, global = true, value_name = "F")]
    eps: Option<f64>,
    #[arg(long, global = true, value_name = "N")]
    trials: Option<usize>,
    /// Atlas cells per axis.
    #[arg(long, global = true, value_name = "N")]
    resolution: Option<usize>,
    /// Sampling and atlas box, the same interval on every free entry.
    #[arg(long = "box", global = true, value_name = "LO:HI", allow_hyphen_values = true, value_parser = parse_box)]
    bounds: Option<(f64, f64)>,
    /// Print the fully resolved specification and exit.
    #[arg(long, global = true)]
    print_config: bool,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Run one solver from a single starting gain.
    Solve,
    /// Jump experiment over random starting gains.
    Experiment,
    /// Label the connected components of the structured stabilizing set.
    Atlas,
    /// Starting points of the three-state benchmark and the ALM case study.
    Bench,
}

fn parse_method(text: &str) -> Result<SearchMethod, String> {
    text.parse().map_err(|e: OdcError| e.to_string())
}

/// Failure classes and their exit codes.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Solver(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Solver(_) => 2,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(msg) => write!(f, "configuration error: {msg}"),
            Failure::Solver(msg) => write!(f, "solver failure: {msg}"),
        }
    }
}

impl From<OdcError> for Failure {
    fn from(err: OdcError) -> Self {
        match err {
            OdcError::NumericFailure(_)
            | OdcError::LyapunovSingular { .. }
            | OdcError::DegenerateStep(_)
            | OdcError::LineSearchFailed { .. } => Failure::Solver(err.to_string()),
            _ => Failure::Config(err.to_string()),
        }
    }
}

impl Cli {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            threads: self.threads,
            out: self.out.clone(),
            method: self.method,
            s_bar: self.sbar,
            beta: self.beta,
            alpha: self.alpha,
            eps: self.eps,
            trials: self.trials,
            resolution: self.resolution,
            bounds: self.bounds,
        }
    }

    fn load_spec(&self) -> Result<ExperimentSpec, Failure> {
        let mut spec = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
                ExperimentSpec::from_json(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?
            }
            None => ExperimentSpec::default(),
        };
        spec.apply(&self.overrides());
        Ok(spec)
    }
}

fn run(cli: &Cli) -> Result<u8, Failure> {
    let mut spec = cli.load_spec()?;
    let problem = spec.resolve()?;
    if cli.print_config {
        println!("{}", spec.to_json()?);
        return Ok(0);
    }
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = spec.threads {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| Failure::Config(format!("thread pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::Solve => commands::solve(&spec, &problem),
        Command::Experiment => commands::experiment(&spec),
        Command::Atlas => commands::atlas(&spec, &problem),
        Command::Bench => commands::bench(&spec),
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return ExitCode::from(if err.use_stderr() { 1 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(failure) => {
            eprintln!("odc: {failure}");
            ExitCode::from(failure.code())
        }
    }
}
