//! `spi-lab`: runs mirror-learning, clipped-surrogate and bound-verification
//! experiments on finite MDPs and writes traces into digest-named run
//! directories.

mod commands;
mod config;
mod envsel;
mod trace;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{deepspi, demo, dream, improve, pac, report, solve, verify};

#[derive(Debug, Parser)]
#[command(
    name = "spi-lab",
    version,
    about = "Safe policy improvement laboratory for finite MDPs"
)]
struct Cli {
    /// TOML file with settings for the subcommand; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root directory for run outputs.
    #[arg(long, global = true, default_value = "runs")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Optimal values and greedy policy, plus evaluation of a given policy.
    Solve(solve::Args),
    /// Iterated neighborhood-constrained policy improvement.
    Improve(improve::Args),
    /// Clipped-surrogate updates of a latent policy with loss-penalized utilities.
    Deepspi(deepspi::Args),
    /// Monte Carlo returns imagined inside the world model.
    DreamEval(dream::Args),
    /// Bound verification over a randomized suite.
    Verify(verify::Args),
    /// Coverage of the sampled improvement bound.
    Pac(pac::Args),
    /// Build a counterexample environment and narrate its numbers.
    Demo(demo::Args),
    /// Aggregate traces or bound tables.
    Report(report::Args),
}

/// Why a run stopped short of success.
#[derive(Debug)]
pub enum Failure {
    /// Bad configuration or inputs rejected by a precondition.
    Config(String),
    /// A checked inequality failed.
    Violation(String),
}

impl Failure {
    pub fn context(self, prefix: &str) -> Self {
        match self {
            Failure::Config(m) => Failure::Config(format!("{prefix}: {m}")),
            Failure::Violation(m) => Failure::Violation(format!("{prefix}: {m}")),
        }
    }

    fn code(&self) -> u8 {
        match self {
            Failure::Violation(_) => 1,
            Failure::Config(_) => 2,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "error: {m}"),
            Failure::Violation(m) => write!(f, "violation: {m}"),
        }
    }
}

macro_rules! config_error_from {
    ($($t:ty),*) => {$(
        impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                Failure::Config(e.to_string())
            }
        }
    )*};
}

config_error_from!(
    spi_lab::Error,
    std::io::Error,
    serde_json::Error,
    csv::Error,
    toml::de::Error
);

pub type CliResult<T> = Result<T, Failure>;

pub struct Ctx {
    pub config: Option<PathBuf>,
    pub out_dir: PathBuf,
}

fn init_threads() {
    if let Some(n) = std::env::var("SPI_LAB_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
    {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .ok();
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    init_threads();
    let cli = Cli::parse();
    let ctx = Ctx {
        config: cli.config,
        out_dir: cli.out_dir,
    };
    let result = match cli.command {
        Command::Solve(a) => solve::run(&ctx, a),
        Command::Improve(a) => improve::run(&ctx, a),
        Command::Deepspi(a) => deepspi::run(&ctx, a),
        Command::DreamEval(a) => dream::run(&ctx, a),
        Command::Verify(a) => verify::run(&ctx, a),
        Command::Pac(a) => pac::run(&ctx, a),
        Command::Demo(a) => demo::run(&ctx, a),
        Command::Report(a) => report::run(&ctx, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{f}");
            ExitCode::from(f.code())
        }
    }
}
