//! `ch`: simulations, transforms, metric experiments and small demos on top of `chlag`.

// Validation writes `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

const EXIT_VALIDATION: u8 = 1;
const EXIT_NUMERICAL: u8 = 2;
const EXIT_USAGE: u8 = 64;

#[derive(Parser, Debug)]
#[command(
    name = "ch",
    version,
    about = "Conservative periodic Camassa–Holm solver"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evolve a state and write snapshots and diagnostics.
    Simulate(SimulateArgs),
    /// Convert a state between descriptions.
    Transform(TransformArgs),
    /// Bound the distance between two states, or run a Lipschitz ensemble.
    Metric(MetricArgs),
    /// Integrate the multipeakon ODE.
    Peakon(PeakonArgs),
    /// Scalar toy models.
    Toy {
        #[command(subcommand)]
        command: ToyCommand,
    },
    /// Time the nonlocal kernels and one RK4 step.
    Bench(BenchArgs),
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `out_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Target {
    Eulerian,
    Lagrangian,
    Projected,
}

#[derive(Args, Debug)]
struct TransformArgs {
    #[arg(long, value_enum)]
    to: Target,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Eulerian grid size; defaults to the number of labels.
    #[arg(long)]
    m: Option<usize>,
    /// Number of labels; defaults to the Eulerian grid size.
    #[arg(long)]
    n: Option<usize>,
}

#[derive(Args, Debug)]
#[command(group = clap::ArgGroup::new("mode").required(true).args(["a", "experiment"]))]
struct MetricArgs {
    #[arg(long, requires = "b")]
    a: Option<PathBuf>,
    #[arg(long)]
    b: Option<PathBuf>,
    /// SearchConfig JSON for the single-pair bound.
    #[arg(long, conflicts_with = "experiment")]
    search: Option<PathBuf>,
    /// Experiment JSON; rows go to `--out` as CSV.
    #[arg(long, requires = "out")]
    experiment: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PeakonArgs {
    #[arg(
        long,
        value_delimiter = ',',
        allow_negative_numbers = true,
        required = true
    )]
    p: Vec<f64>,
    #[arg(long, value_delimiter = ',', required = true)]
    q: Vec<f64>,
    #[arg(long, default_value_t = 1e-4)]
    dt: f64,
    #[arg(long, default_value_t = 1.0)]
    t_end: f64,
    /// Write every k-th step.
    #[arg(long, default_value_t = 1)]
    every: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand, Debug)]
enum ToyCommand {
    /// Print the toy-model witnesses as a table.
    Demo {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Grid sizes; powers of two.
    #[arg(long, value_delimiter = ',', default_values_t = [1024usize, 4096, 131072])]
    n: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    reps: usize,
}

fn threads_from_env() -> Result<(), String> {
    let Ok(v) = std::env::var("CH_THREADS") else {
        return Ok(());
    };
    let k: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&k| k > 0)
        .ok_or_else(|| format!("CH_THREADS must be a positive integer, got {v:?}"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(k)
        .build_global()
        .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if let Err(msg) = threads_from_env() {
        eprintln!("error: {msg}");
        return ExitCode::from(EXIT_USAGE);
    }
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(e),
    }
}

fn report(e: anyhow::Error) -> ExitCode {
    eprintln!("error: {e:#}");
    match e.downcast_ref::<chlag::Error>() {
        Some(chlag::Error::Integration { .. }) => ExitCode::from(EXIT_NUMERICAL),
        _ => ExitCode::from(EXIT_VALIDATION),
    }
}
