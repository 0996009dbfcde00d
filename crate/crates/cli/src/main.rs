//! `kelly-lab`: Kelly portfolios, mean-variance and logarithmic efficient
//! frontiers, and condensation datasets from the command line.

mod commands;
mod error;
mod output;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::commands::Context;
use crate::error::CliResult;

#[derive(Debug, Parser)]
#[command(
    name = "kelly-lab",
    version,
    about = "Kelly-optimal portfolios and efficient frontiers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    global: GlobalArgs,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Universe JSON: `{"assets": [{"name", "m", "D"}, ...], "covariance"?: [[...]]}`.
    #[arg(long, global = true)]
    pub universe: Option<PathBuf>,
    /// Output file; stdout when omitted.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Seed for every stochastic step; required by stochastic commands.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Expectation method; quadrature for up to 4 assets, Monte Carlo otherwise.
    #[arg(long, global = true, value_enum)]
    pub method: Option<MethodArg>,
    /// Gauss-Hermite nodes per dimension.
    #[arg(long, global = true)]
    pub quad_order: Option<usize>,
    /// Monte Carlo sample count.
    #[arg(long, global = true)]
    pub mc_samples: Option<usize>,
    /// Forbid short positions on the logarithmic efficient frontier.
    #[arg(long, global = true)]
    pub no_short: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Quad,
    Mc,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Closed-form, numerical and mean-variance Kelly results as JSON.
    Optimize,
    /// Mean-variance frontiers on a grid of target returns.
    Frontier {
        #[arg(long, default_value_t = 101)]
        points: usize,
        /// Add the logarithmic efficient frontier as `sigma_LEF`.
        #[arg(long)]
        lef: bool,
    },
    /// Logarithmic efficient frontier on a grid of growth rates.
    Lef {
        #[arg(long, default_value_t = 41)]
        points: usize,
    },
    /// Two-asset phase diagram as a region grid.
    Phase(PhaseArgs),
    /// Condensation datasets.
    #[command(subcommand)]
    Condense(Condense),
    /// Monte Carlo growth of the Kelly portfolio against alternatives.
    Simulate(SimulateArgs),
    /// Data behind one of the seven reference figures, with their parameters as defaults.
    Figure(FigureArgs),
}

#[derive(Debug, Clone, Args)]
pub struct PhaseArgs {
    #[arg(long, default_value_t = 0.1)]
    pub d1: f64,
    #[arg(long, default_value_t = 0.2)]
    pub d2: f64,
    #[arg(long, default_value_t = -0.3, allow_negative_numbers = true)]
    pub lo: f64,
    #[arg(long, default_value_t = 0.4, allow_negative_numbers = true)]
    pub hi: f64,
    /// Grid points per axis.
    #[arg(long, default_value_t = 141)]
    pub points: usize,
}

#[derive(Debug, Subcommand)]
enum Condense {
    /// Means uniform on `[x - L, x + L]`: portfolio size, participation ratio, return.
    Uniform(UniformArgs),
    /// Pareto-tailed means: condensation exponent against volatility.
    Powerlaw(PowerLawArgs),
}

#[derive(Debug, Clone, Args)]
pub struct UniformArgs {
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 0.01)]
    pub d: f64,
    #[arg(long, default_value_t = -0.05, allow_negative_numbers = true)]
    pub x: f64,
    /// Half-widths, comma separated; 0.01 to 0.5 in steps of 0.01 by default.
    #[arg(long, value_delimiter = ',')]
    pub l: Option<Vec<f64>>,
    #[arg(long, default_value_t = 10_000)]
    pub reps: usize,
}

#[derive(Debug, Clone, Args)]
pub struct PowerLawArgs {
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    /// Fraction of assets in the tail.
    #[arg(long, default_value_t = 0.1)]
    pub r: f64,
    #[arg(long, default_value_t = 0.1)]
    pub m_min: f64,
    /// Volatilities, comma separated; 21 log-spaced values in [0.1, 10] by default.
    #[arg(long, value_delimiter = ',')]
    pub d: Option<Vec<f64>>,
    #[arg(long, default_value_t = 100_000)]
    pub trials: usize,
    /// Use exact order-statistic medians instead of the rounded constants.
    #[arg(long)]
    pub exact_median: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 100)]
    pub horizon: usize,
    #[arg(long, default_value_t = 10_000)]
    pub paths: usize,
    /// Include the all-cash portfolio.
    #[arg(long)]
    pub cash: bool,
    /// Comparison portfolio `name=q1,q2,...`; repeatable.
    #[arg(long = "portfolio")]
    pub portfolios: Vec<String>,
    /// Number of random feasible perturbations of the Kelly fractions.
    #[arg(long, default_value_t = 0)]
    pub perturb: usize,
    #[arg(long, default_value_t = 0.05)]
    pub amplitude: f64,
    /// Smallest max-norm distance of a perturbation from the Kelly fractions.
    #[arg(long, default_value_t = 0.01)]
    pub min_distance: f64,
}

#[derive(Debug, Clone, Args)]
pub struct FigureArgs {
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=7))]
    pub fig: u8,
    /// Grid resolution override.
    #[arg(long)]
    pub points: Option<usize>,
    /// Monte Carlo repetitions override (figure 5).
    #[arg(long)]
    pub reps: Option<usize>,
    /// Monte Carlo trials override (figure 6).
    #[arg(long)]
    pub trials: Option<usize>,
}

fn run(cli: Cli) -> CliResult<()> {
    let ctx = Context::new(cli.global);
    match cli.command {
        Command::Optimize => ctx.optimize(),
        Command::Frontier { points, lef } => ctx.frontier(points, lef),
        Command::Lef { points } => ctx.lef(points),
        Command::Phase(a) => ctx.phase(&a),
        Command::Condense(Condense::Uniform(a)) => ctx.condense_uniform(&a),
        Command::Condense(Condense::Powerlaw(a)) => ctx.condense_powerlaw(&a),
        Command::Simulate(a) => ctx.simulate(&a),
        Command::Figure(a) => ctx.figure(&a),
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
