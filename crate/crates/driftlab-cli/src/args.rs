//! Command-line surface.  Every subcommand accepts `--seed` and emits
//! identical artifacts on repeated runs; `--threads` caps the worker pool
//! without affecting any result.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "driftlab",
    version,
    about = "Genetic-drift toolkit for estimation-of-distribution algorithms",
    propagate_version = true
)]
pub struct Cli {
    /// Worker thread cap (default from DRIFTLAB_THREADS); never changes
    /// results, only wall-clock time.
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a seeded hitting-time campaign for one parameter setting.
    Simulate(SimulateArgs),
    /// Solve expected hitting times exactly on the frequency-grid chain.
    Exact(ExactArgs),
    /// Sweep a parameter grid and fit a power law to the mean times.
    Scaling(ScalingArgs),
    /// Compare boundary-hit probabilities against the closed-form tail
    /// bound.
    Tailcheck(TailcheckArgs),
    /// Estimate run-away times for fractional learning rates.
    Runaway(RunawayArgs),
    /// Check stochastic dominance of a selected bit against a neutral run.
    Dominance(DominanceArgs),
    /// Invert the tail bound into a minimal stabilising parameter.
    Advise(AdviseArgs),
    /// Cross-check closed-form conditional moments and the sqrt expansion.
    MomentsCheck(MomentsCheckArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AlgoArg {
    Cga,
    Umda,
    Pbil,
    LambdaMmas,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExactAlgoArg {
    Cga,
    Umda,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StopArg {
    Absorption,
    ExitMiddle,
    MarginHit,
    Horizon,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExactStopArg {
    Absorption,
    ExitMiddle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FitnessArg {
    Neutral,
    OneMax,
    LeadingOnes,
    WeakPreferOne,
    WeakPreferZero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AdviseAlgoArg {
    Cga,
    Pbil,
    Umda,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// JSON experiment config; other flags override its fields.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Reduced one-bit process to simulate (full EDAs via --config).
    #[arg(long)]
    pub algo: Option<AlgoArg>,
    /// cGA step granularity (even, >= 2).
    #[arg(long = "K", value_name = "K")]
    pub k: Option<u32>,
    /// Parent count for PBIL/UMDA.
    #[arg(long)]
    pub mu: Option<u32>,
    /// Learning rate for PBIL / lambda-MMAS.
    #[arg(long)]
    pub rho: Option<f64>,
    /// Clamp frequencies to [1/D, 1 - 1/D].
    #[arg(long, value_name = "D")]
    pub margins: Option<u32>,
    #[arg(long)]
    pub stop: Option<StopArg>,
    /// Iteration count for --stop horizon.
    #[arg(long, value_name = "T")]
    pub horizon: Option<u64>,
    /// Lower edge of the middle range (default 0.25).
    #[arg(long)]
    pub lo: Option<f64>,
    /// Upper edge of the middle range (default 0.75).
    #[arg(long)]
    pub hi: Option<f64>,
    #[arg(long)]
    pub replicas: Option<u32>,
    /// Master seed; replica r draws from its own stream.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Per-replica iteration cap (default: 200 drift scales).
    #[arg(long)]
    pub budget: Option<u64>,
    /// Write the summary as JSON.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Write per-replica samples as CSV.
    #[arg(long, value_name = "FILE")]
    pub samples: Option<PathBuf>,
    /// Print the effective config as JSON instead of running.
    #[arg(long)]
    pub dump_config: bool,
}

#[derive(Debug, Args)]
pub struct ExactArgs {
    /// Chain family with a finite frequency grid.
    #[arg(long)]
    pub algo: ExactAlgoArg,
    #[arg(long = "K", value_name = "K")]
    pub k: Option<u32>,
    #[arg(long)]
    pub mu: Option<u32>,
    /// absorption solves E[T]; exit-middle solves the middle-range exit
    /// time.
    #[arg(long, value_enum, default_value_t = ExactStopArg::Absorption)]
    pub stop: ExactStopArg,
    #[arg(long, default_value_t = 0.25)]
    pub lo: f64,
    #[arg(long, default_value_t = 0.75)]
    pub hi: f64,
    /// Starting frequency; must lie on the chain's grid.
    #[arg(long, default_value_t = 0.5)]
    pub start: f64,
    /// Accepted for interface uniformity; the solve is deterministic.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Write the transition kernel as CSV (state,target,probability).
    #[arg(long, value_name = "FILE")]
    pub export_kernel: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScalingArgs {
    /// JSON experiment config with a sweep grid; flags override.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub algo: Option<AlgoArg>,
    /// Grid over the size parameter (K for cga, mu otherwise).
    #[arg(long, value_delimiter = ',', value_name = "V,V,...")]
    pub grid: Vec<u32>,
    /// Grid over rho (PBIL); fix the parent count with --mu.
    #[arg(long, value_delimiter = ',', value_name = "R,R,...")]
    pub grid_rho: Vec<f64>,
    /// Fixed parent count for --grid-rho sweeps.
    #[arg(long)]
    pub mu: Option<u32>,
    /// Fixed learning rate for PBIL mu grids.
    #[arg(long)]
    pub rho: Option<f64>,
    /// Solve the chains exactly instead of sampling (cga/umda).
    #[arg(long)]
    pub exact: bool,
    #[arg(long)]
    pub stop: Option<StopArg>,
    #[arg(long, value_name = "T")]
    pub horizon: Option<u64>,
    #[arg(long)]
    pub lo: Option<f64>,
    #[arg(long)]
    pub hi: Option<f64>,
    #[arg(long)]
    pub replicas: Option<u32>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub budget: Option<u64>,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Print the effective config as JSON instead of running (sampled
    /// sweeps only).
    #[arg(long)]
    pub dump_config: bool,
}

#[derive(Debug, Args)]
pub struct TailcheckArgs {
    /// JSON tail-check config; other flags override its fields.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub algo: Option<AlgoArg>,
    #[arg(long = "K", value_name = "K")]
    pub k: Option<u32>,
    #[arg(long)]
    pub mu: Option<u32>,
    #[arg(long)]
    pub rho: Option<f64>,
    /// Half-width of the middle range around 1/2.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Horizons T to check.
    #[arg(long, value_delimiter = ',', value_name = "T,T,...")]
    pub horizons: Vec<u64>,
    #[arg(long)]
    pub replicas: Option<u32>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also check the exact chain CDF against the bound (cga only).
    #[arg(long)]
    pub exact: bool,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub dump_config: bool,
}

#[derive(Debug, Args)]
pub struct RunawayArgs {
    /// JSON experiment config with stop: run-away; flags override.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub mu: Option<u32>,
    #[arg(long)]
    pub rho: Option<f64>,
    /// Boundary band factor, strictly between 1/2 and 1/sqrt(2).
    #[arg(long, default_value_t = 0.6)]
    pub c: f64,
    /// Certification threshold for the residual flip probability.
    #[arg(long, default_value_t = 1e-9)]
    pub epsilon: f64,
    /// Sweep over parent counts and fit a power law to the means.
    #[arg(long, value_delimiter = ',', value_name = "M,M,...")]
    pub grid_mu: Vec<u32>,
    /// Sweep over learning rates.
    #[arg(long, value_delimiter = ',', value_name = "R,R,...")]
    pub grid_rho: Vec<f64>,
    #[arg(long)]
    pub replicas: Option<u32>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub budget: Option<u64>,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub samples: Option<PathBuf>,
    #[arg(long)]
    pub dump_config: bool,
}

#[derive(Debug, Args)]
pub struct DominanceArgs {
    #[arg(long)]
    pub algo: AlgoArg,
    #[arg(long = "K", value_name = "K")]
    pub k: Option<u32>,
    #[arg(long)]
    pub mu: Option<u32>,
    #[arg(long)]
    pub lambda: Option<u32>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long, default_value_t = 1)]
    pub dim: u32,
    /// Fitness driving the compared run; the reference run is neutral.
    #[arg(long, value_enum, default_value_t = FitnessArg::OneMax)]
    pub fitness: FitnessArg,
    /// Tracked bit; weak-preference fitnesses act on it.
    #[arg(long, default_value_t = 0)]
    pub bit: usize,
    #[arg(long, default_value_t = 5)]
    pub t_max: u64,
    /// Exact law propagation (needs --dim 1) instead of Monte Carlo.
    #[arg(long)]
    pub exact: bool,
    #[arg(long)]
    pub replicas: Option<u32>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AdviseArgs {
    #[arg(long)]
    pub algo: AdviseAlgoArg,
    /// Fitness evaluation budget F.
    #[arg(long, value_name = "F")]
    pub budget: u64,
    /// Number of optimized bits D.
    #[arg(long, value_name = "D")]
    pub dim: u32,
    /// Drift tolerance: frequencies stay within gamma of 1/2.
    #[arg(long)]
    pub gamma: f64,
    /// Failure probability.
    #[arg(long, default_value_t = 0.1)]
    pub delta: f64,
    /// Offspring per iteration (required for pbil/umda).
    #[arg(long)]
    pub lambda: Option<u32>,
    /// Learning rate (required for pbil).
    #[arg(long)]
    pub rho: Option<f64>,
    /// Accepted for interface uniformity; the advisor is deterministic.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MomentsCheckArgs {
    /// Largest UMDA parent count to cross-check.
    #[arg(long, default_value_t = 12)]
    pub max_mu: u32,
    /// Largest cGA granularity to cross-check (even).
    #[arg(long, default_value_t = 64)]
    pub max_k: u32,
    /// Random (z, z0) pairs for the sqrt expansion check.
    #[arg(long, default_value_t = 100_000)]
    pub pairs: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}
