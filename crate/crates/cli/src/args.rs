use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "coalesce", version, about = "Multi-target tracking experiments on crossing-target scenarios")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate trials and write them as JSON.
    Simulate(RunArgs),
    /// Run tracker configurations over trials and write their estimates.
    Track(TrackArgs),
    /// Monte Carlo OSPA tables for one or more tracker configurations.
    Metrics(MetricsArgs),
    /// Metrics over the detection probability and clutter grid.
    Sweep(MetricsArgs),
    /// Check the set-integral identities on the oracle fixtures.
    Verify(VerifyArgs),
}

/// Scenario and run flags shared by every simulation command. Values from
/// `--config` take precedence.
#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long, default_value_t = 1)]
    pub case: u8,
    #[arg(long, alias = "n", default_value_t = 6)]
    pub n_targets: usize,
    #[arg(long, default_value_t = 0.7)]
    pub pd: f64,
    #[arg(long, default_value_t = 10.0)]
    pub lambda_fa: f64,
    #[arg(long, default_value_t = 50)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// JSON file overriding any of the flags above.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TrackerArg {
    Tomb,
    VmbG,
    VmbMix,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExtractorArg {
    Naive,
    VmbRule,
    Vmmospa,
}

#[derive(Debug, Clone, Args)]
pub struct TrackerArgs {
    /// Repeat to compare several reductions.
    #[arg(long = "tracker", value_enum, default_values_t = [TrackerArg::VmbG])]
    pub trackers: Vec<TrackerArg>,
    /// Defaults to `naive` for TOMB and `vmb-rule` otherwise.
    #[arg(long, value_enum)]
    pub extractor: Option<ExtractorArg>,
}

#[derive(Debug, Clone, Args)]
pub struct TrackArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub tracker: TrackerArgs,
    /// Output directory of `simulate`; trials are generated when absent.
    #[arg(long)]
    pub input: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct MetricsArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub tracker: TrackerArgs,
    /// OSPA order.
    #[arg(long, default_value_t = 1.0)]
    pub p: f64,
    /// OSPA cutoff.
    #[arg(long, default_value_t = 20.0)]
    pub c: f64,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    /// Fixture file; the bundled fixtures are used when absent.
    #[arg(long)]
    pub fixtures: Option<PathBuf>,
}
