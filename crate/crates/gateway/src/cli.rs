//! Command-line interface.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "jambayes", version, about = "Forecast traffic jams and surprises from sensor streams")]
pub struct Cli {
    /// Directory holding streams and artifacts.
    #[arg(long, global = true, env = "JAMBAYES_DATA", default_value = "data")]
    pub data: PathBuf,
    /// Seed for simulation and structure search.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic sensor stream, context and incident feed.
    Simulate(SimulateArgs),
    /// Compute congestion fractions and pick bottlenecks.
    Identify(IdentifyArgs),
    /// Sample timestamped cases with time-to-event targets.
    BuildCases(BuildCasesArgs),
    /// Learn the forecasting network, optionally with reliability models.
    Train(TrainArgs),
    /// Score forecasts on the held-out cases.
    Evaluate(EvaluateArgs),
    /// Fit the marginal model and tag surprising states.
    SurpriseEval(SurpriseEvalArgs),
    /// Train and evaluate future-surprise classifiers.
    FutureSurpriseEval(FutureSurpriseEvalArgs),
    /// Run the HTTP/JSON service over a replayed stream.
    Serve(ServeArgs),
    /// Replay the stream offline through the alert engine.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// One of standard, heavy-rain, propagation, stationary.
    #[arg(long, default_value = "standard")]
    pub preset: String,
    #[arg(long, default_value_t = 90)]
    pub days: u32,
    /// TOML configuration used instead of a preset.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IdentifyArgs {
    /// Minimum congestion fraction for a bottleneck cell.
    #[arg(long, default_value_t = 0.015)]
    pub threshold: f64,
}

#[derive(Debug, Args)]
pub struct BuildCasesArgs {
    #[arg(long, default_value_t = 15)]
    pub sample_interval: u32,
    /// Minutes after which a target counts as absent.
    #[arg(long, default_value_t = 120)]
    pub censor: u32,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, default_value_t = 0.75)]
    pub train_fraction: f64,
    #[arg(long, default_value_t = 3)]
    pub restarts: usize,
    /// Also train per-bottleneck reliability models.
    #[arg(long)]
    pub reliability: bool,
    #[arg(long, default_value_t = 15.0)]
    pub tolerance: f64,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long, default_value_t = 15.0)]
    pub tolerance: f64,
    #[arg(long, default_value_t = 0.75)]
    pub train_fraction: f64,
}

#[derive(Debug, Args)]
pub struct SurpriseEvalArgs {
    #[arg(long, default_value_t = 0.10)]
    pub threshold: f64,
    /// Leading share of the stream the marginal model is fitted on.
    #[arg(long, default_value_t = 0.75)]
    pub fit_fraction: f64,
}

#[derive(Debug, Args)]
pub struct FutureSurpriseEvalArgs {
    #[arg(long, default_value_t = 30)]
    pub lead: u32,
    #[arg(long, default_value_t = 5)]
    pub sample_interval: u32,
    #[arg(long, default_value_t = 0.75)]
    pub train_fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub restarts: usize,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    /// Simulated minutes per wall-clock second; 0 advances only on request.
    #[arg(long, default_value_t = 1)]
    pub rate: u32,
    /// First replay minute, as a stream minute or RFC 3339 timestamp.
    #[arg(long)]
    pub start: Option<String>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// First replay minute, as a stream minute or RFC 3339 timestamp.
    #[arg(long)]
    pub from: Option<String>,
    #[arg(long, default_value_t = 1440)]
    pub minutes: u32,
}
