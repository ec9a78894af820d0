//! `filterlens`: batch pipeline from exported activations to probe SR
//! tables, per-filter cluster records, layer statistics and SNR reports.

mod commands;
mod config;
mod output;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::output::Format;

#[derive(Debug, Parser)]
#[command(name = "filterlens", version, about = "Layer-wise probe and single-filter cluster analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write synthetic train/test activation files with planted clusters.
    Synth(SynthArgs),
    /// Train linear probes on frozen features and tabulate success rates.
    Probe(ProbeArgs),
    /// Per-filter field/clip/cluster analysis, layer tables and SNR.
    Analyze(AnalyzeArgs),
    /// Threshold sweep of the cluster statistics only.
    Sweep(AnalyzeArgs),
    /// Closed-form signal-to-noise ratio.
    Snr(SnrArgs),
    /// Collect the tables in an output directory into one summary.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// TOML config file (flat `key = value` table); flags override its entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory (the FILTERLENS_OUT environment variable takes precedence).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Report formats; tables are written as CSV and/or JSON, plots as SVG.
    #[arg(long, value_enum, value_delimiter = ',')]
    pub format: Vec<Format>,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Layer index written to the file headers (repeatable).
    #[arg(long, value_delimiter = ',')]
    pub layer: Vec<u32>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub labels: Option<usize>,
    #[arg(long)]
    pub filters: Option<usize>,
    /// Feature slots per filter.
    #[arg(long)]
    pub spatial: Option<usize>,
    #[arg(long)]
    pub cluster_size: Option<usize>,
    #[arg(long)]
    pub samples_per_label: Option<usize>,
    #[arg(long)]
    pub test_samples_per_label: Option<usize>,
    #[arg(long)]
    pub amplitude: Option<f32>,
    /// Probability that an off-cluster response is flipped to responsive.
    #[arg(long)]
    pub noise_rate: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct ProbeArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Directory holding layer{m}_{train,test}.fla (defaults to the output directory).
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub layer: Vec<u32>,
    /// Probe seeds (repeatable); SR mean and Std are taken over them.
    #[arg(long, value_delimiter = ',')]
    pub seed: Vec<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub momentum: Option<f64>,
    #[arg(long)]
    pub l2: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// `q:every[:until],...`, e.g. `0.65:20:140,0.55:20`; `none` disables decay.
    #[arg(long)]
    pub schedule: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Directory holding layer{m}_seed{s}.flw (defaults to the output directory).
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub layer: Vec<u32>,
    /// Probe seeds to pool (repeatable).
    #[arg(long, value_delimiter = ',')]
    pub seed: Vec<u64>,
    /// Clipping threshold in (0, 1).
    #[arg(long)]
    pub theta: Option<f64>,
    /// `lo:hi:step`.
    #[arg(long)]
    pub theta_sweep: Option<String>,
    /// Activation split to analyze.
    #[arg(long, value_parser = ["train", "test"])]
    pub split: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct SnrArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub filters: Option<usize>,
    #[arg(long)]
    pub cluster_size: Option<usize>,
    #[arg(long)]
    pub labels: Option<usize>,
    /// Mean sub-threshold field relative to the unit field.
    #[arg(long, allow_hyphen_values = true)]
    pub nu: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub common: CommonArgs,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => commands::synth::run(a),
        Command::Probe(a) => commands::probe::run(a),
        Command::Analyze(a) => commands::analyze::run(a, false),
        Command::Sweep(a) => commands::analyze::run(a, true),
        Command::Snr(a) => commands::snr::run(a),
        Command::Report(a) => commands::report::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
