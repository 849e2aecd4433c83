mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Phantom angiogram generation, correspondence training and evaluation,
/// centerline tracing and the query server.
#[derive(Debug, Parser)]
#[command(name = "angiocorr", version)]
pub struct Cli {
    /// Seed for data generation, initialization, training and pairing
    /// (default 0, or the seed in the config file).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// JSON file with optional "dataset", "model" and "train" sections.
    /// Each section is a complete configuration; command flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Debug-level logging.
    #[arg(long, short, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a phantom dataset with labels, cameras and a manifest.
    GenData(GenDataArgs),
    /// Train a P2P or C2C model on the train split of a dataset.
    Train(TrainArgs),
    /// Evaluate checkpoints on the test split and write report tables.
    Eval(EvalArgs),
    /// Trace a centerline between two seed pixels.
    Trace(TraceArgs),
    /// Serve views and correspondence queries over HTTP.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub subjects: Option<usize>,
    /// Rendered image size in pixels.
    #[arg(long)]
    pub image_size: Option<usize>,
    #[arg(long)]
    pub val_fraction: Option<f64>,
    #[arg(long)]
    pub test_fraction: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset directory.
    #[arg(long)]
    pub data: PathBuf,
    /// p2p or c2c.
    #[arg(long)]
    pub task: String,
    /// Checkpoint to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Model input size; must divide the dataset image size.
    #[arg(long)]
    pub size: Option<usize>,
    /// Waypoint size of a C2C model.
    #[arg(long)]
    pub waypoints: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// Queries (P2P) or waypoints (C2C) per step.
    #[arg(long)]
    pub queries: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub lr_backbone: Option<f64>,
    /// Log every this many steps.
    #[arg(long)]
    pub log_every: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub p2p: PathBuf,
    /// C2C checkpoints; the first refines the point table, each adds a
    /// column to the waypoint table.
    #[arg(long, required = true)]
    pub c2c: Vec<PathBuf>,
    /// Evaluate only the first pairs.
    #[arg(long)]
    pub max_pairs: Option<usize>,
    /// markdown or csv.
    #[arg(long, default_value = "markdown")]
    pub format: String,
    /// Report file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TraceArgs {
    /// Trace on the built-in two-vessel overlap phantom, single-view and
    /// fused with its exact correspondence.
    #[arg(long, conflicts_with_all = ["data", "view"])]
    pub overlap: bool,
    /// Image size of the overlap phantom.
    #[arg(long, default_value_t = 256)]
    pub size: usize,
    #[arg(long, requires = "view")]
    pub data: Option<PathBuf>,
    /// View id to trace on.
    #[arg(long, requires = "data")]
    pub view: Option<usize>,
    /// Start pixel as x,y.
    #[arg(long, value_parser = parse_pixel)]
    pub from: Option<(usize, usize)>,
    /// End pixel as x,y.
    #[arg(long, value_parser = parse_pixel)]
    pub to: Option<(usize, usize)>,
    /// Second view for a fused trace; needs --p2p.
    #[arg(long, requires = "p2p")]
    pub target: Option<usize>,
    /// P2P checkpoint supplying the correspondence of a fused trace.
    #[arg(long, requires = "target")]
    pub p2p: Option<PathBuf>,
    /// JSON result file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Directory for PGM overlays of the traced paths.
    #[arg(long)]
    pub overlay_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub p2p: Option<PathBuf>,
    #[arg(long)]
    pub c2c: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
}

fn parse_pixel(s: &str) -> Result<(usize, usize), String> {
    let (x, y) = s.split_once(',').ok_or_else(|| format!("expected x,y, got {s:?}"))?;
    let p = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("{v:?}: {e}"));
    Ok((p(x)?, p(y)?))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "debug" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
