//! `tgxplain` command-line interface.

mod commands;
mod kv;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Self-explaining temporal link prediction: data generation, training,
/// evaluation, explanation export and plotting.
#[derive(Parser, Debug)]
#[command(name = "tgxplain", version)]
struct Cli {
    /// Worker threads for data-parallel stages (default: all cores).
    #[arg(long, global = true, env = "TGXPLAIN_WORKERS")]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic stream with planted causes.
    Generate(GenerateArgs),
    /// Train a model on a dataset directory.
    Train(TrainArgs),
    /// Evaluate a checkpoint on the test range.
    Eval(EvalArgs),
    /// Export ranked explanations for a range of events.
    Explain(ExplainArgs),
    /// Export latent vectors with their 2-D projection.
    Embed(EmbedArgs),
    /// Render a curve, log or embedding CSV as SVG.
    Plot(PlotArgs),
    /// Aggregate several evaluation reports into mean and std.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
pub struct OutArgs {
    /// Output directory.
    #[arg(long, env = "TGXPLAIN_OUT", default_value = "tgxplain-out")]
    pub out: PathBuf,
    /// Allow writing into a non-empty output directory.
    #[arg(long)]
    pub force: bool,
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[arg(long)]
    pub nodes: Option<usize>,
    #[arg(long)]
    pub events: Option<usize>,
    #[arg(long)]
    pub repeat_ratio: Option<f64>,
    #[arg(long)]
    pub motif_pairs: Option<usize>,
    #[arg(long)]
    pub burst_rate: Option<f64>,
    #[arg(long)]
    pub noise_rate: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Configuration file of `key = value` lines.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Extra `key=value` overrides, applied last.
    #[arg(long = "set", value_parser = kv::parse_override)]
    pub set: Vec<(String, String)>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Dataset directory written by `generate` (or laid out the same way).
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Start from the small desk-scale preset instead of the full-size defaults.
    #[arg(long)]
    pub desk: bool,
    /// Continue from the checkpoint in the output directory.
    #[arg(long)]
    pub resume: bool,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long = "set", value_parser = kv::parse_override)]
    pub set: Vec<(String, String)>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Score explanations against the dataset's planted causes.
    #[arg(long)]
    pub with_truth: bool,
    /// Report MRR separately for seen and unseen pairs.
    #[arg(long)]
    pub seen_unseen: bool,
    #[arg(long, default_value_t = 100)]
    pub negatives: usize,
    /// Test events used for the sparsity protocol (0 = all).
    #[arg(long, default_value_t = 500)]
    pub explain_limit: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug)]
pub struct ExplainArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// First event index (inclusive).
    #[arg(long)]
    pub from: usize,
    /// Last event index (exclusive).
    #[arg(long)]
    pub to: usize,
    #[arg(long, default_value_t = 0.1)]
    pub sparsity: f64,
    /// Output CSV file.
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Args, Debug)]
pub struct EmbedArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Number of test events to export.
    #[arg(long, default_value_t = 300)]
    pub limit: usize,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Args, Debug)]
pub struct PlotArgs {
    /// `curves.csv`, `train_log.csv` or an embeddings CSV.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// `report.json` files, typically one per seed.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Write the aggregate as JSON here.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = tgxplain::par::with_workers(cli.workers, move || match cli.command {
        Command::Generate(a) => commands::generate(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Explain(a) => commands::explain(a),
        Command::Embed(a) => commands::embed(a),
        Command::Plot(a) => commands::plot(a),
        Command::Report(a) => commands::report(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
