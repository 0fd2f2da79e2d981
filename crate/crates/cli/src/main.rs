//! `glyphforge`: build datasets, train, generate, evaluate, interpolate and serve.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use glyphforge_core::train::LossMode;

/// Failure classes, mapped to exit codes 2 and 1.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl From<glyphforge_core::Error> for CliError {
    fn from(e: glyphforge_core::Error) -> Self {
        use glyphforge_core::Error as E;
        match e {
            E::InvalidArgument(_) | E::UnknownLossMode(_) | E::ClassOutOfRange { .. } => CliError::Usage(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Parser, Debug)]
#[command(name = "glyphforge", version, about = "Style-consistent glyph set generation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build or synthesize a glyph dataset file.
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// Train a generator and critic.
    Train(TrainArgs),
    /// Render random glyph sets from a checkpoint.
    Generate(GenerateArgs),
    /// Score legibility, diversity and style consistency.
    Evaluate(EvaluateArgs),
    /// Render glyphs along a path through style space.
    Interpolate(InterpolateArgs),
    /// Run the HTTP inference service.
    Serve(ServeArgs),
}

#[derive(Subcommand, Debug)]
pub enum DatasetCommand {
    /// Procedurally generated styles.
    Synth {
        #[arg(long, default_value_t = 50)]
        styles: usize,
        #[arg(long, default_value_t = 10)]
        classes: usize,
        #[arg(long, default_value_t = 32)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Import `root/<font_id>/<class_id>.png`.
    Build {
        #[arg(long)]
        root: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Write a dataset file back out as a PNG tree.
    Export {
        #[arg(short, long)]
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// JSON config (comments allowed); flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_parser = clap::builder::ValueParser::new(parse_loss_mode))]
    pub loss_mode: Option<LossMode>,
    #[arg(long, conflicts_with = "iterations")]
    pub epochs: Option<usize>,
    /// Total generator updates, rounded up to whole epochs.
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub n_disc: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    /// Continue from a checkpoint written by an earlier run.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

fn parse_loss_mode(s: &str) -> Result<LossMode, String> {
    s.parse::<LossMode>().map_err(|e| e.to_string())
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value_t = 30)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub num_styles: Option<usize>,
    /// Saved classifier; trained from the dataset (9:1 font split) when missing.
    #[arg(long)]
    pub classifier: Option<PathBuf>,
    /// Evaluate this PNG tree instead of sampling the generator.
    #[arg(long)]
    pub generated: Option<PathBuf>,
    #[arg(long)]
    pub radius: Option<usize>,
    #[arg(long)]
    pub threshold: Option<f32>,
    #[arg(long)]
    pub bin_width: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct InterpolateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// JSON array of style vectors.
    #[arg(long, conflicts_with_all = ["seeds", "random_anchors"])]
    pub anchors: Option<PathBuf>,
    /// Comma-separated seeds, one anchor each.
    #[arg(long, value_delimiter = ',', conflicts_with = "random_anchors")]
    pub seeds: Option<Vec<u64>>,
    /// Draw this many anchors from `--seed`.
    #[arg(long)]
    pub random_anchors: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 8)]
    pub steps: usize,
    /// Class index or letter.
    #[arg(long, default_value = "0")]
    pub class: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ServeArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Without a checkpoint every endpoint answers 503.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub bind: Option<String>,
    #[arg(long)]
    pub port: Option<u16>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Dataset(c) => commands::dataset(c),
        Command::Train(a) => commands::train(a),
        Command::Generate(a) => commands::generate(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Interpolate(a) => commands::interpolate(a),
        Command::Serve(a) => commands::serve(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
