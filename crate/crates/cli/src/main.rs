//! `amuze`: ingest a MIDI corpus, train the two hand models, generate and
//! evaluate two-hand piano pieces.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::ConfigFile;
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "amuze", version, about = "Scale-invariant two-hand piano generation")]
struct Cli {
    /// Flat key=value settings file. Command-line flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Tokenise every MIDI file under a directory into a corpus file.
    Ingest(IngestArgs),
    /// Train a melody (right hand) or harmony (left hand) model.
    Train(TrainArgs),
    /// Generate a two-hand piece from a prompt file.
    Generate(GenerateArgs),
    /// Score MIDI files with QN, UPC, TD and OOS.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Directory searched recursively for .mid and .midi files.
    pub dir: PathBuf,
    /// Output directory for corpus.txt, ingest_report.tsv and config.txt.
    #[arg(short, long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Token corpus written by `ingest`.
    pub corpus: PathBuf,
    /// Output directory for checkpoint.amuz, train_log.csv and config.txt.
    #[arg(short, long)]
    pub out: PathBuf,
    /// right trains the melody model, left the harmony model.
    #[arg(long)]
    pub hand: Option<String>,
    /// melody, harmony or harmony-sum. Derived from --hand and --ablation when absent.
    #[arg(long)]
    pub mode: Option<String>,
    /// 1 trains an unconditioned left hand, 2 the summed-note-embedding variant.
    #[arg(long)]
    pub ablation: Option<u8>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Truncated backpropagation window in tokens.
    #[arg(long)]
    pub bptt: Option<usize>,
    #[arg(long)]
    pub grad_clip: Option<f64>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub embed: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Melody (right hand) checkpoint.
    #[arg(long)]
    pub melody: PathBuf,
    /// Harmony (left hand) checkpoint.
    #[arg(long)]
    pub harmony: PathBuf,
    /// MIDI file whose opening seeds both hands.
    #[arg(long)]
    pub prompt: PathBuf,
    /// Output MIDI path. The effective config is written beside it.
    #[arg(short, long)]
    pub out: PathBuf,
    /// Melody tokens to generate after the prompt.
    #[arg(long)]
    pub num_notes: Option<usize>,
    /// Bars of the prompt file to use.
    #[arg(long)]
    pub prompt_bars: Option<usize>,
    /// Use the first N tokens of each hand instead of whole bars.
    #[arg(long)]
    pub prompt_notes: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub top_k: Option<usize>,
    /// 1 or 2 must match the harmony checkpoint; 3 disables enrichment.
    #[arg(long)]
    pub ablation: Option<u8>,
    #[arg(long)]
    pub enrich_p_melody: Option<f64>,
    #[arg(long)]
    pub enrich_p_harmony: Option<f64>,
    #[arg(long)]
    pub no_enrich: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// A MIDI file or a directory searched recursively.
    pub path: PathBuf,
    /// Write the CSV here instead of stdout.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    /// `auto`, or a scale such as `D:major`.
    #[arg(long)]
    pub scale: Option<String>,
    /// pitch-classes or pitches.
    #[arg(long)]
    pub upc: Option<String>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = ConfigFile::load(cli.config.as_deref())?;
    match cli.command {
        Command::Ingest(a) => commands::ingest::run(a, &file),
        Command::Train(a) => commands::train::run(a, &file),
        Command::Generate(a) => commands::generate::run(a, &file),
        Command::Evaluate(a) => commands::evaluate::run(a, &file),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.code());
            ExitCode::FAILURE
        }
    }
}
