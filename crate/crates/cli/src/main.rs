//! `promptvid` command-line driver.

mod commands;
mod run_dir;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use promptvid::ErrorKind;

#[derive(Parser)]
#[command(name = "promptvid", version, about = "Video-text dual encoder experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic action dataset.
    GenData(GenDataArgs),
    /// Fine-tune a model and write a run directory.
    Train(TrainArgs),
    /// Evaluate a run's checkpoint with multi-view inference.
    Eval(EvalArgs),
    /// Classify clips against a new label vocabulary.
    Zeroshot(ZeroshotArgs),
    /// Fine-tune on k clips per class, then evaluate.
    Fewshot(FewshotArgs),
    /// Sweep one ablation axis and print a results table.
    Ablate(AblateArgs),
}

#[derive(Args)]
struct GenDataArgs {
    /// Dataset description (TOML).
    #[arg(long)]
    spec: PathBuf,
    /// Destination directory.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the seed in the dataset description.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Freeze {
    Text,
    Vision,
    Both,
}

/// Options shared by every command that builds or trains a model.
#[derive(Args, Clone)]
struct ExperimentArgs {
    /// Experiment configuration (TOML); built-in defaults if omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset directory or manifest file; overrides `paths.data`.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Visual prompt: meanp, conv1d, lstm, transf, transf_cls, joint, shift.
    #[arg(long)]
    visual_prompt: Option<String>,
    /// Feed bare label text instead of prompt templates.
    #[arg(long)]
    no_text_prompt: bool,
    /// Keep the named encoders fixed.
    #[arg(long, value_enum)]
    freeze: Option<Freeze>,
    /// Replace the text branch with a linear classifier.
    #[arg(long)]
    unimodal_baseline: bool,
    /// `random`, or a checkpoint to initialise from.
    #[arg(long)]
    init: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    exp: ExperimentArgs,
    /// Run directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Run directory written by `train`.
    #[arg(long)]
    run: PathBuf,
    /// Checkpoint to evaluate instead of the run's best one.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Dataset override.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Evaluate a single centre view instead of the configured view set.
    #[arg(long)]
    single_view: bool,
}

#[derive(Args)]
struct ZeroshotArgs {
    #[arg(long)]
    run: PathBuf,
    /// New label vocabulary, one label per line.
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    /// Template file; the run's configured templates if omitted.
    #[arg(long)]
    templates: Option<PathBuf>,
}

#[derive(Args)]
struct FewshotArgs {
    #[command(flatten)]
    exp: ExperimentArgs,
    /// Training clips kept per class.
    #[arg(long)]
    k: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    exp: ExperimentArgs,
    /// visual-prompt, textual-prompt, freeze or modality.
    #[arg(long)]
    axis: String,
    #[arg(long)]
    out: PathBuf,
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Config => 2,
        ErrorKind::Data => 3,
        ErrorKind::Numeric => 4,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenData(a) => commands::gen_data(&a),
        Command::Train(a) => commands::train(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Zeroshot(a) => commands::zeroshot(&a),
        Command::Fewshot(a) => commands::fewshot(&a),
        Command::Ablate(a) => commands::ablate(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.kind()))
        }
    }
}
