//! `dvtg`: synthesize data, train, evaluate and inspect sentence-guided
//! thumbnail models.

mod commands;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dvtg_core::{Error, InferenceRule, ModulationMode, Variant};

#[derive(Parser, Debug)]
#[command(name = "dvtg", version, about = "Sentence-guided dynamic video thumbnails")]
struct Cli {
    /// More log output (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic dataset: manifest, embeddings and feature files.
    SynthData(SynthArgs),
    /// Train a model and write checkpoint, history and summary.
    Train(TrainArgs),
    /// Score a checkpoint against a dataset.
    Eval(EvalArgs),
    /// Predict the thumbnail of one video for one sentence.
    Predict(PredictArgs),
    /// Describe a checkpoint or a manifest.
    Inspect(InspectArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// JSON file overriding generator settings.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    videos: Option<usize>,
    #[arg(long)]
    clips: Option<usize>,
}

#[derive(Args, Debug)]
struct DataArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    embeddings: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Fixed,
    Learned,
    Predicted,
}

impl From<ModeArg> for ModulationMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Fixed => ModulationMode::FixedIdentity,
            ModeArg::Learned => ModulationMode::Learned,
            ModeArg::Predicted => ModulationMode::Predicted,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum AggArg {
    Mean,
    Max,
    Both,
    Consistent,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "guided_dvtg", value_parser = parse_variant)]
    variant: Variant,
    /// Modulation mode; defaults to the variant's own.
    #[arg(long, value_enum)]
    modulation: Option<ModeArg>,
    #[arg(long, default_value_t = dvtg_core::optim::DEFAULT_LR)]
    lr: f64,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// JSON file overriding architecture settings.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Record train and validation metrics every N epochs (0: only at the end).
    #[arg(long, default_value_t = 10)]
    eval_every: usize,
    /// Weight of the sentence reconstruction loss.
    #[arg(long, default_value_t = 1.0)]
    aux_weight: f64,
    /// Aggregation for validation metrics.
    #[arg(long, value_enum, default_value = "mean")]
    agg: AggArg,
    #[arg(long, default_value = "argmax", value_parser = parse_rule)]
    infer: InferenceRule,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Directory for eval.json.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Fail unless the checkpoint holds this variant.
    #[arg(long, value_parser = parse_variant)]
    variant: Option<Variant>,
    #[arg(long, value_enum, default_value = "mean")]
    agg: AggArg,
    #[arg(long, default_value = "argmax", value_parser = parse_rule)]
    infer: InferenceRule,
    /// split.json written by `train`; restricts evaluation to --subset.
    #[arg(long, requires = "subset")]
    split: Option<PathBuf>,
    #[arg(long, requires = "split", value_parser = ["train", "val", "test"])]
    subset: Option<String>,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    video: String,
    /// Query words, whitespace separated.
    #[arg(long)]
    sentence: String,
    #[arg(long, default_value = "argmax", value_parser = parse_rule)]
    infer: InferenceRule,
    /// Directory for the SVG timeline.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct InspectArgs {
    #[arg(long, required_unless_present = "manifest")]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_rule(s: &str) -> Result<InferenceRule, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Usage(_) => 1,
        Error::Numeric { .. } => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match cli.command {
        Command::SynthData(a) => commands::synth_data(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Predict(a) => commands::predict(a),
        Command::Inspect(a) => commands::inspect(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
