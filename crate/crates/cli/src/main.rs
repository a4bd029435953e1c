//! `lidar-denoise` — pipeline driver: generate → augment → autolabel →
//! filter/train → evaluate → report.
//!
//! Every subcommand prints a machine-readable JSON summary on stdout.
//! Exit codes: 0 success, 1 usage error, 2 data/format error, 3 numerical
//! failure.

mod ops;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use lidar_denoise::Error;

#[derive(Parser)]
#[command(name = "lidar-denoise", version, about = "Lidar weather de-noising pipeline")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Master seed for all randomness.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for per-frame stages; outputs are byte-identical
    /// for any value.
    #[arg(long, global = true, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub workers: u64,
    /// Log progress to stderr.
    #[arg(long, global = true)]
    pub verbose: bool,
}

#[derive(Subcommand)]
pub enum Command {
    /// Generate a synthetic labeled dataset (scenes, splits, references).
    Synth(SynthArgs),
    /// Apply fog/rain augmentation to clear frames.
    Augment(AugmentArgs),
    /// Label weather clutter against clear reference recordings.
    Autolabel(AutolabelArgs),
    /// Run a geometric outlier filter (DROR/ROR/SOR).
    Filter(FilterArgs),
    /// Train the segmentation network on labeled frames.
    Train(TrainArgs),
    /// Predict labels and de-noise frames with a trained checkpoint.
    Predict(PredictArgs),
    /// Score predicted labels against ground truth (per-class IoU).
    Eval(EvalArgs),
    /// Emit result tables and degradation CSVs.
    Report(ReportArgs),
}

#[derive(Args)]
pub struct SynthArgs {
    /// Output dataset directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Dataset spec JSON document; defaults to the built-in desk-scale set.
    #[arg(long)]
    pub spec: Option<PathBuf>,
}

#[derive(Args)]
pub struct AugmentArgs {
    /// Directory of input frames (*.lri).
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Weather preset: rain, rain15, rain33, rain55 or fog:V=<meters>.
    #[arg(long, conflicts_with = "params")]
    pub preset: Option<String>,
    /// Full weather parameter JSON document (overrides --preset).
    #[arg(long)]
    pub params: Option<PathBuf>,
}

#[derive(Args)]
pub struct AutolabelArgs {
    /// Frames to label.
    #[arg(long)]
    pub input: PathBuf,
    /// Clear-weather reference frames of the same static scene.
    #[arg(long)]
    pub reference: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Weather class recorded for clutter pixels: rain or fog.
    #[arg(long, default_value = "fog")]
    pub class: String,
    /// Distance agreement threshold in meters.
    #[arg(long, default_value_t = 0.35)]
    pub delta_r: f64,
    /// Also run the split-half false-rate self check on the references.
    #[arg(long)]
    pub self_check: bool,
}

#[derive(Args)]
pub struct FilterArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// dror, ror or sor.
    #[arg(long, default_value = "dror")]
    pub method: String,
    /// Weather class recorded for removed pixels: rain or fog.
    #[arg(long, default_value = "fog")]
    pub class: String,
    /// ROR search radius in meters.
    #[arg(long, default_value_t = 0.5)]
    pub radius: f64,
    /// DROR/ROR minimum neighbor count.
    #[arg(long, default_value_t = 3)]
    pub min_neighbors: usize,
    /// SOR neighbor count k.
    #[arg(long, default_value_t = 8)]
    pub k: usize,
    /// SOR standard-deviation multiplier.
    #[arg(long, default_value_t = 1.0)]
    pub std_mult: f64,
}

#[derive(Args)]
pub struct TrainArgs {
    /// Directory of labeled frames.
    #[arg(long)]
    pub data: PathBuf,
    /// Checkpoint output path.
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated block widths (5 values).
    #[arg(long, default_value = "8,16,24,24,16")]
    pub widths: String,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value_t = 20)]
    pub batch_size: usize,
    /// Adam learning rate (desk-scale default).
    #[arg(long, default_value_t = 1e-3)]
    pub learning_rate: f64,
    /// Loss reduction: mean or sum.
    #[arg(long, default_value = "mean")]
    pub reduction: String,
    /// Optional crop applied to every frame: START,WIDTH columns.
    #[arg(long)]
    pub crop: Option<String>,
    /// Disable training-mode dropout.
    #[arg(long)]
    pub no_dropout: bool,
    /// Per-class loss weights VALID,RAIN,FOG; 'balanced' for
    /// inverse-frequency weights computed from the training labels; or
    /// 'balanced-sqrt' for their square roots (softer, usually better
    /// IoU on very rare classes).
    #[arg(long, default_value = "balanced-sqrt")]
    pub class_weights: String,
    /// Multiplicative learning-rate decay applied after every epoch.
    #[arg(long, default_value_t = 0.90)]
    pub lr_decay: f64,
    /// Training scalar type: f32 or f64. Checkpoints always store f64.
    #[arg(long, default_value = "f32")]
    pub dtype: String,
}

#[derive(Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Labeled output frames.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write de-noised frames (clutter blanked) here.
    #[arg(long)]
    pub denoised_out: Option<PathBuf>,
}

#[derive(Args)]
pub struct EvalArgs {
    /// Directory of predicted labeled frames.
    #[arg(long)]
    pub pred: PathBuf,
    /// Directory of ground-truth labeled frames (matched by file name).
    #[arg(long)]
    pub gt: PathBuf,
}

#[derive(Args)]
pub struct ReportArgs {
    /// Evaluation summaries to tabulate, as name=path.json (repeatable).
    #[arg(long = "eval")]
    pub evals: Vec<String>,
    /// Write the method × per-class IoU table as CSV here.
    #[arg(long)]
    pub table_out: Option<PathBuf>,
    /// Directory of labeled frames for per-frame clutter ratios.
    #[arg(long)]
    pub labeled: Option<PathBuf>,
    /// Write the per-frame clutter-ratio CSV here.
    #[arg(long)]
    pub ratios_out: Option<PathBuf>,
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::InvalidParameter(_) => 1,
        Error::NonFinite(_) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            // clap renders help to stdout and errors to stderr itself
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Synth(args) => ops::synth(&cli, args),
        Command::Augment(args) => ops::augment(&cli, args),
        Command::Autolabel(args) => ops::autolabel(&cli, args),
        Command::Filter(args) => ops::filter(&cli, args),
        Command::Train(args) => ops::train(&cli, args),
        Command::Predict(args) => ops::predict(&cli, args),
        Command::Eval(args) => ops::eval(&cli, args),
        Command::Report(args) => ops::report(&cli, args),
    };
    match result {
        Ok(summary) => {
            println!("{}", serde_json::to_string_pretty(&summary).expect("summary is serializable"));
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
