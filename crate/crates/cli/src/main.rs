use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use lungdet::config::{ConfigLayer, RunConfig};
use lungdet::data::split::SplitName;
use lungdet::data::{synth_generate, SynthParams};
use lungdet::{pipeline, Error, ErrorKind};

/// Nodule detection in chest radiographs: synthesize data, split, train,
/// detect and evaluate.
#[derive(Debug, Parser)]
#[command(name = "lungdet", version)]
struct Cli {
    /// Worker threads for data preparation and kernels; 1 keeps runs bit-reproducible.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a seeded synthetic dataset (images/ and labels/).
    Synth(SynthArgs),
    /// Partition a dataset into train/val/test and write manifest.txt.
    Split(SplitArgs),
    /// Train a detector on the manifest's train split.
    Train(TrainArgs),
    /// Run a trained detector over a directory of images.
    Detect(DetectArgs),
    /// Score a trained detector on one split of a dataset.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Number of images.
    #[arg(long, default_value_t = 250)]
    count: usize,
    /// Share of images containing at least one nodule.
    #[arg(long, default_value_t = 0.6)]
    positive_fraction: f64,
    /// Side length of the square images in pixels.
    #[arg(long, default_value_t = 416)]
    size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output dataset directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SplitArgs {
    /// Dataset directory containing images/.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Overrides for the configuration file. Unset flags keep the file's value,
/// or the built-in default when the file is silent.
#[derive(Debug, Args)]
struct TrainOverrides {
    /// Epochs [built-in default: 50].
    #[arg(long)]
    epochs: Option<usize>,
    /// Learning rate [built-in default: 0.002].
    #[arg(long)]
    learning_rate: Option<f32>,
    /// Batch size [built-in default: 8].
    #[arg(long)]
    batch_size: Option<usize>,
    /// Seed for weights, shuffling and augmentation [built-in default: 0].
    #[arg(long)]
    seed: Option<u64>,
    /// Channel multiplier [built-in default: 0.125].
    #[arg(long)]
    width_multiple: Option<f32>,
    /// Block-repeat multiplier [built-in default: 0.33].
    #[arg(long)]
    depth_multiple: Option<f32>,
    /// Network input side in pixels, a multiple of 32 [built-in default: 416].
    #[arg(long)]
    input_size: Option<usize>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Dataset directory with images/, labels/ and manifest.txt.
    #[arg(long)]
    data: PathBuf,
    /// TOML configuration file with flat keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run directory for train.log, checkpoints and model.toml.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    overrides: TrainOverrides,
}

#[derive(Debug, Args)]
struct ThresholdOverrides {
    /// Confidence gate; detections must score strictly above it [default: from model.toml, 0.5].
    #[arg(long)]
    conf_threshold: Option<f32>,
    /// Suppression overlap [default: from model.toml, 0.45].
    #[arg(long)]
    iou_threshold: Option<f32>,
}

impl ThresholdOverrides {
    fn layer(&self) -> ConfigLayer {
        ConfigLayer {
            conf_threshold: self.conf_threshold,
            iou_threshold: self.iou_threshold,
            ..ConfigLayer::default()
        }
    }
}

#[derive(Debug, Args)]
struct DetectArgs {
    /// Checkpoint file; model.toml must sit in the same directory.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Directory of PNG/JPEG images.
    #[arg(long)]
    images: PathBuf,
    /// Detection file to write.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    thresholds: ThresholdOverrides,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Checkpoint file; model.toml must sit in the same directory.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Dataset directory with images/, labels/ and manifest.txt.
    #[arg(long)]
    data: PathBuf,
    /// Split to score: train, val or test.
    #[arg(long, default_value = "test")]
    split: String,
    /// Score only the first N images of the split [default: all].
    #[arg(long)]
    limit: Option<usize>,
    /// Report directory.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    thresholds: ThresholdOverrides,
}

fn synth(a: &SynthArgs) -> anyhow::Result<()> {
    let params = SynthParams {
        count: a.count,
        positive_fraction: a.positive_fraction,
        image_size: a.size,
        seed: a.seed,
    };
    let s = synth_generate(&params, &a.out)?;
    println!("wrote {} images to {}", s.images, a.out.display());
    println!("  positive images: {}", s.positives);
    println!("  negative images: {}", s.negatives);
    println!("  class 0 boxes: {}", s.boxes);
    Ok(())
}

fn split(a: &SplitArgs) -> anyhow::Result<()> {
    let m = pipeline::run_split(&a.data, a.seed)?;
    println!(
        "train {}  val {}  test {}  (seed {})",
        m.train.len(),
        m.val.len(),
        m.test.len(),
        m.seed
    );
    Ok(())
}

fn train(a: &TrainArgs) -> anyhow::Result<()> {
    let file = match &a.config {
        Some(p) => ConfigLayer::load(p)?,
        None => ConfigLayer::default(),
    };
    let o = &a.overrides;
    let flags = ConfigLayer {
        epochs: o.epochs,
        learning_rate: o.learning_rate,
        batch_size: o.batch_size,
        seed: o.seed,
        width_multiple: o.width_multiple,
        depth_multiple: o.depth_multiple,
        input_size: o.input_size,
        ..ConfigLayer::default()
    };
    let cfg = RunConfig::layered(&[&file, &flags])?;
    println!(
        "learning_rate {}  batch_size {}  epochs {}",
        cfg.train.learning_rate, cfg.train.batch_size, cfg.train.epochs
    );
    println!("# {}", lungdet::train::LOG_COLUMNS);
    let outcome = pipeline::run_train(&a.data, &cfg, &a.out, |r| println!("{}", r.log_line()))?;
    println!(
        "best epoch {} -> {}",
        outcome.best_epoch,
        outcome.best_checkpoint.display()
    );
    Ok(())
}

fn detect(a: &DetectArgs) -> anyhow::Result<()> {
    let recs = pipeline::run_detect(&a.checkpoint, &a.images, &a.out, &a.thresholds.layer())?;
    println!("{} detections written to {}", recs.len(), a.out.display());
    Ok(())
}

fn evaluate(a: &EvaluateArgs) -> anyhow::Result<()> {
    let split: SplitName = a.split.parse()?;
    let report = pipeline::run_evaluate(
        &a.checkpoint,
        &a.data,
        split,
        a.limit,
        &a.out,
        &a.thresholds.layer(),
    )?;
    let json = std::fs::read_to_string(a.out.join("metrics.json"))
        .with_context(|| format!("reading back {}", a.out.join("metrics.json").display()))?;
    print!("{json}");
    let n = report.tp + report.fp + report.tn + report.fn_;
    println!("evaluated {n} images; report in {}", a.out.display());
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>().map(Error::kind) {
        Some(ErrorKind::Validation) => 2,
        Some(ErrorKind::Numerical) => 3,
        Some(ErrorKind::Io) | None => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.threads == 0 {
        eprintln!("error: --threads must be at least 1");
        return ExitCode::from(2);
    }
    if let Err(e) = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()
    {
        eprintln!("error: thread pool: {e}");
        return ExitCode::from(1);
    }
    let result = match &cli.command {
        Command::Synth(a) => synth(a),
        Command::Split(a) => split(a),
        Command::Train(a) => train(a),
        Command::Detect(a) => detect(a),
        Command::Evaluate(a) => evaluate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
