mod config;
mod plot;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use piqa_core::data::{split_by_reference, synth_generate, ImagePair};
use piqa_core::eval::{baseline_report, evaluate, EvalReport, Metric};
use piqa_core::model::{load_checkpoint, load_checkpoint_for, save_checkpoint};
use piqa_core::optim::{load_training_set, train_with};
use piqa_core::{GrayImage, Manifest, Model, Variant};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use config::RunConfig;

#[derive(Parser)]
#[command(
    name = "piqa",
    version,
    about = "Full-reference image quality assessment with a two-stream CNN"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic distortion dataset and its manifest.
    Synth(SynthArgs),
    /// Split a manifest by reference, train a model and write the checkpoint.
    Train(TrainArgs),
    /// Score every image of a manifest and correlate with its subjective scores.
    Eval(EvalArgs),
    /// Print the score of one distorted image against its reference.
    Predict(PredictArgs),
    /// Correlate PSNR or SSIM with the subjective scores of a manifest.
    Baseline(BaselineArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u64).range(1..))]
    refs: u64,
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..))]
    levels: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// JSON run configuration; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    variant: Option<Variant>,
    /// Checkpoint path. The loss log and split record are written beside it.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the loss curve as an SVG chart.
    #[arg(long)]
    plot: bool,
    /// Seeds initialization, patch sampling, shuffling and the split.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    patches_per_image: Option<usize>,
    #[arg(long)]
    train_fraction: Option<f64>,
    #[arg(long)]
    patch_size: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    conv_channels: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    fc_sizes: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    spp_bins: Option<Vec<usize>>,
    #[arg(long)]
    fpn_channels: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Subset {
    Train,
    Test,
}

#[derive(Args)]
struct SubsetArgs {
    /// Split record from `train`; restricts the manifest to one side of the split.
    #[arg(long)]
    split: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "test", requires = "split")]
    subset: Subset,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Fail unless the checkpoint was built with this run configuration's model.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    subset: SubsetArgs,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    dist: PathBuf,
    #[arg(long = "ref")]
    reference: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
}

#[derive(Args)]
struct BaselineArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    metric: Metric,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    subset: SubsetArgs,
}

/// Which reference contents went to each side of a training split.
#[derive(Debug, PartialEq, Serialize, Deserialize)]
struct SplitRecord {
    seed: u64,
    train_fraction: f64,
    train_refs: Vec<String>,
    test_refs: Vec<String>,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Synth(a) => synth(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Predict(a) => predict(a),
        Command::Baseline(a) => baseline(a),
    }
}

fn synth(a: SynthArgs) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let manifest = synth_generate(&a.out, a.refs as usize, a.levels as usize, &mut rng)?;
    eprintln!("wrote {} samples", manifest.len());
    println!("{}", a.out.join("manifest.csv").display());
    Ok(())
}

fn run_config(a: &TrainArgs) -> Result<RunConfig> {
    let mut cfg = match &a.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let m = &mut cfg.model;
    let t = &mut cfg.train;
    if let Some(v) = a.variant {
        m.variant = v;
    }
    if let Some(s) = a.seed {
        m.seed = s;
        t.seed = s;
    }
    macro_rules! set {
        ($($src:ident => $dst:expr),* $(,)?) => {
            $(if let Some(v) = a.$src.clone() { $dst = v; })*
        };
    }
    set!(
        epochs => t.epochs,
        batch_size => t.batch_size,
        learning_rate => t.learning_rate,
        momentum => t.momentum,
        weight_decay => t.weight_decay,
        patches_per_image => t.patches_per_image,
        patch_size => m.patch_size,
        conv_channels => m.conv_channels,
        fc_sizes => m.fc_sizes,
        spp_bins => m.spp_bins,
        fpn_channels => m.fpn_channels,
        train_fraction => cfg.train_fraction,
    );
    if a.manifest.is_some() {
        cfg.manifest = a.manifest.clone();
    }
    if a.out.is_some() {
        cfg.checkpoint = a.out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

/// `dir/stem.ext` beside the checkpoint, or inside `out_dir` when configured.
fn sibling(cfg: &RunConfig, checkpoint: &Path, suffix: &str) -> PathBuf {
    let stem = checkpoint
        .file_stem()
        .map_or_else(|| "model".into(), |s| s.to_string_lossy().into_owned());
    let dir = cfg
        .out_dir
        .clone()
        .unwrap_or_else(|| checkpoint.parent().map(Path::to_path_buf).unwrap_or_default());
    dir.join(format!("{stem}.{suffix}"))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn train(a: TrainArgs) -> Result<()> {
    let cfg = run_config(&a)?;
    let Some(manifest_path) = cfg.manifest.clone() else {
        bail!("no manifest: pass --manifest or set \"manifest\" in the config");
    };
    let Some(checkpoint) = cfg.checkpoint.clone() else {
        bail!("no output checkpoint: pass --out or set \"checkpoint\" in the config");
    };
    if let Some(dir) = &cfg.out_dir {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let manifest = Manifest::load(&manifest_path)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.train.seed);
    let split = split_by_reference(&manifest, cfg.train_fraction, &mut rng)?;
    eprintln!(
        "{} training images from {} references, {} held out from {}",
        split.train.len(),
        split.train_refs.len(),
        split.test.len(),
        split.test_refs.len()
    );
    let set = load_training_set(&split.train)?;
    let mut model = Model::<f32>::build(cfg.model.clone())?;
    eprintln!("{} model, {} parameters", cfg.model.variant, model.param_count());
    let log = train_with(&mut model, &set, &cfg.train, |s| {
        eprintln!(
            "epoch {:>3}  steps {:>4}  mean loss {:.6}",
            s.epoch, s.steps, s.mean_loss
        );
    })?;

    save_checkpoint(&model, &checkpoint)?;
    let loss_path = sibling(&cfg, &checkpoint, "loss.csv");
    log.save(&loss_path)?;
    let record = SplitRecord {
        seed: cfg.train.seed,
        train_fraction: cfg.train_fraction,
        train_refs: split.train_refs,
        test_refs: split.test_refs,
    };
    let split_path = sibling(&cfg, &checkpoint, "split.json");
    write(&split_path, serde_json::to_string_pretty(&record)? + "\n")?;
    println!("checkpoint {}", checkpoint.display());
    println!("loss log {}", loss_path.display());
    println!("split record {}", split_path.display());
    if a.plot {
        let svg_path = sibling(&cfg, &checkpoint, "loss.svg");
        write(&svg_path, plot::loss_svg(&log))?;
        println!("loss plot {}", svg_path.display());
    }
    Ok(())
}

fn select(manifest: Manifest, s: &SubsetArgs) -> Result<Manifest> {
    let Some(path) = &s.split else {
        return Ok(manifest);
    };
    let text = std::fs::read_to_string(path).with_context(|| format!("reading split record {}", path.display()))?;
    let record: SplitRecord =
        serde_json::from_str(&text).with_context(|| format!("parsing split record {}", path.display()))?;
    let refs = match s.subset {
        Subset::Train => record.train_refs,
        Subset::Test => record.test_refs,
    };
    let chosen = manifest.filter_refs(&refs.into_iter().collect::<BTreeSet<_>>());
    if chosen.is_empty() {
        bail!("no manifest entries match the references in {}", path.display());
    }
    Ok(chosen)
}

fn finish(report: &EvalReport, out: &Path) -> Result<()> {
    report.save(out)?;
    println!("SRCC {}", report.srcc);
    println!("PLCC {}", report.plcc);
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let model = match &a.config {
        Some(path) => load_checkpoint_for(&a.checkpoint, &RunConfig::load(path)?.model)?,
        None => load_checkpoint(&a.checkpoint)?,
    };
    let manifest = select(Manifest::load(&a.manifest)?, &a.subset)?;
    finish(&evaluate(&model, &manifest)?, &a.out)
}

fn predict(a: PredictArgs) -> Result<()> {
    let model = load_checkpoint(&a.checkpoint)?;
    let reference = GrayImage::load(&a.reference)?;
    let pair = ImagePair::from_images(GrayImage::load(&a.dist)?, &reference)?;
    println!("{}", model.predict_pair(&pair)?);
    Ok(())
}

fn baseline(a: BaselineArgs) -> Result<()> {
    let manifest = select(Manifest::load(&a.manifest)?, &a.subset)?;
    finish(&baseline_report(&manifest, a.metric)?, &a.out)
}
