//! `mtfcdd`: generate synthetic data, train, evaluate, run inference and
//! simulate balanced-epoch lengths.

mod export;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use multitype_fcdd::checkpoint;
use multitype_fcdd::data::{
    generate_synthetic, load_image, load_manifest, load_split, DatasetManifest, Split, SyntheticConfig,
};
use multitype_fcdd::evaluate::{evaluate_split, predict};
use multitype_fcdd::sampler::{estimate_epoch_length, std_epoch_ratio, std_iterations};
use multitype_fcdd::train::{TrainEvent, Trainer};
use multitype_fcdd::{Error, Result, RunConfig};

#[derive(Parser)]
#[command(name = "mtfcdd", version, about = "Multi-type fully convolutional anomaly detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a procedural multi-type defect dataset and its manifest.
    GenSynthetic(GenArgs),
    /// Train a model; writes per-epoch, last and best checkpoints.
    Train(TrainArgs),
    /// Per-type I-AUROC, P-AUROC and AUPRO on a test split.
    Evaluate(EvalArgs),
    /// Heatmaps, overlays and scores for individual images.
    Infer(InferArgs),
    /// Monte Carlo estimate of the balanced-epoch length.
    SimulateEpochs(SimArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    out: PathBuf,
    /// TOML file with generator settings; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    num_types: Option<usize>,
    #[arg(long)]
    image_size: Option<usize>,
    #[arg(long)]
    normal: Option<usize>,
    #[arg(long)]
    per_type: Option<usize>,
    #[arg(long)]
    test_normal: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    composites: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

/// Flags that override the run configuration file.
#[derive(Args, Default)]
struct Overrides {
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    num_types: Option<usize>,
    #[arg(long, overrides_with = "no_balanced")]
    balanced: bool,
    #[arg(long)]
    no_balanced: bool,
    #[arg(long)]
    stages: Option<usize>,
    #[arg(long)]
    head_blocks: Option<usize>,
    /// Seeds both weight initialisation and the data stream.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    fpr_limit: Option<f64>,
    #[arg(long)]
    epochs: Option<u32>,
}

impl Overrides {
    fn apply(&self, cfg: &mut RunConfig) -> Result<()> {
        if let Some(v) = self.lr {
            cfg.optimizer.lr = v;
        }
        if let Some(v) = self.batch_size {
            cfg.optimizer.batch_size = v;
        }
        if let Some(v) = self.num_types {
            cfg.model.num_types = v;
        }
        if self.balanced {
            cfg.training.balanced = true;
        }
        if self.no_balanced {
            cfg.training.balanced = false;
        }
        if let Some(v) = self.stages {
            cfg.model.backbone_stages = v;
        }
        if let Some(v) = self.head_blocks {
            cfg.model.head_blocks = v;
        }
        if let Some(v) = self.seed {
            cfg.model.seed = v;
            cfg.training.seed = v;
        }
        if let Some(v) = self.fpr_limit {
            cfg.eval.fpr_limit = v;
        }
        if let Some(v) = self.epochs {
            cfg.training.epochs = v;
        }
        cfg.validate()
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Run configuration (TOML). Defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset manifest; overrides the one named in the config.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Directory for checkpoints and logs.
    #[arg(long)]
    out: PathBuf,
    /// Continue from a checkpoint up to the configured epoch budget.
    #[arg(long)]
    resume: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Defaults to the manifest the model was trained with.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    fpr_limit: Option<f64>,
    /// Maximum thresholds in the PRO sweep.
    #[arg(long)]
    thresholds: Option<usize>,
    /// Also write the report as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct InferArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Resize inputs to the model's input size instead of rejecting them.
    #[arg(long)]
    resize: bool,
    #[arg(required = true)]
    images: Vec<PathBuf>,
}

#[derive(Args)]
struct SimArgs {
    /// Comma-separated images per class, e.g. `300,25,25,25`.
    #[arg(long, value_delimiter = ',', conflicts_with = "manifest", required_unless_present = "manifest")]
    quotas: Vec<usize>,
    /// Take quotas from the training split of a manifest.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long, default_value_t = 100_000)]
    trials: usize,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Print one JSON object instead of the text table.
    #[arg(long)]
    json: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenSynthetic(a) => gen_synthetic(a),
        Command::Train(a) => train(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Infer(a) => infer(a),
        Command::SimulateEpochs(a) => simulate_epochs(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error code={} exit={}: {msg}", e.code(), e.exit_code());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn gen_synthetic(a: GenArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
        }
        None => SyntheticConfig::default(),
    };
    let set = |dst: &mut usize, v: Option<usize>| {
        if let Some(v) = v {
            *dst = v;
        }
    };
    set(&mut cfg.num_types, a.num_types);
    set(&mut cfg.image_size, a.image_size);
    set(&mut cfg.normal_count, a.normal);
    set(&mut cfg.per_type_count, a.per_type);
    set(&mut cfg.test_normal, a.test_normal);
    set(&mut cfg.composites, a.composites);
    if let Some(v) = a.alpha {
        cfg.alpha = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    let summary = generate_synthetic(&cfg, &a.out)?;
    println!("{:<8} {:>6} {:>6}", "class", "train", "test");
    for (name, (tr, te)) in &summary.histogram {
        println!("{name:<8} {tr:>6} {te:>6}");
    }
    println!("total {} images", summary.total_images());
    println!(
        "alpha requested {:.4} achieved {:.4} ({} anomalous of {} training images)",
        cfg.alpha,
        summary.plan.achieved_alpha(),
        summary.plan.train_anomalous(),
        summary.plan.train_anomalous() + summary.plan.train_normal
    );
    println!("manifest {}", summary.manifest_path.display());
    if let Some(p) = &summary.composites_path {
        println!("composites {}", p.display());
    }
    Ok(())
}

fn check_compatible(cfg: &RunConfig, m: &DatasetManifest) -> Result<()> {
    if cfg.model.num_types != m.num_types() {
        return Err(Error::Config(format!(
            "model has {} output types but the manifest lists {} ({}); set --num-types {}",
            cfg.model.num_types,
            m.num_types(),
            m.class_names().join(","),
            m.num_types()
        )));
    }
    if cfg.model.input_size != m.image_size {
        return Err(Error::Config(format!(
            "model input {:?} differs from dataset image size {:?}",
            cfg.model.input_size, m.image_size
        )));
    }
    Ok(())
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn train(a: TrainArgs) -> Result<()> {
    let mut trainer = match &a.resume {
        Some(p) => {
            let mut t = checkpoint::load(p)?;
            // Only the budget and evaluation settings may change on resume.
            if let Some(e) = a.overrides.epochs {
                t.config.training.epochs = e;
            }
            if let Some(f) = a.overrides.fpr_limit {
                t.config.eval.fpr_limit = f;
            }
            t.config.validate()?;
            t
        }
        None => {
            let mut cfg = match &a.config {
                Some(p) => RunConfig::load(p)?,
                None => RunConfig::default(),
            };
            a.overrides.apply(&mut cfg)?;
            Trainer::new(cfg)?
        }
    };
    if let Some(m) = &a.manifest {
        trainer.config.data.manifest = m.clone();
    }
    if trainer.config.data.manifest.as_os_str().is_empty() {
        return Err(Error::Config("no manifest given (use --manifest or data.manifest)".into()));
    }
    let manifest = load_manifest(&trainer.config.data.manifest)?;
    check_compatible(&trainer.config, &manifest)?;
    let input = trainer.config.model.input_size;
    let train_split = load_split(&manifest, Split::Train, input)?;
    let test_split = load_split(&manifest, Split::Test, input)?;
    let names = manifest.class_names();

    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    write_file(&a.out.join("config.toml"), &trainer.config.to_toml())?;
    let log_path = a.out.join("train.log");
    let mut log = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&log_path)
        .map_err(|e| Error::io(&log_path, e))?;
    let count = trainer.model.parameter_count();
    println!(
        "training {} types ({}) on {} images, {} trainable parameters, {} sampling",
        names.len(),
        names.join(","),
        train_split.len(),
        count.trainable,
        if trainer.config.training.balanced { "balanced" } else { "plain" }
    );
    let budget = trainer.config.training.epochs;
    while trainer.epochs_done < budget {
        let mut lines = Vec::new();
        let record = trainer.train_epoch(&train_split, Some((&test_split, &names)), &mut |ev| match ev {
            TrainEvent::Window { epoch, iteration, loss } => {
                lines.push(format!("epoch {epoch} iter {iteration} loss {loss:.6}"));
            }
            TrainEvent::Epoch(_) => {}
        })?;
        let val: Vec<String> = names
            .iter()
            .zip(&record.val_i_auroc)
            .map(|(n, v)| format!("{n}={}", v.map_or("-".into(), |x| format!("{x:.4}"))))
            .collect();
        lines.push(format!(
            "epoch {} done: {} draws, {} iterations ({:.2} standard epochs), mean loss {:.6}, val I-AUROC {} mean {}",
            record.epoch,
            record.draws,
            record.iterations,
            record.std_epochs,
            record.mean_loss,
            val.join(" "),
            record.val_mean_i_auroc.map_or("-".into(), |x| format!("{x:.4}"))
        ));
        for l in &lines {
            println!("{l}");
            writeln!(log, "{l}").map_err(|e| Error::io(&log_path, e))?;
        }
        checkpoint::save(&trainer, &a.out.join(format!("epoch_{:03}.ckpt", record.epoch)))?;
        checkpoint::save(&trainer, &a.out.join("last.ckpt"))?;
        if trainer.best_epoch().map(|b| b.epoch) == Some(record.epoch) {
            checkpoint::save(&trainer, &a.out.join("best.ckpt"))?;
        }
    }
    let history = serde_json::to_string_pretty(&trainer.history).expect("history serialises");
    write_file(&a.out.join("history.json"), &history)?;
    if let Some(b) = trainer.best_epoch() {
        println!(
            "best epoch {} (val mean I-AUROC {:.4}) -> {}",
            b.epoch,
            b.val_mean_i_auroc.unwrap_or(f64::NAN),
            a.out.join("best.ckpt").display()
        );
    }
    Ok(())
}

fn evaluate(a: EvalArgs) -> Result<()> {
    let mut trainer = checkpoint::load(&a.checkpoint)?;
    if let Some(f) = a.fpr_limit {
        trainer.config.eval.fpr_limit = f;
    }
    if let Some(t) = a.thresholds {
        trainer.config.eval.thresholds = t;
    }
    trainer.config.validate()?;
    let path = a.manifest.unwrap_or_else(|| trainer.config.data.manifest.clone());
    let manifest = load_manifest(&path)?;
    check_compatible(&trainer.config, &manifest)?;
    let test = load_split(&manifest, Split::Test, trainer.config.model.input_size)?;
    let report = evaluate_split(&trainer.model, &manifest, &test, &trainer.config.eval, 32)?;
    print!("{report}");
    if let Some(j) = &a.json {
        write_file(j, &report.to_json())?;
    }
    Ok(())
}

fn infer(a: InferArgs) -> Result<()> {
    let trainer = checkpoint::load(&a.checkpoint)?;
    let input = trainer.config.model.input_size;
    let names: Vec<String> = match load_manifest(&trainer.config.data.manifest) {
        Ok(m) => m.class_names(),
        Err(_) => (0..trainer.config.model.num_types).map(|k| format!("type{k}")).collect(),
    };
    let mut images = Vec::with_capacity(a.images.len());
    for p in &a.images {
        let img = load_image(p, input.channels)?;
        let img = if (img.height, img.width) != (input.height, input.width) {
            if !a.resize {
                return Err(Error::Data(format!(
                    "{}: image is {}x{} but the model expects {}x{}; pass --resize to rescale it",
                    p.display(),
                    img.height,
                    img.width,
                    input.height,
                    input.width
                )));
            }
            export::resize(&img, input.height, input.width)
        } else {
            img
        };
        images.push(img);
    }
    let preds = predict(&trainer.model, &images, 32, true)?;
    for ((path, img), pred) in a.images.iter().zip(&images).zip(&preds) {
        let stem = path.file_stem().unwrap_or_default().to_string_lossy().to_string();
        let scores = export::write_outputs(&a.out, &stem, img, pred, &names)?;
        println!("{} {scores}", path.display());
    }
    Ok(())
}

fn simulate_epochs(a: SimArgs) -> Result<()> {
    let quotas: Vec<usize> = match &a.manifest {
        Some(p) => load_manifest(p)?
            .train_partition()
            .into_iter()
            .map(|g| g.len())
            .filter(|&n| n > 0)
            .collect(),
        None => a.quotas.clone(),
    };
    let est = estimate_epoch_length(&quotas, a.trials, a.batch_size, a.seed)?;
    let total: usize = quotas.iter().sum();
    let std_iters = std_iterations(total, a.batch_size);
    let ratio = std_epoch_ratio(est.mu_t_batch, total, a.batch_size)?;
    if a.json {
        let row = serde_json::json!({
            "quotas": quotas,
            "total": total,
            "trials": a.trials,
            "batch_size": a.batch_size,
            "seed": a.seed,
            "mu_t": est.mu_t,
            "std_t": est.std_t,
            "mu_t_batch": est.mu_t_batch,
            "std_iterations": std_iters,
            "std_epochs": ratio,
        });
        println!("{row}");
    } else {
        let q: Vec<String> = quotas.iter().map(usize::to_string).collect();
        println!("class counts     {}", q.join(" "));
        println!("trials           {}", a.trials);
        println!("mu_T             {:.2}", est.mu_t);
        println!("std dev T        {:.2}", est.std_t);
        println!("mu_T_batch       {:.2}", est.mu_t_batch);
        println!("std iterations   {std_iters:.2}");
        println!("std epochs       {ratio:.2}");
    }
    Ok(())
}
