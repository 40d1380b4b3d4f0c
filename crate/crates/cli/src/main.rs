//! `tpa`: synthetic data, cross-validated training, evaluation and gradient checks.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tpa_core::checkpoint::{Checkpoint, CheckpointHeader};
use tpa_core::config::Config;
use tpa_core::dataio::{sample_clip, synth_generate, ClipMode, Dataset, PromptBank, SynthParams};
use tpa_core::metrics::{self, PredictionSet};
use tpa_core::params::rng_stream;
use tpa_core::{gradcheck_suite, trainer, Error};

/// RNG stream for Monte Carlo evaluation draws.
const MC_STREAM: u64 = 0x3000;

#[derive(Parser)]
#[command(name = "tpa", version, about = "Temporal prompt alignment over frame embeddings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset and matching prompt bank.
    Synth(SynthArgs),
    /// Cross-validate a model and write reports and checkpoints.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset.
    Eval(EvalArgs),
    /// Compare analytic and finite-difference gradients.
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 3)]
    classes: usize,
    #[arg(long, default_value_t = 60)]
    per_class: usize,
    #[arg(long, default_value_t = 64)]
    dim: usize,
    #[arg(long, default_value_t = 16)]
    min_frames: usize,
    #[arg(long, default_value_t = 48)]
    max_frames: usize,
    #[arg(long, default_value_t = 4.0)]
    separation: f64,
    /// Output dataset file.
    #[arg(long)]
    dataset: PathBuf,
    /// Output prompt bank (JSON).
    #[arg(long)]
    prompts: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// JSON config; defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for reports and checkpoints.
    #[arg(long)]
    out: PathBuf,
    /// Override a config key, e.g. `--set classifier.alpha=0`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Train up to this many folds concurrently.
    #[arg(long, default_value_t = 1)]
    parallel_folds: usize,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    /// Prior samples per record for uncertainty columns; defaults to the
    /// checkpoint's `cvaesm.mc_samples`.
    #[arg(long)]
    mc_samples: Option<usize>,
    /// Write the uniform-bin reliability table here (CSV).
    #[arg(long)]
    reliability: Option<PathBuf>,
    /// Write per-record predictions here (CSV).
    #[arg(long)]
    predictions: Option<PathBuf>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Only evaluate the checkpoint's own validation records.
    #[arg(long)]
    val_only: bool,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of consecutive seeds to run.
    #[arg(long, default_value_t = 10)]
    seeds: u64,
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
}

/// Failure with the process exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Config(_) => 2,
            Error::NonFinite(_) => 4,
            Error::Autodiff(tpa_core::autodiff::AutodiffError::NonFinite(_)) => 4,
            Error::Io { .. } | Error::Format(_) | Error::Validation(_) => 3,
            Error::Autodiff(_) => 1,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Gradcheck(a) => gradcheck(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), Error> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn synth(a: SynthArgs) -> CmdResult {
    let params = SynthParams {
        seed: a.seed,
        classes: a.classes,
        per_class: a.per_class,
        dim: a.dim,
        min_frames: a.min_frames,
        max_frames: a.max_frames,
        separation: a.separation,
    };
    let (ds, bank) = synth_generate(&params)?;
    ds.write(&a.dataset)?;
    bank.save(&a.prompts)?;
    println!("records: {}", ds.len());
    println!("classes: {}", ds.num_classes());
    println!("dim: {}", ds.dim());
    for (c, n) in ds.class_counts().iter().enumerate() {
        println!("class {c}: {n}");
    }
    Ok(())
}

fn load_data(cfg: &Config) -> Result<(Dataset, PromptBank), Error> {
    let missing = |key: &str| Error::Validation(format!("{key} is not set"));
    let ds_path = cfg.data.dataset_path.as_ref().ok_or_else(|| missing("data.dataset_path"))?;
    let bank_path = cfg.data.prompt_bank_path.as_ref().ok_or_else(|| missing("data.prompt_bank_path"))?;
    let ds = Dataset::read(ds_path)?;
    let bank = PromptBank::load(bank_path)?;
    bank.check_compatible(ds.dim(), ds.num_classes())?;
    Ok((ds, bank))
}

fn train(a: TrainArgs) -> CmdResult {
    let base = match &a.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    let cfg = base.with_overrides(&a.overrides)?;
    if a.parallel_folds == 0 {
        return Err(Error::Config("--parallel-folds must be >= 1".into()).into());
    }
    let (ds, bank) = load_data(&cfg)?;
    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let cv = trainer::cross_validate(&ds, &bank, &cfg, a.parallel_folds)?;
    for f in &cv.folds {
        let report = serde_json::to_string_pretty(&f.to_report()).expect("report serialises");
        write_text(&a.out.join(format!("fold_{}.json", f.fold)), &report)?;
        metrics::write_reliability_csv(&a.out.join(format!("fold_{}_reliability.csv", f.fold)), &f.report.bins)?;
        let ck = Checkpoint {
            header: CheckpointHeader {
                config: cfg.clone(),
                input_dim: ds.dim(),
                num_classes: ds.num_classes(),
                fold: Some(f.fold),
                best_epoch: Some(f.best_epoch),
                val_ids: f.val_ids.clone(),
                metrics: Some(f.report.clone()),
            },
            model: f.model.clone(),
        };
        ck.write(a.out.join(format!("fold_{}.ckpt", f.fold)))?;
        println!(
            "fold {}: best epoch {} of {}, macro F1 {:.4}, ECE {:.4}",
            f.fold, f.best_epoch, f.epochs_run, f.report.macro_f1, f.report.ece
        );
    }
    write_text(&a.out.join("aggregate.json"), &cv.report.to_json())?;
    let agg = &cv.report.aggregate;
    println!("macro F1 {:.4} ± {:.4}", agg.macro_f1.mean, agg.macro_f1.std);
    if let Some(auc) = &agg.auc {
        println!("AUC {:.4} ± {:.4}", auc.mean, auc.std);
    }
    println!("ECE {:.4} ± {:.4}", agg.ece.mean, agg.ece.std);
    println!("AECE {:.4} ± {:.4}", agg.aece.mean, agg.aece.std);
    Ok(())
}

fn eval(a: EvalArgs) -> CmdResult {
    let ck = Checkpoint::read(&a.checkpoint)?;
    let ds = Dataset::read(&a.dataset)?;
    let model = &ck.model;
    if ds.dim() != model.input_dim || ds.num_classes() != model.num_classes {
        return Err(Error::Validation(format!(
            "dataset has dim {} and {} classes, checkpoint expects dim {} and {} classes",
            ds.dim(),
            ds.num_classes(),
            model.input_dim,
            model.num_classes
        ))
        .into());
    }
    let cfg = &ck.header.config;
    let mc_samples = a.mc_samples.unwrap_or(cfg.cvaesm.mc_samples);
    if mc_samples == 0 {
        return Err(Error::Config("--mc-samples must be >= 1".into()).into());
    }
    let indices: Vec<usize> = if a.val_only {
        ck.header
            .val_ids
            .iter()
            .map(|id| {
                ds.records()
                    .iter()
                    .position(|r| &r.id == id)
                    .ok_or_else(|| Error::Validation(format!("validation record {id} not in dataset")))
            })
            .collect::<Result<_, _>>()?
    } else {
        (0..ds.len()).collect()
    };

    let (preds, report) = trainer::evaluate(model, &ds, &indices, cfg)?;
    if let Some(path) = &a.predictions {
        write_predictions(path, &ds, &indices, &preds, model, cfg, mc_samples)?;
    }
    if let Some(path) = &a.reliability {
        metrics::write_reliability_csv(path, &report.bins)?;
    }
    let out = serde_json::json!({
        "checkpoint": a.checkpoint,
        "dataset": a.dataset,
        "val_only": a.val_only,
        "mc_samples": mc_samples,
        "report": report,
    });
    let json = serde_json::to_string_pretty(&out).expect("report serialises");
    match &a.out {
        Some(p) => write_text(p, &json)?,
        None => println!("{json}"),
    }
    Ok(())
}

fn write_predictions(
    path: &Path,
    ds: &Dataset,
    indices: &[usize],
    preds: &PredictionSet,
    model: &tpa_core::model::TpaModel,
    cfg: &Config,
    mc_samples: usize,
) -> Result<(), Error> {
    let c = model.num_classes;
    let csv_err = |e: csv::Error| Error::Format(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let mut header = vec!["id".to_owned(), "label".into(), "predicted".into(), "confidence".into()];
    header.extend((0..c).map(|k| format!("prob_{k}")));
    header.extend((0..c).map(|k| format!("mc_mean_{k}")));
    header.extend((0..c).map(|k| format!("mc_var_{k}")));
    header.push("mc_entropy".into());
    w.write_record(&header).map_err(csv_err)?;
    let mut rng = rng_stream(cfg.trainer.seed, MC_STREAM);
    let mut unused = rng_stream(0, 0);
    for (&i, p) in indices.iter().zip(preds.items()) {
        let rec = &ds.records()[i];
        let clip = sample_clip(rec, cfg.data.clip_len, ClipMode::Eval, &mut unused);
        let u = model.predict_mc(&clip, mc_samples, &mut rng)?;
        let mut row = vec![rec.id.clone(), p.label.to_string(), p.predicted().to_string(), p.confidence().to_string()];
        row.extend(p.probs.iter().map(f64::to_string));
        row.extend(u.mean.iter().map(f64::to_string));
        row.extend(u.variance.iter().map(f64::to_string));
        row.push(u.entropy.to_string());
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn gradcheck(a: GradcheckArgs) -> CmdResult {
    let rows = gradcheck_suite::run(a.seed, a.seeds, a.tolerance);
    println!("{:<32} {:>5} {:>12} {:>8} {:>8}  result", "check", "seed", "max_rel_err", "checked", "excluded");
    for r in &rows {
        println!(
            "{:<32} {:>5} {:>12.3e} {:>8} {:>8}  {}",
            r.name,
            r.seed,
            r.max_rel_err,
            r.checked,
            r.excluded,
            if r.passed { "pass" } else { "FAIL" }
        );
    }
    let failed = rows.iter().filter(|r| !r.passed).count();
    println!("{} checks, {} failed, tolerance {:e}", rows.len(), failed, a.tolerance);
    if failed > 0 {
        return Err(Failure {
            code: 1,
            message: format!("{failed} gradient checks exceeded tolerance {:e}", a.tolerance),
        });
    }
    Ok(())
}
