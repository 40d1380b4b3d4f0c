//! Optimisation loop, per-fold training and stratified cross-validation.

mod optim;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use optim::{Adam, EarlyStopper, PlateauScheduler, StopCheck, PLATEAU_THRESHOLD};

use crate::autodiff::{Tape, Tensor};
use crate::config::Config;
use crate::dataio::{sample_clip, stratified_folds, ClipMode, Dataset, PromptBank};
use crate::metrics::{CalibrationReport, PredictionSet};
use crate::model::TpaModel;
use crate::params::rng_stream;
use crate::{Error, Result};

/// RNG stream offsets; each fold gets its own stream under the run seed.
const INIT_STREAM: u64 = 0x1000;
const TRAIN_STREAM: u64 = 0x2000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Learning rate used during this epoch.
    pub lr: f64,
    pub train_loss: f64,
    pub train_ce: f64,
    pub train_ctr: f64,
    pub train_kl: f64,
    pub val_macro_f1: f64,
    pub val_auc: Option<f64>,
    pub val_ece: f64,
    pub val_aece: f64,
}

#[derive(Clone, Debug)]
pub struct FoldResult {
    pub fold: usize,
    /// 1-based epoch whose snapshot is kept.
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub report: CalibrationReport,
    pub predictions: PredictionSet,
    pub trace: Vec<EpochRecord>,
    pub train_size: usize,
    pub val_ids: Vec<String>,
    pub model: TpaModel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub train_size: usize,
    pub val_size: usize,
    pub best: CalibrationReport,
    pub trace: Vec<EpochRecord>,
}

impl FoldResult {
    pub fn to_report(&self) -> FoldReport {
        FoldReport {
            fold: self.fold,
            best_epoch: self.best_epoch,
            epochs_run: self.epochs_run,
            train_size: self.train_size,
            val_size: self.val_ids.len(),
            best: self.report.clone(),
            trace: self.trace.clone(),
        }
    }
}

/// Mean and population standard deviation over the folds that define the metric.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub std: f64,
    pub folds: usize,
}

impl MetricSummary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Some(Self {
            mean,
            std: var.sqrt(),
            folds: values.len(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub macro_f1: MetricSummary,
    pub auc: Option<MetricSummary>,
    pub ece: MetricSummary,
    pub aece: MetricSummary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldSummary {
    pub fold: usize,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub macro_f1: f64,
    pub auc: Option<f64>,
    pub ece: f64,
    pub aece: f64,
}

/// Cross-validation outcome as written to the aggregate report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub config: Config,
    pub folds: Vec<FoldSummary>,
    pub aggregate: Aggregate,
}

impl CvReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }
}

#[derive(Clone, Debug)]
pub struct CvResult {
    pub folds: Vec<FoldResult>,
    pub report: CvReport,
}

/// Eval-mode predictions and metrics for the records at `indices`.
pub fn evaluate(model: &TpaModel, ds: &Dataset, indices: &[usize], cfg: &Config) -> Result<(PredictionSet, CalibrationReport)> {
    let mut preds = PredictionSet::new(ds.num_classes());
    // centred clips consume no randomness
    let mut unused = rng_stream(0, 0);
    for &i in indices {
        let rec = &ds.records()[i];
        let clip = sample_clip(rec, cfg.data.clip_len, ClipMode::Eval, &mut unused);
        preds.push(model.predict(&clip)?, rec.label)?;
    }
    let report = CalibrationReport::compute(&preds, &cfg.metrics);
    Ok((preds, report))
}

fn check_split(ds: &Dataset, train: &[usize], val: &[usize], allow_sparse: bool) -> Result<()> {
    if train.is_empty() || val.is_empty() {
        return Err(Error::Validation("train and validation splits must be non-empty".into()));
    }
    if let Some(&bad) = train.iter().chain(val).find(|&&i| i >= ds.len()) {
        return Err(Error::Validation(format!("record index {bad} out of range")));
    }
    if !allow_sparse {
        let mut seen = vec![false; ds.num_classes()];
        for &i in train {
            seen[ds.records()[i].label] = true;
        }
        if let Some(c) = seen.iter().position(|s| !s) {
            return Err(Error::Validation(format!(
                "class {c} has no training records (set data.allow_sparse to permit)"
            )));
        }
    }
    Ok(())
}

/// Trains one model on `train` and keeps the snapshot with the best
/// validation macro F1 on `val`.
pub fn train_fold(
    ds: &Dataset,
    bank: &PromptBank,
    cfg: &Config,
    fold: usize,
    train: &[usize],
    val: &[usize],
) -> Result<FoldResult> {
    cfg.validate()?;
    bank.check_compatible(ds.dim(), ds.num_classes())?;
    check_split(ds, train, val, cfg.data.allow_sparse)?;
    let t = &cfg.trainer;
    let mut init_rng = rng_stream(t.seed, INIT_STREAM + fold as u64);
    let mut rng = rng_stream(t.seed, TRAIN_STREAM + fold as u64);
    let mut model = TpaModel::init(&cfg.extractor, &cfg.classifier, &cfg.cvaesm, bank.fixed(), ds.dim(), &mut init_rng)?;
    let mut adam = Adam::new(&model.params, t.lr);
    let mut sched = PlateauScheduler::new(t.sched_factor, t.sched_patience);
    let mut stopper = EarlyStopper::new(t.early_patience);
    let mut order = train.to_vec();
    let mut trace = Vec::new();
    let mut best: Option<(usize, crate::params::ParamSet, PredictionSet, CalibrationReport)> = None;

    for epoch in 1..=t.epochs {
        let prompts = bank.epoch_view(cfg.classifier.randomize_prompts, &mut rng);
        order.shuffle(&mut rng);
        let (mut loss, mut ce, mut ctr, mut kl) = (0.0, 0.0, 0.0, 0.0);
        for chunk in order.chunks(t.batch) {
            let batch: Vec<(Tensor, usize)> = chunk
                .iter()
                .map(|&i| {
                    let rec = &ds.records()[i];
                    (sample_clip(rec, cfg.data.clip_len, ClipMode::Train, &mut rng), rec.label)
                })
                .collect();
            let mut tape = Tape::new();
            let p = model.params.bind(&mut tape);
            let (total, parts) = model
                .batch_loss(&mut tape, &p, &prompts, &batch, &mut rng)
                .map_err(|e| match e {
                    Error::NonFinite(m) => Error::NonFinite(format!("fold {fold} epoch {epoch}: {m}")),
                    other => other,
                })?;
            tape.backward(total)?;
            let grads = p.grads(&tape);
            adam.step(&mut model.params, &grads)
                .map_err(|e| Error::NonFinite(format!("fold {fold} epoch {epoch}: {e}")))?;
            let w = chunk.len() as f64;
            loss += parts.total * w;
            ce += parts.ce * w;
            ctr += parts.ctr * w;
            kl += parts.kl * w;
        }
        let n = order.len() as f64;
        let (preds, report) = evaluate(&model, ds, val, cfg)?;
        trace.push(EpochRecord {
            epoch,
            lr: adam.lr,
            train_loss: loss / n,
            train_ce: ce / n,
            train_ctr: ctr / n,
            train_kl: kl / n,
            val_macro_f1: report.macro_f1,
            val_auc: report.auc,
            val_ece: report.ece,
            val_aece: report.aece,
        });
        let check = stopper.observe(epoch, report.macro_f1);
        if check.improved {
            best = Some((epoch, model.params.clone(), preds, report.clone()));
        }
        adam.lr = sched.observe(report.macro_f1, adam.lr);
        if check.stop {
            break;
        }
    }

    let epochs_run = trace.len();
    let (best_epoch, params, predictions, report) = best.expect("at least one epoch");
    model.params = params;
    Ok(FoldResult {
        fold,
        best_epoch,
        epochs_run,
        report,
        predictions,
        trace,
        train_size: train.len(),
        val_ids: val.iter().map(|&i| ds.records()[i].id.clone()).collect(),
        model,
    })
}

pub fn aggregate(folds: &[FoldResult]) -> Aggregate {
    let pick = |f: fn(&FoldResult) -> f64| folds.iter().map(f).collect::<Vec<_>>();
    let aucs: Vec<f64> = folds.iter().filter_map(|f| f.report.auc).collect();
    Aggregate {
        macro_f1: MetricSummary::of(&pick(|f| f.report.macro_f1)).expect("at least one fold"),
        auc: MetricSummary::of(&aucs),
        ece: MetricSummary::of(&pick(|f| f.report.ece)).expect("at least one fold"),
        aece: MetricSummary::of(&pick(|f| f.report.aece)).expect("at least one fold"),
    }
}

/// Stratified k-fold cross-validation. With `workers > 1` folds train
/// concurrently; results do not depend on the worker count.
pub fn cross_validate(ds: &Dataset, bank: &PromptBank, cfg: &Config, workers: usize) -> Result<CvResult> {
    cfg.validate()?;
    let plan = stratified_folds(ds, cfg.trainer.folds, cfg.trainer.seed, cfg.data.allow_sparse)?;
    let run = |i: usize| {
        let (train, val) = plan.split(i);
        train_fold(ds, bank, cfg, i, &train, &val)
    };
    let folds: Vec<FoldResult> = if workers > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(|| (0..plan.k()).into_par_iter().map(run).collect::<Result<_>>())?
    } else {
        (0..plan.k()).map(run).collect::<Result<_>>()?
    };
    let report = CvReport {
        config: cfg.clone(),
        folds: folds
            .iter()
            .map(|f| FoldSummary {
                fold: f.fold,
                best_epoch: f.best_epoch,
                epochs_run: f.epochs_run,
                macro_f1: f.report.macro_f1,
                auc: f.report.auc,
                ece: f.report.ece,
                aece: f.report.aece,
            })
            .collect(),
        aggregate: aggregate(&folds),
    };
    Ok(CvResult { folds, report })
}
