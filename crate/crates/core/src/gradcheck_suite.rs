//! Central-difference checks over every differentiable op, every extractor
//! and both end-to-end losses (with and without style modulation).

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{grad_check, AutodiffError, Padding, Reduce, Tape, Tensor, Var, COSINE_EPS};
use crate::cvaesm::CvaesmConfig;
use crate::head::ClassifierConfig;
use crate::model::TpaModel;
use crate::params::{rng_stream, ParamSet};
use crate::temporal::{ExtractorConfig, ExtractorKind, GraphFusion, Pooling, TemporalExtractor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckRow {
    pub name: String,
    pub seed: u64,
    pub max_rel_err: f64,
    pub checked: usize,
    pub excluded: usize,
    pub passed: bool,
}

type OpFn = fn(&mut Tape, Var, &Tensor) -> Result<Var, AutodiffError>;

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(lo..hi)).collect()).expect("shape")
}

/// Contracts an op's output against fixed weights so every output element
/// reaches the scalar objective.
fn contract(tape: &mut Tape, out: Var, rng_weights: &Tensor) -> Result<Var, AutodiffError> {
    let n = tape.value(out).numel();
    let w = Tensor::new(tape.shape(out).to_vec(), rng_weights.data()[..n].to_vec())?;
    let w = tape.constant(w);
    let prod = tape.mul(out, w)?;
    Ok(tape.sum(prod))
}

type OpCase = (&'static str, Vec<usize>, (f64, f64), OpFn);

/// Ops of one input with the input shape and sampling range.
fn unary_ops() -> Vec<OpCase> {
    vec![
        ("add", vec![3, 4], (-1.0, 1.0), |t, x, aux| {
            let c = t.constant(Tensor::new(vec![3, 4], aux.data()[..12].to_vec())?);
            let a = t.add(x, c)?;
            t.add(a, x)
        }),
        ("sub", vec![5], (-1.0, 1.0), |t, x, aux| {
            let c = t.constant(Tensor::vector(aux.data()[..5].to_vec()));
            let a = t.sub(c, x)?;
            t.mul(a, a)
        }),
        ("mul", vec![2, 3], (-1.0, 1.0), |t, x, _| {
            let a = t.mul(x, x)?;
            t.mul(a, x)
        }),
        ("mul_scalar_broadcast", vec![4], (-1.0, 1.0), |t, x, _| {
            let s = t.pick(x, 1)?;
            t.mul(s, x)
        }),
        ("scale", vec![4], (-1.0, 1.0), |t, x, _| Ok(t.scale(x, -2.5))),
        ("shift", vec![4], (-1.0, 1.0), |t, x, _| {
            let s = t.shift(x, 0.7);
            t.mul(s, s)
        }),
        ("neg", vec![4], (-1.0, 1.0), |t, x, _| Ok(t.neg(x))),
        ("exp", vec![5], (-2.0, 2.0), |t, x, _| Ok(t.exp(x))),
        ("log", vec![5], (0.2, 3.0), |t, x, _| t.log(x)),
        ("relu", vec![6], (-1.0, 1.0), |t, x, _| {
            let r = t.relu(x);
            t.mul(r, r)
        }),
        ("sigmoid", vec![5], (-3.0, 3.0), |t, x, _| Ok(t.sigmoid(x))),
        ("clamp", vec![6], (-2.0, 2.0), |t, x, _| Ok(t.clamp(x, -1.0, 1.0))),
        ("linear", vec![3, 4], (-1.0, 1.0), |t, x, aux| {
            let w = t.constant(Tensor::new(vec![4, 2], aux.data()[..8].to_vec())?);
            let b = t.constant(Tensor::vector(aux.data()[8..10].to_vec()));
            t.linear(x, w, Some(b))
        }),
        ("linear_weight", vec![4, 2], (-1.0, 1.0), |t, w, aux| {
            let x = t.constant(Tensor::new(vec![3, 4], aux.data()[..12].to_vec())?);
            t.linear(x, w, None)
        }),
        ("matmul", vec![3, 3], (-1.0, 1.0), |t, a, aux| {
            let b = t.constant(Tensor::new(vec![3, 2], aux.data()[..6].to_vec())?);
            let ab = t.matmul(a, b)?;
            t.matmul(a, ab)
        }),
        ("conv1d_same", vec![6, 2], (-1.0, 1.0), |t, x, aux| {
            let k = t.constant(Tensor::new(vec![3, 2, 3], aux.data()[..18].to_vec())?);
            t.conv1d(x, k, None, Padding::Same, 1)
        }),
        ("conv1d_causal_dilated", vec![8, 2], (-1.0, 1.0), |t, x, aux| {
            let k = t.constant(Tensor::new(vec![3, 2, 2], aux.data()[..12].to_vec())?);
            let b = t.constant(Tensor::vector(aux.data()[12..14].to_vec()));
            t.conv1d(x, k, Some(b), Padding::Causal, 2)
        }),
        ("conv1d_kernel", vec![3, 2, 2], (-1.0, 1.0), |t, k, aux| {
            let x = t.constant(Tensor::new(vec![5, 2], aux.data()[..10].to_vec())?);
            t.conv1d(x, k, None, Padding::Same, 2)
        }),
        ("reduce_mean", vec![4, 3], (-1.0, 1.0), |t, x, _| t.reduce_time(x, Reduce::Mean)),
        ("reduce_max", vec![4, 3], (-1.0, 1.0), |t, x, _| t.reduce_time(x, Reduce::Max)),
        ("sum", vec![2, 3], (-1.0, 1.0), |t, x, _| {
            let s = t.sum(x);
            t.mul(s, s)
        }),
        ("mean", vec![2, 3], (-1.0, 1.0), |t, x, _| {
            let s = t.mean(x);
            t.mul(s, s)
        }),
        ("cosine_similarity", vec![5], (-1.0, 1.0), |t, x, aux| {
            let b = t.constant(Tensor::vector(aux.data()[..5].to_vec()));
            t.cosine_similarity(x, b, COSINE_EPS)
        }),
        ("softmax", vec![4], (-2.0, 2.0), |t, x, _| t.softmax(x)),
        ("concat", vec![3], (-1.0, 1.0), |t, x, _| {
            let e = t.exp(x);
            t.concat(&[x, e])
        }),
        ("slice", vec![6], (-1.0, 1.0), |t, x, _| t.slice(x, 2, 3)),
        ("pick", vec![4], (-1.0, 1.0), |t, x, _| {
            let p = t.pick(x, 2)?;
            t.mul(p, p)
        }),
        ("row", vec![3, 4], (-1.0, 1.0), |t, x, _| t.row(x, 1)),
    ]
}

fn row(name: impl Into<String>, seed: u64, tol: f64, r: Result<crate::autodiff::GradCheckReport, AutodiffError>) -> CheckRow {
    // an op that fails to evaluate counts as an infinite error
    let (max_rel_err, checked, excluded) = match r {
        Ok(r) => (r.max_rel_err, r.checked, r.excluded),
        Err(_) => (f64::INFINITY, 0, 0),
    };
    CheckRow {
        name: name.into(),
        seed,
        max_rel_err,
        checked,
        excluded,
        passed: max_rel_err <= tol,
    }
}

/// Checks every parameter tensor of `params` for the scalar built by `f`.
fn check_params<F>(name: &str, seed: u64, tol: f64, params: &ParamSet, f: F) -> CheckRow
where
    F: Fn(&mut Tape, &crate::params::Bound) -> Result<Var, AutodiffError>,
{
    let mut total = CheckRow {
        name: name.into(),
        seed,
        max_rel_err: 0.0,
        checked: 0,
        excluded: 0,
        passed: true,
    };
    for id in params.ids() {
        let r = grad_check(
            |tape, v| {
                let p = params.bind_with(tape, id, v);
                f(tape, &p)
            },
            params.get(id),
            tol,
        );
        let r = row(name, seed, tol, r);
        total.max_rel_err = total.max_rel_err.max(r.max_rel_err);
        total.checked += r.checked;
        total.excluded += r.excluded;
    }
    total.passed = total.max_rel_err <= tol;
    total
}

fn extractor_configs() -> Vec<(&'static str, ExtractorConfig)> {
    let base = ExtractorConfig {
        hidden: 4,
        gnn_window: 2,
        ..ExtractorConfig::default()
    };
    let with = |kind, pooling| ExtractorConfig { kind, pooling, ..base.clone() };
    vec![
        ("extractor_framewise_max", with(ExtractorKind::Framewise, Pooling::Max)),
        ("extractor_cnn1d", with(ExtractorKind::Cnn1d, Pooling::Mean)),
        ("extractor_multiscale", with(ExtractorKind::Multiscale, Pooling::Mean)),
        ("extractor_tcn", with(ExtractorKind::Tcn, Pooling::Mean)),
        ("extractor_gnn_concat", with(ExtractorKind::Gnn, Pooling::Mean)),
        (
            "extractor_gnn_sum_two_passes",
            ExtractorConfig {
                gnn_fusion: GraphFusion::Sum,
                gnn_passes: 2,
                ..with(ExtractorKind::Gnn, Pooling::Max)
            },
        ),
    ]
}

/// Runs every check for one seed.
pub fn run_seed(seed: u64, tol: f64) -> Vec<CheckRow> {
    let mut rows = Vec::new();
    let mut rng = rng_stream(seed, 0x6C);
    for (name, shape, (lo, hi), op) in unary_ops() {
        let x = uniform(&mut rng, &shape, lo, hi);
        let aux = uniform(&mut rng, &[32], -1.0, 1.0);
        let weights = uniform(&mut rng, &[32], -1.0, 1.0);
        let r = grad_check(
            |t, v| {
                let out = op(t, v, &aux)?;
                contract(t, out, &weights)
            },
            &x,
            tol,
        );
        rows.push(row(name, seed, tol, r));
    }

    let (dim, len) = (3, 6);
    for (name, cfg) in extractor_configs() {
        let mut params = ParamSet::new();
        let ex = TemporalExtractor::init(&cfg, dim, &mut params, &mut rng);
        let clip = uniform(&mut rng, &[len, dim], -1.0, 1.0);
        let weights = uniform(&mut rng, &[32], -1.0, 1.0);
        rows.push(check_params(name, seed, tol, &params, |tape, p| {
            let x = tape.constant(clip.clone());
            let h = ex.forward(tape, p, x)?;
            contract(tape, h, &weights)
        }));
    }

    for (name, enabled) in [("loss_ce_contrastive", false), ("loss_ce_contrastive_kl", true)] {
        let ex = ExtractorConfig {
            kind: ExtractorKind::Cnn1d,
            hidden: 4,
            ..ExtractorConfig::default()
        };
        let cv = CvaesmConfig {
            enabled,
            ..CvaesmConfig::default()
        };
        let prompts = uniform(&mut rng, &[3, dim], -1.0, 1.0);
        let model = TpaModel::init(&ex, &ClassifierConfig::default(), &cv, prompts.clone(), dim, &mut rng)
            .expect("valid small model");
        let batch: Vec<(Tensor, usize)> = (0..3).map(|c| (uniform(&mut rng, &[len, dim], -1.0, 1.0), c)).collect();
        let noise_seed = rng.random::<u64>();
        rows.push(check_params(name, seed, tol, &model.params, |tape, p| {
            model
                .batch_loss(tape, p, &prompts, &batch, &mut rng_stream(noise_seed, 0))
                .map(|(loss, _)| loss)
                .map_err(|e| AutodiffError::InvalidArgument(e.to_string()))
        }));
    }
    rows
}

/// Runs the suite for `seeds` consecutive seeds starting at `first_seed`.
pub fn run(first_seed: u64, seeds: u64, tol: f64) -> Vec<CheckRow> {
    (first_seed..first_seed + seeds).flat_map(|s| run_seed(s, tol)).collect()
}
