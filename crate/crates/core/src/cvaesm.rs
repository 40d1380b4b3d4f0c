//! Conditional variational style modulation: Gaussian posterior and prior
//! heads over a latent `z`, and the modulation `h * (1 + g(z))`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{AutodiffError, Tape, Tensor, Var};
use crate::params::{glorot, Bound, ParamId, ParamSet};
use crate::{Error, Result};

pub const LOG_VAR_MIN: f64 = -10.0;
pub const LOG_VAR_MAX: f64 = 10.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CvaesmConfig {
    pub enabled: bool,
    /// Weight of the KL term in the total loss.
    pub beta: f64,
    /// Prior samples per prediction at evaluation; 1 disables the spread estimate.
    pub mc_samples: usize,
}

impl Default for CvaesmConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            beta: 0.2,
            mc_samples: 1,
        }
    }
}

impl CvaesmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!("cvaesm.beta must be >= 0, got {}", self.beta)));
        }
        if self.mc_samples == 0 {
            return Err(Error::Config("cvaesm.mc_samples must be >= 1".into()));
        }
        Ok(())
    }
}

/// Mean and clamped log-variance of a diagonal Gaussian on a tape.
#[derive(Clone, Copy, Debug)]
pub struct Gaussian {
    pub mu: Var,
    pub log_var: Var,
}

#[derive(Clone, Debug)]
pub struct Cvaesm {
    pub hidden: usize,
    pub num_classes: usize,
    pub post_weight: ParamId,
    pub post_bias: ParamId,
    pub prior_weight: ParamId,
    pub prior_bias: ParamId,
    pub g_hidden_weight: ParamId,
    pub g_hidden_bias: ParamId,
    pub g_out_weight: ParamId,
    pub g_out_bias: ParamId,
}

impl Cvaesm {
    pub fn init(hidden: usize, num_classes: usize, params: &mut ParamSet, rng: &mut impl Rng) -> Self {
        let h = hidden;
        let cond = h + num_classes;
        Self {
            hidden,
            num_classes,
            post_weight: params.add("cvaesm.posterior.weight", glorot(&[cond, 2 * h], cond, 2 * h, rng)),
            post_bias: params.add("cvaesm.posterior.bias", Tensor::zeros(&[2 * h])),
            prior_weight: params.add("cvaesm.prior.weight", glorot(&[h, 2 * h], h, 2 * h, rng)),
            prior_bias: params.add("cvaesm.prior.bias", Tensor::zeros(&[2 * h])),
            g_hidden_weight: params.add("cvaesm.g.hidden.weight", glorot(&[h, h], h, h, rng)),
            g_hidden_bias: params.add("cvaesm.g.hidden.bias", Tensor::zeros(&[h])),
            g_out_weight: params.add("cvaesm.g.out.weight", glorot(&[h, h], h, h, rng)),
            g_out_bias: params.add("cvaesm.g.out.bias", Tensor::zeros(&[h])),
        }
    }

    fn split(&self, tape: &mut Tape, out: Var) -> Result<Gaussian, AutodiffError> {
        let mu = tape.slice(out, 0, self.hidden)?;
        let lv = tape.slice(out, self.hidden, self.hidden)?;
        let log_var = tape.clamp(lv, LOG_VAR_MIN, LOG_VAR_MAX);
        Ok(Gaussian { mu, log_var })
    }

    /// `q(z | h, y)` from one linear layer on `[h; onehot(y)]`.
    pub fn posterior(&self, tape: &mut Tape, p: &Bound, h: Var, label: usize) -> Result<Gaussian, AutodiffError> {
        if label >= self.num_classes {
            return Err(AutodiffError::InvalidArgument(format!(
                "label {label} out of range for {} classes",
                self.num_classes
            )));
        }
        let mut onehot = vec![0.0; self.num_classes];
        onehot[label] = 1.0;
        let y = tape.constant(Tensor::vector(onehot));
        let hy = tape.concat(&[h, y])?;
        let out = tape.linear(hy, p[self.post_weight], Some(p[self.post_bias]))?;
        self.split(tape, out)
    }

    /// `p(z | h)` from one linear layer on `h`.
    pub fn prior(&self, tape: &mut Tape, p: &Bound, h: Var) -> Result<Gaussian, AutodiffError> {
        let out = tape.linear(h, p[self.prior_weight], Some(p[self.prior_bias]))?;
        self.split(tape, out)
    }

    /// `h * (1 + g(z))` with `g` a two-layer relu MLP.
    pub fn modulate(&self, tape: &mut Tape, p: &Bound, h: Var, z: Var) -> Result<Var, AutodiffError> {
        let a = tape.linear(z, p[self.g_hidden_weight], Some(p[self.g_hidden_bias]))?;
        let a = tape.relu(a);
        let g = tape.linear(a, p[self.g_out_weight], Some(p[self.g_out_bias]))?;
        let hg = tape.mul(h, g)?;
        tape.add(h, hg)
    }
}

/// `z = mu + exp(log_var / 2) * eps`, with `eps` a constant leaf.
pub fn reparameterize<R: Rng + ?Sized>(tape: &mut Tape, g: Gaussian, rng: &mut R) -> Result<Var, AutodiffError> {
    let n = tape.value(g.mu).numel();
    let eps: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
    let eps = tape.constant(Tensor::vector(eps));
    let half = tape.scale(g.log_var, 0.5);
    let std = tape.exp(half);
    let noise = tape.mul(std, eps)?;
    tape.add(g.mu, noise)
}

/// Evaluation latent: the prior mean, no sampling.
pub fn inference_latent(prior: Gaussian) -> Var {
    prior.mu
}

/// Closed-form `KL(q || p)` between diagonal Gaussians, summed over dimensions.
pub fn kl_divergence(tape: &mut Tape, q: Gaussian, p: Gaussian) -> Result<Var, AutodiffError> {
    let lv_diff = tape.sub(p.log_var, q.log_var)?;
    let var_q = tape.exp(q.log_var);
    let dmu = tape.sub(q.mu, p.mu)?;
    let dmu2 = tape.mul(dmu, dmu)?;
    let num = tape.add(var_q, dmu2)?;
    let neg_lvp = tape.neg(p.log_var);
    let inv_var_p = tape.exp(neg_lvp);
    let ratio = tape.mul(num, inv_var_p)?;
    let terms = tape.add(lv_diff, ratio)?;
    let terms = tape.shift(terms, -1.0);
    let s = tape.sum(terms);
    Ok(tape.scale(s, 0.5))
}

/// Plain-value version of [`kl_divergence`] on already clamped parameters.
pub fn kl_values(mu_q: &[f64], lv_q: &[f64], mu_p: &[f64], lv_p: &[f64]) -> f64 {
    let mut total = 0.0;
    for i in 0..mu_q.len() {
        let d = mu_q[i] - mu_p[i];
        total += 0.5 * (lv_p[i] - lv_q[i] + (lv_q[i].exp() + d * d) / lv_p[i].exp() - 1.0);
    }
    total
}

/// Aggregate of `K` sampled probability vectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Uncertainty {
    pub mean: Vec<f64>,
    /// Population variance of each class probability across samples.
    pub variance: Vec<f64>,
    /// Entropy of the mean distribution, in nats.
    pub entropy: f64,
}

impl Uncertainty {
    /// Summarises samples in their given order. Panics on an empty slice.
    pub fn from_samples(samples: &[Vec<f64>]) -> Self {
        assert!(!samples.is_empty(), "at least one sample");
        let k = samples.len() as f64;
        // moments of deviations from the first sample, so identical samples
        // give exactly that sample and zero variance
        let base = &samples[0];
        let c = base.len();
        let mut shift = vec![0.0; c];
        let mut sq = vec![0.0; c];
        for s in samples {
            for i in 0..c {
                let d = s[i] - base[i];
                shift[i] += d;
                sq[i] += d * d;
            }
        }
        let mean: Vec<f64> = (0..c).map(|i| base[i] + shift[i] / k).collect();
        let variance: Vec<f64> = (0..c).map(|i| (sq[i] / k - (shift[i] / k).powi(2)).max(0.0)).collect();
        let entropy = -mean.iter().filter(|&&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>();
        Self { mean, variance, entropy }
    }
}
