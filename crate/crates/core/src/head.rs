//! Prompt projection, cosine scoring, temperature softmax and the
//! classification and margin-hinge objectives.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{self, AutodiffError, Tape, Tensor, Var, COSINE_EPS};
use crate::params::{glorot, Bound, ParamId, ParamSet};
use crate::{Error, Result};

/// Floor applied to the true-class probability inside the log.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierConfig {
    pub tau: f64,
    pub margin: f64,
    pub alpha: f64,
    /// Draw one prompt variant per class each epoch instead of the base prompt.
    pub randomize_prompts: bool,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            tau: 0.1,
            margin: 0.5,
            alpha: 0.5,
            randomize_prompts: false,
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::Config(format!("classifier.tau must be positive, got {}", self.tau)));
        }
        if !(self.margin >= 0.0 && self.margin.is_finite()) {
            return Err(Error::Config(format!("classifier.margin must be >= 0, got {}", self.margin)));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("classifier.alpha must be >= 0, got {}", self.alpha)));
        }
        Ok(())
    }
}

/// Shared trainable map from prompt embeddings into the video embedding space.
#[derive(Clone, Debug)]
pub struct PromptProjection {
    pub input_dim: usize,
    pub weight: ParamId,
    pub bias: ParamId,
}

impl PromptProjection {
    pub fn init(input_dim: usize, hidden: usize, params: &mut ParamSet, rng: &mut impl Rng) -> Self {
        Self {
            input_dim,
            weight: params.add("prompt.weight", glorot(&[input_dim, hidden], input_dim, hidden, rng)),
            bias: params.add("prompt.bias", Tensor::zeros(&[hidden])),
        }
    }

    /// Projects a `[C, D]` prompt matrix to `[C, hidden]`.
    pub fn project(&self, tape: &mut Tape, p: &Bound, prompts: Var) -> Result<Var, AutodiffError> {
        let shape = tape.shape(prompts);
        if shape.len() != 2 || shape[1] != self.input_dim {
            return Err(AutodiffError::ShapeMismatch {
                op: "project_prompts",
                left: shape.to_vec(),
                right: vec![self.input_dim],
            });
        }
        tape.linear(prompts, p[self.weight], Some(p[self.bias]))
    }
}

/// `s_c = cos(h, prompts[c])` for every row of the projected prompt matrix.
pub fn similarity_scores(tape: &mut Tape, h: Var, prompts: Var) -> Result<Var, AutodiffError> {
    let classes = tape.shape(prompts)[0];
    let mut scores = Vec::with_capacity(classes);
    for c in 0..classes {
        let row = tape.row(prompts, c)?;
        scores.push(tape.cosine_similarity(h, row, COSINE_EPS)?);
    }
    tape.concat(&scores)
}

/// Temperature softmax over similarity scores.
pub fn classify(tape: &mut Tape, scores: Var, tau: f64) -> Result<Var, AutodiffError> {
    let logits = tape.scale(scores, 1.0 / tau);
    tape.softmax(logits)
}

/// Non-differentiable counterpart of [`classify`].
pub fn classify_values(scores: &[f64], tau: f64) -> Vec<f64> {
    let logits: Vec<f64> = scores.iter().map(|s| s / tau).collect();
    autodiff::softmax(&logits)
}

/// `-ln max(p_y, 1e-12)`.
pub fn ce_loss(tape: &mut Tape, probs: Var, label: usize) -> Result<Var, AutodiffError> {
    let py = tape.pick(probs, label)?;
    let py = tape.clamp_min(py, PROB_FLOOR);
    let lp = tape.log(py)?;
    Ok(tape.neg(lp))
}

/// Index of the largest score other than `label`; the earliest wins ties.
pub fn hardest_negative(scores: &[f64], label: usize) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (j, &s) in scores.iter().enumerate() {
        if j != label && best.is_none_or(|b| s > scores[b]) {
            best = Some(j);
        }
    }
    best
}

/// `max(0, m - s_y + max_{j != y} s_j)` for one sample.
pub fn ctr_loss(tape: &mut Tape, scores: Var, label: usize, margin: f64) -> Result<Var, AutodiffError> {
    let neg = hardest_negative(tape.value(scores).data(), label)
        .ok_or_else(|| AutodiffError::InvalidArgument("contrastive loss needs at least two classes".into()))?;
    let sy = tape.pick(scores, label)?;
    let sn = tape.pick(scores, neg)?;
    let gap = tape.sub(sn, sy)?;
    let gap = tape.shift(gap, margin);
    Ok(tape.relu(gap))
}

/// `ce + alpha * ctr (+ beta * kl)`.
pub fn total_loss(
    tape: &mut Tape,
    ce: Var,
    ctr: Var,
    kl: Option<Var>,
    alpha: f64,
    beta: f64,
) -> Result<Var, AutodiffError> {
    let ctr = tape.scale(ctr, alpha);
    let mut loss = tape.add(ce, ctr)?;
    if let Some(kl) = kl {
        let kl = tape.scale(kl, beta);
        loss = tape.add(loss, kl)?;
    }
    Ok(loss)
}
