//! The full classifier: temporal extractor, prompt projection, optional
//! style modulation, cosine scoring and temperature softmax.

use rand::Rng;

use crate::autodiff::{Tape, Tensor, Var};
use crate::cvaesm::{self, Cvaesm, CvaesmConfig, Uncertainty};
use crate::head::{self, ClassifierConfig, PromptProjection};
use crate::params::{Bound, ParamSet};
use crate::temporal::{ExtractorConfig, TemporalExtractor};
use crate::{Error, Result};

/// Batch-mean loss components of one optimisation step.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossParts {
    pub total: f64,
    pub ce: f64,
    pub ctr: f64,
    /// Zero when style modulation is disabled.
    pub kl: f64,
}

#[derive(Clone, Debug)]
pub struct TpaModel {
    pub extractor_cfg: ExtractorConfig,
    pub classifier: ClassifierConfig,
    pub cvaesm_cfg: CvaesmConfig,
    pub input_dim: usize,
    pub num_classes: usize,
    pub params: ParamSet,
    pub extractor: TemporalExtractor,
    pub projection: PromptProjection,
    pub cvaesm: Option<Cvaesm>,
    /// Fixed `C x D` prompt embeddings used at evaluation.
    pub prompts: Tensor,
}

impl TpaModel {
    pub fn init(
        extractor_cfg: &ExtractorConfig,
        classifier: &ClassifierConfig,
        cvaesm_cfg: &CvaesmConfig,
        prompts: Tensor,
        input_dim: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        extractor_cfg.validate()?;
        classifier.validate()?;
        cvaesm_cfg.validate()?;
        if prompts.rank() != 2 || prompts.cols() != input_dim {
            return Err(Error::Validation(format!(
                "prompt matrix {:?} does not match frame dim {input_dim}",
                prompts.shape()
            )));
        }
        let num_classes = prompts.rows();
        if num_classes < 2 {
            return Err(Error::Validation("at least two classes are required".into()));
        }
        let mut params = ParamSet::new();
        let extractor = TemporalExtractor::init(extractor_cfg, input_dim, &mut params, rng);
        let hidden = extractor.output_dim();
        let projection = PromptProjection::init(input_dim, hidden, &mut params, rng);
        let cvaesm = cvaesm_cfg
            .enabled
            .then(|| Cvaesm::init(hidden, num_classes, &mut params, rng));
        Ok(Self {
            extractor_cfg: extractor_cfg.clone(),
            classifier: classifier.clone(),
            cvaesm_cfg: cvaesm_cfg.clone(),
            input_dim,
            num_classes,
            params,
            extractor,
            projection,
            cvaesm,
            prompts,
        })
    }

    fn check_clip(&self, clip: &Tensor) -> Result<()> {
        if clip.rank() != 2 || clip.cols() != self.input_dim {
            return Err(Error::Validation(format!(
                "clip shape {:?} does not match frame dim {}",
                clip.shape(),
                self.input_dim
            )));
        }
        Ok(())
    }

    /// Mean total loss over `batch` on `tape`, with `prompts` the epoch's prompt matrix.
    /// Style latents are drawn from the posterior.
    pub fn batch_loss(
        &self,
        tape: &mut Tape,
        p: &Bound,
        prompts: &Tensor,
        batch: &[(Tensor, usize)],
        rng: &mut impl Rng,
    ) -> Result<(Var, LossParts)> {
        if batch.is_empty() {
            return Err(Error::Validation("empty batch".into()));
        }
        let cls = &self.classifier;
        let pv = tape.constant(prompts.clone());
        let proj = self.projection.project(tape, p, pv)?;
        let mut parts = LossParts::default();
        let mut total: Option<Var> = None;
        for (clip, label) in batch {
            self.check_clip(clip)?;
            let x = tape.constant(clip.clone());
            let mut h = self.extractor.forward(tape, p, x)?;
            let mut kl = None;
            if let Some(m) = &self.cvaesm {
                let q = m.posterior(tape, p, h, *label)?;
                let prior = m.prior(tape, p, h)?;
                let z = cvaesm::reparameterize(tape, q, rng)?;
                h = m.modulate(tape, p, h, z)?;
                kl = Some(cvaesm::kl_divergence(tape, q, prior)?);
            }
            let s = head::similarity_scores(tape, h, proj)?;
            let probs = head::classify(tape, s, cls.tau)?;
            let ce = head::ce_loss(tape, probs, *label)?;
            let ctr = head::ctr_loss(tape, s, *label, cls.margin)?;
            let loss = head::total_loss(tape, ce, ctr, kl, cls.alpha, self.cvaesm_cfg.beta)?;
            parts.ce += tape.value(ce).item();
            parts.ctr += tape.value(ctr).item();
            parts.kl += kl.map_or(0.0, |k| tape.value(k).item());
            total = Some(match total {
                Some(t) => tape.add(t, loss)?,
                None => loss,
            });
        }
        let n = batch.len() as f64;
        let mean = tape.scale(total.expect("non-empty batch"), 1.0 / n);
        parts.ce /= n;
        parts.ctr /= n;
        parts.kl /= n;
        parts.total = tape.value(mean).item();
        if !parts.total.is_finite() {
            return Err(Error::NonFinite(format!("training loss {}", parts.total)));
        }
        Ok((mean, parts))
    }

    /// Similarity scores in evaluation mode; with modulation on, `z` is the prior mean
    /// or, when given, a draw from the prior.
    fn eval_scores(&self, clip: &Tensor, rng: Option<&mut dyn rand::RngCore>) -> Result<Vec<f64>> {
        self.check_clip(clip)?;
        let mut tape = Tape::new();
        let p = self.params.bind_frozen(&mut tape);
        let pv = tape.constant(self.prompts.clone());
        let proj = self.projection.project(&mut tape, &p, pv)?;
        let x = tape.constant(clip.clone());
        let mut h = self.extractor.forward(&mut tape, &p, x)?;
        if let Some(m) = &self.cvaesm {
            let prior = m.prior(&mut tape, &p, h)?;
            let z = match rng {
                Some(r) => cvaesm::reparameterize(&mut tape, prior, r)?,
                None => cvaesm::inference_latent(prior),
            };
            h = m.modulate(&mut tape, &p, h, z)?;
        }
        let s = head::similarity_scores(&mut tape, h, proj)?;
        Ok(tape.value(s).data().to_vec())
    }

    /// Deterministic class probabilities for one clip.
    pub fn predict(&self, clip: &Tensor) -> Result<Vec<f64>> {
        let s = self.eval_scores(clip, None)?;
        Ok(head::classify_values(&s, self.classifier.tau))
    }

    /// Monte Carlo summary over `samples` prior draws. Without style
    /// modulation every draw equals [`predict`](Self::predict).
    pub fn predict_mc(&self, clip: &Tensor, samples: usize, rng: &mut impl Rng) -> Result<Uncertainty> {
        if samples == 0 {
            return Err(Error::Validation("mc samples must be >= 1".into()));
        }
        let mut draws = Vec::with_capacity(samples);
        for _ in 0..samples {
            let s = if self.cvaesm.is_some() {
                self.eval_scores(clip, Some(rng))?
            } else {
                self.eval_scores(clip, None)?
            };
            draws.push(head::classify_values(&s, self.classifier.tau));
        }
        Ok(Uncertainty::from_samples(&draws))
    }
}
