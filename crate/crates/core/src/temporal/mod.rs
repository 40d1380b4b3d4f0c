//! Trainable temporal extractors mapping an `L x D` clip to a video embedding.

mod cnn;
mod framewise;
mod gnn;
mod multiscale;
mod tcn;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{AutodiffError, Reduce, Tape, Var};
use crate::params::{Bound, ParamSet};
use crate::{Error, Result};

pub use cnn::Cnn1d;
pub use framewise::Framewise;
pub use gnn::{Adjacency, Gnn, GraphKind};
pub use multiscale::Multiscale;
pub use tcn::Tcn;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExtractorKind {
    Framewise,
    Cnn1d,
    Multiscale,
    Tcn,
    Gnn,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    Mean,
    Max,
}

impl From<Pooling> for Reduce {
    fn from(p: Pooling) -> Self {
        match p {
            Pooling::Mean => Reduce::Mean,
            Pooling::Max => Reduce::Max,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphFusion {
    Concat,
    Sum,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExtractorConfig {
    pub kind: ExtractorKind,
    /// Width of the video embedding; must match the prompt projection output.
    pub hidden: usize,
    pub pooling: Pooling,
    pub cnn_kernel: usize,
    pub multiscale_kernels: Vec<usize>,
    pub tcn_kernel: usize,
    pub tcn_dilations: Vec<usize>,
    /// Frames linked forward/backward from each node.
    pub gnn_window: usize,
    pub gnn_passes: usize,
    pub gnn_fusion: GraphFusion,
}

impl Default for ExtractorConfig {
    fn default() -> Self {
        Self {
            kind: ExtractorKind::Cnn1d,
            hidden: 256,
            pooling: Pooling::Mean,
            cnn_kernel: 3,
            multiscale_kernels: vec![3, 5, 7],
            tcn_kernel: 4,
            tcn_dilations: vec![1, 2, 4],
            gnn_window: 10,
            gnn_passes: 1,
            gnn_fusion: GraphFusion::Concat,
        }
    }
}

impl ExtractorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(format!("extractor: {msg}")));
        if self.hidden == 0 {
            return bad("hidden must be positive".into());
        }
        if self.cnn_kernel.is_multiple_of(2) {
            return bad(format!("cnn_kernel must be odd, got {}", self.cnn_kernel));
        }
        if self.multiscale_kernels.is_empty() || self.multiscale_kernels.iter().any(|k| k % 2 == 0) {
            return bad("multiscale_kernels must be a non-empty list of odd sizes".into());
        }
        if self.tcn_kernel == 0 || self.tcn_dilations.is_empty() || self.tcn_dilations.contains(&0) {
            return bad("tcn_kernel and tcn_dilations must be positive".into());
        }
        if self.gnn_window == 0 || self.gnn_passes == 0 {
            return bad("gnn_window and gnn_passes must be >= 1".into());
        }
        Ok(())
    }
}

/// A temporal extractor of any supported kind.
#[derive(Clone, Debug)]
pub enum TemporalExtractor {
    Framewise(Framewise),
    Cnn1d(Cnn1d),
    Multiscale(Multiscale),
    Tcn(Tcn),
    Gnn(Gnn),
}

impl TemporalExtractor {
    /// Registers freshly initialised parameters in `params`.
    pub fn init(cfg: &ExtractorConfig, input_dim: usize, params: &mut ParamSet, rng: &mut impl Rng) -> Self {
        match cfg.kind {
            ExtractorKind::Framewise => Self::Framewise(Framewise::init(cfg, input_dim, params, rng)),
            ExtractorKind::Cnn1d => Self::Cnn1d(Cnn1d::init(cfg, input_dim, params, rng)),
            ExtractorKind::Multiscale => Self::Multiscale(Multiscale::init(cfg, input_dim, params, rng)),
            ExtractorKind::Tcn => Self::Tcn(Tcn::init(cfg, input_dim, params, rng)),
            ExtractorKind::Gnn => Self::Gnn(Gnn::init(cfg, input_dim, params, rng)),
        }
    }

    /// Video embedding `h` for clip `x: [L, D]`.
    pub fn forward(&self, tape: &mut Tape, p: &Bound, x: Var) -> Result<Var, AutodiffError> {
        match self {
            Self::Framewise(m) => m.forward(tape, p, x),
            Self::Cnn1d(m) => m.forward(tape, p, x),
            Self::Multiscale(m) => m.forward(tape, p, x),
            Self::Tcn(m) => m.forward(tape, p, x),
            Self::Gnn(m) => m.forward(tape, p, x),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Self::Framewise(m) => m.hidden,
            Self::Cnn1d(m) => m.hidden,
            Self::Multiscale(m) => m.hidden,
            Self::Tcn(m) => m.hidden,
            Self::Gnn(m) => m.hidden,
        }
    }
}

/// Glorot-initialised conv kernel `[k, cin, cout]`.
fn conv_kernel(k: usize, cin: usize, cout: usize, rng: &mut impl Rng) -> crate::autodiff::Tensor {
    crate::params::glorot(&[k, cin, cout], k * cin, k * cout, rng)
}


#[cfg(test)]
mod tests {
    use super::test_util::*;
    use super::*;
    use crate::autodiff::grad_check;
    use crate::params::rng_stream;

    const KINDS: [ExtractorKind; 5] = [
        ExtractorKind::Framewise,
        ExtractorKind::Cnn1d,
        ExtractorKind::Multiscale,
        ExtractorKind::Tcn,
        ExtractorKind::Gnn,
    ];

    #[test]
    fn every_kind_emits_hidden_width() {
        for kind in KINDS {
            let cfg = ExtractorConfig { kind, ..ExtractorConfig::default() };
            let mut params = ParamSet::new();
            let ex = TemporalExtractor::init(&cfg, 12, &mut params, &mut rng_stream(0, 0));
            for len in [1, 5, 16] {
                let h = embed(&ex, &params, &random_clip(len, 12, len as u64));
                assert_eq!(h.shape(), &[256], "{kind:?}");
                assert!(h.is_finite());
            }
        }
    }

    #[test]
    fn seeded_init_is_bit_reproducible() {
        for kind in KINDS {
            let cfg = small_cfg(kind);
            let run = || {
                let mut params = ParamSet::new();
                let ex = TemporalExtractor::init(&cfg, 4, &mut params, &mut rng_stream(0, 0));
                embed(&ex, &params, &random_clip(7, 4, 1))
            };
            assert_eq!(run(), run());
        }
    }

    #[test]
    fn all_parameters_pass_grad_check() {
        for kind in KINDS {
            for pooling in [Pooling::Mean, Pooling::Max] {
                let cfg = ExtractorConfig { pooling, ..small_cfg(kind) };
                let mut params = ParamSet::new();
                let ex = TemporalExtractor::init(&cfg, 3, &mut params, &mut rng_stream(2, 0));
                let clip = random_clip(5, 3, 4);
                for id in params.ids() {
                    let f = |tape: &mut Tape, v: Var| {
                        let p = params.bind_with(tape, id, v);
                        let x = tape.constant(clip.clone());
                        let h = ex.forward(tape, &p, x)?;
                        let sq = tape.mul(h, h)?;
                        Ok(tape.sum(sq))
                    };
                    let r = grad_check(f, params.get(id), 1e-4).unwrap();
                    assert!(r.passed(), "{kind:?} {pooling:?} {}: {r:?}", params.name(id));
                }
            }
        }
    }

    #[test]
    fn config_validation() {
        assert!(ExtractorConfig::default().validate().is_ok());
        let bad = ExtractorConfig { cnn_kernel: 4, ..ExtractorConfig::default() };
        assert!(bad.validate().is_err());
        let bad = ExtractorConfig { gnn_window: 0, ..ExtractorConfig::default() };
        assert!(bad.validate().is_err());
    }
}
