use rand::Rng;

use super::{ExtractorConfig, Pooling};
use crate::autodiff::{AutodiffError, Tape, Tensor, Var};
use crate::params::{glorot, Bound, ParamId, ParamSet};

/// Shared per-frame linear map followed by temporal pooling.
#[derive(Clone, Debug)]
pub struct Framewise {
    pub hidden: usize,
    pub pooling: Pooling,
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Framewise {
    pub fn init(cfg: &ExtractorConfig, input_dim: usize, params: &mut ParamSet, rng: &mut impl Rng) -> Self {
        let h = cfg.hidden;
        Self {
            hidden: h,
            pooling: cfg.pooling,
            weight: params.add("framewise.weight", glorot(&[input_dim, h], input_dim, h, rng)),
            bias: params.add("framewise.bias", Tensor::zeros(&[h])),
        }
    }

    pub fn forward(&self, tape: &mut Tape, p: &Bound, x: Var) -> Result<Var, AutodiffError> {
        let per_frame = tape.linear(x, p[self.weight], Some(p[self.bias]))?;
        tape.reduce_time(per_frame, self.pooling.into())
    }
}
