use rand::Rng;

use super::{conv_kernel, ExtractorConfig, Pooling};
use crate::autodiff::{AutodiffError, Padding, Tape, Tensor, Var};
use crate::params::{glorot, Bound, ParamId, ParamSet};

#[derive(Clone, Debug)]
pub struct TcnBlock {
    pub dilation: usize,
    pub kernel: ParamId,
    pub bias: ParamId,
}

/// Per-frame input projection followed by residual causal dilated
/// convolutions `H <- H + relu(conv(H))` and temporal pooling.
#[derive(Clone, Debug)]
pub struct Tcn {
    pub hidden: usize,
    pub pooling: Pooling,
    pub kernel_size: usize,
    pub in_weight: ParamId,
    pub in_bias: ParamId,
    pub blocks: Vec<TcnBlock>,
}

impl Tcn {
    pub fn init(cfg: &ExtractorConfig, input_dim: usize, params: &mut ParamSet, rng: &mut impl Rng) -> Self {
        let h = cfg.hidden;
        let in_weight = params.add("tcn.in.weight", glorot(&[input_dim, h], input_dim, h, rng));
        let in_bias = params.add("tcn.in.bias", Tensor::zeros(&[h]));
        let blocks = cfg
            .tcn_dilations
            .iter()
            .enumerate()
            .map(|(i, &d)| TcnBlock {
                dilation: d,
                kernel: params.add(format!("tcn.block{i}.kernel"), conv_kernel(cfg.tcn_kernel, h, h, rng)),
                bias: params.add(format!("tcn.block{i}.bias"), Tensor::zeros(&[h])),
            })
            .collect();
        Self {
            hidden: h,
            pooling: cfg.pooling,
            kernel_size: cfg.tcn_kernel,
            in_weight,
            in_bias,
            blocks,
        }
    }

    /// `1 + sum((k - 1) * d)` frames.
    pub fn receptive_field(&self) -> usize {
        1 + self.blocks.iter().map(|b| (self.kernel_size - 1) * b.dilation).sum::<usize>()
    }

    pub fn frame_features(&self, tape: &mut Tape, p: &Bound, x: Var) -> Result<Var, AutodiffError> {
        let mut h = tape.linear(x, p[self.in_weight], Some(p[self.in_bias]))?;
        for b in &self.blocks {
            let y = tape.conv1d(h, p[b.kernel], Some(p[b.bias]), Padding::Causal, b.dilation)?;
            let y = tape.relu(y);
            h = tape.add(h, y)?;
        }
        Ok(h)
    }

    pub fn forward(&self, tape: &mut Tape, p: &Bound, x: Var) -> Result<Var, AutodiffError> {
        let f = self.frame_features(tape, p, x)?;
        tape.reduce_time(f, self.pooling.into())
    }
}
