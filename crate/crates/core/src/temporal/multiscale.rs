use rand::Rng;

use super::{conv_kernel, ExtractorConfig, Pooling};
use crate::autodiff::{AutodiffError, Padding, Tape, Tensor, Var};
use crate::params::{glorot, Bound, ParamId, ParamSet};

#[derive(Clone, Debug)]
pub struct Branch {
    pub kernel_size: usize,
    pub kernel: ParamId,
    pub bias: ParamId,
}

/// Parallel same-padded convolutions at several kernel sizes; each branch is
/// pooled, the branches are concatenated and mapped back to `hidden`.
#[derive(Clone, Debug)]
pub struct Multiscale {
    pub hidden: usize,
    pub pooling: Pooling,
    pub branches: Vec<Branch>,
    pub out_weight: ParamId,
    pub out_bias: ParamId,
}

impl Multiscale {
    pub fn init(cfg: &ExtractorConfig, input_dim: usize, params: &mut ParamSet, rng: &mut impl Rng) -> Self {
        let h = cfg.hidden;
        let branches = cfg
            .multiscale_kernels
            .iter()
            .map(|&k| Branch {
                kernel_size: k,
                kernel: params.add(format!("multiscale.k{k}.kernel"), conv_kernel(k, input_dim, h, rng)),
                bias: params.add(format!("multiscale.k{k}.bias"), Tensor::zeros(&[h])),
            })
            .collect::<Vec<_>>();
        let concat = h * branches.len();
        Self {
            hidden: h,
            pooling: cfg.pooling,
            out_weight: params.add("multiscale.out.weight", glorot(&[concat, h], concat, h, rng)),
            out_bias: params.add("multiscale.out.bias", Tensor::zeros(&[h])),
            branches,
        }
    }

    /// Concatenated pooled branch outputs, width `hidden * branches`.
    pub fn pooled_branches(&self, tape: &mut Tape, p: &Bound, x: Var) -> Result<Var, AutodiffError> {
        let mut pooled = Vec::with_capacity(self.branches.len());
        for b in &self.branches {
            let y = tape.conv1d(x, p[b.kernel], Some(p[b.bias]), Padding::Same, 1)?;
            let y = tape.relu(y);
            pooled.push(tape.reduce_time(y, self.pooling.into())?);
        }
        tape.concat(&pooled)
    }

    pub fn forward(&self, tape: &mut Tape, p: &Bound, x: Var) -> Result<Var, AutodiffError> {
        let cat = self.pooled_branches(tape, p, x)?;
        tape.linear(cat, p[self.out_weight], Some(p[self.out_bias]))
    }
}
