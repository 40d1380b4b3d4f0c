use rand::Rng;

use super::{conv_kernel, ExtractorConfig, Pooling};
use crate::autodiff::{AutodiffError, Padding, Tape, Tensor, Var};
use crate::params::{Bound, ParamId, ParamSet};

/// One same-padded convolution over time, relu, then pooling.
#[derive(Clone, Debug)]
pub struct Cnn1d {
    pub hidden: usize,
    pub pooling: Pooling,
    pub kernel: ParamId,
    pub bias: ParamId,
}

impl Cnn1d {
    pub fn init(cfg: &ExtractorConfig, input_dim: usize, params: &mut ParamSet, rng: &mut impl Rng) -> Self {
        let h = cfg.hidden;
        Self {
            hidden: h,
            pooling: cfg.pooling,
            kernel: params.add("cnn1d.kernel", conv_kernel(cfg.cnn_kernel, input_dim, h, rng)),
            bias: params.add("cnn1d.bias", Tensor::zeros(&[h])),
        }
    }

    /// Per-frame features before pooling, `[L, hidden]`.
    pub fn frame_features(&self, tape: &mut Tape, p: &Bound, x: Var) -> Result<Var, AutodiffError> {
        let y = tape.conv1d(x, p[self.kernel], Some(p[self.bias]), Padding::Same, 1)?;
        Ok(tape.relu(y))
    }

    pub fn forward(&self, tape: &mut Tape, p: &Bound, x: Var) -> Result<Var, AutodiffError> {
        let f = self.frame_features(tape, p, x)?;
        tape.reduce_time(f, self.pooling.into())
    }
}

#[cfg(test)]
mod tests {
    use super::super::test_util::*;
    use super::super::{ExtractorKind, TemporalExtractor};
    use super::*;
    use crate::params::rng_stream;

    fn setup() -> (Cnn1d, TemporalExtractor, ParamSet) {
        let cfg = small_cfg(ExtractorKind::Cnn1d);
        let mut params = ParamSet::new();
        let ex = TemporalExtractor::init(&cfg, 3, &mut params, &mut rng_stream(3, 0));
        let TemporalExtractor::Cnn1d(m) = &ex else { unreachable!() };
        (m.clone(), ex, params)
    }

    #[test]
    fn centre_tap_kernel_equals_mean_of_framewise_map() {
        let (m, ex, mut params) = setup();
        // keep only the centre tap; it acts as a per-frame linear map W
        let k = params.get_mut(m.kernel);
        let (cin, cout) = (3, 6);
        for tap in [0, 2] {
            for v in &mut k.data_mut()[tap * cin * cout..(tap + 1) * cin * cout] {
                *v = 0.0;
            }
        }
        let w = params.get(m.kernel).data()[cin * cout..2 * cin * cout].to_vec();
        let clip = random_clip(6, 3, 1);
        let h = embed(&ex, &params, &clip);
        for j in 0..cout {
            let want = (0..6)
                .map(|t| (0..cin).map(|c| clip.row(t)[c] * w[c * cout + j]).sum::<f64>().max(0.0))
                .sum::<f64>()
                / 6.0;
            assert!((h.data()[j] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_input_gives_constant_interior() {
        let (m, _, params) = setup();
        let clip = Tensor::full(&[8, 3], 0.7);
        let mut tape = Tape::new();
        let p = params.bind(&mut tape);
        let x = tape.constant(clip);
        let f = m.frame_features(&mut tape, &p, x).unwrap();
        let feats = tape.value(f);
        for t in 2..7 {
            assert_eq!(feats.row(t), feats.row(1));
        }
        assert!(feats.is_finite());
    }

    #[test]
    fn seeded_output_is_bit_exact() {
        let clip = random_clip(9, 3, 4);
        let (_, ex1, p1) = setup();
        let (_, ex2, p2) = setup();
        assert_eq!(embed(&ex1, &p1, &clip), embed(&ex2, &p2, &clip));
    }
}
