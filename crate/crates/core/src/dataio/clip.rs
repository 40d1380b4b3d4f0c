use rand::Rng;

use super::VideoRecord;
use crate::autodiff::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClipMode {
    /// Uniformly random start in `[0, T - L]`.
    Train,
    /// Centred start `floor((T - L) / 2)`.
    Eval,
}

/// Start frame of an `len`-frame window. Videos shorter than the window start at 0.
pub fn clip_start(num_frames: usize, len: usize, mode: ClipMode, rng: &mut impl Rng) -> usize {
    if num_frames <= len {
        return 0;
    }
    let slack = num_frames - len;
    match mode {
        ClipMode::Train => rng.random_range(0..=slack),
        ClipMode::Eval => slack / 2,
    }
}

/// Cuts an `L x D` clip. Short videos are padded by repeating the last frame.
pub fn sample_clip(rec: &VideoRecord, len: usize, mode: ClipMode, rng: &mut impl Rng) -> Tensor {
    assert!(len >= 1, "clip length must be >= 1");
    let t_total = rec.num_frames();
    let start = clip_start(t_total, len, mode, rng);
    let mut data = Vec::with_capacity(len * rec.dim());
    for i in 0..len {
        let t = (start + i).min(t_total - 1);
        data.extend(rec.frame(t).iter().map(|&v| f64::from(v)));
    }
    Tensor::matrix(len, rec.dim(), data).expect("clip shape")
}
