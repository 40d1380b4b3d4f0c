//! Synthetic frame-embedding generator.
//!
//! Each class `c` owns a unit direction `u_c` and a frequency `f_c`. Frame
//! `t` of a `T`-frame video is
//!
//! ```text
//! x_t = sep * (a * u_c + b * cos(2 pi f_c t / T + phi) * M u_c) + N(0, I)
//! ```
//!
//! with a shared random orthogonal map `M` and a per-video phase `phi`.
//! The static part gives each class a mean direction that its prompt
//! `sep * u_c + noise` points at; the oscillating part along `M u_c` is only
//! visible through the frame sequence.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{Dataset, PromptBank, PromptEntry, VideoRecord};
use crate::params::rng_stream;
use crate::{Error, Result};

/// Weight of the static class direction.
pub const STATIC_WEIGHT: f64 = 0.15;
/// Amplitude of the oscillating component.
pub const DYNAMIC_WEIGHT: f64 = 0.5;
/// Std of the noise added to prompt embeddings.
pub const PROMPT_NOISE: f64 = 0.1;
/// Prompt variants generated per class.
pub const PROMPT_VARIANTS: usize = 6;

#[derive(Clone, Debug, PartialEq)]
pub struct SynthParams {
    pub seed: u64,
    pub classes: usize,
    pub per_class: usize,
    pub dim: usize,
    pub min_frames: usize,
    pub max_frames: usize,
    pub separation: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            seed: 0,
            classes: 3,
            per_class: 60,
            dim: 64,
            min_frames: 16,
            max_frames: 48,
            separation: 4.0,
        }
    }
}

fn gaussian(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

fn normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    for x in v {
        *x /= n;
    }
}

/// Random orthogonal matrix by Gram-Schmidt on Gaussian rows.
fn random_orthogonal(rng: &mut impl Rng, dim: usize) -> Vec<Vec<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(dim);
    while rows.len() < dim {
        let mut v = gaussian(rng, dim);
        for r in &rows {
            let d: f64 = v.iter().zip(r).map(|(a, b)| a * b).sum();
            for (x, y) in v.iter_mut().zip(r) {
                *x -= d * y;
            }
        }
        if v.iter().map(|x| x * x).sum::<f64>() > 1e-12 {
            normalize(&mut v);
            rows.push(v);
        }
    }
    rows
}

pub fn synth_generate(p: &SynthParams) -> Result<(Dataset, PromptBank)> {
    if p.separation.is_nan() || p.separation < 0.0 {
        return Err(Error::Validation(format!("separation must be >= 0, got {}", p.separation)));
    }
    if p.classes == 0 || p.dim == 0 || p.min_frames == 0 || p.min_frames > p.max_frames {
        return Err(Error::Validation(format!("invalid synthetic parameters {p:?}")));
    }
    let mut rng = rng_stream(p.seed, 0x5E7);
    let mix = random_orthogonal(&mut rng, p.dim);
    let mut directions = Vec::with_capacity(p.classes);
    let mut moving = Vec::with_capacity(p.classes);
    let mut freqs = Vec::with_capacity(p.classes);
    for c in 0..p.classes {
        let mut u = gaussian(&mut rng, p.dim);
        normalize(&mut u);
        let mu: Vec<f64> = mix.iter().map(|row| row.iter().zip(&u).map(|(a, b)| a * b).sum()).collect();
        directions.push(u);
        moving.push(mu);
        freqs.push(1.0 + c as f64 + rng.random_range(0.0..0.5));
    }

    let mut records = Vec::with_capacity(p.classes * p.per_class);
    for c in 0..p.classes {
        for n in 0..p.per_class {
            let frames = rng.random_range(p.min_frames..=p.max_frames);
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            let mut values = Vec::with_capacity(frames * p.dim);
            for t in 0..frames {
                let osc = (std::f64::consts::TAU * freqs[c] * t as f64 / frames as f64 + phase).cos();
                for i in 0..p.dim {
                    let signal = STATIC_WEIGHT * directions[c][i] + DYNAMIC_WEIGHT * osc * moving[c][i];
                    let noise: f64 = StandardNormal.sample(&mut rng);
                    values.push((p.separation * signal + noise) as f32);
                }
            }
            records.push(VideoRecord::new(format!("synth-{c}-{n:04}"), c, p.dim, values)?);
        }
    }

    let mut classes = Vec::with_capacity(p.classes);
    for (c, u) in directions.iter().enumerate() {
        let prompt = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> {
            u.iter()
                .map(|&x| p.separation * x + PROMPT_NOISE * Distribution::<f64>::sample(&StandardNormal, rng))
                .collect()
        };
        let embedding = prompt(&mut rng);
        let variant_embeddings: Vec<Vec<f64>> = (0..PROMPT_VARIANTS).map(|_| prompt(&mut rng)).collect();
        classes.push(PromptEntry {
            label: c,
            text: format!("synthetic class {c}"),
            variants: Some((0..PROMPT_VARIANTS).map(|k| format!("synthetic class {c}, variant {k}")).collect()),
            embedding,
            variant_embeddings: Some(variant_embeddings),
        });
    }
    let bank = PromptBank { dim: p.dim, classes }.validated()?;
    Ok((Dataset::new(p.dim, p.classes, records)?, bank))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_for_seed() {
        let p = SynthParams {
            per_class: 5,
            dim: 8,
            ..SynthParams::default()
        };
        let (a, ba) = synth_generate(&p).unwrap();
        let (b, bb) = synth_generate(&p).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
        assert_eq!(ba, bb);
        let (c, _) = synth_generate(&SynthParams { seed: 1, ..p }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn shape_and_counts() {
        let p = SynthParams {
            per_class: 4,
            dim: 6,
            min_frames: 10,
            max_frames: 12,
            ..SynthParams::default()
        };
        let (ds, bank) = synth_generate(&p).unwrap();
        assert_eq!(ds.len(), 12);
        assert_eq!(ds.class_counts(), vec![4, 4, 4]);
        assert!(ds.records().iter().all(|r| (10..=12).contains(&r.num_frames())));
        bank.check_compatible(6, 3).unwrap();
    }

    #[test]
    fn negative_separation_rejected() {
        let p = SynthParams {
            separation: -1.0,
            ..SynthParams::default()
        };
        assert!(synth_generate(&p).is_err());
    }

    #[test]
    fn orthogonal_map_is_orthonormal() {
        let mut rng = rng_stream(1, 1);
        let m = random_orthogonal(&mut rng, 5);
        for i in 0..5 {
            for j in 0..5 {
                let d: f64 = m[i].iter().zip(&m[j]).map(|(a, b)| a * b).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((d - want).abs() < 1e-12);
            }
        }
    }
}
