//! Temporal prompt alignment over precomputed per-frame embeddings.
//!
//! Frame embedding sequences are aggregated by a trainable temporal
//! extractor, scored against projected class-prompt embeddings by cosine
//! similarity, and trained with cross-entropy plus a margin-hinge
//! contrastive term. An optional conditional VAE head modulates the video
//! embedding with a latent style vector.

pub mod autodiff;
mod error;

pub use error::{Error, Result};
pub mod checkpoint;
pub mod config;
pub mod cvaesm;
pub mod dataio;
pub mod gradcheck_suite;
pub mod head;
pub mod metrics;
pub mod model;
pub mod params;
pub mod temporal;
pub mod trainer;
