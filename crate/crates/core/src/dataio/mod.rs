//! Embedding datasets, synthetic data, fold planning, clip sampling,
//! prompt banks and EF binning.

mod clip;
mod dataset;
mod ef;
mod folds;
mod prompts;
mod synth;

pub use clip::{clip_start, sample_clip, ClipMode};
pub use dataset::{Dataset, VideoRecord, DATASET_MAGIC, DATASET_VERSION};
pub(crate) use dataset::Reader;
pub use ef::{apply_ef_labels, bin_ef, read_ef_table, EfRow};
pub use folds::{stratified_folds, stratified_folds_by_label, FoldPlan};
pub use prompts::{load_prompt_bank, PromptBank, PromptEntry};
pub use synth::{synth_generate, SynthParams};
