//! Class prompt banks stored as JSON.
//!
//! ```json
//! {"dim": 4, "classes": [{"label": 0, "text": "...", "variants": ["..."],
//!   "embedding": [...], "variant_embeddings": [[...]]}]}
//! ```

use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptEntry {
    pub label: usize,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variants: Option<Vec<String>>,
    pub embedding: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant_embeddings: Option<Vec<Vec<f64>>>,
}

/// One fixed prompt embedding per class plus optional variants for
/// per-epoch prompt randomisation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptBank {
    pub dim: usize,
    pub classes: Vec<PromptEntry>,
}

impl PromptBank {
    /// Checks the bank and sorts entries by label.
    pub fn validated(mut self) -> Result<Self> {
        self.classes.sort_by_key(|e| e.label);
        for (c, e) in self.classes.iter().enumerate() {
            if e.label != c {
                return Err(Error::Validation(format!(
                    "prompt bank labels must be 0..{} with one entry each; found label {} at position {c}",
                    self.classes.len(),
                    e.label
                )));
            }
            if e.embedding.is_empty() {
                return Err(Error::Validation(format!("class {c} has no prompt embedding")));
            }
            if e.embedding.len() != self.dim {
                return Err(Error::Validation(format!(
                    "class {c} embedding has {} values, bank dim is {}",
                    e.embedding.len(),
                    self.dim
                )));
            }
            match (&e.variants, &e.variant_embeddings) {
                (None, None) => {}
                (Some(texts), Some(embs)) => {
                    if texts.is_empty() || texts.len() != embs.len() {
                        return Err(Error::Validation(format!(
                            "class {c}: variant lists must be non-empty and equally long"
                        )));
                    }
                    if embs.iter().any(|v| v.len() != self.dim) {
                        return Err(Error::Validation(format!(
                            "class {c}: variant embedding width != bank dim {}",
                            self.dim
                        )));
                    }
                }
                _ => {
                    return Err(Error::Validation(format!(
                        "class {c}: variants and variant_embeddings must be given together"
                    )))
                }
            }
            let all_finite = e.embedding.iter().all(|v| v.is_finite())
                && e.variant_embeddings.iter().flatten().flatten().all(|v| v.is_finite());
            if !all_finite {
                return Err(Error::Validation(format!("class {c}: non-finite embedding value")));
            }
        }
        Ok(self)
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    /// Rejects a bank whose width or class count disagrees with a dataset.
    pub fn check_compatible(&self, dim: usize, num_classes: usize) -> Result<()> {
        if self.dim != dim {
            return Err(Error::Validation(format!(
                "prompt bank dim {} != dataset dim {dim}",
                self.dim
            )));
        }
        if self.classes.len() != num_classes {
            return Err(Error::Validation(format!(
                "prompt bank has {} classes, dataset has {num_classes}",
                self.classes.len()
            )));
        }
        Ok(())
    }

    /// `C x D` matrix of the fixed prompt embeddings.
    pub fn fixed(&self) -> Tensor {
        let rows: Vec<Vec<f64>> = self.classes.iter().map(|e| e.embedding.clone()).collect();
        Tensor::from_rows(&rows).expect("validated bank")
    }

    /// Prompt matrix for one epoch: the fixed entries, or one variant drawn
    /// per class when `randomize` is set. Classes without variants keep
    /// their fixed embedding.
    pub fn epoch_view(&self, randomize: bool, rng: &mut impl Rng) -> Tensor {
        if !randomize {
            return self.fixed();
        }
        let rows: Vec<Vec<f64>> = self
            .classes
            .iter()
            .map(|e| match &e.variant_embeddings {
                Some(v) => v[rng.random_range(0..v.len())].clone(),
                None => e.embedding.clone(),
            })
            .collect();
        Tensor::from_rows(&rows).expect("validated bank")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let bank: Self =
            serde_json::from_str(text).map_err(|e| Error::Format(format!("prompt bank: {e}")))?;
        bank.validated()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("prompt bank serialises")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

/// Loads a bank, checks it against the dataset shape, and returns it with
/// the prompt matrix for the current epoch.
pub fn load_prompt_bank(
    path: impl AsRef<Path>,
    dim: usize,
    num_classes: usize,
    randomize: bool,
    rng: &mut impl Rng,
) -> Result<(PromptBank, Tensor)> {
    let bank = PromptBank::load(path)?;
    bank.check_compatible(dim, num_classes)?;
    let view = bank.epoch_view(randomize, rng);
    Ok((bank, view))
}
