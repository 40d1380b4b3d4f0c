use rand::seq::SliceRandom;

use super::Dataset;
use crate::{Error, Result};

/// Class-stratified partition of record indices into `k` folds.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FoldPlan {
    pub seed: u64,
    pub folds: Vec<Vec<usize>>,
}

impl FoldPlan {
    pub fn k(&self) -> usize {
        self.folds.len()
    }

    /// `(train, validation)` indices with fold `i` held out.
    pub fn split(&self, i: usize) -> (Vec<usize>, Vec<usize>) {
        let train = self
            .folds
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .flat_map(|(_, f)| f.iter().copied())
            .collect();
        (train, self.folds[i].clone())
    }
}

/// Shuffles each class with a seeded RNG and deals its records round-robin.
///
/// The dealing position carries over from one class to the next so total
/// fold sizes also stay within one of each other.
pub fn stratified_folds(ds: &Dataset, k: usize, seed: u64, allow_sparse: bool) -> Result<FoldPlan> {
    stratified_folds_by_label(&ds.labels(), ds.num_classes(), k, seed, allow_sparse)
}

pub fn stratified_folds_by_label(
    labels: &[usize],
    num_classes: usize,
    k: usize,
    seed: u64,
    allow_sparse: bool,
) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::Validation(format!("need at least 2 folds, got {k}")));
    }
    let mut by_class = vec![Vec::new(); num_classes];
    for (i, &y) in labels.iter().enumerate() {
        by_class[y].push(i);
    }
    if !allow_sparse {
        if let Some((c, members)) = by_class.iter().enumerate().find(|(_, m)| m.len() < k) {
            return Err(Error::Validation(format!(
                "class {c} has {} samples, fewer than {k} folds (set allow_sparse to permit)",
                members.len()
            )));
        }
    }
    let mut rng = crate::params::rng_stream(seed, 0xF01D);
    let mut folds = vec![Vec::new(); k];
    let mut cursor = 0;
    for members in &mut by_class {
        members.shuffle(&mut rng);
        for &i in members.iter() {
            folds[cursor % k].push(i);
            cursor += 1;
        }
    }
    Ok(FoldPlan { seed, folds })
}
