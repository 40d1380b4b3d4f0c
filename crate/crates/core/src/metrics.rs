//! Discrimination and calibration metrics over predicted class distributions.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsConfig {
    /// Uniform-width bins for ECE and the reliability table.
    pub bins: usize,
    /// Equal-count groups for adaptive ECE.
    pub aece_bins: usize,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self { bins: 15, aece_bins: 15 }
    }
}

impl MetricsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bins == 0 || self.aece_bins == 0 {
            return Err(Error::Config("metrics.bins and metrics.aece_bins must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub probs: Vec<f64>,
    pub label: usize,
}

impl Prediction {
    /// Argmax of `probs`; the lowest index wins ties.
    pub fn predicted(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }

    pub fn confidence(&self) -> f64 {
        self.probs[self.predicted()]
    }

    pub fn correct(&self) -> bool {
        self.predicted() == self.label
    }
}

/// Predictions for one evaluation split, all over the same `C` classes.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    num_classes: usize,
    items: Vec<Prediction>,
}

impl PredictionSet {
    pub fn new(num_classes: usize) -> Self {
        Self { num_classes, items: Vec::new() }
    }

    /// Adds one prediction; `probs` must have `C` entries summing to one within 1e-9.
    pub fn push(&mut self, probs: Vec<f64>, label: usize) -> Result<()> {
        if probs.len() != self.num_classes || label >= self.num_classes {
            return Err(Error::Validation(format!(
                "prediction with {} probabilities and label {label} for {} classes",
                probs.len(),
                self.num_classes
            )));
        }
        let total: f64 = probs.iter().sum();
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::Validation(format!("probabilities do not form a distribution: {probs:?}")));
        }
        self.items.push(Prediction { probs, label });
        Ok(())
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[Prediction] {
        &self.items
    }
}

/// How classes with no true samples enter the macro F1 average.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AbsentClass {
    /// Count them with F1 = 0.
    Zero,
    /// Leave them out of the average.
    Skip,
}

pub fn macro_f1(preds: &PredictionSet) -> f64 {
    macro_f1_with(preds, AbsentClass::Zero)
}

pub fn macro_f1_with(preds: &PredictionSet, absent: AbsentClass) -> f64 {
    let c = preds.num_classes;
    let (mut tp, mut fp, mut fneg) = (vec![0usize; c], vec![0usize; c], vec![0usize; c]);
    for p in &preds.items {
        let y = p.predicted();
        if y == p.label {
            tp[y] += 1;
        } else {
            fp[y] += 1;
            fneg[p.label] += 1;
        }
    }
    let mut sum = 0.0;
    let mut counted = 0;
    for k in 0..c {
        if absent == AbsentClass::Skip && tp[k] + fneg[k] == 0 {
            continue;
        }
        counted += 1;
        let denom = 2 * tp[k] + fp[k] + fneg[k];
        if denom > 0 {
            sum += 2.0 * tp[k] as f64 / denom as f64;
        }
    }
    if counted == 0 {
        0.0
    } else {
        sum / counted as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AucReport {
    pub auc: f64,
    /// Classes without both positives and negatives.
    pub skipped: Vec<usize>,
}

/// One-vs-rest AUC for each class from average ranks, averaged over classes
/// that have at least one positive and one negative.
pub fn auc_macro_ovr(preds: &PredictionSet) -> Result<AucReport> {
    let mut aucs = Vec::new();
    let mut skipped = Vec::new();
    for k in 0..preds.num_classes {
        let scores: Vec<f64> = preds.items.iter().map(|p| p.probs[k]).collect();
        let positive: Vec<bool> = preds.items.iter().map(|p| p.label == k).collect();
        match binary_auc(&scores, &positive) {
            Some(a) => aucs.push(a),
            None => skipped.push(k),
        }
    }
    if aucs.is_empty() {
        return Err(Error::Validation("AUC undefined: no class has both positives and negatives".into()));
    }
    Ok(AucReport {
        auc: aucs.iter().sum::<f64>() / aucs.len() as f64,
        skipped,
    })
}

/// Mann-Whitney AUC with tied scores sharing their average rank.
pub fn binary_auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let n_pos = positive.iter().filter(|p| **p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their mean
        let avg = (i + j + 2) as f64 / 2.0;
        rank_sum += avg * order[i..=j].iter().filter(|&&o| positive[o]).count() as f64;
        i = j + 1;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos * n_neg) as f64)
}

/// One row of a reliability table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinStat {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    /// Zero for an empty bin, as is `confidence`.
    pub accuracy: f64,
    pub confidence: f64,
}

impl BinStat {
    /// Signed `accuracy - confidence`; negative means overconfident.
    pub fn gap(&self) -> f64 {
        self.accuracy - self.confidence
    }
}

/// Uniform bin for `conf` in `[0, 1]`; an interior boundary belongs to the upper bin
/// and 1.0 to the last.
pub fn uniform_bin(conf: f64, bins: usize) -> usize {
    let edge = |k: usize| k as f64 / bins as f64;
    let mut idx = ((conf * bins as f64).floor().max(0.0) as usize).min(bins - 1);
    while idx + 1 < bins && conf >= edge(idx + 1) {
        idx += 1;
    }
    while idx > 0 && conf < edge(idx) {
        idx -= 1;
    }
    idx
}

fn weighted_gap(table: &[BinStat], n: usize) -> f64 {
    table
        .iter()
        .map(|b| b.count as f64 / n as f64 * (b.accuracy - b.confidence).abs())
        .sum()
}

fn bin_of(lower: f64, upper: f64, members: &[&Prediction]) -> BinStat {
    let count = members.len();
    let (acc, conf) = if count == 0 {
        (0.0, 0.0)
    } else {
        let hits = members.iter().filter(|p| p.correct()).count();
        let conf: f64 = members.iter().map(|p| p.confidence()).sum();
        (hits as f64 / count as f64, conf / count as f64)
    };
    BinStat {
        lower,
        upper,
        count,
        accuracy: acc,
        confidence: conf,
    }
}

/// Expected calibration error over `bins` uniform-width bins and the bin table.
/// An empty set gives zero and an empty table.
pub fn ece(preds: &PredictionSet, bins: usize) -> (f64, Vec<BinStat>) {
    assert!(bins >= 1, "at least one bin");
    if preds.is_empty() {
        return (0.0, Vec::new());
    }
    let mut members: Vec<Vec<&Prediction>> = vec![Vec::new(); bins];
    for p in &preds.items {
        members[uniform_bin(p.confidence(), bins)].push(p);
    }
    let table: Vec<BinStat> = members
        .iter()
        .enumerate()
        .map(|(k, m)| bin_of(k as f64 / bins as f64, (k + 1) as f64 / bins as f64, m))
        .collect();
    (weighted_gap(&table, preds.len()), table)
}

/// Sizes of `groups` contiguous equal-count groups over `n` items, larger
/// groups first. Fewer than `groups` entries when `n < groups`.
pub fn group_sizes(n: usize, groups: usize) -> Vec<usize> {
    let used = groups.min(n);
    if used == 0 {
        return Vec::new();
    }
    let (q, r) = (n / used, n % used);
    (0..used).map(|g| if g < r { q + 1 } else { q }).collect()
}

/// Adaptive ECE over equal-count groups of the confidence-sorted samples.
/// Each group's bounds are its smallest and largest confidence. The sort is
/// stable, so remaining ties keep input order.
pub fn aece(preds: &PredictionSet, bins: usize) -> (f64, Vec<BinStat>) {
    assert!(bins >= 1, "at least one bin");
    if preds.is_empty() {
        return (0.0, Vec::new());
    }
    let mut sorted: Vec<&Prediction> = preds.items.iter().collect();
    // incorrect before correct among equal confidences, so group contents
    // depend only on the multiset of predictions
    sorted.sort_by(|a, b| a.confidence().total_cmp(&b.confidence()).then(a.correct().cmp(&b.correct())));
    let mut table = Vec::new();
    let mut start = 0;
    for size in group_sizes(sorted.len(), bins) {
        let group = &sorted[start..start + size];
        table.push(bin_of(group[0].confidence(), group[size - 1].confidence(), group));
        start += size;
    }
    (weighted_gap(&table, preds.len()), table)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub samples: usize,
    pub macro_f1: f64,
    /// Absent when no class has both positives and negatives.
    pub auc: Option<f64>,
    pub auc_skipped_classes: Vec<usize>,
    pub ece: f64,
    pub aece: f64,
    pub bins: Vec<BinStat>,
    pub adaptive_bins: Vec<BinStat>,
}

impl CalibrationReport {
    pub fn compute(preds: &PredictionSet, cfg: &MetricsConfig) -> Self {
        let (ece_value, bins) = ece(preds, cfg.bins);
        let (aece_value, adaptive_bins) = aece(preds, cfg.aece_bins);
        let (auc, skipped) = match auc_macro_ovr(preds) {
            Ok(r) => (Some(r.auc), r.skipped),
            Err(_) => (None, (0..preds.num_classes()).collect()),
        };
        Self {
            samples: preds.len(),
            macro_f1: if preds.is_empty() { 0.0 } else { macro_f1(preds) },
            auc,
            auc_skipped_classes: skipped,
            ece: ece_value,
            aece: aece_value,
            bins,
            adaptive_bins,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ReliabilityRow {
    bin_lower: f64,
    bin_upper: f64,
    count: usize,
    accuracy: f64,
    confidence: f64,
    gap: f64,
}

pub const RELIABILITY_HEADER: [&str; 6] = ["bin_lower", "bin_upper", "count", "accuracy", "confidence", "gap"];

/// Writes a reliability table as CSV, one row per bin.
pub fn write_reliability_csv(path: &Path, table: &[BinStat]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    let csv_err = |e: csv::Error| Error::Format(format!("{}: {e}", path.display()));
    w.write_record(RELIABILITY_HEADER).map_err(csv_err)?;
    for b in table {
        w.serialize(ReliabilityRow {
            bin_lower: b.lower,
            bin_upper: b.upper,
            count: b.count,
            accuracy: b.accuracy,
            confidence: b.confidence,
            gap: b.gap(),
        })
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_reliability_csv(path: &Path) -> Result<Vec<BinStat>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let header = r.headers().map_err(|e| Error::Format(e.to_string()))?.clone();
    if header.iter().ne(RELIABILITY_HEADER) {
        return Err(Error::Format(format!("{}: unexpected header {header:?}", path.display())));
    }
    r.deserialize::<ReliabilityRow>()
        .map(|row| {
            let row = row.map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
            Ok(BinStat {
                lower: row.bin_lower,
                upper: row.bin_upper,
                count: row.count,
                accuracy: row.accuracy,
                confidence: row.confidence,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(rows: &[(Vec<f64>, usize)]) -> PredictionSet {
        let mut s = PredictionSet::new(rows[0].0.len());
        for (p, y) in rows {
            s.push(p.clone(), *y).unwrap();
        }
        s
    }

    fn hard(labels: &[usize], preds: &[usize], c: usize) -> PredictionSet {
        let mut s = PredictionSet::new(c);
        for (&y, &p) in labels.iter().zip(preds) {
            let mut probs = vec![0.0; c];
            probs[p] = 1.0;
            s.push(probs, y).unwrap();
        }
        s
    }

    /// Two-class set whose confidence on the predicted class is `conf`.
    fn with_conf(confs: &[f64], correct: &[bool]) -> PredictionSet {
        let mut s = PredictionSet::new(2);
        for (&c, &ok) in confs.iter().zip(correct) {
            s.push(vec![c, 1.0 - c], if ok { 0 } else { 1 }).unwrap();
        }
        s
    }

    #[test]
    fn push_validates() {
        let mut s = PredictionSet::new(2);
        assert!(s.push(vec![0.5, 0.6], 0).is_err());
        assert!(s.push(vec![0.5, 0.5], 2).is_err());
        assert!(s.push(vec![1.0], 0).is_err());
        assert!(s.push(vec![0.5, 0.5], 1).is_ok());
    }

    #[test]
    fn macro_f1_examples() {
        assert_eq!(macro_f1(&hard(&[0, 1, 2], &[0, 1, 2], 3)), 1.0);
        let f = macro_f1(&hard(&[0, 0, 1, 1], &[0, 1, 1, 1], 2));
        assert!((f - (2.0 / 3.0 + 0.8) / 2.0).abs() < 1e-12);
        assert!((f - 0.7333).abs() < 1e-4);
        assert_eq!(macro_f1(&hard(&[0, 0], &[1, 1], 2)), 0.0);
    }

    #[test]
    fn absent_class_policy() {
        let s = hard(&[0, 1], &[0, 1], 3);
        assert!((macro_f1(&s) - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(macro_f1_with(&s, AbsentClass::Skip), 1.0);
    }

    #[test]
    fn auc_examples() {
        let a = binary_auc(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]).unwrap();
        assert!((a - 0.75).abs() < 1e-12);
        assert_eq!(binary_auc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]), Some(1.0));
        assert_eq!(binary_auc(&[0.3; 4], &[false, true, false, true]), Some(0.5));
        assert_eq!(binary_auc(&[0.3, 0.4], &[true, true]), None);
    }

    #[test]
    fn auc_skips_classes_without_negatives_or_positives() {
        let s = set(&[(vec![0.7, 0.2, 0.1], 0), (vec![0.3, 0.6, 0.1], 1)]);
        let r = auc_macro_ovr(&s).unwrap();
        assert_eq!(r.skipped, vec![2]);
        assert_eq!(r.auc, 1.0);
        let one = set(&[(vec![0.7, 0.3], 0)]);
        assert!(auc_macro_ovr(&one).is_err());
    }

    #[test]
    fn ece_examples() {
        let s = with_conf(&[0.9, 0.9, 0.6, 0.6], &[true, false, true, true]);
        let (e, table) = ece(&s, 2);
        assert!(e.abs() < 1e-12);
        assert_eq!(table[0].count, 0);
        assert_eq!(table[1].count, 4);
        assert!((table[1].accuracy - 0.75).abs() < 1e-12);
        assert!((table[1].confidence - 0.75).abs() < 1e-12);
        let s = with_conf(&[1.0, 1.0], &[true, false]);
        assert!((ece(&s, 15).0 - 0.5).abs() < 1e-12);
        // singleton bins where each sample's accuracy equals its confidence
        let s = set(&[(vec![1.0, 0.0], 0)]);
        assert_eq!(ece(&s, 15).0, 0.0);
    }

    #[test]
    fn boundaries_go_up_and_one_goes_last() {
        assert_eq!(uniform_bin(0.5, 2), 1);
        assert_eq!(uniform_bin(1.0, 2), 1);
        assert_eq!(uniform_bin(0.0, 15), 0);
        assert_eq!(uniform_bin(1.0, 15), 14);
        for k in 1..15 {
            assert_eq!(uniform_bin(k as f64 / 15.0, 15), k);
        }
        assert_eq!(uniform_bin(0.2f64.next_down(), 5), 0);
    }

    #[test]
    fn aece_examples() {
        let s = with_conf(&[0.6, 0.6, 0.9, 0.9], &[true, false, true, true]);
        let (e, table) = aece(&s, 2);
        assert!((e - 0.1).abs() < 1e-12);
        assert_eq!(table.iter().map(|b| b.count).collect::<Vec<_>>(), vec![2, 2]);
        assert!((table[0].accuracy - 0.5).abs() < 1e-12);
        let s = with_conf(&[0.6, 0.8], &[true, false]);
        let (e, table) = aece(&s, 15);
        assert_eq!(table.len(), 2);
        assert!((e - (0.4 + 0.8) / 2.0).abs() < 1e-12);
        assert_eq!(group_sizes(17, 5), vec![4, 4, 3, 3, 3]);
    }

    #[test]
    fn reliability_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rel.csv");
        let s = set(&[
            (vec![0.9, 0.1], 0),
            (vec![0.3, 0.7], 0),
            (vec![0.55, 0.45], 1),
            (vec![0.123456789, 0.876543211], 1),
        ]);
        let (_, table) = ece(&s, 15);
        write_reliability_csv(&path, &table).unwrap();
        assert_eq!(read_reliability_csv(&path).unwrap(), table);
        assert_eq!(table.len(), 15);
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 16);
        assert!(text.starts_with("bin_lower,bin_upper,count,accuracy,confidence,gap\n"));
    }

    #[test]
    fn empty_set_writes_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rel.csv");
        let (e, table) = ece(&PredictionSet::new(3), 15);
        assert_eq!(e, 0.0);
        write_reliability_csv(&path, &table).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 1);
        assert!(read_reliability_csv(&path).unwrap().is_empty());
    }

    #[test]
    fn report_counts_sum() {
        let s = set(&[(vec![0.9, 0.1], 0), (vec![0.3, 0.7], 0), (vec![0.55, 0.45], 1)]);
        let r = CalibrationReport::compute(&s, &MetricsConfig::default());
        assert_eq!(r.bins.iter().map(|b| b.count).sum::<usize>(), 3);
        assert_eq!(r.adaptive_bins.iter().map(|b| b.count).sum::<usize>(), 3);
        assert!((0.0..=1.0).contains(&r.ece) && (0.0..=1.0).contains(&r.aece));
        let json = serde_json::to_string(&r).unwrap();
        assert_eq!(serde_json::from_str::<CalibrationReport>(&json).unwrap(), r);
    }

    // ---- direct-definition oracles

    fn brute_f1(p: &PredictionSet) -> f64 {
        let c = p.num_classes();
        let mut total = 0.0;
        for k in 0..c {
            let tp = p.items().iter().filter(|x| x.predicted() == k && x.label == k).count() as f64;
            let pp = p.items().iter().filter(|x| x.predicted() == k).count() as f64;
            let ap = p.items().iter().filter(|x| x.label == k).count() as f64;
            let prec = if pp > 0.0 { tp / pp } else { 0.0 };
            let rec = if ap > 0.0 { tp / ap } else { 0.0 };
            if prec + rec > 0.0 {
                total += 2.0 * prec * rec / (prec + rec);
            }
        }
        total / c as f64
    }

    fn brute_auc(p: &PredictionSet) -> Option<f64> {
        let mut aucs = Vec::new();
        for k in 0..p.num_classes() {
            let (mut wins, mut pairs) = (0.0, 0.0);
            for a in p.items().iter().filter(|x| x.label == k) {
                for b in p.items().iter().filter(|x| x.label != k) {
                    pairs += 1.0;
                    if a.probs[k] > b.probs[k] {
                        wins += 1.0;
                    } else if a.probs[k] == b.probs[k] {
                        wins += 0.5;
                    }
                }
            }
            if pairs > 0.0 {
                aucs.push(wins / pairs);
            }
        }
        (!aucs.is_empty()).then(|| aucs.iter().sum::<f64>() / aucs.len() as f64)
    }

    fn prediction_set() -> impl Strategy<Value = PredictionSet> {
        (2usize..=5).prop_flat_map(|c| {
            prop::collection::vec((prop::collection::vec(0u8..8, c), 0..c), 1..=100).prop_map(move |rows| {
                let mut s = PredictionSet::new(c);
                for (w, y) in rows {
                    // coarse weights force ties in both confidence and scores
                    let w: Vec<f64> = w.iter().map(|&v| v as f64 + 1.0).collect();
                    let total: f64 = w.iter().sum();
                    s.push(w.iter().map(|v| v / total).collect(), y).unwrap();
                }
                s
            })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn f1_and_auc_match_definitions(s in prediction_set()) {
            prop_assert!((macro_f1(&s) - brute_f1(&s)).abs() < 1e-12);
            match (auc_macro_ovr(&s), brute_auc(&s)) {
                (Ok(r), Some(b)) => prop_assert!((r.auc - b).abs() < 1e-12),
                (Err(_), None) => {}
                (a, b) => prop_assert!(false, "{a:?} vs {b:?}"),
            }
        }

        #[test]
        fn calibration_is_permutation_invariant(s in prediction_set(), seed in any::<u64>(), bins in 1usize..20) {
            use rand::seq::SliceRandom;
            let mut items = s.items().to_vec();
            items.shuffle(&mut crate::params::rng_stream(seed, 0));
            let mut t = PredictionSet::new(s.num_classes());
            for p in items {
                t.push(p.probs, p.label).unwrap();
            }
            prop_assert!((ece(&s, bins).0 - ece(&t, bins).0).abs() < 1e-12);
            prop_assert!((aece(&s, bins).0 - aece(&t, bins).0).abs() < 1e-12);
        }

        #[test]
        fn group_sizes_differ_by_at_most_one(n in 0usize..500, m in 1usize..40) {
            let sizes = group_sizes(n, m);
            prop_assert_eq!(sizes.iter().sum::<usize>(), n);
            prop_assert_eq!(sizes.len(), n.min(m));
            if let (Some(max), Some(min)) = (sizes.iter().max(), sizes.iter().min()) {
                prop_assert!(max - min <= 1);
            }
            prop_assert!(sizes.windows(2).all(|w| w[0] >= w[1]));
        }

        #[test]
        fn calibrated_bins_give_zero_ece(n_correct in 0usize..10, n_wrong in 0usize..10) {
            prop_assume!(n_correct + n_wrong > 0);
            let acc = n_correct as f64 / (n_correct + n_wrong) as f64;
            prop_assume!(acc >= 0.5);
            let mut confs = vec![acc; n_correct + n_wrong];
            confs.iter_mut().for_each(|c| *c = acc);
            let correct: Vec<bool> = (0..confs.len()).map(|i| i < n_correct).collect();
            let s = with_conf(&confs, &correct);
            prop_assert!(ece(&s, 15).0.abs() < 1e-12);
        }

        #[test]
        fn table_counts_sum_to_n(s in prediction_set(), bins in 1usize..30) {
            let (e, t) = ece(&s, bins);
            prop_assert_eq!(t.len(), bins);
            prop_assert_eq!(t.iter().map(|b| b.count).sum::<usize>(), s.len());
            prop_assert!((0.0..=1.0).contains(&e));
            let (a, t) = aece(&s, bins);
            prop_assert_eq!(t.iter().map(|b| b.count).sum::<usize>(), s.len());
            prop_assert!((0.0..=1.0).contains(&a));
        }
    }
}
