//! Upstream evaluation metrics: top-k accuracy, per-hierarchy semantic
//! accuracy, and all-points average precision (micro and macro).
//!
//! Ties are broken toward the lowest index everywhere, so values are
//! reproducible bit for bit.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::taxonomy::{SemanticLabel, Taxonomy};

#[derive(Debug, thiserror::Error)]
pub enum MetricError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("batch is empty")]
    EmptyBatch,
    #[error("k must be at least 1")]
    InvalidK,
    #[error("target {target} out of range for {classes} classes")]
    InvalidTarget { target: usize, classes: usize },
    #[error("no positive items; average precision is undefined")]
    NoPositives,
    #[error("label inconsistent with taxonomy: {0}")]
    InconsistentLabel(String),
}

/// Logit rows paired with one label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionBatch<L> {
    logits: Vec<Vec<f64>>,
    labels: Vec<L>,
}

impl<L> PredictionBatch<L> {
    /// Requires equal lengths and equal row widths.
    pub fn new(logits: Vec<Vec<f64>>, labels: Vec<L>) -> Result<Self, MetricError> {
        if logits.len() != labels.len() {
            return Err(MetricError::DimensionMismatch {
                expected: logits.len(),
                actual: labels.len(),
            });
        }
        if let Some(first) = logits.first() {
            if let Some(bad) = logits.iter().find(|row| row.len() != first.len()) {
                return Err(MetricError::DimensionMismatch {
                    expected: first.len(),
                    actual: bad.len(),
                });
            }
        }
        Ok(Self { logits, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn logits(&self) -> &[Vec<f64>] {
        &self.logits
    }

    pub fn labels(&self) -> &[L] {
        &self.labels
    }

    fn width(&self) -> usize {
        self.logits.first().map_or(0, Vec::len)
    }
}

/// Orders `(score, index)` descending by score, ascending by index on ties.
fn rank_order(a: (f64, usize), b: (f64, usize)) -> Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
}

/// Index of the largest value, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Fraction of rows whose target is among the `k` highest logits.
pub fn top_k_accuracy(batch: &PredictionBatch<usize>, k: usize) -> Result<f64, MetricError> {
    if k == 0 {
        return Err(MetricError::InvalidK);
    }
    if batch.is_empty() {
        return Err(MetricError::EmptyBatch);
    }
    let classes = batch.width();
    let mut hits = 0usize;
    for (row, &target) in batch.logits.iter().zip(&batch.labels) {
        if target >= classes {
            return Err(MetricError::InvalidTarget { target, classes });
        }
        let key = (row[target], target);
        let ahead = row
            .iter()
            .enumerate()
            .filter(|&(j, &v)| rank_order((v, j), key) == Ordering::Less)
            .count();
        if ahead < k {
            hits += 1;
        }
    }
    Ok(hits as f64 / batch.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HierarchyAccuracy {
    pub accuracy: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticAccuracyReport {
    pub per_hierarchy_top1: Vec<HierarchyAccuracy>,
    pub weighted_total: f64,
}

impl SemanticAccuracyReport {
    pub fn accuracies(&self) -> Vec<f64> {
        self.per_hierarchy_top1.iter().map(|h| h.accuracy).collect()
    }
}

/// Per-hierarchy top-1 accuracy. Hierarchy `k` only counts samples whose label
/// is active there. The total weights each hierarchy by its class count,
/// over hierarchies with non-zero support.
pub fn semantic_accuracy(
    batch: &PredictionBatch<SemanticLabel>,
    t: &Taxonomy,
) -> Result<SemanticAccuracyReport, MetricError> {
    if !batch.is_empty() && batch.width() != t.num_classes() {
        return Err(MetricError::DimensionMismatch {
            expected: t.num_classes(),
            actual: batch.width(),
        });
    }
    let k_total = t.num_hierarchies();
    let mut correct = vec![0usize; k_total];
    let mut support = vec![0usize; k_total];
    for (row, label) in batch.logits.iter().zip(&batch.labels) {
        t.check_label(label)
            .map_err(|e| MetricError::InconsistentLabel(e.to_string()))?;
        for k in 0..=label.max_hierarchy() {
            support[k] += 1;
            if Some(argmax(&row[t.partition(k)])) == label.target(k) {
                correct[k] += 1;
            }
        }
    }
    let sizes = t.stats();
    let den: f64 = (0..k_total).filter(|&k| support[k] > 0).map(|k| sizes[k] as f64).sum();
    let mut weighted_total = 0.0;
    let per_hierarchy_top1 = (0..k_total)
        .map(|k| {
            let accuracy = if support[k] > 0 {
                correct[k] as f64 / support[k] as f64
            } else {
                0.0
            };
            if support[k] > 0 {
                weighted_total += sizes[k] as f64 / den * accuracy;
            }
            HierarchyAccuracy {
                accuracy,
                support: support[k],
            }
        })
        .collect();
    Ok(SemanticAccuracyReport {
        per_hierarchy_top1,
        weighted_total,
    })
}

/// All-points average precision: mean over positives of the precision at
/// each positive's rank.
pub fn average_precision(scores: &[f64], relevance: &[bool]) -> Result<f64, MetricError> {
    if scores.len() != relevance.len() {
        return Err(MetricError::DimensionMismatch {
            expected: scores.len(),
            actual: relevance.len(),
        });
    }
    let positives = relevance.iter().filter(|&&r| r).count();
    if positives == 0 {
        return Err(MetricError::NoPositives);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| rank_order((scores[a], a), (scores[b], b)));
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if relevance[i] {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(sum / positives as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapReport {
    pub micro_map: f64,
    pub macro_map: f64,
}

/// Micro mAP over the flattened `(sample, class)` pairs and macro mAP over
/// classes that have at least one positive.
pub fn map_scores(batch: &PredictionBatch<Vec<bool>>) -> Result<MapReport, MetricError> {
    if batch.is_empty() {
        return Err(MetricError::EmptyBatch);
    }
    let classes = batch.width();
    if let Some(bad) = batch.labels.iter().find(|l| l.len() != classes) {
        return Err(MetricError::DimensionMismatch {
            expected: classes,
            actual: bad.len(),
        });
    }
    let flat_scores: Vec<f64> = batch.logits.iter().flatten().copied().collect();
    let flat_rel: Vec<bool> = batch.labels.iter().flatten().copied().collect();
    let micro_map = average_precision(&flat_scores, &flat_rel)?;

    let mut per_class = Vec::new();
    for c in 0..classes {
        let scores: Vec<f64> = batch.logits.iter().map(|row| row[c]).collect();
        let rel: Vec<bool> = batch.labels.iter().map(|l| l[c]).collect();
        match average_precision(&scores, &rel) {
            Ok(ap) => per_class.push(ap),
            Err(MetricError::NoPositives) => {}
            Err(e) => return Err(e),
        }
    }
    let macro_map = per_class.iter().sum::<f64>() / per_class.len() as f64;
    Ok(MapReport { micro_map, macro_map })
}
