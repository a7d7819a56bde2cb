//! Side-by-side training of several schemes, and the training-set-size sweep.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::model::ToyModel;
use super::synthetic::SyntheticDataset;
use super::train::{evaluate_model, train, Scheme, TrainConfig};
use super::TrainError;
use crate::metrics::SemanticAccuracyReport;
use crate::taxonomy::Taxonomy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub scheme: Scheme,
    pub report: SemanticAccuracyReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonTable {
    /// CSV with header `scheme,weighted_total,h0,...,h{K-1}`.
    pub fn to_csv(&self) -> String {
        let k = self.rows.first().map_or(0, |r| r.report.per_hierarchy_top1.len());
        let mut out = String::from("scheme,weighted_total");
        for h in 0..k {
            write!(out, ",h{h}").unwrap();
        }
        out.push('\n');
        for row in &self.rows {
            write!(out, "{},{}", row.scheme, row.report.weighted_total).unwrap();
            for h in &row.report.per_hierarchy_top1 {
                write!(out, ",{}", h.accuracy).unwrap();
            }
            out.push('\n');
        }
        out
    }
}

/// Trains every scheme from the same initial model on the same data and
/// reports held-out semantic accuracy.
pub fn compare_schemes(
    init: &ToyModel,
    data: &SyntheticDataset,
    t: &Taxonomy,
    base: &TrainConfig,
    schemes: &[Scheme],
    teacher: Option<&ToyModel>,
) -> Result<ComparisonTable, TrainError> {
    if schemes.is_empty() {
        return Err(TrainError::InvalidConfig("no schemes to compare".into()));
    }
    let val = data.val_indices();
    let mut rows = Vec::with_capacity(schemes.len());
    for &scheme in schemes {
        let cfg = TrainConfig { scheme, ..base.clone() };
        let outcome = train(init, data, t, &cfg, teacher)?;
        rows.push(ComparisonRow {
            scheme,
            report: evaluate_model(&outcome.model, data, &val, t)?,
        });
    }
    Ok(ComparisonTable { rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub train_samples: usize,
    pub report: SemanticAccuracyReport,
}

/// Trains on nested-size random subsets of the training split (same held-out
/// set throughout) and reports held-out accuracy for each size.
pub fn sample_count_sweep(
    init: &ToyModel,
    data: &SyntheticDataset,
    t: &Taxonomy,
    cfg: &TrainConfig,
    counts: &[usize],
) -> Result<Vec<SweepPoint>, TrainError> {
    let val = data.val_indices();
    let mut points = Vec::with_capacity(counts.len());
    for &n in counts {
        let subset = data.with_train_limit(n, cfg.seed)?;
        let outcome = train(init, &subset, t, cfg, None)?;
        points.push(SweepPoint {
            train_samples: n,
            report: evaluate_model(&outcome.model, &subset, &subset.val_indices(), t)?,
        });
    }
    debug_assert!(points
        .iter()
        .all(|p| p.report.per_hierarchy_top1[0].support == val.len()));
    Ok(points)
}
