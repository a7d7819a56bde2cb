//! One softmax per hierarchy, gradient masking above the label's level, and
//! the per-hierarchy balancing weights.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::classification::smoothed_ce;
use super::{check_finite, check_smoothing, LossError, LossResult};
use crate::prep::{DatasetManifest, Split};
use crate::taxonomy::{SemanticLabel, Taxonomy};

/// How the occurrence statistic `O_k` behind `W_k = 1 / O_k` is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    /// Number of training samples whose label activates hierarchy `k`.
    #[default]
    Empirical,
    /// `Σ_{j ≥ k} N_j`: classes at or below hierarchy `k`.
    ClassMass,
    /// `Σ_{j < k} N_j`. Degenerate at `k = 0`, so it always fails; kept for comparison.
    AsPrinted,
    /// All weights 1.
    Uniform,
}

impl WeightMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Empirical => "empirical",
            Self::ClassMass => "class_mass",
            Self::AsPrinted => "as_printed",
            Self::Uniform => "uniform",
        }
    }
}

impl fmt::Display for WeightMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for WeightMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "empirical" => Ok(Self::Empirical),
            "class_mass" => Ok(Self::ClassMass),
            "as_printed" => Ok(Self::AsPrinted),
            "uniform" => Ok(Self::Uniform),
            other => Err(format!("unknown weight mode `{other}`")),
        }
    }
}

/// Aggregation weights `W_k` with the occurrence counts they came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchyWeights {
    pub mode: WeightMode,
    #[serde(rename = "O")]
    pub occurrences: Vec<u64>,
    #[serde(rename = "W")]
    pub weights: Vec<f64>,
}

impl HierarchyWeights {
    pub fn uniform(num_hierarchies: usize) -> Self {
        Self {
            mode: WeightMode::Uniform,
            occurrences: vec![1; num_hierarchies],
            weights: vec![1.0; num_hierarchies],
        }
    }

    fn from_occurrences(mode: WeightMode, occurrences: Vec<u64>) -> Result<Self, LossError> {
        if let Some(k) = occurrences.iter().position(|&o| o == 0) {
            return Err(LossError::DegenerateWeight { hierarchy: k });
        }
        let weights = occurrences.iter().map(|&o| 1.0 / o as f64).collect();
        Ok(Self {
            mode,
            occurrences,
            weights,
        })
    }

    /// Empirical weights from the label levels (`max_hierarchy`) of the training samples.
    pub fn from_label_levels(
        num_hierarchies: usize,
        levels: impl IntoIterator<Item = usize>,
    ) -> Result<Self, LossError> {
        let mut at_level = vec![0u64; num_hierarchies];
        for level in levels {
            if level >= num_hierarchies {
                return Err(LossError::InconsistentLabel(format!(
                    "label level {level} with only {num_hierarchies} hierarchies"
                )));
            }
            at_level[level] += 1;
        }
        // O_k = #samples with level >= k
        let mut occurrences = vec![0u64; num_hierarchies];
        let mut running = 0;
        for k in (0..num_hierarchies).rev() {
            running += at_level[k];
            occurrences[k] = running;
        }
        Self::from_occurrences(WeightMode::Empirical, occurrences)
    }

    /// Computes weights for `t`. Empirical mode counts the manifest's non-validation records.
    pub fn compute(t: &Taxonomy, manifest: Option<&DatasetManifest>, mode: WeightMode) -> Result<Self, LossError> {
        let sizes = t.stats();
        if let Some(k) = sizes.iter().position(|&n| n == 0) {
            return Err(LossError::EmptyHierarchy(k));
        }
        let k_total = sizes.len();
        match mode {
            WeightMode::Uniform => Ok(Self::uniform(k_total)),
            WeightMode::Empirical => {
                let m = manifest.ok_or(LossError::MissingManifest)?;
                let mut levels = Vec::with_capacity(m.len());
                for r in m.records().iter().filter(|r| r.split != Some(Split::Val)) {
                    levels.push(t.class(t.index_of(&r.class_id)?).hierarchy);
                }
                Self::from_label_levels(k_total, levels)
            }
            WeightMode::ClassMass => {
                let occ = (0..k_total).map(|k| sizes[k..].iter().sum::<usize>() as u64).collect();
                Self::from_occurrences(mode, occ)
            }
            WeightMode::AsPrinted => {
                let occ = (0..k_total).map(|k| sizes[..k].iter().sum::<usize>() as u64).collect();
                Self::from_occurrences(mode, occ)
            }
        }
    }

    pub fn num_hierarchies(&self) -> usize {
        self.weights.len()
    }
}

/// Splits a hierarchy-major logit vector into one slice per hierarchy.
pub fn split_logits<'a>(logits: &'a [f64], t: &Taxonomy) -> Result<Vec<&'a [f64]>, LossError> {
    if logits.len() != t.num_classes() {
        return Err(LossError::DimensionMismatch {
            expected: t.num_classes(),
            actual: logits.len(),
        });
    }
    Ok((0..t.num_hierarchies()).map(|k| &logits[t.partition(k)]).collect())
}

/// `Σ_k W_k · L_k` over the label's active hierarchies, where `L_k` is the
/// smoothed cross-entropy of hierarchy `k`'s softmax. Inactive hierarchies get
/// exactly zero loss and gradient.
pub fn semantic_softmax_loss(
    logits: &[f64],
    label: &SemanticLabel,
    weights: &HierarchyWeights,
    t: &Taxonomy,
    smoothing: f64,
) -> Result<LossResult, LossError> {
    let groups = split_logits(logits, t)?;
    check_finite(logits)?;
    check_smoothing(smoothing)?;
    t.check_label(label)
        .map_err(|e| LossError::InconsistentLabel(e.to_string()))?;
    if weights.num_hierarchies() != t.num_hierarchies() {
        return Err(LossError::DimensionMismatch {
            expected: t.num_hierarchies(),
            actual: weights.num_hierarchies(),
        });
    }

    let mut total = 0.0;
    let mut per_hierarchy = vec![0.0; groups.len()];
    let mut grad = vec![0.0; logits.len()];
    for (k, group) in groups.iter().enumerate().take(label.max_hierarchy() + 1) {
        let target = label.target(k).expect("active prefix checked above");
        let (loss, g) = smoothed_ce(group, target, smoothing);
        let w = weights.weights[k];
        per_hierarchy[k] = loss;
        total += w * loss;
        for (dst, gi) in grad[t.partition(k)].iter_mut().zip(g) {
            *dst = w * gi;
        }
    }
    Ok(LossResult {
        total,
        per_hierarchy,
        grad,
    })
}
