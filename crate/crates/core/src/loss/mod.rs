//! Classification losses with analytic gradients.
//!
//! Every loss returns a [`LossResult`] holding the scalar value, a breakdown
//! per hierarchy, and the gradient with respect to the input logits. Logit
//! vectors follow the hierarchy-major layout of [`Taxonomy`](crate::Taxonomy).

mod classification;
mod distill;
mod semantic;
mod softmax;

pub use classification::{multi_label_binary_loss, single_label_ce, BinaryLossConfig};
pub use distill::{
    estimate_teacher_confidence, semantic_kd_loss, top_fraction_count, ConfidenceRule, KdOptions, KdReduction,
    KdWeighting, TeacherOutput,
};
pub use semantic::{semantic_softmax_loss, split_logits, HierarchyWeights, WeightMode};
pub use softmax::{log_softmax, stable_softmax};

use crate::prep::PrepError;
use crate::taxonomy::TaxonomyError;

/// Default label-smoothing factor.
pub const DEFAULT_SMOOTHING: f64 = 0.2;

#[derive(Debug, thiserror::Error)]
pub enum LossError {
    #[error("input is empty")]
    EmptyInput,
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("target {target} out of range for {classes} classes")]
    InvalidTarget { target: usize, classes: usize },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("label inconsistent with taxonomy: {0}")]
    InconsistentLabel(String),
    #[error("hierarchy {hierarchy} has zero occurrences, weight is undefined")]
    DegenerateWeight { hierarchy: usize },
    #[error("hierarchy {0} has no classes")]
    EmptyHierarchy(usize),
    #[error("empirical weights need a manifest")]
    MissingManifest,
    #[error("probabilities sum to {0}, expected 1")]
    NotNormalized(f64),
    #[error(transparent)]
    Taxonomy(#[from] TaxonomyError),
    #[error(transparent)]
    Prep(#[from] PrepError),
}

/// Loss value, its per-hierarchy components, and the gradient w.r.t. logits.
#[derive(Debug, Clone, PartialEq)]
pub struct LossResult {
    pub total: f64,
    /// Unweighted component per hierarchy; zero where the hierarchy is inactive.
    /// Flat losses report a single entry.
    pub per_hierarchy: Vec<f64>,
    pub grad: Vec<f64>,
}

fn check_finite(values: &[f64]) -> Result<(), LossError> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(LossError::NonFinite(i)),
        None => Ok(()),
    }
}

fn check_smoothing(eps: f64) -> Result<(), LossError> {
    if (0.0..1.0).contains(&eps) {
        Ok(())
    } else {
        Err(LossError::InvalidConfig(format!("smoothing {eps} outside [0, 1)")))
    }
}
