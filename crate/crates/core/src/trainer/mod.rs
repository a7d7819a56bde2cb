//! Desk-scale training harness: synthetic hierarchical data, a small model,
//! gradient-descent training under each scheme, and gradient verification.

mod compare;
mod gradcheck;
mod model;
mod synthetic;
mod train;

pub use compare::{compare_schemes, sample_count_sweep, ComparisonRow, ComparisonTable, SweepPoint};
pub use gradcheck::{finite_difference_check, DEFAULT_STEP};
pub use model::{Forward, ToyModel};
pub use synthetic::{
    balanced_taxonomy, default_taxonomy, generate_synthetic_dataset, random_edge_list, SyntheticDataset,
    SyntheticDatasetSpec,
};
pub use train::{
    evaluate_model, trace_to_jsonl, train, EpochRecord, KdMode, Objective, Optimizer, Scheme, TrainConfig, TrainOutcome,
};

use crate::loss::LossError;
use crate::metrics::MetricError;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("taxonomy has no leaf classes")]
    NoLeaves,
    #[error("invalid dataset spec: {0}")]
    InvalidSpec(String),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("teacher mismatch: {0}")]
    TeacherMismatch(&'static str),
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}
