//! Hierarchy-aware classification toolkit.
//!
//! Builds a class forest from hypernym edges, expands single labels into one
//! label per hierarchy, and trains with single-label, multi-label, or
//! per-hierarchy ("semantic") softmax losses plus confidence-weighted
//! distillation. Includes dataset preprocessing, evaluation metrics, and a
//! small deterministic trainer for checking it all end to end.

pub mod loss;
pub mod metrics;
pub mod prep;
pub mod taxonomy;
pub mod trainer;

pub use taxonomy::{ClassNode, DagPolicy, RawEdge, RawEdgeList, SemanticLabel, Taxonomy, TaxonomyError};
