//! Seeded synthetic data over a taxonomy: Gaussian clusters per leaf class,
//! with labels randomly truncated to ancestors to mimic partial tagging.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::prep::{DatasetManifest, SampleRecord, Split};
use crate::taxonomy::{DagPolicy, RawEdge, RawEdgeList, Taxonomy};

/// How far a child's direction moves away from its parent's before renormalizing.
const BRANCH_OFFSET: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDatasetSpec {
    pub samples_per_leaf: usize,
    pub feature_dim: usize,
    /// Per-coordinate standard deviation around the leaf mean.
    pub spread: f64,
    /// Probability that a sample's label is replaced by a random proper ancestor.
    pub truncation_prob: f64,
    /// Fraction of each leaf's samples held out for evaluation.
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for SyntheticDatasetSpec {
    fn default() -> Self {
        Self {
            samples_per_leaf: 60,
            feature_dim: 16,
            spread: 0.2,
            truncation_prob: 0.3,
            val_fraction: 0.25,
            seed: 7,
        }
    }
}

impl SyntheticDatasetSpec {
    fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidSpec(m.to_owned()));
        if !(self.spread > 0.0 && self.spread.is_finite()) {
            return bad("spread must be positive");
        }
        if !(0.0..=1.0).contains(&self.truncation_prob) {
            return bad("truncation_prob must lie in [0, 1]");
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return bad("val_fraction must lie in [0, 1)");
        }
        if self.feature_dim == 0 || self.samples_per_leaf == 0 {
            return bad("feature_dim and samples_per_leaf must be positive");
        }
        Ok(())
    }
}

/// Generated samples. Index `i` of every vector refers to the same sample, and
/// `manifest.records()[i]` is its record (ids are zero-padded so sorting keeps
/// generation order).
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub features: Vec<Vec<f64>>,
    /// Recorded label (global class index), possibly truncated to an ancestor.
    pub labels: Vec<usize>,
    /// Leaf class the features were drawn from.
    pub leaves: Vec<usize>,
    pub manifest: DatasetManifest,
}

impl SyntheticDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn indices_with(&self, split: Split) -> Vec<usize> {
        self.manifest
            .records()
            .iter()
            .enumerate()
            .filter(|(_, r)| r.split == Some(split))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn train_indices(&self) -> Vec<usize> {
        self.indices_with(Split::Train)
    }

    pub fn val_indices(&self) -> Vec<usize> {
        self.indices_with(Split::Val)
    }

    /// Keeps all validation samples and a seeded random subset of `n` training samples.
    pub fn with_train_limit(&self, n: usize, seed: u64) -> Result<Self, TrainError> {
        let mut train = self.train_indices();
        if n > train.len() {
            return Err(TrainError::InvalidSpec(format!(
                "requested {n} training samples, only {} available",
                train.len()
            )));
        }
        train.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut keep = vec![false; self.len()];
        for &i in train.iter().take(n).chain(&self.val_indices()) {
            keep[i] = true;
        }
        let pick = |v: &[usize]| -> Vec<usize> { v.iter().zip(&keep).filter(|(_, k)| **k).map(|(x, _)| *x).collect() };
        let records = self
            .manifest
            .records()
            .iter()
            .zip(&keep)
            .filter(|(_, k)| **k)
            .map(|(r, _)| r.clone())
            .collect();
        let mut manifest = DatasetManifest::new(records).map_err(|e| TrainError::InvalidSpec(e.to_string()))?;
        manifest.provenance = format!("{}; train subset n={n} seed={seed}", self.manifest.provenance);
        Ok(Self {
            features: self
                .features
                .iter()
                .zip(&keep)
                .filter(|(_, k)| **k)
                .map(|(f, _)| f.clone())
                .collect(),
            labels: pick(&self.labels),
            leaves: pick(&self.leaves),
            manifest,
        })
    }
}

fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    for x in v {
        *x /= norm;
    }
}

/// Draws a labelled dataset over the leaves of `t`.
///
/// Each class gets a unit direction: roots uniformly on the sphere, children
/// perturbed from their parent and renormalized, so leaf means sharing
/// ancestors lie close together. Samples are `mean + spread·N(0, I)`.
pub fn generate_synthetic_dataset(t: &Taxonomy, spec: &SyntheticDatasetSpec) -> Result<SyntheticDataset, TrainError> {
    spec.validate()?;
    let leaves = t.leaves();
    if leaves.is_empty() {
        return Err(TrainError::NoLeaves);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    // Parents precede children in the hierarchy-major order.
    let mut directions: Vec<Vec<f64>> = Vec::with_capacity(t.num_classes());
    for node in t.classes() {
        let dir = match node.parent {
            None => random_unit(&mut rng, spec.feature_dim),
            Some(p) => {
                let offset = random_unit(&mut rng, spec.feature_dim);
                let mut d: Vec<f64> = directions[p]
                    .iter()
                    .zip(&offset)
                    .map(|(a, b)| a + BRANCH_OFFSET * b)
                    .collect();
                normalize(&mut d);
                d
            }
        };
        directions.push(dir);
    }

    let val_per_leaf = (spec.val_fraction * spec.samples_per_leaf as f64).round() as usize;
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut leaf_of = Vec::new();
    let mut records = Vec::new();
    for &leaf in &leaves {
        let chain = t.ancestor_indices(leaf);
        let mut order: Vec<usize> = (0..spec.samples_per_leaf).collect();
        order.shuffle(&mut rng);
        let mut is_val = vec![false; spec.samples_per_leaf];
        for &i in &order[..val_per_leaf] {
            is_val[i] = true;
        }
        for val in is_val {
            let x: Vec<f64> = directions[leaf]
                .iter()
                .map(|m| m + spec.spread * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let truncate = rng.random::<f64>() < spec.truncation_prob;
            let label = if truncate && chain.len() > 1 {
                chain[rng.random_range(0..chain.len() - 1)]
            } else {
                leaf
            };
            let id = format!("s{:08}", records.len());
            let split = if val { Split::Val } else { Split::Train };
            records.push(SampleRecord::new(id, t.class(label).class_id.clone(), Some(split)));
            features.push(x);
            labels.push(label);
            leaf_of.push(leaf);
        }
    }
    let mut manifest = DatasetManifest::new(records).expect("generated ids are unique");
    manifest.provenance = format!(
        "synthetic(samples_per_leaf={}, feature_dim={}, spread={}, truncation_prob={}, val_fraction={}, seed={})",
        spec.samples_per_leaf, spec.feature_dim, spec.spread, spec.truncation_prob, spec.val_fraction, spec.seed
    );
    Ok(SyntheticDataset {
        features,
        labels,
        leaves: leaf_of,
        manifest,
    })
}

/// Balanced tree with `branching[k]` children per hierarchy-`k` node and
/// `roots` top-level classes. Ids are dotted paths such as `r1.c0.c2`.
pub fn balanced_taxonomy(roots: usize, branching: &[usize]) -> Taxonomy {
    let mut entries = Vec::new();
    let mut frontier: Vec<String> = (0..roots).map(|r| format!("r{r}")).collect();
    for id in &frontier {
        entries.push(RawEdge::new(id.clone(), None, id.clone()));
    }
    for &b in branching {
        let mut next = Vec::new();
        for parent in &frontier {
            for c in 0..b {
                let id = format!("{parent}.c{c}");
                entries.push(RawEdge::new(id.clone(), Some(parent), id.clone()));
                next.push(id);
            }
        }
        frontier = next;
    }
    Taxonomy::from_edges(&RawEdgeList::new(entries), DagPolicy::Reject).expect("balanced tree is a valid forest")
}

/// The default three-level taxonomy: 2 roots, 6 middle classes, 18 leaves.
pub fn default_taxonomy() -> Taxonomy {
    balanced_taxonomy(2, &[3, 3])
}

/// Random forest where node `i` attaches to a uniformly chosen earlier node
/// (or becomes a root with probability `root_prob`).
pub fn random_edge_list<R: Rng>(rng: &mut R, nodes: usize, root_prob: f64) -> RawEdgeList {
    let mut entries = Vec::with_capacity(nodes);
    for i in 0..nodes {
        let id = format!("n{i:04}");
        let parent = if i == 0 || rng.random::<f64>() < root_prob {
            None
        } else {
            Some(format!("n{:04}", rng.random_range(0..i)))
        };
        entries.push(RawEdge {
            class_id: id.clone(),
            parent_id: parent,
            name: id,
        });
    }
    RawEdgeList::new(entries)
}
