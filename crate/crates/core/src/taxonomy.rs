//! Class taxonomy built from hypernym (parent) edges.
//!
//! A [`Taxonomy`] is an immutable forest. Every class sits at a hierarchy level
//! equal to its number of ancestors, and classes are laid out hierarchy-major:
//! all hierarchy-0 classes first, then hierarchy 1, and so on, each level sorted
//! by `class_id`. The global class index is therefore also the logit index, and
//! the logits of hierarchy `k` form one contiguous slice.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::io::{BufRead, BufReader, Write};
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum TaxonomyError {
    #[error("taxonomy input contains no classes")]
    Empty,
    #[error("duplicate class id `{0}`")]
    DuplicateClassId(String),
    #[error("class `{class_id}` references unknown parent `{parent_id}`")]
    DanglingParent { class_id: String, parent_id: String },
    #[error("cycle detected: class `{0}` is its own ancestor")]
    CycleDetected(String),
    #[error("class `{class_id}` has multiple parents: {}", parents.join(", "))]
    MultiParentRejected { class_id: String, parents: Vec<String> },
    #[error("unknown class `{0}`")]
    UnknownClass(String),
    #[error("label inconsistent with taxonomy: {0}")]
    InconsistentLabel(String),
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One row of a hypernym edge list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawEdge {
    pub class_id: String,
    pub parent_id: Option<String>,
    pub name: String,
}

impl RawEdge {
    pub fn new(class_id: impl Into<String>, parent_id: Option<&str>, name: impl Into<String>) -> Self {
        Self {
            class_id: class_id.into(),
            parent_id: parent_id.map(str::to_owned),
            name: name.into(),
        }
    }
}

/// Unresolved edge list. Several rows for one `class_id` with different
/// parents describe a DAG node; [`DagPolicy`] decides what happens to it.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RawEdgeList {
    pub entries: Vec<RawEdge>,
}

impl RawEdgeList {
    pub fn new(entries: Vec<RawEdge>) -> Self {
        Self { entries }
    }

    /// Reads the `class_id<TAB>parent_id<TAB>name` format. Empty `parent_id`
    /// marks a root, `#` starts a comment line, blank lines are skipped.
    pub fn from_tsv<R: BufRead>(reader: R) -> Result<Self, TaxonomyError> {
        let mut entries = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.strip_suffix('\r').unwrap_or(&line);
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(TaxonomyError::Malformed {
                    line: i + 1,
                    reason: format!("expected 3 tab-separated fields, found {}", fields.len()),
                });
            }
            if fields[0].is_empty() {
                return Err(TaxonomyError::Malformed {
                    line: i + 1,
                    reason: "empty class_id".to_owned(),
                });
            }
            let parent = (!fields[1].is_empty()).then_some(fields[1]);
            entries.push(RawEdge::new(fields[0], parent, fields[2]));
        }
        Ok(Self { entries })
    }

    pub fn from_tsv_path(path: impl AsRef<Path>) -> Result<Self, TaxonomyError> {
        let file = std::fs::File::open(path)?;
        Self::from_tsv(BufReader::new(file))
    }

    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for e in &self.entries {
            writeln!(
                out,
                "{}\t{}\t{}",
                e.class_id,
                e.parent_id.as_deref().unwrap_or(""),
                e.name
            )?;
        }
        Ok(())
    }
}

/// How to resolve classes that list more than one parent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DagPolicy {
    /// Fail with [`TaxonomyError::MultiParentRejected`].
    Reject,
    /// Keep the parent giving the smallest hierarchy level, ties broken by the
    /// lexicographically smallest parent id.
    #[default]
    MinDepthParent,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassNode {
    pub class_id: String,
    pub name: String,
    /// Global index of the parent class.
    pub parent: Option<usize>,
    pub hierarchy: usize,
    pub within_hierarchy_index: usize,
}

/// Per-hierarchy ground truth obtained by expanding a single label along its
/// ancestor chain. Entry `k` is `None` (inactive) above the label's own level.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SemanticLabel {
    per_hierarchy: Vec<Option<usize>>,
    max_hierarchy: usize,
}

impl SemanticLabel {
    /// Builds a label from per-hierarchy entries. Returns `None` unless the
    /// active entries form a non-empty prefix.
    pub fn new(per_hierarchy: Vec<Option<usize>>) -> Option<Self> {
        let active = per_hierarchy.iter().take_while(|e| e.is_some()).count();
        if active == 0 || per_hierarchy[active..].iter().any(Option::is_some) {
            return None;
        }
        Some(Self {
            per_hierarchy,
            max_hierarchy: active - 1,
        })
    }

    pub fn per_hierarchy(&self) -> &[Option<usize>] {
        &self.per_hierarchy
    }

    pub fn max_hierarchy(&self) -> usize {
        self.max_hierarchy
    }

    pub fn num_hierarchies(&self) -> usize {
        self.per_hierarchy.len()
    }

    pub fn is_active(&self, k: usize) -> bool {
        k <= self.max_hierarchy
    }

    /// Within-hierarchy target index at hierarchy `k`, if active.
    pub fn target(&self, k: usize) -> Option<usize> {
        self.per_hierarchy.get(k).copied().flatten()
    }
}

/// Immutable class forest with a hierarchy-major logit layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Taxonomy {
    classes: Vec<ClassNode>,
    /// `offsets[k]..offsets[k + 1]` is the global index range of hierarchy `k`.
    offsets: Vec<usize>,
    index: HashMap<String, usize>,
    children: Vec<Vec<usize>>,
}

impl Taxonomy {
    pub fn from_edges(input: &RawEdgeList, policy: DagPolicy) -> Result<Self, TaxonomyError> {
        if input.entries.is_empty() {
            return Err(TaxonomyError::Empty);
        }

        // class_id -> (candidate parent, name), sorted by parent for determinism
        let mut rows: BTreeMap<&str, Vec<(Option<&str>, &str)>> = BTreeMap::new();
        for e in &input.entries {
            let group = rows.entry(e.class_id.as_str()).or_default();
            let parent = e.parent_id.as_deref();
            if group.iter().any(|(p, _)| *p == parent) {
                return Err(TaxonomyError::DuplicateClassId(e.class_id.clone()));
            }
            group.push((parent, e.name.as_str()));
        }
        for group in rows.values_mut() {
            group.sort();
        }

        for (id, group) in &rows {
            for (parent, _) in group {
                if let Some(p) = parent {
                    if !rows.contains_key(p) {
                        return Err(TaxonomyError::DanglingParent {
                            class_id: (*id).to_owned(),
                            parent_id: (*p).to_owned(),
                        });
                    }
                }
            }
        }

        let ids: Vec<&str> = rows.keys().copied().collect();
        let pos: HashMap<&str, usize> = ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
        let parents: Vec<Vec<usize>> = ids
            .iter()
            .map(|id| rows[id].iter().filter_map(|(p, _)| p.map(|p| pos[p])).collect())
            .collect();
        let has_root_row: Vec<bool> = ids.iter().map(|id| rows[id].iter().any(|(p, _)| p.is_none())).collect();

        if let Some(node) = find_cycle(&parents) {
            return Err(TaxonomyError::CycleDetected(ids[node].to_owned()));
        }

        if policy == DagPolicy::Reject {
            if let Some((id, group)) = rows.iter().find(|(_, g)| g.len() > 1) {
                return Err(TaxonomyError::MultiParentRejected {
                    class_id: (*id).to_owned(),
                    parents: group.iter().map(|(p, _)| p.unwrap_or("").to_owned()).collect(),
                });
            }
        }

        // Shortest distance to any root; the graph is acyclic here.
        let mut child_edges = vec![Vec::new(); ids.len()];
        for (c, ps) in parents.iter().enumerate() {
            for &p in ps {
                child_edges[p].push(c);
            }
        }
        let mut depth = vec![usize::MAX; ids.len()];
        let mut queue = VecDeque::new();
        for (c, &root) in has_root_row.iter().enumerate() {
            if root {
                depth[c] = 0;
                queue.push_back(c);
            }
        }
        while let Some(p) = queue.pop_front() {
            for &c in &child_edges[p] {
                if depth[c] == usize::MAX {
                    depth[c] = depth[p] + 1;
                    queue.push_back(c);
                }
            }
        }
        debug_assert!(depth.iter().all(|&d| d != usize::MAX));

        let chosen_parent: Vec<Option<usize>> = (0..ids.len())
            .map(|c| {
                if has_root_row[c] {
                    None
                } else {
                    parents[c].iter().copied().min_by_key(|&p| (depth[p], ids[p]))
                }
            })
            .collect();
        let names: Vec<&str> = (0..ids.len())
            .map(|c| {
                let kept = chosen_parent[c].map(|p| ids[p]);
                rows[ids[c]]
                    .iter()
                    .find(|(p, _)| *p == kept)
                    .map(|(_, n)| *n)
                    .unwrap_or_default()
            })
            .collect();

        let mut order: Vec<usize> = (0..ids.len()).collect();
        order.sort_by_key(|&c| (depth[c], ids[c]));
        let mut global = vec![0; ids.len()];
        for (g, &c) in order.iter().enumerate() {
            global[c] = g;
        }

        let num_hierarchies = depth.iter().max().map_or(0, |d| d + 1);
        let mut offsets = vec![0; num_hierarchies + 1];
        for &d in &depth {
            offsets[d + 1] += 1;
        }
        for k in 0..num_hierarchies {
            offsets[k + 1] += offsets[k];
        }

        let classes: Vec<ClassNode> = order
            .iter()
            .enumerate()
            .map(|(g, &c)| ClassNode {
                class_id: ids[c].to_owned(),
                name: names[c].to_owned(),
                parent: chosen_parent[c].map(|p| global[p]),
                hierarchy: depth[c],
                within_hierarchy_index: g - offsets[depth[c]],
            })
            .collect();
        let mut children = vec![Vec::new(); classes.len()];
        for (g, node) in classes.iter().enumerate() {
            if let Some(p) = node.parent {
                children[p].push(g);
            }
        }
        let index = classes
            .iter()
            .enumerate()
            .map(|(g, n)| (n.class_id.clone(), g))
            .collect();

        Ok(Self {
            classes,
            offsets,
            index,
            children,
        })
    }

    pub fn from_tsv_path(path: impl AsRef<Path>, policy: DagPolicy) -> Result<Self, TaxonomyError> {
        Self::from_edges(&RawEdgeList::from_tsv_path(path)?, policy)
    }

    /// Edge list reproducing this (already canonical) forest.
    pub fn to_edges(&self) -> RawEdgeList {
        RawEdgeList::new(
            self.classes
                .iter()
                .map(|n| {
                    RawEdge::new(
                        n.class_id.clone(),
                        n.parent.map(|p| self.classes[p].class_id.as_str()),
                        n.name.clone(),
                    )
                })
                .collect(),
        )
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    /// Number of hierarchy levels, `K`.
    pub fn num_hierarchies(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn classes(&self) -> &[ClassNode] {
        &self.classes
    }

    pub fn class(&self, index: usize) -> &ClassNode {
        &self.classes[index]
    }

    pub fn children(&self, index: usize) -> &[usize] {
        &self.children[index]
    }

    pub fn is_leaf(&self, index: usize) -> bool {
        self.children[index].is_empty()
    }

    /// Global indices of classes without children.
    pub fn leaves(&self) -> Vec<usize> {
        (0..self.classes.len()).filter(|&i| self.is_leaf(i)).collect()
    }

    pub fn index_of(&self, class_id: &str) -> Result<usize, TaxonomyError> {
        self.index
            .get(class_id)
            .copied()
            .ok_or_else(|| TaxonomyError::UnknownClass(class_id.to_owned()))
    }

    /// `(hierarchy, within-hierarchy index)` of a class.
    pub fn logit_position(&self, class_id: &str) -> Result<(usize, usize), TaxonomyError> {
        let node = &self.classes[self.index_of(class_id)?];
        Ok((node.hierarchy, node.within_hierarchy_index))
    }

    /// Global index range of hierarchy `k`.
    pub fn partition(&self, k: usize) -> Range<usize> {
        self.offsets[k]..self.offsets[k + 1]
    }

    pub fn partitions(&self) -> Vec<Vec<usize>> {
        (0..self.num_hierarchies())
            .map(|k| self.partition(k).collect())
            .collect()
    }

    /// Class counts per hierarchy, `N_0..N_{K-1}`.
    pub fn stats(&self) -> Vec<usize> {
        self.offsets.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn hierarchy_size(&self, k: usize) -> usize {
        self.offsets[k + 1] - self.offsets[k]
    }

    /// Global index of the class at `(hierarchy, within-hierarchy index)`.
    pub fn global_index(&self, k: usize, within: usize) -> usize {
        self.offsets[k] + within
    }

    /// Global indices from the root down to `index`, inclusive.
    pub fn ancestor_indices(&self, index: usize) -> Vec<usize> {
        let mut chain = Vec::with_capacity(self.classes[index].hierarchy + 1);
        let mut cur = Some(index);
        while let Some(c) = cur {
            chain.push(c);
            cur = self.classes[c].parent;
        }
        chain.reverse();
        chain
    }

    pub fn ancestor_chain(&self, class_id: &str) -> Result<Vec<&str>, TaxonomyError> {
        let index = self.index_of(class_id)?;
        Ok(self
            .ancestor_indices(index)
            .into_iter()
            .map(|c| self.classes[c].class_id.as_str())
            .collect())
    }

    pub fn expand_index(&self, index: usize) -> SemanticLabel {
        let mut per_hierarchy = vec![None; self.num_hierarchies()];
        for c in self.ancestor_indices(index) {
            let node = &self.classes[c];
            per_hierarchy[node.hierarchy] = Some(node.within_hierarchy_index);
        }
        SemanticLabel {
            per_hierarchy,
            max_hierarchy: self.classes[index].hierarchy,
        }
    }

    pub fn expand_label(&self, class_id: &str) -> Result<SemanticLabel, TaxonomyError> {
        Ok(self.expand_index(self.index_of(class_id)?))
    }

    /// Checks that `label` is the expansion of some class of this taxonomy.
    pub fn check_label(&self, label: &SemanticLabel) -> Result<(), TaxonomyError> {
        let bad = |msg: String| Err(TaxonomyError::InconsistentLabel(msg));
        if label.num_hierarchies() != self.num_hierarchies() {
            return bad(format!(
                "label has {} hierarchies, taxonomy has {}",
                label.num_hierarchies(),
                self.num_hierarchies()
            ));
        }
        let mut expected_parent = None;
        for k in 0..=label.max_hierarchy() {
            let within = label.target(k).unwrap_or_default();
            if within >= self.hierarchy_size(k) {
                return bad(format!("index {within} out of range at hierarchy {k}"));
            }
            let g = self.global_index(k, within);
            if self.classes[g].parent != expected_parent {
                return bad(format!(
                    "hierarchy {k} entry is not a child of hierarchy {} entry",
                    k.saturating_sub(1)
                ));
            }
            expected_parent = Some(g);
        }
        Ok(())
    }

    /// Global index of the most specific class named by `label`.
    pub fn label_class(&self, label: &SemanticLabel) -> usize {
        let k = label.max_hierarchy();
        self.global_index(k, label.target(k).unwrap_or_default())
    }
}

/// Returns a node lying on a directed cycle of the `child -> parents` graph.
fn find_cycle(parents: &[Vec<usize>]) -> Option<usize> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        Open,
        Done,
    }
    let mut mark = vec![Mark::New; parents.len()];
    for start in 0..parents.len() {
        if mark[start] != Mark::New {
            continue;
        }
        let mut stack = vec![(start, 0usize)];
        mark[start] = Mark::Open;
        while let Some(&mut (node, ref mut next)) = stack.last_mut() {
            if let Some(&p) = parents[node].get(*next) {
                *next += 1;
                match mark[p] {
                    Mark::Open => return Some(p),
                    Mark::New => {
                        mark[p] = Mark::Open;
                        stack.push((p, 0));
                    }
                    Mark::Done => {}
                }
            } else {
                mark[node] = Mark::Done;
                stack.pop();
            }
        }
    }
    None
}
