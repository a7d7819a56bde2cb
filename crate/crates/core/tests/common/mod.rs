//! Brute-force oracles and random instance generators shared by the
//! integration suites. Nothing here calls into the code paths it checks.

#![allow(dead_code)]

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use semsoft::prep::PixelBuffer;
use semsoft::{DagPolicy, RawEdge, RawEdgeList, Taxonomy};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Forest where node `i` attaches to a random earlier node, or is a root.
pub fn random_forest(rng: &mut impl Rng, max_nodes: usize) -> RawEdgeList {
    let n = rng.random_range(1..=max_nodes);
    let root_prob = rng.random_range(0.0..0.3);
    let mut entries = Vec::with_capacity(n);
    for i in 0..n {
        let parent = if i == 0 || rng.random::<f64>() < root_prob {
            None
        } else {
            Some(format!("c{}", rng.random_range(0..i)))
        };
        entries.push(RawEdge {
            class_id: format!("c{i}"),
            parent_id: parent,
            name: format!("class {i}"),
        });
    }
    RawEdgeList::new(entries)
}

pub fn parse(edges: &RawEdgeList) -> Taxonomy {
    Taxonomy::from_edges(edges, DagPolicy::Reject).unwrap()
}

pub fn parent_map(edges: &RawEdgeList) -> HashMap<String, Option<String>> {
    edges
        .entries
        .iter()
        .map(|e| (e.class_id.clone(), e.parent_id.clone()))
        .collect()
}

/// Root-to-class chain by recursive parent lookup.
pub fn parent_walk(parents: &HashMap<String, Option<String>>, id: &str) -> Vec<String> {
    match &parents[id] {
        None => vec![id.to_owned()],
        Some(p) => {
            let mut chain = parent_walk(parents, p);
            chain.push(id.to_owned());
            chain
        }
    }
}

/// AP straight from its definition: for each positive, the fraction of
/// positives among the items ranked at or above it. No sorting.
pub fn brute_ap(scores: &[f64], relevance: &[bool]) -> Option<f64> {
    let rank = |i: usize| {
        1 + (0..scores.len())
            .filter(|&j| scores[j] > scores[i] || (scores[j] == scores[i] && j < i))
            .count()
    };
    let positives: Vec<usize> = (0..scores.len()).filter(|&i| relevance[i]).collect();
    if positives.is_empty() {
        return None;
    }
    let mut total = 0.0;
    for &i in &positives {
        let r = rank(i);
        let hits = positives.iter().filter(|&&j| rank(j) <= r).count();
        total += hits as f64 / r as f64;
    }
    Some(total / positives.len() as f64)
}

/// `p_i = 1 / Σ_j exp(z_j - z_i)`, summed smallest-first.
pub fn softmax_oracle(z: &[f64]) -> Vec<f64> {
    z.iter()
        .map(|zi| {
            let mut terms: Vec<f64> = z.iter().map(|zj| (zj - zi).exp()).collect();
            terms.sort_by(f64::total_cmp);
            1.0 / terms.iter().sum::<f64>()
        })
        .collect()
}

pub fn random_logits(rng: &mut impl Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

/// Small random taxonomy (up to `max_nodes` classes) with a random class from it.
pub fn random_instance(rng: &mut impl Rng, max_nodes: usize) -> (Taxonomy, usize) {
    let t = parse(&random_forest(rng, max_nodes));
    let c = rng.random_range(0..t.num_classes());
    (t, c)
}

/// Softmax of the logits of `t`'s hierarchy `k`, computed from the
/// partition's global index list.
pub fn hierarchy_softmax(z: &[f64], t: &Taxonomy, k: usize) -> Vec<f64> {
    let members: Vec<f64> = t.partitions()[k].iter().map(|&g| z[g]).collect();
    softmax_oracle(&members)
}

/// Central differences, worst `|a - n| / max(|n|, 1e-8)` over coordinates.
pub fn fd_rel_err(f: impl Fn(&[f64]) -> f64, x: &[f64], analytic: &[f64]) -> f64 {
    let h = 1e-5;
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let mut up = x.to_vec();
        let mut down = x.to_vec();
        up[i] += h;
        down[i] -= h;
        let numeric = (f(&up) - f(&down)) / (2.0 * h);
        worst = worst.max((analytic[i] - numeric).abs() / numeric.abs().max(1e-8));
    }
    worst
}

/// Depth of class `c`, counted by walking parents.
pub fn level_of(t: &Taxonomy, c: usize) -> usize {
    let mut level = 0;
    let mut cur = c;
    while let Some(p) = t.class(cur).parent {
        level += 1;
        cur = p;
    }
    level
}

/// Frozen values from the calibration run, see `tests/fixtures/calibration.json`.
#[derive(Debug, serde::Deserialize)]
pub struct Calibration {
    pub dataset: semsoft::trainer::SyntheticDatasetSpec,
    pub model_seed: u64,
    pub train_seed: u64,
    pub epochs: usize,
    pub observed_semantic_h0_top1: f64,
    pub semantic_h0_top1_threshold: f64,
    pub sweep_samples_per_leaf: usize,
    pub sweep_counts: Vec<usize>,
    pub observed_sweep_weighted_total: Vec<f64>,
    pub sweep_tolerance: f64,
}

pub fn calibration() -> Calibration {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/calibration.json");
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Direct per-pixel bilinear sampling with half-pixel centers.
pub fn naive_bilinear(img: &PixelBuffer, out_w: usize, out_h: usize) -> Vec<f64> {
    let (w, h) = (img.width() as f64, img.height() as f64);
    let mut out = Vec::new();
    for oy in 0..out_h {
        for ox in 0..out_w {
            let sx = ((ox as f64 + 0.5) * w / out_w as f64 - 0.5).max(0.0).min(w - 1.0);
            let sy = ((oy as f64 + 0.5) * h / out_h as f64 - 0.5).max(0.0).min(h - 1.0);
            let (x0, y0) = (sx.floor(), sy.floor());
            let (x1, y1) = ((x0 + 1.0).min(w - 1.0), (y0 + 1.0).min(h - 1.0));
            let (ax, ay) = (sx - x0, sy - y0);
            for c in 0..3 {
                let p = |x: f64, y: f64| img.get(x as usize, y as usize, c) as f64;
                let v = p(x0, y0) * (1.0 - ax) * (1.0 - ay)
                    + p(x1, y0) * ax * (1.0 - ay)
                    + p(x0, y1) * (1.0 - ax) * ay
                    + p(x1, y1) * ax * ay;
                out.push(v);
            }
        }
    }
    out
}

pub fn gradient_image(w: usize, h: usize) -> PixelBuffer {
    let mut data = Vec::with_capacity(w * h * 3);
    for y in 0..h {
        for x in 0..w {
            data.push(x as f32 / (w - 1) as f32);
            data.push(y as f32 / (h - 1) as f32);
            data.push(0.5 * (x + y) as f32 / (w + h - 2) as f32 + 0.25 * ((x * y) % 3) as f32);
        }
    }
    PixelBuffer::new(w, h, data).unwrap()
}

/// Centered 3-point moving average.
pub fn moving_average3(series: &[f64]) -> Vec<f64> {
    series.windows(3).map(|w| w.iter().sum::<f64>() / 3.0).collect()
}
