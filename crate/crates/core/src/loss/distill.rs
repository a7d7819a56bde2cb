//! Semantic knowledge distillation: per-hierarchy MSE between teacher and
//! student softmax outputs, weighted by an estimate of teacher confidence.

use serde::{Deserialize, Serialize};

use super::semantic::split_logits;
use super::softmax::softmax_unchecked;
use super::{check_finite, LossError, LossResult};
use crate::taxonomy::{SemanticLabel, Taxonomy};

/// When a hierarchy counts as supervised by the ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfidenceRule {
    /// Hierarchies `0..=max_hierarchy` get `P = 1`.
    #[default]
    AtOrAbove,
    /// Only hierarchies strictly below `max_hierarchy` get `P = 1`.
    StrictlyAbove,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KdWeighting {
    /// Plain sum over hierarchies.
    Vanilla,
    /// Each hierarchy weighted by teacher confidence.
    #[default]
    ConfidenceWeighted,
}

/// Reduction of squared differences inside one hierarchy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KdReduction {
    #[default]
    Mean,
    Sum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct KdOptions {
    pub weighting: KdWeighting,
    pub reduction: KdReduction,
}

/// Number of classes making up the top 5% of a hierarchy, rounded up.
pub fn top_fraction_count(n: usize) -> usize {
    n.div_ceil(20)
}

/// Teacher confidence `P_k` for hierarchy `k`.
///
/// Supervised hierarchies get 1. Otherwise the mass of the `⌈N_k / 20⌉`
/// largest teacher probabilities.
pub fn estimate_teacher_confidence(
    probs: &[f64],
    gt_max_hierarchy: usize,
    k: usize,
    rule: ConfidenceRule,
) -> Result<f64, LossError> {
    if probs.is_empty() {
        return Err(LossError::EmptyInput);
    }
    check_finite(probs)?;
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(LossError::NotNormalized(sum));
    }
    let supervised = match rule {
        ConfidenceRule::AtOrAbove => gt_max_hierarchy >= k,
        ConfidenceRule::StrictlyAbove => gt_max_hierarchy > k,
    };
    if supervised {
        return Ok(1.0);
    }
    let m = top_fraction_count(probs.len());
    let mut scratch = probs.to_vec();
    let desc = |a: &f64, b: &f64| b.total_cmp(a);
    if m < scratch.len() {
        scratch.select_nth_unstable_by(m - 1, desc);
    }
    let top = &mut scratch[..m];
    top.sort_unstable_by(desc);
    Ok(top.iter().sum::<f64>().clamp(0.0, 1.0))
}

/// Teacher logits plus one confidence per hierarchy.
#[derive(Debug, Clone, PartialEq)]
pub struct TeacherOutput {
    pub logits: Vec<f64>,
    pub confidences: Vec<f64>,
}

impl TeacherOutput {
    pub fn new(logits: Vec<f64>, confidences: Vec<f64>) -> Result<Self, LossError> {
        check_finite(&logits)?;
        if let Some(p) = confidences.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(LossError::InvalidConfig(format!("confidence {p} outside [0, 1]")));
        }
        Ok(Self { logits, confidences })
    }

    /// Derives confidences from the teacher's own per-hierarchy softmax.
    pub fn from_logits(
        logits: Vec<f64>,
        label: &SemanticLabel,
        t: &Taxonomy,
        rule: ConfidenceRule,
    ) -> Result<Self, LossError> {
        check_finite(&logits)?;
        let confidences = split_logits(&logits, t)?
            .into_iter()
            .enumerate()
            .map(|(k, group)| estimate_teacher_confidence(&softmax_unchecked(group), label.max_hierarchy(), k, rule))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { logits, confidences })
    }
}

/// Distillation loss of the student logits against a fixed teacher.
///
/// Per hierarchy, the squared difference of the two softmax outputs reduced
/// by `opts.reduction`. `per_hierarchy` holds these unweighted terms; `total`
/// weights them by teacher confidence unless `opts.weighting` is vanilla.
pub fn semantic_kd_loss(
    student: &[f64],
    teacher: &TeacherOutput,
    label: &SemanticLabel,
    t: &Taxonomy,
    opts: KdOptions,
) -> Result<LossResult, LossError> {
    let s_groups = split_logits(student, t)?;
    let t_groups = split_logits(&teacher.logits, t)?;
    check_finite(student)?;
    t.check_label(label)
        .map_err(|e| LossError::InconsistentLabel(e.to_string()))?;
    if teacher.confidences.len() != t.num_hierarchies() {
        return Err(LossError::DimensionMismatch {
            expected: t.num_hierarchies(),
            actual: teacher.confidences.len(),
        });
    }

    let mut total = 0.0;
    let mut per_hierarchy = Vec::with_capacity(s_groups.len());
    let mut grad = vec![0.0; student.len()];
    for (k, (zs, zt)) in s_groups.iter().zip(&t_groups).enumerate() {
        let s = softmax_unchecked(zs);
        let tp = softmax_unchecked(zt);
        let scale = match opts.reduction {
            KdReduction::Mean => 1.0 / s.len() as f64,
            KdReduction::Sum => 1.0,
        };
        let diff: Vec<f64> = s.iter().zip(&tp).map(|(a, b)| a - b).collect();
        let loss = scale * diff.iter().map(|d| d * d).sum::<f64>();
        let weight = match opts.weighting {
            KdWeighting::Vanilla => 1.0,
            KdWeighting::ConfidenceWeighted => teacher.confidences[k],
        };
        per_hierarchy.push(loss);
        total += weight * loss;

        // dL/dS_j = 2·scale·(S_j - T_j), pushed through the softmax Jacobian.
        let dot: f64 = diff.iter().zip(&s).map(|(d, sj)| 2.0 * scale * d * sj).sum();
        for ((dst, d), sj) in grad[t.partition(k)].iter_mut().zip(&diff).zip(&s) {
            *dst = weight * sj * (2.0 * scale * d - dot);
        }
    }
    Ok(LossResult {
        total,
        per_hierarchy,
        grad,
    })
}
