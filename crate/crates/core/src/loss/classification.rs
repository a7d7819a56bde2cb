use serde::{Deserialize, Serialize};

use super::softmax::{log_softmax_unchecked, softmax_unchecked};
use super::{check_finite, check_smoothing, LossError, LossResult};

/// Smoothed cross-entropy over one softmax group: value and `p - t`.
pub(crate) fn smoothed_ce(logits: &[f64], target: usize, eps: f64) -> (f64, Vec<f64>) {
    let n = logits.len() as f64;
    let off = eps / n;
    let on = 1.0 - eps + off;
    let log_p = log_softmax_unchecked(logits);
    let p = softmax_unchecked(logits);
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(logits.len());
    for (i, (lp, pi)) in log_p.iter().zip(&p).enumerate() {
        let t = if i == target { on } else { off };
        loss -= t * lp;
        grad.push(pi - t);
    }
    (loss, grad)
}

/// Softmax cross-entropy against `(1 - eps)·onehot + eps/N`.
pub fn single_label_ce(logits: &[f64], target: usize, smoothing: f64) -> Result<LossResult, LossError> {
    if logits.is_empty() {
        return Err(LossError::EmptyInput);
    }
    check_finite(logits)?;
    check_smoothing(smoothing)?;
    if target >= logits.len() {
        return Err(LossError::InvalidTarget {
            target,
            classes: logits.len(),
        });
    }
    let (total, grad) = smoothed_ce(logits, target, smoothing);
    Ok(LossResult {
        total,
        per_hierarchy: vec![total],
        grad,
    })
}

/// Focusing exponents of the asymmetric binary loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinaryLossConfig {
    pub gamma_pos: f64,
    pub gamma_neg: f64,
}

impl BinaryLossConfig {
    pub fn new(gamma_pos: f64, gamma_neg: f64) -> Result<Self, LossError> {
        let cfg = Self { gamma_pos, gamma_neg };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Plain binary cross-entropy.
    pub fn cross_entropy() -> Self {
        Self {
            gamma_pos: 0.0,
            gamma_neg: 0.0,
        }
    }

    pub fn focal() -> Self {
        Self {
            gamma_pos: 2.0,
            gamma_neg: 2.0,
        }
    }

    /// Asymmetric focusing: negatives only, `γ₋ = 4`.
    pub fn asymmetric() -> Self {
        Self {
            gamma_pos: 0.0,
            gamma_neg: 4.0,
        }
    }

    pub fn validate(&self) -> Result<(), LossError> {
        if self.gamma_pos >= 0.0 && self.gamma_neg >= 0.0 && self.gamma_pos.is_finite() && self.gamma_neg.is_finite() {
            Ok(())
        } else {
            Err(LossError::InvalidConfig(format!(
                "focusing exponents must be finite and non-negative, got γ₊={} γ₋={}",
                self.gamma_pos, self.gamma_neg
            )))
        }
    }
}

impl Default for BinaryLossConfig {
    fn default() -> Self {
        Self::asymmetric()
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Sum of independent per-logit binary losses.
///
/// Positive term `(1-p)^γ₊ · -ln p`, negative term `p^γ₋ · -ln(1-p)` with
/// `p = σ(z)`.
pub fn multi_label_binary_loss(
    logits: &[f64],
    targets: &[bool],
    cfg: &BinaryLossConfig,
) -> Result<LossResult, LossError> {
    if targets.len() != logits.len() {
        return Err(LossError::DimensionMismatch {
            expected: logits.len(),
            actual: targets.len(),
        });
    }
    check_finite(logits)?;
    cfg.validate()?;
    let mut total = 0.0;
    let mut grad = Vec::with_capacity(logits.len());
    for (&z, &y) in logits.iter().zip(targets) {
        let p = sigmoid(z);
        let q = sigmoid(-z);
        if y {
            // -ln p = softplus(-z)
            let nll = softplus(-z);
            let focus = q.powf(cfg.gamma_pos);
            total += focus * nll;
            grad.push(-focus * (cfg.gamma_pos * p * nll + q));
        } else {
            let nll = softplus(z);
            let focus = p.powf(cfg.gamma_neg);
            total += focus * nll;
            grad.push(focus * (cfg.gamma_neg * q * nll + p));
        }
    }
    Ok(LossResult {
        total,
        per_hierarchy: vec![total],
        grad,
    })
}
