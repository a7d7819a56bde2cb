use super::{check_finite, LossError};

fn max_of(values: &[f64]) -> f64 {
    values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Max-shifted softmax. Safe for large-magnitude logits.
pub fn stable_softmax(values: &[f64]) -> Result<Vec<f64>, LossError> {
    if values.is_empty() {
        return Err(LossError::EmptyInput);
    }
    check_finite(values)?;
    Ok(softmax_unchecked(values))
}

pub(crate) fn softmax_unchecked(values: &[f64]) -> Vec<f64> {
    let max = max_of(values);
    let mut out: Vec<f64> = values.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for v in &mut out {
        *v /= sum;
    }
    out
}

/// Log-probabilities, `z_i - max - ln Σ exp(z_j - max)`.
pub fn log_softmax(values: &[f64]) -> Result<Vec<f64>, LossError> {
    if values.is_empty() {
        return Err(LossError::EmptyInput);
    }
    check_finite(values)?;
    Ok(log_softmax_unchecked(values))
}

pub(crate) fn log_softmax_unchecked(values: &[f64]) -> Vec<f64> {
    let max = max_of(values);
    let log_sum = values.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    values.iter().map(|v| v - max - log_sum).collect()
}
