//! Central finite-difference gradient verification.

/// Default step for central differences.
pub const DEFAULT_STEP: f64 = 1e-5;

/// Max over coordinates of `|analytic - numeric| / max(1e-8, |numeric|)`,
/// with `numeric = (f(x + h·e_i) - f(x - h·e_i)) / 2h`.
pub fn finite_difference_check<F>(f: F, x: &[f64], analytic: &[f64], step: f64) -> f64
where
    F: Fn(&[f64]) -> f64,
{
    assert_eq!(x.len(), analytic.len(), "gradient length");
    let mut probe = x.to_vec();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        probe[i] = x[i] + step;
        let up = f(&probe);
        probe[i] = x[i] - step;
        let down = f(&probe);
        probe[i] = x[i];
        let numeric = (up - down) / (2.0 * step);
        let err = (analytic[i] - numeric).abs() / numeric.abs().max(1e-8);
        worst = worst.max(err);
    }
    worst
}
