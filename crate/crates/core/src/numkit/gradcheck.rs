//! Central finite-difference gradients, the oracle for every analytic
//! gradient in the crate.

use super::NumError;

/// Central-difference gradient `(f(x + h·eᵢ) − f(x − h·eᵢ)) / (2h)`.
pub fn finite_diff_grad<F>(mut loss_fn: F, params: &[f64], h: f64) -> Result<Vec<f64>, NumError>
where
    F: FnMut(&[f64]) -> f64,
{
    if !(h > 0.0) {
        return Err(NumError::Domain(format!("finite_diff_grad: h must be > 0, got {h}")));
    }
    let mut probe = params.to_vec();
    let mut grad = vec![0.0; params.len()];
    for i in 0..params.len() {
        let original = probe[i];
        probe[i] = original + h;
        let plus = loss_fn(&probe);
        probe[i] = original - h;
        let minus = loss_fn(&probe);
        probe[i] = original;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(NumError::NonFinite {
                context: "finite_diff_grad loss evaluation",
            });
        }
        grad[i] = (plus - minus) / (2.0 * h);
    }
    Ok(grad)
}

/// Norm-level relative error `‖a − n‖₂ / max(‖a‖₂, ‖n‖₂, 1e-12)` between an
/// analytic and a numeric gradient.
pub fn grad_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len(), "gradient length mismatch");
    let mut diff_sq = 0.0;
    let mut a_sq = 0.0;
    let mut n_sq = 0.0;
    for (&a, &n) in analytic.iter().zip(numeric) {
        diff_sq += (a - n) * (a - n);
        a_sq += a * a;
        n_sq += n * n;
    }
    diff_sq.sqrt() / a_sq.sqrt().max(n_sq.sqrt()).max(1e-12)
}
