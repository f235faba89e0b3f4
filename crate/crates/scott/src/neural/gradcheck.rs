//! Central finite-difference validation of analytic gradients.

use crate::error::{Error, Result};

/// Numeric gradient of a scalar-valued function by central differences.
pub fn finite_diff_grad(
    f: &mut dyn FnMut(&[f64]) -> f64,
    x: &[f64],
    epsilon: f64,
) -> Vec<f64> {
    let mut x = x.to_vec();
    let mut grad = vec![0.0; x.len()];
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + epsilon;
        let plus = f(&x);
        x[i] = orig - epsilon;
        let minus = f(&x);
        x[i] = orig;
        grad[i] = (plus - minus) / (2.0 * epsilon);
    }
    grad
}

/// Max over components of |a - n| / max(|a|, |n|, 1e-8).
pub fn max_rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    max_rel_error_floored(analytic, numeric, 1e-8)
}

/// [`max_rel_error`] with an explicit denominator floor.
///
/// Central differences of a loss of magnitude |f| carry cancellation noise
/// of roughly |f|·ulp/(2·epsilon); a component whose true gradient sits
/// below that noise cannot be distinguished from zero, so comparisons of
/// such components must floor the denominator above the noise level rather
/// than at the default 1e-8.
pub fn max_rel_error_floored(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// Compares an analytic gradient against central finite differences of `f`
/// at `x`. Errors on non-finite gradients.
pub fn grad_check(
    f: &mut dyn FnMut(&[f64]) -> f64,
    x: &[f64],
    analytic: &[f64],
    epsilon: f64,
) -> Result<f64> {
    if analytic.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("analytic gradient".into()));
    }
    let numeric = finite_diff_grad(f, x, epsilon);
    if numeric.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("numeric gradient".into()));
    }
    Ok(max_rel_error(analytic, &numeric))
}
