use crate::error::{Error, Result};

/// Central-difference gradient of `f` at `at`, one coordinate at a time.
pub fn finite_diff_grad<F>(mut f: F, at: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut x = at.to_vec();
    let mut grad = Vec::with_capacity(at.len());
    for i in 0..at.len() {
        let orig = x[i];
        x[i] = orig + h;
        let plus = f(&x);
        x[i] = orig - h;
        let minus = f(&x);
        x[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::Oracle { coordinate: i });
        }
        grad.push((plus - minus) / (2.0 * h));
    }
    Ok(grad)
}

/// Five-point central stencil
/// `(f(x−2h) − 8f(x−h) + 8f(x+h) − f(x+2h)) / 12h`, truncation error `O(h⁴)`.
/// Allows a larger `h` than `finite_diff_grad`, so round-off stays small on
/// tiny gradient entries.
pub fn finite_diff_grad_five_point<F>(mut f: F, at: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut x = at.to_vec();
    let mut grad = Vec::with_capacity(at.len());
    for i in 0..at.len() {
        let orig = x[i];
        let mut eval = |offset: f64| {
            x[i] = orig + offset;
            f(&x)
        };
        let values = [eval(-2.0 * h), eval(-h), eval(h), eval(2.0 * h)];
        x[i] = orig;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Oracle { coordinate: i });
        }
        grad.push((8.0 * (values[2] - values[1]) - (values[3] - values[0])) / (12.0 * h));
    }
    Ok(grad)
}

/// Largest `|analytic − numeric| / (|numeric| + 1e-8)` over coordinates.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / (n.abs() + 1e-8))
        .fold(0.0, f64::max)
}
