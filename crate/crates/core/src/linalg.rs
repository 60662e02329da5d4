//! Small dense helpers on top of ndarray.

use ndarray::{Array1, ArrayView1, ArrayView2};

pub fn norm2(v: ArrayView1<f64>) -> f64 {
    v.dot(&v).sqrt()
}

pub fn max_abs(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

/// Largest-magnitude eigenvalue of a symmetric operator by power iteration.
/// Returns `(estimate, converged)`; stops once the Rayleigh quotient moves
/// by less than `tol` relative.
pub fn power_iteration(dim: usize, apply: impl Fn(ArrayView1<f64>) -> Array1<f64>, iters: usize, tol: f64) -> (f64, bool) {
    // Deterministic start with no special alignment to coordinate axes.
    let mut x = Array1::from_shape_fn(dim, |k| 1.0 + 0.5 * ((k as f64) * 0.7548776662).fract());
    x /= norm2(x.view());
    let mut prev = f64::NAN;
    for _ in 0..iters {
        let y = apply(x.view());
        let rq = x.dot(&y);
        let ny = norm2(y.view());
        if ny == 0.0 {
            return (0.0, true);
        }
        x = y / ny;
        if (rq - prev).abs() <= tol * rq.abs().max(f64::MIN_POSITIVE) {
            return (rq.abs(), true);
        }
        prev = rq;
    }
    (prev.abs(), false)
}

pub fn gram(a: ArrayView2<f64>) -> ndarray::Array2<f64> {
    a.dot(&a.t())
}
