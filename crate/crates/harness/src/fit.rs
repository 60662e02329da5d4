//! Log-log least squares for scaling exponents.

use serde::Serialize;

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalingFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub n_points: usize,
    /// Points discarded because `err <= 0` or non-finite.
    pub dropped: usize,
}

/// OLS of `ln err` on `ln n`. Nonpositive errors are dropped with a warning on
/// stderr; fewer than three survivors is an error.
pub fn fit_scaling(points: &[(f64, f64)]) -> Result<ScalingFit> {
    let kept: Vec<(f64, f64)> =
        points.iter().filter(|(n, e)| *n > 0.0 && *e > 0.0 && e.is_finite()).map(|(n, e)| (n.ln(), e.ln())).collect();
    let dropped = points.len() - kept.len();
    if dropped > 0 {
        eprintln!("warning: fit_scaling dropped {dropped} nonpositive point(s)");
    }
    if kept.len() < 3 {
        return Err(HarnessError::Fit(format!("need at least 3 positive points, have {}", kept.len())));
    }
    let k = kept.len() as f64;
    let mx = kept.iter().map(|p| p.0).sum::<f64>() / k;
    let my = kept.iter().map(|p| p.1).sum::<f64>() / k;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in &kept {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 {
        return Err(HarnessError::Fit("all N values coincide".into()));
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(ScalingFit { slope, intercept: my - slope * mx, r2, n_points: kept.len(), dropped })
}

/// Linear-interpolated quantile of an unsorted sample.
pub fn quantile(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    if v.is_empty() {
        return f64::NAN;
    }
    let pos = p.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

/// Fraction of `values` above `n^alpha`.
pub fn exceedance(values: &[f64], n: f64, alpha: f64) -> f64 {
    let thr = n.powf(alpha);
    values.iter().filter(|v| **v > thr).count() as f64 / values.len().max(1) as f64
}
