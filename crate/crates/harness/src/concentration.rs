//! Row and column norm concentration of the sampled matrices.

use bpamp_core::ensemble::{row_col_concentration, sample_matrix, EnsembleSpec, Family};
use bpamp_core::seed;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{HarnessError, Result};
use crate::fit::{exceedance, fit_scaling, median, quantile, ScalingFit};

/// Deviations at or below this are rounding noise.
const EXACT: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConcentrationRow {
    pub n: usize,
    pub row_median: f64,
    pub row_q90: f64,
    pub row_q95: f64,
    pub row_q99: f64,
    pub col_median: f64,
    pub col_q95: f64,
    /// Fraction of seeds with `max_row_dev > N^-1/2`.
    pub exceed_alpha: f64,
    /// Fraction of seeds with `max_row_dev > N^-0.4`.
    pub exceed_alpha_eps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConcentrationTable {
    pub family: String,
    pub rows: Vec<ConcentrationRow>,
    /// Fit of the median row deviation; absent for a single N or when degenerate.
    pub fit: Option<ScalingFit>,
    pub degenerate: bool,
}

/// Seed `s` at size `n` uses the instance seed `mix(base, n << 32 | s)`.
pub fn replicate_seed(base: u64, n: usize, s: usize) -> u64 {
    seed::mix(base, ((n as u64) << 32) | s as u64)
}

pub fn concentration_check(
    family: Family,
    n_list: &[usize],
    seeds: usize,
    delta: f64,
    base_seed: u64,
) -> Result<ConcentrationTable> {
    if n_list.is_empty() || seeds == 0 {
        return Err(HarnessError::Config("need a nonempty n_list and seeds >= 1".into()));
    }
    let mut rows = Vec::with_capacity(n_list.len());
    let mut degenerate = true;
    for &n in n_list {
        let m = ((delta * n as f64).round() as usize).clamp(1, n.saturating_sub(1).max(1));
        let reps: Vec<(f64, f64)> = (0..seeds)
            .into_par_iter()
            .map(|s| {
                let spec = EnsembleSpec::new(family, m, n, replicate_seed(base_seed, n, s))?;
                let r = row_col_concentration(sample_matrix(&spec)?.view());
                Ok((r.max_row_dev, r.max_col_dev))
            })
            .collect::<bpamp_core::Result<_>>()?;
        let row: Vec<f64> = reps.iter().map(|r| r.0).collect();
        let col: Vec<f64> = reps.iter().map(|r| r.1).collect();
        degenerate &= row.iter().chain(&col).all(|v| *v <= EXACT);
        let nf = n as f64;
        rows.push(ConcentrationRow {
            n,
            row_median: median(&row),
            row_q90: quantile(&row, 0.9),
            row_q95: quantile(&row, 0.95),
            row_q99: quantile(&row, 0.99),
            col_median: median(&col),
            col_q95: quantile(&col, 0.95),
            exceed_alpha: exceedance(&row, nf, -0.5),
            exceed_alpha_eps: exceedance(&row, nf, -0.4),
        });
    }
    let fit = if degenerate || rows.len() < 3 {
        None
    } else {
        Some(fit_scaling(&rows.iter().map(|r| (r.n as f64, r.row_median)).collect::<Vec<_>>())?)
    };
    Ok(ConcentrationTable { family: family.name().to_string(), rows, fit, degenerate })
}
