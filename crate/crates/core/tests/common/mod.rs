#![allow(dead_code)]

use bpamp_core::ensemble::{EnsembleSpec, Family, OutcomeMode, ProblemInstance};

pub fn gaussian(m: usize, n: usize, seed: u64) -> ProblemInstance {
    ProblemInstance::generate(EnsembleSpec::new(Family::Gaussian, m, n, seed).unwrap(), OutcomeMode::UniformBox).unwrap()
}

pub fn quantile(mut v: Vec<f64>, p: f64) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pos = p * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

pub fn median(v: Vec<f64>) -> f64 {
    quantile(v, 0.5)
}

/// OLS slope of `log y` against `log n`.
pub fn loglog_slope(ns: &[usize], ys: &[f64]) -> f64 {
    let xs: Vec<f64> = ns.iter().map(|n| (*n as f64).ln()).collect();
    let ls: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ls.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(&ls).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}
