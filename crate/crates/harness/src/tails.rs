//! Monte-Carlo survival of `S = sum_j x_j X_j^p` against the two-regime
//! sub-Gaussian bound.

use bpamp_core::ensemble::Family;
use bpamp_core::seed;
use rayon::prelude::*;
use serde::Serialize;
use statrs::function::erf::erfc;

use crate::error::{HarnessError, Result};
use crate::fit::fit_scaling;

const CHUNK: usize = 10_000;
pub const MIN_TRIALS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// Direct counting of `|S| >= lambda`.
    Plain,
    /// Conditioning on all but the largest summand; needs equal weights and a
    /// continuous law, and stays accurate far into the tail.
    Conditional,
}

impl std::str::FromStr for Estimator {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plain" => Ok(Estimator::Plain),
            "conditional" => Ok(Estimator::Conditional),
            o => Err(HarnessError::Config(format!("unknown estimator '{o}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailRow {
    pub lambda: f64,
    pub survival: f64,
    pub se: f64,
    pub bound: f64,
    /// `front_constant * bound`.
    pub scaled_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailReport {
    pub family: String,
    pub p: u32,
    pub n: usize,
    pub trials: usize,
    pub estimator: Estimator,
    pub k: f64,
    pub crossover: Option<f64>,
    pub front_constant: Option<f64>,
    pub dominated: bool,
    /// `X^p` is constant, so `S` is deterministic.
    pub degenerate: bool,
    pub rows: Vec<TailRow>,
}

fn phi_bar(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

/// `K` with `E[exp(X^2 / K)] = 2` for the unit-variance law.
pub fn subgaussian_k(family: Family) -> f64 {
    match family {
        Family::Gaussian => 8.0 / 3.0,
        Family::Rademacher => 1.0 / std::f64::consts::LN_2,
        Family::Uniform => {
            let a = 3f64.sqrt();
            // Simpson rule for (1/a) int_0^a exp(x^2/k) dx.
            let mgf = |k: f64| {
                let n = 2000;
                let h = a / n as f64;
                let s: f64 = (0..=n)
                    .map(|j| {
                        let w = if j == 0 || j == n {
                            1.0
                        } else if j % 2 == 1 {
                            4.0
                        } else {
                            2.0
                        };
                        w * ((j as f64 * h).powi(2) / k).exp()
                    })
                    .sum();
                s * h / 3.0 / a
            };
            let (mut lo, mut hi) = (0.5, 20.0);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mgf(mid) > 2.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        }
    }
}

/// Boundary between the Gaussian and the stretched-exponential regime; `None`
/// for `p = 1`.
pub fn crossover(p: u32, k: f64, x_sq: f64, n: usize) -> Option<f64> {
    (p >= 2).then(|| {
        let pf = p as f64;
        4.0 * (2.0 * k).powf(pf) * x_sq * (n as f64).powf((2.0 - pf) / (2.0 * (pf - 1.0)))
    })
}

/// Unfitted bound; `x_sq = ||x||_2^2`.
pub fn tail_bound(p: u32, k: f64, x_sq: f64, n: usize, lambda: f64) -> f64 {
    let pf = p as f64;
    let c = (2.0 * k).powf(pf) * x_sq;
    match crossover(p, k, x_sq, n) {
        None => 2.0 * (-lambda * lambda / (8.0 * c)).exp(),
        Some(lc) if lambda <= lc => 2.0 * (-lambda * lambda / (8.0 * c)).exp(),
        Some(_) => 2.0 * (-(lambda * n as f64 / (4.0 * c)).powf(2.0 / pf) / 8.0).exp(),
    }
}

/// Survival of `Y = w X^p` for `w > 0` and a continuous law.
fn y_survival(family: Family, p: u32, w: f64, y: f64) -> f64 {
    let u = y / w;
    let root = |u: f64| u.abs().powf(1.0 / p as f64).copysign(u);
    let x_surv = |z: f64| match family {
        Family::Gaussian => phi_bar(z),
        _ => {
            let a = 3f64.sqrt();
            ((a - z) / (2.0 * a)).clamp(0.0, 1.0)
        }
    };
    if p % 2 == 1 {
        x_surv(root(u))
    } else if u <= 0.0 {
        1.0
    } else {
        2.0 * x_surv(root(u))
    }
}

fn y_neg_survival(family: Family, p: u32, w: f64, y: f64) -> f64 {
    if p % 2 == 1 {
        y_survival(family, p, w, y)
    } else {
        1.0 - y_survival(family, p, w, -y)
    }
}

fn chunks(trials: usize) -> Vec<(u64, usize)> {
    (0..trials.div_ceil(CHUNK)).map(|c| (c as u64, CHUNK.min(trials - c * CHUNK))).collect()
}

fn plain(family: Family, p: u32, weights: &[f64], lambdas: &[f64], trials: usize, seed: u64) -> Vec<(f64, f64)> {
    let mut abs_s: Vec<f64> = chunks(trials)
        .into_par_iter()
        .flat_map_iter(|(c, len)| {
            let mut rng = seed::rng(seed::mix(seed, c));
            (0..len)
                .map(|_| weights.iter().map(|w| w * family.sample_unit(&mut rng).powi(p as i32)).sum::<f64>().abs())
                .collect::<Vec<_>>()
        })
        .collect();
    abs_s.sort_by(|a, b| a.total_cmp(b));
    let nt = trials as f64;
    lambdas
        .iter()
        .map(|l| {
            let below = abs_s.partition_point(|s| s < l);
            let q = (trials - below) as f64 / nt;
            (q, (q * (1.0 - q) / nt).sqrt())
        })
        .collect()
}

fn conditional(family: Family, p: u32, w: f64, n: usize, lambdas: &[f64], trials: usize, seed: u64) -> Vec<(f64, f64)> {
    let nl = lambdas.len();
    let (sum, sq) = chunks(trials)
        .into_par_iter()
        .map(|(c, len)| {
            let mut rng = seed::rng(seed::mix(seed, c));
            let mut sum = vec![0.0; nl];
            let mut sq = vec![0.0; nl];
            for _ in 0..len {
                let (mut s, mut hi, mut lo) = (0.0, f64::NEG_INFINITY, f64::INFINITY);
                for _ in 1..n {
                    let y = w * family.sample_unit(&mut rng).powi(p as i32);
                    s += y;
                    hi = hi.max(y);
                    lo = lo.min(y);
                }
                for (k, l) in lambdas.iter().enumerate() {
                    let up = y_survival(family, p, w, hi.max(l - s));
                    let down = y_neg_survival(family, p, w, (-lo).max(l + s));
                    let est = n as f64 * (up + down);
                    sum[k] += est;
                    sq[k] += est * est;
                }
            }
            (sum, sq)
        })
        .reduce(
            || (vec![0.0; nl], vec![0.0; nl]),
            |(mut a, mut b), (c, d)| {
                a.iter_mut().zip(&c).for_each(|(x, y)| *x += y);
                b.iter_mut().zip(&d).for_each(|(x, y)| *x += y);
                (a, b)
            },
        );
    let nt = trials as f64;
    sum.iter()
        .zip(&sq)
        .map(|(s, q)| {
            let mean = s / nt;
            (mean, ((q / nt - mean * mean).max(0.0) / nt).sqrt())
        })
        .collect()
}

/// Empirical survival of `|sum_j x_j X_j^p|` on `lambdas` (sorted ascending)
/// with the bound's front constant fitted at the smallest `lambda`.
pub fn tail_check(
    family: Family,
    p: u32,
    weights: &[f64],
    lambdas: &[f64],
    trials: usize,
    seed: u64,
    estimator: Estimator,
) -> Result<TailReport> {
    if p < 1 || weights.is_empty() || lambdas.is_empty() {
        return Err(HarnessError::Config("need p >= 1, nonempty weights and lambdas".into()));
    }
    if trials < MIN_TRIALS {
        return Err(HarnessError::Config(format!("need at least {MIN_TRIALS} trials, got {trials}")));
    }
    if lambdas.windows(2).any(|w| w[0] >= w[1]) || lambdas[0] <= 0.0 {
        return Err(HarnessError::Config("lambdas must be positive and strictly increasing".into()));
    }
    let n = weights.len();
    let est = match estimator {
        Estimator::Plain => plain(family, p, weights, lambdas, trials, seed),
        Estimator::Conditional => {
            let w = weights[0];
            if family == Family::Rademacher || w <= 0.0 || weights.iter().any(|v| (v - w).abs() > 1e-12 * w) || n < 2 {
                return Err(HarnessError::Config(
                    "conditional estimator needs a continuous family and equal positive weights".into(),
                ));
            }
            conditional(family, p, w, n, lambdas, trials, seed)
        }
    };
    let k = subgaussian_k(family);
    let x_sq: f64 = weights.iter().map(|w| w * w).sum();
    let bounds: Vec<f64> = lambdas.iter().map(|l| tail_bound(p, k, x_sq, n, *l)).collect();
    let degenerate = family == Family::Rademacher && p.is_multiple_of(2);
    // A step function has no tail shape to fit; it is held against the raw bound.
    let front_constant = (!degenerate && est[0].0 > 0.0).then(|| (est[0].0.ln() - bounds[0].ln()).exp());
    let c = if degenerate { 1.0 } else { front_constant.unwrap_or(0.0) };
    let rows: Vec<TailRow> = lambdas
        .iter()
        .zip(&est)
        .zip(&bounds)
        .map(|((l, (s, se)), b)| TailRow { lambda: *l, survival: *s, se: *se, bound: *b, scaled_bound: c * b })
        .collect();
    let dominated = rows.iter().skip(usize::from(!degenerate)).all(|r| r.survival <= r.scaled_bound + 3.0 * r.se);
    Ok(TailReport {
        family: family.name().to_string(),
        p,
        n,
        trials,
        estimator,
        k,
        crossover: crossover(p, k, x_sq, n),
        front_constant,
        dominated,
        degenerate,
        rows,
    })
}

/// OLS slope of `ln(-ln S)` on `ln lambda` over rows with `lo <= lambda <= hi`
/// and `0 < S < 1`.
pub fn local_exponent(rows: &[TailRow], lo: f64, hi: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.lambda >= lo && r.lambda <= hi && r.survival > 0.0 && r.survival < 1.0)
        .map(|r| (r.lambda, -r.survival.ln()))
        .collect();
    fit_scaling(&pts).ok().map(|f| f.slope)
}

pub fn geomspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count).map(|k| (a + (b - a) * k as f64 / (count - 1) as f64).exp()).collect()
}
