use num_complex::Complex64;

use super::grid::{Grid, GridDensity, Moments};
use super::laws::InitDensity;
use crate::ensemble::ProblemInstance;
use crate::error::{Error, Result};

/// Frequency cutoff in units of `1 / sd(T)`.
const CUTOFF_SDS: f64 = 40.0;
/// Aliasing images sit at least this many `sd(T)` beyond the evaluation range.
const ALIAS_SDS: f64 = 20.0;
const MAX_FREQS: usize = 16_384;
/// Inverted values below this fraction of the density bound are treated as zero.
const REL_FLOOR: f64 = 1e-13;

/// A variable-to-factor message: a closed-form initial law or a grid density.
#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    Law(InitDensity),
    Grid(GridDensity),
}

impl Message {
    pub fn moments(&self) -> Moments {
        match self {
            Message::Law(l) => l.moments(),
            Message::Grid(d) => d.moments(),
        }
    }

    /// `E[exp(i k dw s)]` for `k = 0..count`.
    fn cf_ladder(&self, dw: f64, count: usize, out: &mut [Complex64]) {
        match self {
            Message::Law(l) => {
                for (k, o) in out.iter_mut().enumerate().take(count) {
                    *o = l.cf(dw * k as f64);
                }
            }
            Message::Grid(d) => {
                let g = d.grid();
                out[..count].iter_mut().for_each(|o| *o = Complex64::new(0.0, 0.0));
                for (l, v) in d.values.iter().enumerate() {
                    let w = g.weight(l) * v;
                    if w == 0.0 {
                        continue;
                    }
                    let rot = Complex64::from_polar(1.0, dw * g.point(l));
                    let mut z = Complex64::new(w, 0.0);
                    for o in out[..count].iter_mut() {
                        *o += z;
                        z *= rot;
                    }
                }
            }
        }
    }
}

/// Unnormalised hat densities `|A_ai| f_T(y_a - A_ai s)` on `grid` for each
/// target column, where `T = sum_{j != i} A_aj xi_j` and `f_T` comes from
/// inverting the product of the message characteristic functions.
pub(crate) fn hat_values(
    inst: &ProblemInstance,
    a: usize,
    msgs: &[Message],
    targets: &[usize],
    grid: &Grid,
) -> Result<Vec<Vec<f64>>> {
    let n = inst.n();
    if msgs.len() != n {
        return Err(Error::InvalidDimensions(format!("{} messages for {n} columns", msgs.len())));
    }
    let row = inst.a.row(a);
    let mom: Vec<Moments> = msgs.iter().map(Message::moments).collect();
    let mu: Vec<f64> = (0..n).map(|j| row[j] * mom[j].m1).collect();
    let s2: Vec<f64> = (0..n).map(|j| row[j] * row[j] * mom[j].var).collect();
    let (mu_all, s2_all): (f64, f64) = (mu.iter().sum(), s2.iter().sum());
    let span = grid.lo.abs().max(grid.hi().abs());
    let (mut sd_min, mut sd_max, mut reach) = (f64::INFINITY, 0.0f64, 0.0f64);
    for &i in targets {
        let sd = (s2_all - s2[i]).max(0.0).sqrt();
        if !(sd > 0.0) {
            return Err(Error::DegenerateDensity(format!("hat ({a},{i}) has zero variance")));
        }
        sd_min = sd_min.min(sd);
        sd_max = sd_max.max(sd);
        reach = reach.max((inst.y[a] - (mu_all - mu[i])).abs() + row[i].abs() * span);
    }
    let period = 2.0 * reach + 2.0 * ALIAS_SDS * sd_max;
    let dw = 2.0 * std::f64::consts::PI / period;
    let count = ((CUTOFF_SDS / sd_min / dw).ceil() as usize + 1).min(MAX_FREQS);

    // cf[j][k] = E[exp(i k dw A_aj xi_j)]
    let mut cf = vec![vec![Complex64::new(0.0, 0.0); count]; n];
    for j in 0..n {
        msgs[j].cf_ladder(dw * row[j], count, &mut cf[j]);
    }
    // leave-one-out products through prefix and suffix products
    let mut prefix = vec![vec![Complex64::new(1.0, 0.0); count]; n + 1];
    for j in 0..n {
        for k in 0..count {
            prefix[j + 1][k] = prefix[j][k] * cf[j][k];
        }
    }
    let mut suffix = vec![vec![Complex64::new(1.0, 0.0); count]; n + 1];
    for j in (0..n).rev() {
        for k in 0..count {
            suffix[j][k] = suffix[j + 1][k] * cf[j][k];
        }
    }

    let mut out = Vec::with_capacity(targets.len());
    for &i in targets {
        let aai = row[i];
        let psi: Vec<Complex64> = (0..count).map(|k| prefix[i][k] * suffix[i + 1][k]).collect();
        // sup f_T <= (1/pi) int_0^inf |psi|
        let bound = dw / std::f64::consts::PI
            * psi.iter().enumerate().map(|(k, p)| if k == 0 { 0.5 } else { 1.0 } * p.norm()).sum::<f64>();
        let mut acc = vec![0.0; grid.len];
        let u0 = inst.y[a] - aai * grid.lo;
        for (k, p) in psi.iter().enumerate() {
            let wk = if k == 0 || k + 1 == count { 0.5 } else { 1.0 };
            let omega = dw * k as f64;
            let mut z = p * Complex64::from_polar(wk, -omega * u0);
            let rot = Complex64::from_polar(1.0, omega * aai * grid.step);
            for slot in acc.iter_mut() {
                *slot += z.re;
                z *= rot;
            }
        }
        let scale = dw / std::f64::consts::PI;
        let floor = REL_FLOOR * bound;
        let vals: Vec<f64> = acc
            .iter()
            .map(|v| {
                let f = v * scale;
                if f > floor {
                    aai.abs() * f
                } else {
                    0.0
                }
            })
            .collect();
        out.push(vals);
    }
    Ok(out)
}

/// Normalised law of `(y_a - sum_{j != i} A_aj xi_j) / A_ai` on `grid`;
/// `msgs[j]` is the message from column `j` to row `a` (`msgs[i]` is ignored).
pub fn hat_density(inst: &ProblemInstance, i: usize, a: usize, msgs: &[Message], grid: &Grid) -> Result<GridDensity> {
    let vals = hat_values(inst, a, msgs, &[i], grid)?.pop().unwrap_or_default();
    if vals.iter().all(|v| *v == 0.0) {
        return Err(Error::GridTooNarrow(format!("hat ({a},{i}) vanishes on [{}, {}]", grid.lo, grid.hi())));
    }
    GridDensity::from_values(grid, vals)
}

/// Exact (unnormalised) hat density values, e.g. for comparing against an
/// Edgeworth expansion on a partial window.
pub fn hat_density_values(inst: &ProblemInstance, i: usize, a: usize, msgs: &[Message], grid: &Grid) -> Result<Vec<f64>> {
    Ok(hat_values(inst, a, msgs, &[i], grid)?.pop().unwrap_or_default())
}

/// Normalised `prior * prod factors`, accumulated in log space.
pub(crate) fn node_from_factors<'a>(
    prior: &GridDensity,
    factors: impl Iterator<Item = &'a [f64]> + Clone,
) -> Result<GridDensity> {
    let g = prior.grid();
    let mut logv: Vec<f64> = prior.values.iter().map(|v| v.ln()).collect();
    for f in factors {
        if f.len() != g.len {
            return Err(Error::InvalidDimensions("factor not on the prior grid".into()));
        }
        for (l, v) in logv.iter_mut().zip(f) {
            *l += v.ln();
        }
    }
    let top = logv.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY || top.is_nan() {
        return Err(Error::DegenerateDensity("node product vanishes on the whole grid".into()));
    }
    GridDensity::from_values(&g, logv.iter().map(|l| (l - top).exp()).collect())
}

/// Variable-to-factor density `prior * prod hats`; all inputs share one grid.
pub fn node_density(prior: &GridDensity, hats: &[GridDensity]) -> Result<GridDensity> {
    if hats.iter().any(|h| h.values.len() != prior.values.len() || h.lo != prior.lo || h.step != prior.step) {
        return Err(Error::InvalidDimensions("hat densities must share the prior grid".into()));
    }
    node_from_factors(prior, hats.iter().map(|h| h.values.as_slice()))
}
