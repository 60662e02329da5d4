use ndarray::{Array2, Array3};
use rayon::prelude::*;

use super::grid::{Grid, GridDensity};
use super::hat::{hat_values, node_from_factors, Message};
use super::laws::{prior, prior_window};
use crate::ensemble::ProblemInstance;
use crate::error::{Error, Result};
use crate::gaussian_bp::{hat_update, shadow_step, HatField, MessageField, ShadowField};

pub const MAX_N: usize = 32;
pub const MAX_T: u32 = 6;
pub const MAX_GRID: usize = 1024;

/// `|int s^k d - int s^k g|` for `k = 1..=k_max`, where `g` is proportional to
/// `prior * phi_{mu, sigma}` (`sigma` a variance) on the grid of `d`.
pub fn gaussian_proximity(d: &GridDensity, prior: &GridDensity, mu: f64, sigma: f64, k_max: usize) -> Result<Vec<f64>> {
    if prior.values.len() != d.values.len() || prior.lo != d.lo || prior.step != d.step {
        return Err(Error::InvalidDimensions("prior and density must share a grid".into()));
    }
    if !(sigma > 0.0) {
        return Err(Error::InvalidParameter(format!("surrogate variance must be positive, got {sigma}")));
    }
    let g = d.grid();
    let logs: Vec<f64> = g.points().zip(&prior.values).map(|(s, p)| p.ln() - (s - mu).powi(2) / (2.0 * sigma)).collect();
    let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sur = GridDensity::from_values(&g, logs.iter().map(|l| (l - top).exp()).collect())?;
    Ok((1..=k_max as i32).map(|k| (d.expect(|s| s.powi(k)) - sur.expect(|s| s.powi(k))).abs()).collect())
}

#[derive(Debug, Clone)]
pub struct DensityStep {
    pub t: u32,
    pub mean: Array2<f64>,
    pub var: Array2<f64>,
    pub rho3: Array2<f64>,
    pub m4_central: Array2<f64>,
    /// `gaps[[a, i, k-1]]` against the surrogate built from the previous hats.
    pub gaps: Option<Array3<f64>>,
    /// Precision-weighted hat moments without the prior: `(mu, sigma)`.
    pub surrogate: Option<(Array2<f64>, Array2<f64>)>,
    /// Shadow pair computed from the previous step's hat moments.
    pub shadow: Option<ShadowField>,
}

#[derive(Debug, Clone)]
pub struct DensityTrace {
    pub grid: Grid,
    pub prior: GridDensity,
    pub steps: Vec<DensityStep>,
    /// Final messages, `messages[a][i]` from variable `i` to factor `a`.
    pub messages: Vec<Vec<Message>>,
}

/// Half-width of the common window.
pub fn window(init: &Message, q: f64, beta: f64) -> f64 {
    let v = init.moments().var;
    12f64.max(8.0 * v.sqrt()).max(8.0 / (2.0 * beta).sqrt()).max(prior_window(q, beta))
}

fn field_from_messages(msgs: &[Vec<Message>], t: u32) -> MessageField {
    let m = msgs.len();
    let n = msgs[0].len();
    let mom: Vec<Vec<_>> = msgs.iter().map(|row| row.iter().map(Message::moments).collect()).collect();
    MessageField {
        x: Array2::from_shape_fn((m, n), |(a, i)| mom[a][i].m1),
        v: Array2::from_shape_fn((m, n), |(a, i)| mom[a][i].var),
        t,
    }
}

fn surrogate(hat: &HatField) -> (Array2<f64>, Array2<f64>) {
    let (m, n) = hat.xhat.dim();
    let mut mu = Array2::zeros((m, n));
    let mut sig = Array2::zeros((m, n));
    for i in 0..n {
        let (mut p, mut w) = (0.0, 0.0);
        for b in 0..m {
            p += 1.0 / hat.vhat[[b, i]];
            w += hat.xhat[[b, i]] / hat.vhat[[b, i]];
        }
        for a in 0..m {
            let pa = p - 1.0 / hat.vhat[[a, i]];
            sig[[a, i]] = 1.0 / pa;
            mu[[a, i]] = (w - hat.xhat[[a, i]] / hat.vhat[[a, i]]) / pa;
        }
    }
    (mu, sig)
}

fn record(t: u32, msgs: &[Vec<Message>]) -> DensityStep {
    let m = msgs.len();
    let n = msgs[0].len();
    let mom: Vec<Vec<_>> = msgs.iter().map(|row| row.iter().map(Message::moments).collect()).collect();
    DensityStep {
        t,
        mean: Array2::from_shape_fn((m, n), |(a, i)| mom[a][i].m1),
        var: Array2::from_shape_fn((m, n), |(a, i)| mom[a][i].var),
        rho3: Array2::from_shape_fn((m, n), |(a, i)| mom[a][i].rho3_raw),
        m4_central: Array2::from_shape_fn((m, n), |(a, i)| mom[a][i].m4_central),
        gaps: None,
        surrogate: None,
        shadow: None,
    }
}

/// Nonparametric BP under the prior `exp(-beta |s|^q)` from `init` on every edge.
pub fn run_density_bp(
    inst: &ProblemInstance,
    q: f64,
    beta: f64,
    init: &Message,
    tmax: u32,
    grid_points: usize,
) -> Result<DensityTrace> {
    let (m, n) = inst.a.dim();
    if n > MAX_N || tmax > MAX_T || !(16..=MAX_GRID).contains(&grid_points) {
        return Err(Error::InvalidParameter(format!(
            "density engine needs n <= {MAX_N}, tmax <= {MAX_T}, 16 <= grid points <= {MAX_GRID}"
        )));
    }
    let grid = Grid::symmetric(window(init, q, beta), grid_points);
    let pri = prior(q, beta, &grid)?;
    if pri.lo != grid.lo {
        return Err(Error::GridTooNarrow("prior needed a wider window than the run grid".into()));
    }
    let mut msgs: Vec<Vec<Message>> = vec![vec![init.clone(); n]; m];
    let mut steps = vec![record(0, &msgs)];
    for t in 0..tmax {
        let hats: Vec<Vec<Vec<f64>>> = (0..m)
            .into_par_iter()
            .map(|a| hat_values(inst, a, &msgs[a], &(0..n).collect::<Vec<_>>(), &grid))
            .collect::<Result<_>>()?;
        let analytic = hat_update(inst, &field_from_messages(&msgs, t))?;
        let cols: Vec<Vec<GridDensity>> = (0..n)
            .into_par_iter()
            .map(|i| {
                (0..m)
                    .map(|a| node_from_factors(&pri, (0..m).filter(|&b| b != a).map(|b| hats[b][i].as_slice())))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;
        let mut next: Vec<Vec<Message>> = vec![Vec::with_capacity(n); m];
        for col in cols {
            for (a, d) in col.into_iter().enumerate() {
                next[a].push(Message::Grid(d));
            }
        }
        let (mu, sig) = surrogate(&analytic);
        let mut gaps = Array3::zeros((m, n, 4));
        for a in 0..m {
            for i in 0..n {
                let Message::Grid(d) = &next[a][i] else { unreachable!() };
                for (k, g) in gaussian_proximity(d, &pri, mu[[a, i]], sig[[a, i]], 4)?.into_iter().enumerate() {
                    gaps[[a, i, k]] = g;
                }
            }
        }
        let mut step = record(t + 1, &next);
        step.gaps = Some(gaps);
        step.surrogate = Some((mu, sig));
        step.shadow = Some(shadow_step(inst, &analytic, beta)?);
        steps.push(step);
        msgs = next;
    }
    Ok(DensityTrace { grid, prior: pri, steps, messages: msgs })
}
