use super::grid::{Grid, GridDensity, Moments};
use super::hat::{hat_density_values, Message};
use super::laws::InitDensity;
use crate::ensemble::ProblemInstance;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeworthData {
    pub p3: f64,
    pub xhat: f64,
    pub vhat: f64,
}

pub fn hermite3(x: f64) -> f64 {
    x * x * x - 3.0 * x
}

/// `1 + P / (6 vhat^{3/2}) H3((s - xhat) / sqrt(vhat))`.
pub fn edg_factor(s: f64, ed: &EdgeworthData) -> f64 {
    let sd = ed.vhat.sqrt();
    1.0 + ed.p3 / (6.0 * ed.vhat * sd) * hermite3((s - ed.xhat) / sd)
}

/// Third cumulant of the hat variable `(y_a - sum_{j != i} A_aj xi_j) / A_ai`:
/// `-A_ai^{-3} sum_{j != i} A_aj^3 (rho_j - 3 x_j v_j - x_j^3)`.
pub fn edgeworth_p3(inst: &ProblemInstance, a: usize, i: usize, moments: &[Moments]) -> f64 {
    let aai = inst.a[[a, i]];
    let mut acc = 0.0;
    for (j, m) in moments.iter().enumerate() {
        if j == i {
            continue;
        }
        let cum3 = m.rho3_raw - 3.0 * m.m1 * m.var - m.m1.powi(3);
        acc += inst.a[[a, j]].powi(3) * cum3;
    }
    -acc / aai.powi(3)
}

/// `P` as `d^3/dr^3 sum_{j != i} log int w_j(s) exp(r (y_a / (A_ai (N-1)) - A_aj s / A_ai)) ds`
/// at `r = 0` by a seven-point finite difference, where `w_j` is the message
/// density, multiplied by `prior` when one is given.
pub fn edgeworth_p3_fd(inst: &ProblemInstance, a: usize, i: usize, msgs: &[Message], prior: Option<&GridDensity>) -> Result<f64> {
    let n = inst.n();
    let aai = inst.a[[a, i]];
    let c = inst.y[a] / (aai * (n as f64 - 1.0));
    let alpha: Vec<f64> = (0..n).map(|j| inst.a[[a, j]] / aai).collect();
    let scale = (0..n).filter(|&j| j != i).map(|j| alpha[j].abs() * msgs[j].moments().var.sqrt()).fold(0.0f64, f64::max);
    let h = 0.02 / scale;

    // weights on the prior grid when a prior is used
    let weighted: Option<Vec<Vec<f64>>> = prior.map(|p| {
        let g = p.grid();
        msgs.iter()
            .map(|m| match m {
                Message::Law(l) => g.points().zip(&p.values).map(|(s, pv)| l.pdf(s) * pv).collect(),
                Message::Grid(d) => d.values.iter().zip(&p.values).map(|(v, pv)| v * pv).collect(),
            })
            .collect()
    });
    let log_mgf = |j: usize, r: f64| -> Result<f64> {
        let lin = r * c;
        let arg = -r * alpha[j];
        match (&weighted, &msgs[j]) {
            (None, Message::Law(l)) => l
                .log_mgf(arg)
                .map(|v| v + lin)
                .ok_or_else(|| Error::InvalidParameter("finite-difference step leaves the MGF domain".into())),
            (None, Message::Grid(d)) => Ok(lin + d.expect(|s| (arg * s).exp()).ln()),
            (Some(w), _) => {
                let g = prior.expect("weights imply a prior").grid();
                Ok(lin + g.points().zip(&w[j]).enumerate().map(|(k, (s, v))| g.weight(k) * v * (arg * s).exp()).sum::<f64>().ln())
            }
        }
    };
    let k_at = |r: f64| -> Result<f64> {
        let mut acc = 0.0;
        for j in (0..n).filter(|&j| j != i) {
            acc += log_mgf(j, r)?;
        }
        Ok(acc)
    };
    let f = |m: f64| k_at(m * h);
    let d3 = (-f(3.0)? + 8.0 * f(2.0)? - 13.0 * f(1.0)? + 13.0 * f(-1.0)? - 8.0 * f(-2.0)? + f(-3.0)?) / (8.0 * h * h * h);
    Ok(d3)
}

/// Edgeworth data of edge `(a, i)` when every message is `init`.
pub fn edgeworth_data_init(inst: &ProblemInstance, a: usize, i: usize, init: &InitDensity) -> EdgeworthData {
    let mom = vec![init.moments(); inst.n()];
    let aai = inst.a[[a, i]];
    let s2: f64 = (0..inst.n()).filter(|&j| j != i).map(|j| inst.a[[a, j]].powi(2)).sum();
    EdgeworthData { p3: edgeworth_p3(inst, a, i, &mom), xhat: inst.y[a] / aai, vhat: init.v0 * s2 / (aai * aai) }
}

/// `sup |hat(s) / (phi(s) EDG(s)) - 1|` over `|s - xhat| <= 3 sqrt(vhat)` for the
/// first hat message built from `init`.
pub fn edgeworth_sup_error(inst: &ProblemInstance, a: usize, i: usize, init: &InitDensity, points: usize) -> Result<f64> {
    let ed = edgeworth_data_init(inst, a, i, init);
    let sd = ed.vhat.sqrt();
    let grid = Grid { lo: ed.xhat - 3.0 * sd, step: 6.0 * sd / (points - 1) as f64, len: points };
    let msgs = vec![Message::Law(*init); inst.n()];
    let exact = hat_density_values(inst, i, a, &msgs, &grid)?;
    let mut worst = 0.0f64;
    for (k, e) in exact.iter().enumerate() {
        let s = grid.point(k);
        let phi = (-(s - ed.xhat).powi(2) / (2.0 * ed.vhat)).exp() / (2.0 * std::f64::consts::PI * ed.vhat).sqrt();
        worst = worst.max((e / (phi * edg_factor(s, &ed)) - 1.0).abs());
    }
    Ok(worst)
}
