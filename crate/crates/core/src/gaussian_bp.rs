//! Edgewise Gaussian BP for the l2 prior, its MP reduction and the shadow pair.
//!
//! All edge arrays are `m x n` and indexed `[a][i]`: `x[[a, i]]` is the mean of
//! the message from variable `i` to factor `a`, `xhat[[a, i]]` the mean of the
//! message from factor `a` to variable `i`.

use ndarray::{Array1, Array2, Axis, Zip};

use crate::ensemble::ProblemInstance;
use crate::error::{Error, Result};
use crate::schedule::VarianceSchedule;

const MIN_ENTRY: f64 = 1e-30;

#[derive(Debug, Clone, PartialEq)]
pub struct MessageField {
    pub x: Array2<f64>,
    pub v: Array2<f64>,
    pub t: u32,
}

impl MessageField {
    /// `x = 0`, `v = v0` on every edge.
    pub fn initial(m: usize, n: usize, v0: f64) -> Self {
        MessageField { x: Array2::zeros((m, n)), v: Array2::from_elem((m, n), v0), t: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HatField {
    pub xhat: Array2<f64>,
    pub vhat: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShadowField {
    pub mshadow: Array2<f64>,
    pub sshadow: Array2<f64>,
}

fn check_entries(inst: &ProblemInstance) -> Result<()> {
    match inst.a.indexed_iter().find(|(_, v)| !(v.abs() >= MIN_ENTRY)) {
        Some(((row, col), v)) => Err(Error::DegenerateEntry { row, col, value: *v }),
        None => Ok(()),
    }
}

fn check_shape(inst: &ProblemInstance, arr: &Array2<f64>) -> Result<()> {
    if arr.dim() != inst.a.dim() {
        return Err(Error::InvalidDimensions(format!("field {:?} vs matrix {:?}", arr.dim(), inst.a.dim())));
    }
    Ok(())
}

/// Factor-to-variable moments, by full row sums minus the own term.
pub fn hat_update(inst: &ProblemInstance, msgs: &MessageField) -> Result<HatField> {
    check_shape(inst, &msgs.x)?;
    check_shape(inst, &msgs.v)?;
    check_entries(inst)?;
    let a = &inst.a;
    let row_x = (a * &msgs.x).sum_axis(Axis(1));
    let row_v = (&a.mapv(|v| v * v) * &msgs.v).sum_axis(Axis(1));
    let mut xhat = Array2::zeros(a.dim());
    let mut vhat = Array2::zeros(a.dim());
    for ((r, c), &aij) in a.indexed_iter() {
        let a2 = aij * aij;
        xhat[[r, c]] = (inst.y[r] - (row_x[r] - aij * msgs.x[[r, c]])) / aij;
        let vh = (row_v[r] - a2 * msgs.v[[r, c]]) / a2;
        if !(vh > 0.0 && vh.is_finite()) {
            return Err(Error::BadVariance { row: r, col: c, value: vh });
        }
        vhat[[r, c]] = vh;
    }
    Ok(HatField { xhat, vhat })
}

// Precision-weighted leave-one-out combination shared by the node and shadow
// updates: returns (mean, variance) per edge.
fn combine(hat: &HatField, beta: f64) -> Result<(Array2<f64>, Array2<f64>)> {
    let prec = hat.vhat.mapv(|v| 1.0 / v);
    let weighted = &hat.xhat * &prec;
    let col_prec = prec.sum_axis(Axis(0));
    let col_weighted = weighted.sum_axis(Axis(0));
    let mut mean = Array2::zeros(hat.xhat.dim());
    let mut var = Array2::zeros(hat.xhat.dim());
    for ((r, c), p) in prec.indexed_iter() {
        let v = 1.0 / (2.0 * beta + col_prec[c] - p);
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::BadVariance { row: r, col: c, value: v });
        }
        var[[r, c]] = v;
        mean[[r, c]] = v * (col_weighted[c] - weighted[[r, c]]);
    }
    Ok((mean, var))
}

/// Variable-to-factor moments from the hat field under the prior `exp(-beta s^2)`.
pub fn node_update(inst: &ProblemInstance, hat: &HatField, beta: f64) -> Result<MessageField> {
    check_shape(inst, &hat.xhat)?;
    check_shape(inst, &hat.vhat)?;
    let (x, v) = combine(hat, beta)?;
    Ok(MessageField { x, v, t: 0 })
}

/// Shadow pair `(m, s)` computed from any hat field.
pub fn shadow_step(inst: &ProblemInstance, hat: &HatField, beta: f64) -> Result<ShadowField> {
    check_shape(inst, &hat.xhat)?;
    let (mshadow, sshadow) = combine(hat, beta)?;
    Ok(ShadowField { mshadow, sshadow })
}

/// One MP step `x^(t) -> x^(t+1)` with damping `delta_t(t)`, in O(mN).
pub fn mp_step(inst: &ProblemInstance, x: &Array2<f64>, sched: &VarianceSchedule, t: u32) -> Result<Array2<f64>> {
    check_shape(inst, x)?;
    let a = &inst.a;
    let d = sched.delta_t(t);
    // term[b, i] = A_bi (y_b - sum_{j != i} A_bj x_{j->b})
    let row = (a * x).sum_axis(Axis(1));
    let mut term = Array2::zeros(a.dim());
    Zip::indexed(&mut term).and(a).and(x).for_each(|(b, _), out, &abi, &xbi| {
        *out = abi * (inst.y[b] - row[b] + abi * xbi);
    });
    let col = term.sum_axis(Axis(0));
    let mut next = Array2::zeros(a.dim());
    Zip::indexed(&mut next).and(&term).for_each(|(_, i), out, &own| {
        *out = d * (col[i] - own);
    });
    Ok(next)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BpStepSummary {
    pub t: u32,
    pub max_var_dev: f64,
    pub mean_spread_over_a: f64,
    pub max_spread_over_a: f64,
    pub mp_bp_gap: f64,
    pub max_abs_x: f64,
}

#[derive(Debug, Clone)]
pub struct BpTrace {
    pub fields: Vec<MessageField>,
    /// `hats[t]` is computed from `fields[t]`.
    pub hats: Vec<HatField>,
    pub summary: Vec<BpStepSummary>,
}

/// Per-variable `max_a x - min_a x`, averaged and maximised over variables.
pub fn spread_over_a(x: &Array2<f64>) -> (f64, f64) {
    let spreads: Array1<f64> = x.map_axis(Axis(0), |col| {
        let (lo, hi) = col.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
        hi - lo
    });
    let mean = spreads.mean().unwrap_or(0.0);
    (mean, spreads.iter().fold(0.0f64, |acc, v| acc.max(*v)))
}

fn summarise(field: &MessageField, mp: &Array2<f64>, sched: &VarianceSchedule) -> BpStepSummary {
    let vt = sched.v(field.t);
    let (mean_spread, max_spread) = spread_over_a(&field.x);
    BpStepSummary {
        t: field.t,
        max_var_dev: field.v.iter().fold(0.0f64, |acc, v| acc.max((v - vt).abs())),
        mean_spread_over_a: mean_spread,
        max_spread_over_a: max_spread,
        mp_bp_gap: Zip::from(&field.x).and(mp).fold(0.0f64, |acc, p, q| acc.max((p - q).abs())),
        max_abs_x: field.x.iter().fold(0.0f64, |acc, v| acc.max(v.abs())),
    }
}

/// Runs BP from `x = 0, v = v0`, handing every `(field, hat, summary)` to
/// `visit` without retaining the fields.
pub fn run_bp_with(
    inst: &ProblemInstance,
    beta: f64,
    v0: f64,
    tmax: u32,
    mut visit: impl FnMut(&MessageField, Option<&HatField>, &BpStepSummary),
) -> Result<Vec<BpStepSummary>> {
    if tmax < 1 {
        return Err(Error::InvalidParameter("tmax must be at least 1".into()));
    }
    let sched = VarianceSchedule::new(v0, beta, inst.delta)?;
    let mut field = MessageField::initial(inst.m(), inst.n(), v0);
    let mut mp = Array2::zeros(inst.a.dim());
    let mut out = Vec::with_capacity(tmax as usize + 1);
    for t in 0..=tmax {
        let s = summarise(&field, &mp, &sched);
        out.push(s);
        if t == tmax {
            visit(&field, None, &s);
            break;
        }
        let hat = hat_update(inst, &field)?;
        visit(&field, Some(&hat), &s);
        let mut next = node_update(inst, &hat, beta)?;
        next.t = t + 1;
        mp = mp_step(inst, &mp, &sched, t)?;
        field = next;
    }
    Ok(out)
}

pub fn run_bp(inst: &ProblemInstance, beta: f64, v0: f64, tmax: u32) -> Result<BpTrace> {
    let mut fields = Vec::new();
    let mut hats = Vec::new();
    let summary = run_bp_with(inst, beta, v0, tmax, |f, h, _| {
        fields.push(f.clone());
        if let Some(h) = h {
            hats.push(h.clone());
        }
    })?;
    Ok(BpTrace { fields, hats, summary })
}
