//! AMP iteration `X <- X + delta_t A^T (y - A X)`, the least-norm solution and
//! the spectral quantities governing its contraction.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::ensemble::ProblemInstance;
use crate::error::{Error, Result};
use crate::gaussian_bp::run_bp_with;
use crate::linalg::{gram, max_abs, norm2, power_iteration};
use crate::schedule::VarianceSchedule;

pub const POWER_ITERS: usize = 50;
pub const POWER_TOL: f64 = 1e-8;

fn to_na(a: ArrayView2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |r, c| a[[r, c]])
}

/// `x* = A^T (A A^T)^{-1} y` through a Cholesky solve of the Gram system.
pub fn least_norm(inst: &ProblemInstance) -> Result<Array1<f64>> {
    let g = to_na(gram(inst.a.view()).view());
    let chol = g.cholesky().ok_or_else(|| Error::RankDeficient("Gram matrix A A^T is not positive definite".into()))?;
    let u = chol.solve(&DVector::from_iterator(inst.m(), inst.y.iter().copied()));
    let x = inst.a.t().dot(&Array1::from_iter(u.iter().copied()));
    let res = norm2((inst.a.dot(&x) - &inst.y).view());
    if !(res <= 1e-8 * (1.0 + norm2(inst.y.view()))) {
        return Err(Error::RankDeficient(format!("least-norm residual {res:e} too large")));
    }
    Ok(x)
}

pub fn amp_step(inst: &ProblemInstance, x: ArrayView1<f64>, sched: &VarianceSchedule, t: u32) -> Array1<f64> {
    let r = &inst.y - &inst.a.dot(&x);
    &x + &(inst.a.t().dot(&r) * sched.delta_t(t))
}

#[derive(Debug, Clone)]
pub struct AmpTrace {
    pub iterates: Vec<Array1<f64>>,
    pub residual_norm: Vec<f64>,
    pub dist_to_star: Vec<f64>,
    /// Power-method estimate of `||R^(t)||` on the row space (a lower bound).
    pub op_norm_rt: Vec<f64>,
    /// `max |1 - delta_t mu|` over the eigenvalues `mu` of `A A^T`.
    pub op_norm_exact: Vec<f64>,
    pub delta_t: Vec<f64>,
    pub x_star: Array1<f64>,
    /// Whether `beta` meets the contraction threshold.
    pub guaranteed: bool,
    /// Step at which the divergence guard fired.
    pub stopped_at: Option<u32>,
}

/// Row-space operator norm of `I - d A^T A` through its `m x m` twin `I - d G`.
fn rt_power(g: &Array2<f64>, d: f64) -> f64 {
    let (est, _) = power_iteration(g.nrows(), |v| &v - &(g.dot(&v) * d), POWER_ITERS, POWER_TOL);
    est
}

pub fn run_amp(inst: &ProblemInstance, sched: &VarianceSchedule, tmax: u32) -> Result<AmpTrace> {
    let x_star = least_norm(inst)?;
    let g = gram(inst.a.view());
    let eig = to_na(g.view()).symmetric_eigenvalues();
    let (mu_lo, mu_hi) = eig.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    let mut x = Array1::zeros(inst.n());
    let d0 = norm2(x_star.view());
    let mut tr = AmpTrace {
        iterates: Vec::new(),
        residual_norm: Vec::new(),
        dist_to_star: Vec::new(),
        op_norm_rt: Vec::new(),
        op_norm_exact: Vec::new(),
        delta_t: Vec::new(),
        guaranteed: sched.beta >= sched.beta_threshold(),
        stopped_at: None,
        x_star,
    };
    for t in 0..=tmax {
        let dist = norm2((&x - &tr.x_star).view());
        let d = sched.delta_t(t);
        tr.residual_norm.push(norm2((&inst.y - &inst.a.dot(&x)).view()));
        tr.dist_to_star.push(dist);
        tr.delta_t.push(d);
        tr.op_norm_rt.push(rt_power(&g, d));
        tr.op_norm_exact.push((1.0 - d * mu_lo).abs().max((1.0 - d * mu_hi).abs()));
        tr.iterates.push(x.clone());
        if dist > 10.0 * d0 && d0 > 0.0 {
            tr.stopped_at = Some(t);
            break;
        }
        if t < tmax {
            x = amp_step(inst, x.view(), sched, t);
        }
    }
    Ok(tr)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralReport {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub lambda_minus: f64,
    pub lambda_plus: f64,
    /// False when `m >= n`, where the edge comparison does not apply.
    pub comparable: bool,
}

/// Extreme eigenvalues of `delta A A^T` (the nonzero spectrum of `delta A^T A`):
/// power iteration for the top, inverse iteration for the bottom.
pub fn spectral_check(a: ArrayView2<f64>) -> Result<SpectralReport> {
    let (m, n) = a.dim();
    let delta = m as f64 / n as f64;
    let g = gram(a) * delta;
    let (lambda_max, ok) = power_iteration(m, |v| g.dot(&v), 5000, 1e-12);
    if !ok {
        return Err(Error::NoConvergence("power iteration for the top eigenvalue".into()));
    }
    let chol = to_na(g.view()).cholesky().ok_or_else(|| Error::RankDeficient("delta A A^T is singular".into()))?;
    let (inv_top, ok) = power_iteration(
        m,
        |v| {
            let s = chol.solve(&DVector::from_iterator(m, v.iter().copied()));
            Array1::from_iter(s.iter().copied())
        },
        5000,
        1e-12,
    );
    if !ok {
        return Err(Error::NoConvergence("inverse iteration for the bottom eigenvalue".into()));
    }
    let sd = delta.sqrt();
    Ok(SpectralReport {
        lambda_min: 1.0 / inv_top,
        lambda_max,
        lambda_minus: (1.0 - sd).powi(2),
        lambda_plus: (1.0 + sd).powi(2),
        comparable: m < n,
    })
}

/// AMP against the BP edge means averaged over factors, at step `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsensusGap {
    pub t: u32,
    /// `max_i |X_i^(t) - mean_a x_{i->a}^(t)|`.
    pub same_step: f64,
    /// `max_i |X_i^(t) - mean_a x_{i->a}^(t+1)|`; absent at the last step.
    pub next_step: Option<f64>,
}

pub fn consensus_gaps(inst: &ProblemInstance, beta: f64, v0: f64, tmax: u32) -> Result<Vec<ConsensusGap>> {
    let sched = VarianceSchedule::new(v0, beta, inst.delta)?;
    let mut means = Vec::with_capacity(tmax as usize + 1);
    run_bp_with(inst, beta, v0, tmax, |f, _, _| means.push(f.x.mean_axis(Axis(0)).expect("m > 0")))?;
    let mut x = Array1::zeros(inst.n());
    let mut out = Vec::with_capacity(tmax as usize + 1);
    for t in 0..=tmax {
        let gap = |bar: &Array1<f64>| max_abs((&x - bar).iter().copied());
        out.push(ConsensusGap { t, same_step: gap(&means[t as usize]), next_step: means.get(t as usize + 1).map(gap) });
        x = amp_step(inst, x.view(), &sched, t);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{EnsembleSpec, Family, OutcomeMode};
    use ndarray::array;
    use rand::Rng;

    fn inst(m: usize, n: usize, seed: u64) -> ProblemInstance {
        ProblemInstance::generate(EnsembleSpec::new(Family::Gaussian, m, n, seed).unwrap(), OutcomeMode::UniformBox).unwrap()
    }

    #[test]
    fn least_norm_by_hand() {
        let p = ProblemInstance::from_parts(array![[1.0, 1e-3]], array![0.5]).unwrap();
        let x = least_norm(&p).unwrap();
        let s = 1.0 + 1e-6;
        assert!((x[0] - 0.5 / s).abs() < 1e-15 && (x[1] - 0.5e-3 / s).abs() < 1e-15);
        let p = ProblemInstance::from_parts(array![[0.3, -0.4]], array![1.0]).unwrap();
        let x = least_norm(&p).unwrap();
        assert!((x[0] - 1.2).abs() < 1e-14 && (x[1] + 1.6).abs() < 1e-14);
    }

    #[test]
    fn least_norm_beats_feasible_perturbations() {
        let p = inst(50, 100, 3);
        let xs = least_norm(&p).unwrap();
        let g = to_na(gram(p.a.view()).view()).cholesky().unwrap();
        let mut rng = crate::seed::rng(1);
        for _ in 0..100 {
            let w = Array1::from_shape_fn(100, |_| rng.random_range(-1.0..1.0));
            // project w onto the null space of A
            let u = g.solve(&DVector::from_iterator(50, p.a.dot(&w).iter().copied()));
            let z = &xs + &(&w - &p.a.t().dot(&Array1::from_iter(u.iter().copied())));
            assert!(norm2((p.a.dot(&z) - &p.y).view()) < 1e-10);
            assert!(norm2(xs.view()) <= norm2(z.view()) + 1e-12);
        }
    }

    #[test]
    fn fixed_point_and_first_step() {
        let p = inst(20, 40, 5);
        let sc = VarianceSchedule::new(1.0, 2.0, p.delta).unwrap();
        let xs = least_norm(&p).unwrap();
        let next = amp_step(&p, xs.view(), &sc, 3);
        assert!(norm2((&next - &xs).view()) <= 1e-12 * norm2(xs.view()));
        let first = amp_step(&p, Array1::zeros(40).view(), &sc, 0);
        let want = p.a.t().dot(&p.y) * sc.delta_t(0);
        assert!(norm2((&first - &want).view()) < 1e-15);
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn two_steps_match_naive_loop() {
        let p = inst(3, 6, 9);
        let sc = VarianceSchedule::new(1.0, 0.7, p.delta).unwrap();
        let mut x = vec![0.0; 6];
        for t in 0..2 {
            let d = sc.delta_t(t);
            let prev = x.clone();
            for i in 0..6 {
                let mut acc = 0.0;
                for b in 0..3 {
                    acc += p.y[b] * p.a[[b, i]];
                    for j in 0..6 {
                        acc -= p.a[[b, i]] * p.a[[b, j]] * prev[j];
                    }
                }
                x[i] = prev[i] + d * acc;
            }
        }
        let got = amp_step(&p, amp_step(&p, Array1::zeros(6).view(), &sc, 0).view(), &sc, 1);
        for i in 0..6 {
            assert!((got[i] - x[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn zero_outcome_stays_zero() {
        let mut p = inst(10, 20, 1);
        p.y.fill(0.0);
        let tr = run_amp(&p, &VarianceSchedule::new(1.0, 1.0, p.delta).unwrap(), 10).unwrap();
        assert!(tr.iterates.iter().all(|x| x.iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn contraction_bounded_by_exact_norm() {
        let p = inst(60, 120, 4);
        let sc = VarianceSchedule::new(1.0, 2.0, p.delta).unwrap();
        let tr = run_amp(&p, &sc, 30).unwrap();
        for t in 0..tr.dist_to_star.len() - 1 {
            assert!(tr.dist_to_star[t + 1] <= tr.dist_to_star[t] * (tr.op_norm_exact[t] + 1e-10));
            assert!(tr.op_norm_rt[t] <= tr.op_norm_exact[t] * (1.0 + 1e-6));
        }
    }

    #[test]
    fn large_beta_converges_when_top_edge_contracts() {
        // delta = 0.1 keeps |1 - delta mu_max| < 1
        let p = inst(40, 400, 2);
        let sc = VarianceSchedule::new(1.0, 1e6, p.delta).unwrap();
        let tr = run_amp(&p, &sc, 200).unwrap();
        let rate = tr.op_norm_exact[5];
        assert!(rate < 1.0);
        let steps = ((1e-6f64).ln() / rate.ln()).ceil() as usize + 5;
        let rel = tr.dist_to_star[steps] / norm2(tr.x_star.view());
        assert!(rel < 1e-6, "rel {rel} after {steps} steps");
    }

    #[test]
    fn orthonormal_rows_give_flat_spectrum() {
        let q = to_na(inst(4, 8, 7).a.view()).transpose().qr().q();
        let a = Array2::from_shape_fn((4, 8), |(r, c)| q[(c, r)]);
        let rep = spectral_check(a.view()).unwrap();
        assert!((rep.lambda_max - 0.5).abs() < 1e-10 && (rep.lambda_min - 0.5).abs() < 1e-10);
    }

    #[test]
    fn square_matrix_not_comparable() {
        let a = Array2::from_shape_fn((5, 5), |(r, c)| if r == c { 2.0 } else { 0.1 });
        let rep = spectral_check(a.view()).unwrap();
        assert!(!rep.comparable && rep.lambda_max > rep.lambda_min);
    }

    #[test]
    fn iterative_edges_match_dense_eigensolver() {
        let p = inst(80, 160, 12);
        let rep = spectral_check(p.a.view()).unwrap();
        let eig = (to_na(gram(p.a.view()).view()) * p.delta).symmetric_eigenvalues();
        let lo = eig.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!((rep.lambda_max - hi).abs() < 1e-8 * hi && (rep.lambda_min - lo).abs() < 1e-6 * lo);
    }
}
