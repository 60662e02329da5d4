//! Brute-force oracles: the alternating chaos expansion of the MP iterates,
//! its split into an anchor-free part and a boundary part, Wick pairings,
//! and Monte-Carlo second moments of off-diagonal chaoses.

use ndarray::{Array2, ArrayView2};

use crate::ensemble::{Family, ProblemInstance};
use crate::error::{Error, Result};
use crate::schedule::VarianceSchedule;
use crate::seed;

pub const TERM_CAP: f64 = 1e8;
pub const MAX_WICK_NODES: usize = 12;

/// Anchored index sets of depth `lambda`: row tuples with `b1 != a`,
/// `b_k != b_{k+1}`; column tuples with `j1 = i`, `j_k != j_{k+1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChaosIndexSets {
    pub lambda: usize,
    pub anchor_row: usize,
    pub anchor_col: usize,
    pub m: usize,
    pub n: usize,
}

impl ChaosIndexSets {
    pub fn row_count(&self) -> f64 {
        ((self.m - 1) as f64).powi(self.lambda as i32)
    }

    pub fn col_count(&self) -> f64 {
        ((self.n - 1) as f64).powi(self.lambda as i32 - 1)
    }

    /// Calls `f` on every row tuple, depth first.
    pub fn for_each_rows(&self, mut f: impl FnMut(&[usize])) {
        let mut buf = vec![0; self.lambda];
        walk_chain(&mut buf, 0, self.m, Some(self.anchor_row), &mut f);
    }

    /// Calls `f` on every column tuple, depth first.
    pub fn for_each_cols(&self, mut f: impl FnMut(&[usize])) {
        let mut buf = vec![0; self.lambda];
        buf[0] = self.anchor_col;
        walk_chain(&mut buf, 1, self.n, None, &mut f);
    }
}

// Fills buf[k..] so that adjacent entries differ; `first_excl` also bars buf[0].
fn walk_chain(buf: &mut [usize], k: usize, range: usize, first_excl: Option<usize>, f: &mut impl FnMut(&[usize])) {
    if k == buf.len() {
        f(buf);
        return;
    }
    let barred = if k == 0 { first_excl } else { Some(buf[k - 1]) };
    for c in 0..range {
        if Some(c) == barred {
            continue;
        }
        buf[k] = c;
        walk_chain(buf, k + 1, range, first_excl, f);
    }
}

fn check_anchor(inst: &ProblemInstance, t: u32, i: usize, a: usize) -> Result<()> {
    if t == 0 {
        return Err(Error::InvalidParameter("chaos expansion needs t >= 1".into()));
    }
    if a >= inst.m() || i >= inst.n() {
        return Err(Error::InvalidParameter(format!("anchor (i={i}, a={a}) out of range")));
    }
    Ok(())
}

fn check_cap(count: f64) -> Result<()> {
    if count > TERM_CAP {
        return Err(Error::TermCap { count, cap: TERM_CAP });
    }
    Ok(())
}

fn signed_gamma(sched: &VarianceSchedule, t: u32, lambda: usize) -> Result<f64> {
    let sign = if lambda % 2 == 1 { 1.0 } else { -1.0 };
    Ok(sign * sched.gamma_lambda(t, lambda as u32)?)
}

/// Per-depth sums `sum_B sum_J y_{b_l} A_{b1 j1} prod A_{b_k j_{k+1}} A_{b_{k+1} j_{k+1}}`
/// for `l = 1..=t`, by one joint depth-first walk.
pub fn chaos_terms(inst: &ProblemInstance, t: u32, i: usize, a: usize) -> Result<Vec<f64>> {
    check_anchor(inst, t, i, a)?;
    let (m, n) = inst.a.dim();
    let count: f64 = (1..=t as usize)
        .map(|l| ChaosIndexSets { lambda: l, anchor_row: a, anchor_col: i, m, n })
        .map(|s| s.row_count() * s.col_count())
        .sum();
    check_cap(count)?;

    fn go(inst: &ProblemInstance, depth: usize, b: usize, j: usize, prod: f64, sums: &mut [f64]) {
        sums[depth - 1] += inst.y[b] * prod;
        if depth == sums.len() {
            return;
        }
        let (m, n) = inst.a.dim();
        for j2 in (0..n).filter(|&c| c != j) {
            let left = prod * inst.a[[b, j2]];
            for b2 in (0..m).filter(|&r| r != b) {
                go(inst, depth + 1, b2, j2, left * inst.a[[b2, j2]], sums);
            }
        }
    }

    let mut sums = vec![0.0; t as usize];
    for b1 in (0..m).filter(|&r| r != a) {
        go(inst, 1, b1, i, inst.a[[b1, i]], &mut sums);
    }
    Ok(sums)
}

/// MP iterate `x^(t)_{i->a}` from the alternating chaos expansion.
pub fn chaos_mean(inst: &ProblemInstance, sched: &VarianceSchedule, t: u32, i: usize, a: usize) -> Result<f64> {
    let terms = chaos_terms(inst, t, i, a)?;
    let mut acc = 0.0;
    for (l, s) in terms.iter().enumerate() {
        acc += signed_gamma(sched, t, l + 1)? * s;
    }
    Ok(acc)
}

/// `f(b) = sum over column tuples anchored at i` for a fixed row tuple.
pub fn f_rows(inst: &ProblemInstance, rows: &[usize], i: usize) -> f64 {
    fn go(inst: &ProblemInstance, rows: &[usize], k: usize, j: usize, prod: f64) -> f64 {
        if k + 1 == rows.len() {
            return inst.y[rows[k]] * prod;
        }
        let n = inst.n();
        let mut acc = 0.0;
        for j2 in (0..n).filter(|&c| c != j) {
            acc += go(inst, rows, k + 1, j2, prod * inst.a[[rows[k], j2]] * inst.a[[rows[k + 1], j2]]);
        }
        acc
    }
    go(inst, rows, 0, i, inst.a[[rows[0], i]])
}

#[derive(Debug, Clone, PartialEq)]
pub struct XzSplit {
    /// Gamma-weighted alternating sum of the anchor-free parts.
    pub x_part: f64,
    /// Gamma-weighted alternating sum of the boundary parts.
    pub z_part: f64,
    /// Unweighted `x^[l]` for `l = 1..=t`.
    pub x_levels: Vec<f64>,
    /// Unweighted `z^[l]` for `l = 1..=t`.
    pub z_levels: Vec<f64>,
}

/// Inclusion-exclusion over the set `S` of positions `k` at which `b_k = b_{k-1}`
/// is enforced (`b_0 = a`); `S` containing position 1 goes to the boundary part.
pub fn decompose_xz(inst: &ProblemInstance, sched: &VarianceSchedule, t: u32, i: usize, a: usize) -> Result<XzSplit> {
    check_anchor(inst, t, i, a)?;
    let (m, n) = inst.a.dim();
    let count: f64 = (1..=t as i32).map(|l| (m as f64).powi(l) * ((n - 1) as f64).powi(l - 1)).sum();
    check_cap(count)?;
    let mut x_levels = vec![0.0; t as usize];
    let mut z_levels = vec![0.0; t as usize];
    for l in 1..=t as usize {
        let mut rows = vec![0usize; l];
        let total = m.pow(l as u32);
        for code in 0..total {
            let mut c = code;
            for r in rows.iter_mut() {
                *r = c % m;
                c /= m;
            }
            // positions (0-based) where b_k equals its predecessor
            let mut eq_mask = 0u32;
            for k in 0..l {
                let prev = if k == 0 { a } else { rows[k - 1] };
                if rows[k] == prev {
                    eq_mask |= 1 << k;
                }
            }
            let (mut wx, mut wz) = (0i64, 0i64);
            let mut sub = eq_mask;
            loop {
                let sign = if sub.count_ones().is_multiple_of(2) { 1 } else { -1 };
                if sub & 1 == 0 {
                    wx += sign;
                } else {
                    wz += sign;
                }
                if sub == 0 {
                    break;
                }
                sub = (sub - 1) & eq_mask;
            }
            if wx == 0 && wz == 0 {
                continue;
            }
            let f = f_rows(inst, &rows, i);
            x_levels[l - 1] += wx as f64 * f;
            z_levels[l - 1] += wz as f64 * f;
        }
    }
    let (mut x_part, mut z_part) = (0.0, 0.0);
    for l in 0..t as usize {
        let g = signed_gamma(sched, t, l + 1)?;
        x_part += g * x_levels[l];
        z_part += g * z_levels[l];
    }
    Ok(XzSplit { x_part, z_part, x_levels, z_levels })
}

/// `sum_b sum_{j != i} A_bi A_bj Y_{b->j}` where `Y` is the boundary part.
/// This is the correction an AMP iterate would need to match the BP mean.
pub fn boundary_feedback(inst: &ProblemInstance, sched: &VarianceSchedule, t: u32, i: usize) -> Result<f64> {
    let mut acc = 0.0;
    for b in 0..inst.m() {
        for j in (0..inst.n()).filter(|&j| j != i) {
            acc += inst.a[[b, i]] * inst.a[[b, j]] * decompose_xz(inst, sched, t, j, b)?.z_part;
        }
    }
    Ok(acc)
}

/// All perfect matchings of `nodes.len()` positions.
#[derive(Debug, Clone, PartialEq)]
pub struct PairingTable {
    pub nodes: Vec<usize>,
    pub pairings: Vec<Vec<(usize, usize)>>,
}

impl PairingTable {
    pub fn new(nodes: Vec<usize>) -> Result<Self> {
        if nodes.len() > MAX_WICK_NODES {
            return Err(Error::InvalidParameter(format!("at most {MAX_WICK_NODES} nodes, got {}", nodes.len())));
        }
        let mut pairings = Vec::new();
        if nodes.len().is_multiple_of(2) {
            let mut free: Vec<usize> = (0..nodes.len()).collect();
            let mut cur = Vec::with_capacity(nodes.len() / 2);
            enumerate_matchings(&mut free, &mut cur, &mut pairings);
        }
        Ok(PairingTable { nodes, pairings })
    }

    /// Number of matchings pairing equal labels: `E[prod g_label]` for
    /// independent standard Gaussians indexed by label.
    pub fn kronecker_count(&self) -> usize {
        self.pairings.iter().filter(|p| p.iter().all(|&(u, v)| self.nodes[u] == self.nodes[v])).count()
    }
}

fn enumerate_matchings(free: &mut Vec<usize>, cur: &mut Vec<(usize, usize)>, out: &mut Vec<Vec<(usize, usize)>>) {
    if free.is_empty() {
        out.push(cur.clone());
        return;
    }
    let first = free.remove(0);
    for k in 0..free.len() {
        let partner = free.remove(k);
        cur.push((first, partner));
        enumerate_matchings(free, cur, out);
        cur.pop();
        free.insert(k, partner);
    }
    free.insert(0, first);
}

/// `E[g_1 ... g_k]` for a centred Gaussian vector with covariance `cov`.
pub fn wick_expectation(cov: ArrayView2<f64>) -> Result<f64> {
    let k = cov.nrows();
    if cov.ncols() != k {
        return Err(Error::InvalidDimensions("covariance must be square".into()));
    }
    if k % 2 == 1 {
        return Ok(0.0);
    }
    let table = PairingTable::new((0..k).collect())?;
    Ok(table.pairings.iter().map(|p| p.iter().map(|&(u, v)| cov[[u, v]]).product::<f64>()).sum())
}

/// Node covariance for nodes carrying `labels` into a label covariance.
pub fn node_cov(labels: &[usize], label_cov: ArrayView2<f64>) -> Array2<f64> {
    Array2::from_shape_fn((labels.len(), labels.len()), |(p, q)| label_cov[[labels[p], labels[q]]])
}

/// `m^{-r/2} sum_{n_k != n_{k+1}} prod_k xi_{n_k}` by the transfer recursion.
pub fn offdiag_chaos(xi: &[f64], r: usize) -> f64 {
    let mut u = xi.to_vec();
    for _ in 1..r {
        let total: f64 = u.iter().sum();
        for (uk, x) in u.iter_mut().zip(xi) {
            *uk = x * (total - *uk);
        }
    }
    u.iter().sum::<f64>() / (xi.len() as f64).powf(r as f64 / 2.0)
}

/// Exact `E[chi_r^2]` under Gaussian entries by enumerating all tuple pairs.
pub fn offdiag_chaos_l2_gaussian_exact(r: usize, m: usize) -> Result<f64> {
    let mut tuples = Vec::new();
    let mut buf = vec![0; r];
    walk_chain(&mut buf, 0, m, None, &mut |t: &[usize]| tuples.push(t.to_vec()));
    let mut acc = 0.0;
    for p in &tuples {
        for q in &tuples {
            let labels: Vec<usize> = p.iter().chain(q.iter()).copied().collect();
            acc += PairingTable::new(labels)?.kronecker_count() as f64;
        }
    }
    Ok(acc / (m as f64).powi(r as i32))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct L2Comparison {
    pub l2_a: f64,
    pub se_a: f64,
    pub l2_b: f64,
    pub se_b: f64,
}

/// Monte-Carlo `E[chi_r^2]` under two unit-variance entry laws.
pub fn chaos_l2_compare(
    family_a: Family,
    family_b: Family,
    r: usize,
    m: usize,
    trials: usize,
    seed: u64,
) -> Result<L2Comparison> {
    if trials < 1000 {
        return Err(Error::InvalidParameter(format!("need at least 1000 trials, got {trials}")));
    }
    if r == 0 || r > 4 || m == 0 || m > 64 {
        return Err(Error::InvalidParameter(format!("need 1 <= r <= 4 and 1 <= m <= 64, got r={r} m={m}")));
    }
    let estimate = |family: Family, stream: u64| {
        let mut rng = seed::rng(seed::mix(seed, stream));
        let mut xi = vec![0.0; m];
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..trials {
            for x in xi.iter_mut() {
                *x = family.sample_unit(&mut rng);
            }
            let c = offdiag_chaos(&xi, r);
            s1 += c * c;
            s2 += c.powi(4);
        }
        let tn = trials as f64;
        let mean = s1 / tn;
        let var = (s2 / tn - mean * mean).max(0.0) * tn / (tn - 1.0);
        (mean, (var / tn).sqrt())
    };
    let (l2_a, se_a) = estimate(family_a, 0);
    let (l2_b, se_b) = estimate(family_b, 1);
    Ok(L2Comparison { l2_a, se_a, l2_b, se_b })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{EnsembleSpec, OutcomeMode};
    use crate::gaussian_bp::mp_step;
    use ndarray::array;

    fn inst(m: usize, n: usize, seed: u64) -> ProblemInstance {
        ProblemInstance::generate(EnsembleSpec::new(Family::Gaussian, m, n, seed).unwrap(), OutcomeMode::UniformBox).unwrap()
    }

    #[test]
    fn index_set_sizes() {
        let s = ChaosIndexSets { lambda: 3, anchor_row: 1, anchor_col: 2, m: 4, n: 5 };
        let mut rows = 0;
        s.for_each_rows(|b| {
            assert!(b[0] != 1 && b[0] != b[1] && b[1] != b[2]);
            rows += 1;
        });
        let mut cols = 0;
        s.for_each_cols(|j| {
            assert!(j[0] == 2 && j[0] != j[1] && j[1] != j[2]);
            cols += 1;
        });
        assert_eq!(rows as f64, s.row_count());
        assert_eq!(cols as f64, s.col_count());
    }

    #[test]
    fn first_level_is_leave_one_out_sum() {
        let p = inst(3, 5, 1);
        let sc = VarianceSchedule::new(1.0, 0.5, p.delta).unwrap();
        let got = chaos_mean(&p, &sc, 1, 2, 0).unwrap();
        let want = sc.delta_t(0) * (1..3).map(|b| p.y[b] * p.a[[b, 2]]).sum::<f64>();
        assert!((got - want).abs() < 1e-15);
    }

    #[test]
    fn joint_walk_matches_separate_index_sets() {
        let p = inst(3, 4, 8);
        let terms = chaos_terms(&p, 3, 1, 2).unwrap();
        let sets = ChaosIndexSets { lambda: 3, anchor_row: 2, anchor_col: 1, m: 3, n: 4 };
        let mut acc = 0.0;
        sets.for_each_rows(|b| {
            sets.for_each_cols(|j| {
                let mut prod = p.y[b[2]] * p.a[[b[0], j[0]]];
                for k in 0..2 {
                    prod *= p.a[[b[k], j[k + 1]]] * p.a[[b[k + 1], j[k + 1]]];
                }
                acc += prod;
            })
        });
        assert!((terms[2] - acc).abs() < 1e-13 * (1.0 + acc.abs()));
    }

    #[test]
    fn zero_outcome_vanishes() {
        let mut p = inst(4, 6, 2);
        p.y.fill(0.0);
        let sc = VarianceSchedule::new(1.0, 1.0, p.delta).unwrap();
        for t in 1..=3 {
            assert_eq!(chaos_mean(&p, &sc, t, 0, 1).unwrap(), 0.0);
        }
    }

    #[test]
    fn two_steps_equal_mp() {
        let p = inst(3, 4, 11);
        let sc = VarianceSchedule::new(1.0, 0.5, p.delta).unwrap();
        let x1 = mp_step(&p, &Array2::zeros((3, 4)), &sc, 0).unwrap();
        let x2 = mp_step(&p, &x1, &sc, 1).unwrap();
        for ((a, i), want) in x2.indexed_iter() {
            let got = chaos_mean(&p, &sc, 2, i, a).unwrap();
            assert!((got - want).abs() <= 1e-12 * (1.0 + want.abs()), "{got} vs {want}");
        }
    }

    #[test]
    fn split_matches_simplified_sums() {
        let p = inst(4, 5, 3);
        let sc = VarianceSchedule::new(1.0, 1.0, p.delta).unwrap();
        let (i, a) = (2, 1);
        let d = decompose_xz(&p, &sc, 3, i, a).unwrap();
        for l in 1..=3usize {
            let (mut x, mut z) = (0.0, 0.0);
            let mut rows = vec![0; l];
            for code in 0..4usize.pow(l as u32) {
                let mut c = code;
                for r in rows.iter_mut() {
                    *r = c % 4;
                    c /= 4;
                }
                if (1..l).any(|k| rows[k] == rows[k - 1]) {
                    continue;
                }
                let f = f_rows(&p, &rows, i);
                x += f;
                if rows[0] == a {
                    z -= f;
                }
            }
            assert!((d.x_levels[l - 1] - x).abs() < 1e-12 * (1.0 + x.abs()));
            assert!((d.z_levels[l - 1] - z).abs() < 1e-12 * (1.0 + z.abs()));
        }
        let cm = chaos_mean(&p, &sc, 3, i, a).unwrap();
        assert!((d.x_part + d.z_part - cm).abs() < 1e-12 * (1.0 + cm.abs()));
        let other = decompose_xz(&p, &sc, 3, i, 3).unwrap();
        assert_eq!(d.x_part, other.x_part);
    }

    #[test]
    fn term_cap_enforced() {
        let p = inst(60, 120, 1);
        let sc = VarianceSchedule::new(1.0, 1.0, p.delta).unwrap();
        assert!(matches!(chaos_mean(&p, &sc, 5, 0, 0), Err(Error::TermCap { .. })));
    }

    #[test]
    fn wick_small_cases() {
        let rho = 0.3;
        assert!((wick_expectation(array![[1.0, rho], [rho, 1.0]].view()).unwrap() - rho).abs() < 1e-15);
        assert_eq!(wick_expectation(Array2::<f64>::ones((4, 4)).view()).unwrap(), 3.0);
        assert_eq!(wick_expectation(Array2::<f64>::ones((6, 6)).view()).unwrap(), 15.0);
        assert_eq!(wick_expectation(Array2::<f64>::ones((3, 3)).view()).unwrap(), 0.0);
        assert_eq!(PairingTable::new(vec![1, 1, 2, 2, 3, 3]).unwrap().kronecker_count(), 1);
        assert!(PairingTable::new(vec![0; 14]).is_err());
    }

    #[test]
    fn pairing_counts_are_double_factorials() {
        let mut df = 1usize;
        for k in 1..=6 {
            df *= 2 * k - 1;
            let t = PairingTable::new((0..2 * k).collect()).unwrap();
            assert_eq!(t.pairings.len(), df);
            for p in &t.pairings {
                let mut seen = vec![false; 2 * k];
                for &(u, v) in p {
                    assert!(!seen[u] && !seen[v] && u != v);
                    seen[u] = true;
                    seen[v] = true;
                }
            }
        }
    }

    #[test]
    fn chaos_transfer_matches_enumeration() {
        let xi = [0.3, -1.2, 0.7, 2.0, -0.4];
        for r in 1..=4 {
            let mut acc = 0.0;
            let mut buf = vec![0; r];
            walk_chain(&mut buf, 0, xi.len(), None, &mut |t: &[usize]| acc += t.iter().map(|&k| xi[k]).product::<f64>());
            let want = acc / (xi.len() as f64).powf(r as f64 / 2.0);
            assert!((offdiag_chaos(&xi, r) - want).abs() < 1e-13);
        }
    }

    #[test]
    fn exact_second_moment_r2() {
        for m in [3usize, 4, 5] {
            let e = offdiag_chaos_l2_gaussian_exact(2, m).unwrap();
            assert!((e - 2.0 * (m as f64 - 1.0) / m as f64).abs() < 1e-13);
        }
    }

    #[test]
    fn l2_compare_validates_and_r1_is_one() {
        assert!(chaos_l2_compare(Family::Gaussian, Family::Rademacher, 2, 8, 999, 0).is_err());
        let c = chaos_l2_compare(Family::Gaussian, Family::Uniform, 1, 16, 20_000, 4).unwrap();
        assert!((c.l2_a - 1.0).abs() < 3.0 * c.se_a && (c.l2_b - 1.0).abs() < 3.0 * c.se_b);
    }
}
