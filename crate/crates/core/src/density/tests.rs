use ndarray::array;

use super::*;
use crate::ensemble::{EnsembleSpec, Family, OutcomeMode, ProblemInstance};

fn inst(m: usize, n: usize, seed: u64) -> ProblemInstance {
    ProblemInstance::generate(EnsembleSpec::new(Family::Gaussian, m, n, seed).unwrap(), OutcomeMode::UniformBox).unwrap()
}

fn phi(mu: f64, var: f64, s: f64) -> f64 {
    (-(s - mu).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

fn law(l: InitLaw, v: f64) -> Message {
    Message::Law(InitDensity::new(l, v).unwrap())
}

#[test]
fn gaussian_hat_closure() {
    let p = inst(8, 16, 3);
    let msgs = vec![law(InitLaw::Gauss, 0.8); 16];
    for (a, i) in [(0, 0), (3, 7), (7, 15)] {
        let aai = p.a[[a, i]];
        let mean = p.y[a] / aai;
        let var = 0.8 * (0..16).filter(|&j| j != i).map(|j| p.a[[a, j]].powi(2)).sum::<f64>() / (aai * aai);
        let g = Grid { lo: mean - 10.0 * var.sqrt(), step: 20.0 * var.sqrt() / 1023.0, len: 1024 };
        let m = hat_density(&p, i, a, &msgs, &g).unwrap().moments();
        assert!((m.m1 - mean).abs() <= 1e-4 * mean.abs().max(var.sqrt()), "{} vs {mean}", m.m1);
        assert!((m.var / var - 1.0).abs() < 1e-4);
    }
}

#[test]
fn single_summand_is_an_affine_image() {
    let p = ProblemInstance::from_parts(array![[0.5, 0.8]], array![0.3]).unwrap();
    let g = Grid::symmetric(12.0, 1024);
    let msgs = vec![law(InitLaw::Gauss, 1.0), law(InitLaw::Gauss, 0.7)];
    let d = hat_density(&p, 0, 0, &msgs, &g).unwrap();
    // (0.3 - 0.8 xi) / 0.5 ~ N(0.6, 0.7 * 2.56)
    for (k, v) in d.values.iter().enumerate() {
        assert!((v - phi(0.6, 0.7 * 2.56, g.point(k))).abs() < 1e-8);
    }
    let msgs = vec![law(InitLaw::Laplace, 1.0), law(InitLaw::Laplace, 0.7)];
    let m = hat_density(&p, 0, 0, &msgs, &g).unwrap().moments();
    assert!((m.m1 - 0.6).abs() < 1e-3 && (m.var / (0.7 * 2.56) - 1.0).abs() < 1e-2, "{m:?}");
}

#[test]
fn symmetric_inputs_give_symmetric_hat() {
    let mut p = inst(4, 10, 5);
    p.y[1] = 0.0;
    let g = Grid::symmetric(12.0, 512);
    for l in [InitLaw::Uniform, InitLaw::Laplace, InitLaw::Gauss] {
        let d = hat_density(&p, 2, 1, &vec![law(l, 1.0); 10], &g).unwrap();
        let m = d.moments();
        assert!(m.m1.abs() < 1e-6 && m.m3_central.abs() < 1e-6, "{l:?} {m:?}");
        assert!((d.integral() - 1.0).abs() < 1e-8);
    }
}

#[test]
fn node_density_closed_forms() {
    let g = Grid::symmetric(12.0, 1024);
    let pri = prior(2.0, 0.75, &g).unwrap();
    let h = GridDensity::from_fn(&g, |s| phi(1.2, 0.5, s)).unwrap();
    let m = node_density(&pri, std::slice::from_ref(&h)).unwrap().moments();
    let var = 1.0 / (2.0 * 0.75 + 2.0);
    assert!((m.var - var).abs() < 1e-6 && (m.m1 - var * 1.2 / 0.5).abs() < 1e-6);

    let flat = GridDensity::from_fn(&g, |_| 1.0).unwrap();
    let same = node_density(&pri, &[flat.clone(), flat]).unwrap();
    assert!(same.values.iter().zip(&pri.values).all(|(p, q)| (p - q).abs() < 1e-12));

    let hats: Vec<GridDensity> = [(0.5, 1.0), (-1.0, 2.0), (2.0, 0.7)]
        .iter()
        .map(|&(mu, v)| GridDensity::from_fn(&g, |s| phi(mu, v, s)).unwrap())
        .collect();
    let m = node_density(&pri, &hats).unwrap().moments();
    let prec = 2.0 * 0.75 + 1.0 + 0.5 + 1.0 / 0.7;
    let mean = (0.5 / 1.0 - 1.0 / 2.0 + 2.0 / 0.7) / prec;
    assert!((m.m1 - mean).abs() < 1e-6 && (m.var - 1.0 / prec).abs() < 1e-6);

    let zero = GridDensity { values: vec![0.0; 1024], ..pri.clone() };
    assert!(node_density(&pri, &[zero]).is_err());
}

#[test]
fn edg_factor_examples() {
    let ed = EdgeworthData { p3: 0.0, xhat: 0.3, vhat: 2.0 };
    assert!([-3.0, 0.0, 1.7].iter().all(|s| edg_factor(*s, &ed) == 1.0));
    let ed = EdgeworthData { p3: 1.3, xhat: 0.3, vhat: 2.0 };
    for sign in [-1.0, 1.0] {
        assert!((edg_factor(0.3 + sign * (3.0f64 * 2.0).sqrt(), &ed) - 1.0).abs() < 1e-12);
    }
    let ed = EdgeworthData { p3: 6.0, xhat: 0.0, vhat: 1.0 };
    assert_eq!(edg_factor(2.0, &ed), 3.0);
}

#[test]
fn p3_examples() {
    let p = ProblemInstance::from_parts(array![[1.0, 1.0]], array![0.0]).unwrap();
    let m = Moments { m1: 0.0, var: 1.0, m3_central: 6.0, m4_central: 0.0, rho3_raw: 6.0 };
    assert_eq!(edgeworth_p3(&p, 0, 0, &[m, m]), -6.0);
    let q = inst(3, 8, 1);
    for l in [InitLaw::Gauss, InitLaw::Uniform, InitLaw::Laplace] {
        let mom = vec![InitDensity::new(l, 1.0).unwrap().moments(); 8];
        assert!(edgeworth_p3(&q, 1, 4, &mom).abs() < 1e-12);
    }
}

#[test]
fn skew_p3_matches_finite_difference() {
    for seed in 0..3 {
        let p = inst(4, 8, seed);
        let init = InitDensity::new(InitLaw::Skew, 1.0).unwrap();
        let mom = vec![init.moments(); 8];
        let msgs = vec![Message::Law(init); 8];
        let exact = edgeworth_p3(&p, 2, 5, &mom);
        let fd = edgeworth_p3_fd(&p, 2, 5, &msgs, None).unwrap();
        assert!((exact - fd).abs() <= 1e-3 * exact.abs().max(1.0), "{exact} vs {fd}");
    }
}

#[test]
fn cumulant_sign_needs_minus_cube() {
    // messages with nonzero means separate the two sign conventions
    let p = inst(3, 6, 7);
    let g = Grid::symmetric(14.0, 4001);
    let shifted: Vec<Message> = (0..6)
        .map(|j| {
            let mu = 0.4 + 0.3 * j as f64;
            Message::Grid(
                GridDensity::from_fn(&g, |s| InitDensity::new(InitLaw::Skew, 0.6).unwrap().pdf(s - mu) + 1e-300).unwrap(),
            )
        })
        .collect();
    let mom: Vec<Moments> = shifted.iter().map(Message::moments).collect();
    let minus = edgeworth_p3(&p, 0, 2, &mom);
    let aai = p.a[[0, 2]];
    let plus = -(0..6)
        .filter(|&j| j != 2)
        .map(|j| p.a[[0, j]].powi(3) * (mom[j].rho3_raw - 3.0 * mom[j].m1 * mom[j].var + mom[j].m1.powi(3)))
        .sum::<f64>()
        / aai.powi(3);
    let fd = edgeworth_p3_fd(&p, 0, 2, &shifted, None).unwrap();
    assert!((minus - fd).abs() <= 1e-4 * fd.abs().max(1.0), "{minus} vs {fd}");
    assert!((plus - fd).abs() > 1e-2 * fd.abs().max(1.0));
}

#[test]
fn prior_weighted_cumulant_is_computable() {
    // the prior-weighted definition differs from the raw-moment display; it
    // must still be finite and vanish for symmetric centred inputs
    let g = Grid::symmetric(12.0, 2001);
    let pri = prior(2.0, 1.0, &g).unwrap();
    for seed in 0..3 {
        let p = inst(3, 7, 20 + seed);
        let msgs = vec![law(InitLaw::Skew, 1.0); 7];
        let weighted = edgeworth_p3_fd(&p, 1, 3, &msgs, Some(&pri)).unwrap();
        assert!(weighted.is_finite());
        let sym = vec![law(InitLaw::Uniform, 1.0); 7];
        assert!(edgeworth_p3_fd(&p, 1, 3, &sym, Some(&pri)).unwrap().abs() < 1e-6);
    }
}

#[test]
fn exact_surrogate_has_no_gap() {
    let g = Grid::symmetric(12.0, 1024);
    let pri = prior(2.0, 1.0, &g).unwrap();
    let d = GridDensity::from_fn(&g, |s| (-s * s).exp() * phi(0.4, 0.9, s)).unwrap();
    let gaps = gaussian_proximity(&d, &pri, 0.4, 0.9, 4).unwrap();
    assert!(gaps.iter().all(|v| *v <= 1e-8), "{gaps:?}");
    let other = gaussian_proximity(&d, &pri, 0.0, 0.9, 4).unwrap();
    assert!(other[0] > 1e-2);
}

#[test]
fn edgeworth_close_for_uniform_hat() {
    let p = inst(16, 32, 2);
    let init = InitDensity::new(InitLaw::Uniform, 1.0).unwrap();
    let err = edgeworth_sup_error(&p, 3, 9, &init, 121).unwrap();
    assert!(err < 0.5, "{err}");
}
