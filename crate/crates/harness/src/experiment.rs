//! Config-driven replicate fan-out, aggregation and report files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use bpamp_core::amp::{consensus_gaps, run_amp, spectral_check};
use bpamp_core::chaos::{chaos_mean, decompose_xz};
use bpamp_core::density::{run_density_bp, InitDensity, Message, MAX_T};
use bpamp_core::ensemble::{row_col_concentration, sample_matrix, EnsembleSpec, OutcomeMode, ProblemInstance};
use bpamp_core::gaussian_bp::{mp_step, run_bp_with};
use bpamp_core::instance_io::content_hash;
use bpamp_core::linalg::norm2;
use bpamp_core::{Family, VarianceSchedule};
use ndarray::{Array1, Array2, Axis};
use rayon::prelude::*;
use serde::Serialize;

use crate::concentration::replicate_seed;
use crate::config::{Experiment, ExperimentConfig};
use crate::error::{HarnessError, Result};
use crate::fit::{exceedance, fit_scaling, median, quantile, ScalingFit};
use crate::tails::{geomspace, tail_check, Estimator};

/// Medians at or below this are treated as exact zeros.
const DEGENERATE: f64 = 1e-12;

pub const ROW_HEADER: &str = "experiment,N,delta,beta,v0,seed,metric,value";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub experiment: Experiment,
    pub n: usize,
    pub delta: f64,
    pub beta: f64,
    pub v0: f64,
    pub seed: u64,
    pub metric: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub n: usize,
    pub metric: String,
    pub count: usize,
    pub median: f64,
    pub q10: f64,
    pub q90: f64,
    pub q95: f64,
    /// Fraction of replicates above `N^-1/2`.
    pub exceed_alpha: f64,
    /// Fraction of replicates above `N^-0.4`.
    pub exceed_alpha_eps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub n: usize,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InstanceRecord {
    pub n: usize,
    pub seed: u64,
    pub hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitOutcome {
    pub fit: Option<ScalingFit>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub config: ExperimentConfig,
    pub instances: Vec<InstanceRecord>,
    pub failures: Vec<Failure>,
    pub fits: BTreeMap<String, FitOutcome>,
    pub aggregates: Vec<Aggregate>,
    #[serde(skip)]
    pub rows: Vec<ReportRow>,
    #[serde(skip)]
    pub files: Vec<PathBuf>,
}

type Metrics = Vec<(String, f64)>;

fn instance(cfg: &ExperimentConfig, n: usize, seed: u64) -> Result<ProblemInstance> {
    let spec = EnsembleSpec::new(cfg.family, cfg.m_for(n), n, seed)?;
    Ok(ProblemInstance::generate(spec, OutcomeMode::UniformBox)?)
}

fn max_dev<'a>(a: impl Iterator<Item = (&'a f64, &'a f64)>) -> f64 {
    a.fold(0.0, |acc, (x, y)| acc.max((x - y).abs()))
}

fn bp_variance(cfg: &ExperimentConfig, inst: &ProblemInstance) -> Result<Metrics> {
    let sm = run_bp_with(inst, cfg.beta, cfg.v0, cfg.tmax, |_, _, _| {})?;
    let over_t = |f: &dyn Fn(&bpamp_core::gaussian_bp::BpStepSummary) -> f64| sm.iter().map(f).fold(0.0, f64::max);
    Ok(vec![
        ("max_var_dev".into(), over_t(&|s| s.max_var_dev)),
        ("max_spread_over_a_per_t".into(), over_t(&|s| s.max_spread_over_a / s.t.max(1) as f64)),
        ("mean_spread_over_a".into(), over_t(&|s| s.mean_spread_over_a)),
        ("mp_bp_gap".into(), over_t(&|s| s.mp_bp_gap)),
    ])
}

fn bp_consensus(cfg: &ExperimentConfig, inst: &ProblemInstance) -> Result<Metrics> {
    let mut out = Vec::new();
    for g in consensus_gaps(inst, cfg.beta, cfg.v0, cfg.tmax)?.iter().skip(1) {
        out.push((format!("consensus_t{}", g.t), g.same_step));
        if let Some(v) = g.next_step {
            out.push((format!("consensus_next_t{}", g.t), v));
        }
    }
    Ok(out)
}

fn density_init(cfg: &ExperimentConfig) -> Result<Message> {
    Ok(Message::Law(InitDensity::new(cfg.init, cfg.v0)?))
}

fn shadow(cfg: &ExperimentConfig, inst: &ProblemInstance) -> Result<Metrics> {
    let tr = run_density_bp(inst, cfg.q, cfg.beta, &density_init(cfg)?, cfg.tmax.min(MAX_T), cfg.grid_points)?;
    let sched = VarianceSchedule::new(cfg.v0, cfg.beta, inst.delta)?;
    let mut out = Vec::new();
    for st in tr.steps.iter().skip(1) {
        let t = st.t;
        if let Some(sh) = &st.shadow {
            out.push((format!("shadow_mean_gap_t{t}"), max_dev(st.mean.iter().zip(sh.mshadow.iter()))));
            out.push((format!("shadow_var_gap_t{t}"), max_dev(st.var.iter().zip(sh.sshadow.iter()))));
        }
        let vt = sched.v(t);
        out.push((format!("var_dev_t{t}"), st.var.iter().fold(0.0, |acc, v| acc.max((v - vt).abs()))));
    }
    Ok(out)
}

fn density_gauss_gap(cfg: &ExperimentConfig, inst: &ProblemInstance) -> Result<Metrics> {
    let tr = run_density_bp(inst, cfg.q, cfg.beta, &density_init(cfg)?, cfg.tmax.min(MAX_T), cfg.grid_points)?;
    let mut out = Vec::new();
    for st in &tr.steps {
        if let Some(g) = &st.gaps {
            for k in 0..4 {
                let col = g.index_axis(Axis(2), k);
                out.push((format!("gap_k{}_t{}", k + 1, st.t), col.mean().unwrap_or(f64::NAN)));
            }
        }
    }
    Ok(out)
}

fn amp_convergence(cfg: &ExperimentConfig, inst: &ProblemInstance) -> Result<Metrics> {
    let sched = VarianceSchedule::new(cfg.v0, cfg.beta, inst.delta)?;
    let tr = run_amp(inst, &sched, cfg.tmax)?;
    let xs = norm2(tr.x_star.view());
    let last = *tr.dist_to_star.last().expect("at least one step");
    let excess = tr
        .dist_to_star
        .windows(2)
        .zip(&tr.op_norm_exact)
        .filter(|(w, _)| w[0] > 0.0)
        .map(|(w, r)| w[1] / w[0] - r)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut bp_mean = Array1::zeros(inst.n());
    run_bp_with(inst, cfg.beta, cfg.v0, cfg.tmax, |f, _, _| bp_mean = f.x.mean_axis(Axis(0)).expect("m > 0"))?;
    let spec = spectral_check(inst.a.view())?;
    Ok(vec![
        ("rel_dist_final".into(), last / xs),
        ("diverged".into(), if tr.stopped_at.is_some() { 1.0 } else { 0.0 }),
        ("contraction_excess".into(), excess),
        ("bp_rel_dist".into(), norm2((&bp_mean - &tr.x_star).view()) / xs),
        ("lambda_min".into(), spec.lambda_min),
        ("lambda_max".into(), spec.lambda_max),
    ])
}

fn chaos(cfg: &ExperimentConfig, inst: &ProblemInstance) -> Result<Metrics> {
    let t = cfg.tmax.min(3);
    let sched = VarianceSchedule::new(cfg.v0, cfg.beta, inst.delta)?;
    let mut mp = Array2::zeros(inst.a.dim());
    for s in 0..t {
        mp = mp_step(inst, &mp, &sched, s)?;
    }
    let (mut mp_err, mut split_err, mut anchor_gap, mut z_sq) = (0.0f64, 0.0f64, 0.0f64, 0.0);
    for i in 0..inst.n() {
        let mut x_first = None;
        for a in 0..inst.m() {
            let c = chaos_mean(inst, &sched, t, i, a)?;
            let sp = decompose_xz(inst, &sched, t, i, a)?;
            mp_err = mp_err.max((c - mp[[a, i]]).abs() / (1.0 + mp[[a, i]].abs()));
            split_err = split_err.max((sp.x_part + sp.z_part - c).abs());
            let x0 = *x_first.get_or_insert(sp.x_part);
            anchor_gap = anchor_gap.max((sp.x_part - x0).abs());
            z_sq += sp.z_part * sp.z_part;
        }
    }
    Ok(vec![
        ("chaos_mp_rel_err".into(), mp_err),
        ("split_err".into(), split_err),
        ("x_anchor_gap".into(), anchor_gap),
        ("rms_z".into(), (z_sq / (inst.m() * inst.n()) as f64).sqrt()),
    ])
}

pub fn tail_lambdas(p: u32) -> Vec<f64> {
    if p == 1 {
        geomspace(0.5, 5.0, 10)
    } else {
        geomspace(1.0, 1000.0, 31)
    }
}

fn tails(cfg: &ExperimentConfig, n: usize, seed: u64) -> Result<Metrics> {
    let w = vec![1.0 / (n as f64).sqrt(); n];
    let est = if cfg.family == Family::Rademacher { Estimator::Plain } else { Estimator::Conditional };
    let r = tail_check(cfg.family, cfg.p, &w, &tail_lambdas(cfg.p), cfg.trials, seed, est)?;
    let mut out: Metrics = r.rows.iter().map(|row| (format!("survival_at_{}", row.lambda), row.survival)).collect();
    out.push(("dominated".into(), if r.dominated { 1.0 } else { 0.0 }));
    Ok(out)
}

fn concentration(cfg: &ExperimentConfig, n: usize, seed: u64) -> Result<Metrics> {
    let spec = EnsembleSpec::new(cfg.family, cfg.m_for(n), n, seed)?;
    let r = row_col_concentration(sample_matrix(&spec)?.view());
    Ok(vec![("max_row_dev".into(), r.max_row_dev), ("max_col_dev".into(), r.max_col_dev)])
}

/// One replicate: the content hash of its instance (if any) and its metrics.
pub fn replicate(cfg: &ExperimentConfig, n: usize, seed: u64) -> Result<(Option<String>, Metrics)> {
    let with_instance = |f: fn(&ExperimentConfig, &ProblemInstance) -> Result<Metrics>| -> Result<(Option<String>, Metrics)> {
        let inst = instance(cfg, n, seed)?;
        Ok((Some(content_hash(&inst)), f(cfg, &inst)?))
    };
    match cfg.experiment {
        Experiment::BpVariance => with_instance(bp_variance),
        Experiment::BpConsensus => with_instance(bp_consensus),
        Experiment::Shadow => with_instance(shadow),
        Experiment::AmpConvergence => with_instance(amp_convergence),
        Experiment::Chaos => with_instance(chaos),
        Experiment::DensityGaussGap => with_instance(density_gauss_gap),
        Experiment::Tails => Ok((None, tails(cfg, n, seed)?)),
        Experiment::Concentration => Ok((None, concentration(cfg, n, seed)?)),
    }
}

fn aggregate(rows: &[ReportRow]) -> Vec<Aggregate> {
    let mut groups: BTreeMap<(usize, &str), Vec<f64>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.n, r.metric.as_str())).or_default().push(r.value);
    }
    groups
        .into_iter()
        .map(|((n, metric), v)| Aggregate {
            n,
            metric: metric.to_string(),
            count: v.len(),
            median: median(&v),
            q10: quantile(&v, 0.1),
            q90: quantile(&v, 0.9),
            q95: quantile(&v, 0.95),
            exceed_alpha: exceedance(&v, n as f64, -0.5),
            exceed_alpha_eps: exceedance(&v, n as f64, -0.4),
        })
        .collect()
}

fn fits(aggs: &[Aggregate], n_count: usize) -> BTreeMap<String, FitOutcome> {
    let mut by_metric: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
    for a in aggs {
        by_metric.entry(a.metric.as_str()).or_default().push((a.n as f64, a.median));
    }
    by_metric
        .into_iter()
        .map(|(m, pts)| {
            let out = if n_count < 3 {
                FitOutcome { fit: None, note: Some("fewer than 3 N values".into()) }
            } else if pts.iter().all(|p| p.1.abs() <= DEGENERATE) {
                FitOutcome { fit: None, note: Some("degenerate: all medians vanish".into()) }
            } else {
                match fit_scaling(&pts) {
                    Ok(f) => FitOutcome { fit: Some(f), note: None },
                    Err(e) => FitOutcome { fit: None, note: Some(e.to_string()) },
                }
            };
            (m.to_string(), out)
        })
        .collect()
}

/// Runs every `(N, seed)` replicate, aggregates, and returns the report
/// without touching the filesystem.
pub fn execute(cfg: &ExperimentConfig) -> Result<RunReport> {
    cfg.validate()?;
    let jobs: Vec<(usize, u64)> =
        cfg.n_list.iter().flat_map(|&n| (0..cfg.seeds).map(move |s| (n, replicate_seed(cfg.seed, n, s)))).collect();
    let results: Vec<Result<(Option<String>, Metrics)>> = jobs.par_iter().map(|&(n, s)| replicate(cfg, n, s)).collect();
    let mut rows = Vec::new();
    let mut instances = Vec::new();
    let mut failures = Vec::new();
    for (&(n, seed), res) in jobs.iter().zip(results) {
        match res {
            Ok((hash, metrics)) => {
                if let Some(hash) = hash {
                    instances.push(InstanceRecord { n, seed, hash });
                }
                rows.extend(metrics.into_iter().map(|(metric, value)| ReportRow {
                    experiment: cfg.experiment,
                    n,
                    delta: cfg.delta,
                    beta: cfg.beta,
                    v0: cfg.v0,
                    seed,
                    metric,
                    value,
                }));
            }
            Err(e) => failures.push(Failure { n, seed, error: e.to_string() }),
        }
    }
    if 2 * failures.len() > jobs.len() {
        return Err(HarnessError::TooManyFailures {
            failed: failures.len(),
            total: jobs.len(),
            first: failures[0].error.clone(),
        });
    }
    let aggregates = aggregate(&rows);
    let fits = fits(&aggregates, cfg.n_list.len());
    Ok(RunReport { config: cfg.clone(), instances, failures, fits, aggregates, rows, files: Vec::new() })
}

/// Shortest round-trip text, switching to exponent form outside `[1e-4, 1e15)`.
pub fn fmt_num(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || !a.is_finite() || (1e-4..1e15).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

pub fn rows_csv(rows: &[ReportRow]) -> String {
    let mut s = String::from(ROW_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.experiment,
            r.n,
            fmt_num(r.delta),
            fmt_num(r.beta),
            fmt_num(r.v0),
            r.seed,
            r.metric,
            fmt_num(r.value)
        );
    }
    s
}

pub fn aggregates_csv(aggs: &[Aggregate]) -> String {
    let mut s = String::from("N,metric,count,median,q10,q90,q95,exceed_alpha,exceed_alpha_eps\n");
    for a in aggs {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            a.n,
            a.metric,
            a.count,
            fmt_num(a.median),
            fmt_num(a.q10),
            fmt_num(a.q90),
            fmt_num(a.q95),
            fmt_num(a.exceed_alpha),
            fmt_num(a.exceed_alpha_eps)
        );
    }
    s
}

/// gnuplot data: one index block per metric, columns `N median q10 q90`.
pub fn aggregates_dat(aggs: &[Aggregate]) -> String {
    let mut by_metric: BTreeMap<&str, Vec<&Aggregate>> = BTreeMap::new();
    for a in aggs {
        by_metric.entry(a.metric.as_str()).or_default().push(a);
    }
    let mut s = String::new();
    for (metric, list) in by_metric {
        let _ = writeln!(s, "# {metric}\n# N median q10 q90");
        for a in list {
            let _ = writeln!(s, "{} {} {} {}", a.n, fmt_num(a.median), fmt_num(a.q10), fmt_num(a.q90));
        }
        s.push_str("\n\n");
    }
    s
}

/// `execute` plus report files under `cfg.out_dir`: `<experiment>.csv`,
/// `<experiment>_aggregate.csv`, `<experiment>.json` and, if enabled,
/// `<experiment>.dat`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunReport> {
    let mut report = execute(cfg)?;
    fs::create_dir_all(&cfg.out_dir)?;
    let name = cfg.experiment.name();
    let mut json = serde_json::to_string_pretty(&report)?;
    json.push('\n');
    let mut outputs = vec![
        (format!("{name}.csv"), rows_csv(&report.rows)),
        (format!("{name}_aggregate.csv"), aggregates_csv(&report.aggregates)),
        (format!("{name}.json"), json),
    ];
    if cfg.dat {
        outputs.push((format!("{name}.dat"), aggregates_dat(&report.aggregates)));
    }
    for (file, body) in outputs {
        let path = cfg.out_dir.join(file);
        fs::write(&path, body)?;
        report.files.push(path);
    }
    Ok(report)
}
