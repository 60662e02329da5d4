use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bpamp_core::amp::run_amp;
use bpamp_core::chaos::{boundary_feedback, chaos_mean, decompose_xz};
use bpamp_core::density::{run_density_bp, InitDensity, InitLaw, Message};
use bpamp_core::ensemble::{EnsembleSpec, Family, OutcomeMode, ProblemInstance};
use bpamp_core::gaussian_bp::{mp_step, run_bp_with};
use bpamp_core::{instance_io, seed, VarianceSchedule};
use bpamp_harness::concentration::concentration_check;
use bpamp_harness::config::{default_out_dir, ExperimentConfig};
use bpamp_harness::experiment::{fmt_num, run_experiment};
use bpamp_harness::tails::{geomspace, tail_check, Estimator};
use bpamp_harness::{Experiment, HarnessError, Result};
use clap::{Args, Parser, Subcommand};
use ndarray::Array2;

#[derive(Parser)]
#[command(name = "bpamp", version, about = "BP, MP and AMP experiments for least-norm recovery")]
struct Cli {
    /// Base seed (default 0).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output file, or output directory for `study`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    #[arg(long, default_value_t = 1.0)]
    v0: f64,
    #[arg(long, default_value_t = 8)]
    tmax: u32,
}

#[derive(Subcommand)]
enum Cmd {
    /// Sample an instance and write it as CSV.
    Gen {
        #[arg(long, default_value = "gaussian")]
        family: Family,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value = "uniform_box")]
        mode: OutcomeMode,
    },
    /// Tabulate v, delta_t and Gamma_1 = delta_{t-1}.
    Schedule {
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        beta: f64,
        #[arg(long)]
        v0: f64,
        #[arg(long, default_value_t = 20)]
        tmax: u32,
    },
    /// Gaussian BP summary per step.
    BpRun(RunArgs),
    /// Grid-density BP, one row per edge and step.
    DensityRun {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 2.0)]
        q: f64,
        #[arg(long, default_value = "uniform")]
        init: InitLaw,
        #[arg(long, default_value_t = 512)]
        grid_points: usize,
    },
    /// AMP iterates against the least-norm solution.
    AmpRun(RunArgs),
    /// Chaos expansion against MP on small random instances.
    ChaosVerify {
        #[arg(long)]
        m: usize,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 2)]
        t: u32,
        #[arg(long, default_value = "gaussian")]
        family: Family,
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        #[arg(long, default_value_t = 1.0)]
        v0: f64,
        /// Number of instances.
        #[arg(long, default_value_t = 1)]
        trials: usize,
    },
    /// Survival of |sum_j X_j^p / sqrt N| against the sub-Gaussian bound.
    TailCheck {
        #[arg(long, default_value = "gaussian")]
        family: Family,
        #[arg(long, default_value_t = 3)]
        p: u32,
        #[arg(long, default_value_t = 256)]
        n: usize,
        #[arg(long, default_value_t = 100_000)]
        trials: usize,
        #[arg(long, default_value_t = 1.0)]
        lambda_min: f64,
        #[arg(long, default_value_t = 1000.0)]
        lambda_max: f64,
        #[arg(long, default_value_t = 31)]
        lambda_count: usize,
        /// plain or conditional; default picks conditional for continuous laws.
        #[arg(long)]
        estimator: Option<Estimator>,
    },
    /// Config-driven multi-N study.
    Study {
        /// key = value config file.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        experiment: Option<Experiment>,
        /// Comma-separated N values.
        #[arg(long)]
        n_list: Option<String>,
        #[arg(long)]
        seeds: Option<usize>,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        v0: Option<f64>,
        #[arg(long)]
        q: Option<f64>,
        /// Any config key, as key=value; repeatable, applied last.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        sets: Vec<String>,
    },
}

fn emit(out: Option<&Path>, body: &str) -> Result<()> {
    match out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(path, body)?;
            eprintln!("wrote {}", path.display());
        }
        None => print!("{body}"),
    }
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_num).unwrap_or_default()
}

/// Comma-joined numbers.
fn line(xs: &[f64]) -> String {
    xs.iter().map(|x| fmt_num(*x)).collect::<Vec<_>>().join(",")
}

fn gen(cli: &Cli, family: Family, m: usize, n: usize, mode: OutcomeMode) -> Result<()> {
    let base = cli.seed.unwrap_or(0);
    let inst = ProblemInstance::generate(EnsembleSpec::new(family, m, n, base)?, mode)?;
    let path = cli.out.clone().unwrap_or_else(|| default_out_dir().join(format!("instance_{family}_{m}x{n}_{base}.csv")));
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    instance_io::write(&inst, &path)?;
    println!("{} {}", path.display(), instance_io::content_hash(&inst));
    Ok(())
}

fn schedule(cli: &Cli, delta: f64, beta: f64, v0: f64, tmax: u32) -> Result<()> {
    let s = VarianceSchedule::new(v0, beta, delta)?;
    let mut body = String::from("t,v,delta_t,gamma_1\n");
    for t in 0..=tmax {
        let g1 = if t >= 1 { Some(s.gamma_lambda(t, 1)?) } else { None };
        body.push_str(&format!("{t},{},{}\n", line(&[s.v(t), s.delta_t(t)]), opt(g1)));
    }
    emit(cli.out.as_deref(), &body)
}

fn bp_run(cli: &Cli, r: &RunArgs) -> Result<()> {
    let inst = instance_io::read(&r.instance)?;
    let sm = run_bp_with(&inst, r.beta, r.v0, r.tmax, |_, _, _| {})?;
    let mut body = String::from("t,max_var_dev,mean_spread_over_a,max_spread_over_a,mp_bp_gap\n");
    for s in sm {
        body.push_str(&format!("{},{}\n", s.t, line(&[s.max_var_dev, s.mean_spread_over_a, s.max_spread_over_a, s.mp_bp_gap])));
    }
    emit(cli.out.as_deref(), &body)
}

fn density_run(cli: &Cli, r: &RunArgs, q: f64, init: InitLaw, grid_points: usize) -> Result<()> {
    let inst = instance_io::read(&r.instance)?;
    let msg = Message::Law(InitDensity::new(init, r.v0)?);
    let tr = run_density_bp(&inst, q, r.beta, &msg, r.tmax, grid_points)?;
    let mut body = String::from("t,a,i,mean,var,rho3,gap_k1,gap_k2,gap_k3,gap_k4\n");
    for st in &tr.steps {
        for ((a, i), mean) in st.mean.indexed_iter() {
            let gaps: Vec<String> = (0..4).map(|k| opt(st.gaps.as_ref().map(|g| g[[a, i, k]]))).collect();
            body.push_str(&format!("{},{a},{i},{},{}\n", st.t, line(&[*mean, st.var[[a, i]], st.rho3[[a, i]]]), gaps.join(",")));
        }
    }
    emit(cli.out.as_deref(), &body)
}

fn amp_run(cli: &Cli, r: &RunArgs) -> Result<()> {
    let inst = instance_io::read(&r.instance)?;
    let sched = VarianceSchedule::new(r.v0, r.beta, inst.delta)?;
    let tr = run_amp(&inst, &sched, r.tmax)?;
    if !tr.guaranteed {
        eprintln!("note: beta below (1 - delta)/(2 v0) = {}; no contraction guarantee", sched.beta_threshold());
    }
    if let Some(t) = tr.stopped_at {
        eprintln!("note: divergence guard stopped the run at t = {t}");
    }
    let mut body = String::from("t,dist_to_star,residual,delta_t,rnorm_est\n");
    for t in 0..tr.dist_to_star.len() {
        body.push_str(&format!("{t},{}\n", line(&[tr.dist_to_star[t], tr.residual_norm[t], tr.delta_t[t], tr.op_norm_rt[t]])));
    }
    emit(cli.out.as_deref(), &body)
}

#[allow(clippy::too_many_arguments)]
fn chaos_verify(cli: &Cli, m: usize, n: usize, t: u32, family: Family, beta: f64, v0: f64, trials: usize) -> Result<()> {
    let (mut mp_err, mut split_err, mut anchor_gap) = (0.0f64, 0.0f64, 0.0f64);
    let (mut x_sq, mut z_sq, mut z_max, mut fb_sq, mut count) = (0.0, 0.0, 0.0f64, 0.0, 0usize);
    for k in 0..trials.max(1) {
        let base = cli.seed.unwrap_or(0);
        let s = if trials <= 1 { base } else { seed::mix(base, k as u64) };
        let inst = ProblemInstance::generate(EnsembleSpec::new(family, m, n, s)?, OutcomeMode::UniformBox)?;
        let sched = VarianceSchedule::new(v0, beta, inst.delta)?;
        let mut mp = Array2::zeros((m, n));
        for step in 0..t {
            mp = mp_step(&inst, &mp, &sched, step)?;
        }
        for i in 0..n {
            let mut x0 = None;
            for a in 0..m {
                let c = chaos_mean(&inst, &sched, t, i, a)?;
                let sp = decompose_xz(&inst, &sched, t, i, a)?;
                mp_err = mp_err.max((c - mp[[a, i]]).abs() / (1.0 + mp[[a, i]].abs()));
                split_err = split_err.max((sp.x_part + sp.z_part - c).abs());
                anchor_gap = anchor_gap.max((sp.x_part - *x0.get_or_insert(sp.x_part)).abs());
                x_sq += sp.x_part * sp.x_part;
                z_sq += sp.z_part * sp.z_part;
                z_max = z_max.max(sp.z_part.abs());
                count += 1;
            }
            fb_sq += boundary_feedback(&inst, &sched, t, i)?.powi(2);
        }
    }
    let c = count as f64;
    println!("instances: {}  m={m} n={n} t={t} family={family}", trials.max(1));
    println!("chaos_vs_mp_max_rel_err: {mp_err:e}");
    println!("x_plus_z_minus_chaos_max: {split_err:e}");
    println!("x_part_anchor_gap_max: {anchor_gap:e}");
    println!("x_part_rms: {}", (x_sq / c).sqrt());
    println!("z_part_rms: {}", (z_sq / c).sqrt());
    println!("z_part_max_abs: {z_max}");
    println!("boundary_feedback_rms: {}", (fb_sq / (n * trials.max(1)) as f64).sqrt());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn tail(
    cli: &Cli,
    family: Family,
    p: u32,
    n: usize,
    trials: usize,
    lo: f64,
    hi: f64,
    count: usize,
    est: Option<Estimator>,
) -> Result<()> {
    let est = est.unwrap_or(if family == Family::Rademacher { Estimator::Plain } else { Estimator::Conditional });
    let w = vec![1.0 / (n as f64).sqrt(); n];
    let r = tail_check(family, p, &w, &geomspace(lo, hi, count), trials, cli.seed.unwrap_or(0), est)?;
    eprintln!(
        "K={} crossover={} front_constant={} dominated={} degenerate={}",
        r.k,
        opt(r.crossover),
        opt(r.front_constant),
        r.dominated,
        r.degenerate
    );
    let mut body = String::from("lambda,survival,se,bound,scaled_bound\n");
    for row in &r.rows {
        body.push_str(&format!("{}\n", line(&[row.lambda, row.survival, row.se, row.bound, row.scaled_bound])));
    }
    emit(cli.out.as_deref(), &body)
}

#[allow(clippy::too_many_arguments)]
fn study(
    cli: &Cli,
    config: Option<&Path>,
    experiment: Option<Experiment>,
    n_list: Option<&str>,
    seeds: Option<usize>,
    delta: Option<f64>,
    beta: Option<f64>,
    v0: Option<f64>,
    q: Option<f64>,
    sets: &[String],
) -> Result<()> {
    let mut cfg = match (config, experiment) {
        (Some(path), _) => ExperimentConfig::parse(&fs::read_to_string(path)?)?,
        (None, Some(e)) => ExperimentConfig::new(e),
        (None, None) => return Err(HarnessError::Config("give --config or --experiment".into())),
    };
    if let Some(e) = experiment {
        cfg.experiment = e;
    }
    if let Some(v) = n_list {
        cfg.set("n_list", v)?;
    }
    cfg.seeds = seeds.unwrap_or(cfg.seeds);
    cfg.delta = delta.unwrap_or(cfg.delta);
    cfg.beta = beta.unwrap_or(cfg.beta);
    cfg.v0 = v0.unwrap_or(cfg.v0);
    cfg.q = q.unwrap_or(cfg.q);
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    for kv in sets {
        let (k, v) = kv.split_once('=').ok_or_else(|| HarnessError::Config(format!("--set expects key=value, got '{kv}'")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    let report = run_experiment(&cfg)?;
    for f in &report.files {
        eprintln!("wrote {}", f.display());
    }
    if !report.failures.is_empty() {
        eprintln!("{} replicate(s) failed; see the JSON summary", report.failures.len());
    }
    for (metric, fit) in &report.fits {
        match &fit.fit {
            Some(f) => println!("{metric}: slope {:.4} r2 {:.4} ({} points)", f.slope, f.r2, f.n_points),
            None => println!("{metric}: no fit ({})", fit.note.as_deref().unwrap_or("")),
        }
    }
    if cfg.experiment == Experiment::Concentration {
        let t = concentration_check(cfg.family, &cfg.n_list, cfg.seeds, cfg.delta, cfg.seed)?;
        if t.degenerate {
            println!("concentration: degenerate (exact norms), fit skipped");
        }
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(k) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| HarnessError::Config(format!("thread pool: {e}")))?;
    }
    match &cli.cmd {
        Cmd::Gen { family, m, n, mode } => gen(cli, *family, *m, *n, *mode),
        Cmd::Schedule { delta, beta, v0, tmax } => schedule(cli, *delta, *beta, *v0, *tmax),
        Cmd::BpRun(r) => bp_run(cli, r),
        Cmd::DensityRun { run, q, init, grid_points } => density_run(cli, run, *q, *init, *grid_points),
        Cmd::AmpRun(r) => amp_run(cli, r),
        Cmd::ChaosVerify { m, n, t, family, beta, v0, trials } => chaos_verify(cli, *m, *n, *t, *family, *beta, *v0, *trials),
        Cmd::TailCheck { family, p, n, trials, lambda_min, lambda_max, lambda_count, estimator } => {
            tail(cli, *family, *p, *n, *trials, *lambda_min, *lambda_max, *lambda_count, *estimator)
        }
        Cmd::Study { config, experiment, n_list, seeds, delta, beta, v0, q, sets } => {
            study(cli, config.as_deref(), *experiment, n_list.as_deref(), *seeds, *delta, *beta, *v0, *q, sets)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
