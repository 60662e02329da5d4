//! Flat `key = value` experiment configuration.
//!
//! One assignment per line; `#` starts a comment; blank lines are ignored;
//! keys may appear at most once. `n_list` is a comma-separated list.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use bpamp_core::density::InitLaw;
use bpamp_core::Family;
use serde::{Serialize, Serializer};

use crate::error::{HarnessError, Result};

pub const OUT_DIR_ENV: &str = "BPAMP_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "results";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    BpVariance,
    BpConsensus,
    Shadow,
    AmpConvergence,
    Chaos,
    DensityGaussGap,
    Tails,
    Concentration,
}

impl Experiment {
    pub const ALL: [Experiment; 8] = [
        Experiment::BpVariance,
        Experiment::BpConsensus,
        Experiment::Shadow,
        Experiment::AmpConvergence,
        Experiment::Chaos,
        Experiment::DensityGaussGap,
        Experiment::Tails,
        Experiment::Concentration,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::BpVariance => "bp_variance",
            Experiment::BpConsensus => "bp_consensus",
            Experiment::Shadow => "shadow",
            Experiment::AmpConvergence => "amp_convergence",
            Experiment::Chaos => "chaos",
            Experiment::DensityGaussGap => "density_gauss_gap",
            Experiment::Tails => "tails",
            Experiment::Concentration => "concentration",
        }
    }

    /// Largest N the pipeline accepts.
    pub fn max_n(self) -> usize {
        match self {
            Experiment::Shadow | Experiment::DensityGaussGap => bpamp_core::density::MAX_N,
            Experiment::Chaos => 12,
            _ => usize::MAX,
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s.trim())
            .ok_or_else(|| HarnessError::Config(format!("unknown experiment '{s}'")))
    }
}

fn ser_display<T: fmt::Display, S: Serializer>(v: &T, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_str(v)
}

fn ser_law<S: Serializer>(v: &InitLaw, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(law_name(*v))
}

pub fn law_name(law: InitLaw) -> &'static str {
    match law {
        InitLaw::Gauss => "gauss",
        InitLaw::Uniform => "uniform",
        InitLaw::Laplace => "laplace",
        InitLaw::Skew => "skew",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub n_list: Vec<usize>,
    pub delta: f64,
    pub beta: f64,
    pub v0: f64,
    pub q: f64,
    pub seeds: usize,
    pub out_dir: PathBuf,
    #[serde(serialize_with = "ser_display")]
    pub family: Family,
    pub tmax: u32,
    #[serde(serialize_with = "ser_law")]
    pub init: InitLaw,
    pub grid_points: usize,
    pub p: u32,
    pub trials: usize,
    pub seed: u64,
    pub dat: bool,
}

impl ExperimentConfig {
    /// Defaults with an empty `n_list`, which `validate` rejects.
    pub fn new(experiment: Experiment) -> Self {
        ExperimentConfig {
            experiment,
            n_list: Vec::new(),
            delta: 0.5,
            beta: 1.0,
            v0: 1.0,
            q: 2.0,
            seeds: 10,
            out_dir: default_out_dir(),
            family: Family::Gaussian,
            tmax: 8,
            init: InitLaw::Uniform,
            grid_points: 512,
            p: 3,
            trials: 100_000,
            seed: 0,
            dat: false,
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) =
                line.split_once('=').ok_or_else(|| HarnessError::Config(format!("line {}: expected key = value", k + 1)))?;
            let key = key.trim();
            if pairs.iter().any(|(p, _): &(String, String)| p == key) {
                return Err(HarnessError::Config(format!("line {}: duplicate key '{key}'", k + 1)));
            }
            pairs.push((key.to_string(), value.trim().to_string()));
        }
        let exp = pairs
            .iter()
            .find(|(k, _)| k == "experiment")
            .ok_or_else(|| HarnessError::Config("missing key 'experiment'".into()))?
            .1
            .parse()?;
        let mut cfg = ExperimentConfig::new(exp);
        for (k, v) in &pairs {
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| HarnessError::Config(format!("bad value '{v}' for '{key}'")))
        }
        match key {
            "experiment" => self.experiment = value.parse()?,
            "n_list" => {
                self.n_list =
                    value.split(',').map(str::trim).filter(|s| !s.is_empty()).map(|s| num(key, s)).collect::<Result<_>>()?
            }
            "delta" => self.delta = num(key, value)?,
            "beta" => self.beta = num(key, value)?,
            "v0" => self.v0 = num(key, value)?,
            "q" => self.q = num(key, value)?,
            "seeds" => self.seeds = num(key, value)?,
            "out_dir" => self.out_dir = PathBuf::from(value),
            "family" => self.family = value.parse()?,
            "tmax" => self.tmax = num(key, value)?,
            "init" => self.init = value.parse()?,
            "grid_points" => self.grid_points = num(key, value)?,
            "p" => self.p = num(key, value)?,
            "trials" => self.trials = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "dat" => self.dat = num(key, value)?,
            other => return Err(HarnessError::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.n_list.is_empty() {
            return bad("n_list is empty".into());
        }
        if self.n_list.windows(2).any(|w| w[0] >= w[1]) {
            return bad("n_list must be strictly increasing".into());
        }
        if self.n_list[0] < 2 {
            return bad("every N must be at least 2".into());
        }
        if let Some(n) = self.n_list.iter().find(|n| **n > self.experiment.max_n()) {
            return bad(format!("N={n} exceeds the {} limit of {}", self.experiment, self.experiment.max_n()));
        }
        if self.seeds < 1 {
            return bad("seeds must be at least 1".into());
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(format!("delta must lie in (0, 1), got {}", self.delta));
        }
        if !(self.beta >= 0.0 && self.v0 > 0.0 && self.q > 0.0) {
            return bad("need beta >= 0, v0 > 0, q > 0".into());
        }
        if self.tmax < 1 || self.p < 1 {
            return bad("tmax and p must be at least 1".into());
        }
        if self.experiment == Experiment::Tails && self.trials < crate::tails::MIN_TRIALS {
            return bad(format!("tails needs at least {} trials", crate::tails::MIN_TRIALS));
        }
        Ok(())
    }

    /// Number of rows for size `n`.
    pub fn m_for(&self, n: usize) -> usize {
        ((self.delta * n as f64).round() as usize).clamp(1, n - 1)
    }

    /// Canonical text form; parsing it gives back the same config.
    pub fn to_text(&self) -> String {
        let n_list: Vec<String> = self.n_list.iter().map(|n| n.to_string()).collect();
        format!(
            "experiment = {}\nn_list = {}\ndelta = {}\nbeta = {}\nv0 = {}\nq = {}\nseeds = {}\nout_dir = {}\nfamily = {}\ntmax = {}\ninit = {}\ngrid_points = {}\np = {}\ntrials = {}\nseed = {}\ndat = {}\n",
            self.experiment,
            n_list.join(","),
            self.delta,
            self.beta,
            self.v0,
            self.q,
            self.seeds,
            self.out_dir.display(),
            self.family,
            self.tmax,
            law_name(self.init),
            self.grid_points,
            self.p,
            self.trials,
            self.seed,
            self.dat
        )
    }
}

pub fn default_out_dir() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}
