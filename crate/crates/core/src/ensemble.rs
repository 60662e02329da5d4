//! Random sub-Gaussian instances `(A, y)` with deterministic seeding.

use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::seed;

const MAX_RESAMPLE: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    Gaussian,
    Rademacher,
    Uniform,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::Gaussian, Family::Rademacher, Family::Uniform];

    pub fn name(self) -> &'static str {
        match self {
            Family::Gaussian => "gaussian",
            Family::Rademacher => "rademacher",
            Family::Uniform => "uniform",
        }
    }

    /// One draw with mean 0 and variance 1.
    pub fn sample_unit<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            Family::Gaussian => StandardNormal.sample(rng),
            Family::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            Family::Uniform => {
                let c = 3f64.sqrt();
                rng.random_range(-c..c)
            }
        }
    }
}

impl std::str::FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gaussian" | "normal" => Ok(Family::Gaussian),
            "rademacher" | "sign" => Ok(Family::Rademacher),
            "uniform" => Ok(Family::Uniform),
            other => Err(Error::Parse(format!("unknown family '{other}'"))),
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnsembleSpec {
    pub family: Family,
    pub m: usize,
    pub n: usize,
    pub seed: u64,
}

impl EnsembleSpec {
    pub fn new(family: Family, m: usize, n: usize, seed: u64) -> Result<Self> {
        let spec = EnsembleSpec { family, m, n, seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 {
            return Err(Error::InvalidDimensions(format!("m={} n={} must be positive", self.m, self.n)));
        }
        if self.m >= self.n {
            return Err(Error::InvalidDimensions(format!("need m < n, got m={} n={}", self.m, self.n)));
        }
        Ok(())
    }

    pub fn delta(&self) -> f64 {
        self.m as f64 / self.n as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutcomeMode {
    #[default]
    UniformBox,
    Planted,
}

impl std::str::FromStr for OutcomeMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "uniform_box" | "uniform-box" | "box" => Ok(OutcomeMode::UniformBox),
            "planted" => Ok(OutcomeMode::Planted),
            other => Err(Error::Parse(format!("unknown outcome mode '{other}'"))),
        }
    }
}

/// A fixed pair `(A, y)`; `spec` is `None` for hand-built instances.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    pub a: Array2<f64>,
    pub y: Array1<f64>,
    pub delta: f64,
    pub spec: Option<EnsembleSpec>,
}

impl ProblemInstance {
    pub fn generate(spec: EnsembleSpec, mode: OutcomeMode) -> Result<Self> {
        let a = sample_matrix(&spec)?;
        let y = outcome_for(&spec, &a, mode)?;
        Ok(ProblemInstance { delta: spec.delta(), a, y, spec: Some(spec) })
    }

    /// Wraps a given matrix and outcome, checking shapes, zero entries and `|y| <= 1`.
    pub fn from_parts(a: Array2<f64>, y: Array1<f64>) -> Result<Self> {
        let (m, n) = a.dim();
        if m == 0 || n == 0 || m >= n {
            return Err(Error::InvalidDimensions(format!("need 0 < m < n, got {m}x{n}")));
        }
        if y.len() != m {
            return Err(Error::InvalidDimensions(format!("y has length {} but A has {m} rows", y.len())));
        }
        if let Some(((r, c), v)) = a.indexed_iter().find(|(_, v)| **v == 0.0 || !v.is_finite()) {
            return Err(Error::DegenerateEntry { row: r, col: c, value: *v });
        }
        if y.iter().any(|v| !(v.abs() <= 1.0)) {
            return Err(Error::InvalidParameter("outcome must satisfy |y_b| <= 1".into()));
        }
        Ok(ProblemInstance { delta: m as f64 / n as f64, a, y, spec: None })
    }

    pub fn m(&self) -> usize {
        self.a.nrows()
    }

    pub fn n(&self) -> usize {
        self.a.ncols()
    }
}

/// Entries i.i.d. from `spec.family`, scaled to variance `1/m`.
pub fn sample_matrix(spec: &EnsembleSpec) -> Result<Array2<f64>> {
    spec.validate()?;
    let mut rng = seed::rng(spec.seed);
    let scale = 1.0 / (spec.m as f64).sqrt();
    let mut a = Array2::zeros((spec.m, spec.n));
    for v in a.iter_mut() {
        let mut attempts = 0;
        loop {
            let x = spec.family.sample_unit(&mut rng) * scale;
            if x != 0.0 {
                *v = x;
                break;
            }
            attempts += 1;
            if attempts >= MAX_RESAMPLE {
                return Err(Error::ZeroEntries(MAX_RESAMPLE));
            }
        }
    }
    Ok(a)
}

pub fn sample_outcome(spec: &EnsembleSpec, mode: OutcomeMode) -> Result<Array1<f64>> {
    spec.validate()?;
    match mode {
        OutcomeMode::UniformBox => Ok(uniform_box(spec)),
        OutcomeMode::Planted => {
            let a = sample_matrix(spec)?;
            Ok(planted(a.view(), &sparse_signal(spec)))
        }
    }
}

fn outcome_for(spec: &EnsembleSpec, a: &Array2<f64>, mode: OutcomeMode) -> Result<Array1<f64>> {
    Ok(match mode {
        OutcomeMode::UniformBox => uniform_box(spec),
        OutcomeMode::Planted => planted(a.view(), &sparse_signal(spec)),
    })
}

// The outcome stream is separate from the matrix stream so that switching
// modes never changes A.
fn uniform_box(spec: &EnsembleSpec) -> Array1<f64> {
    let mut rng = seed::rng(seed::mix(spec.seed, u64::MAX));
    Array1::from_iter((0..spec.m).map(|_| rng.random_range(-1.0..=1.0)))
}

fn sparse_signal(spec: &EnsembleSpec) -> Array1<f64> {
    let mut rng = seed::rng(seed::mix(spec.seed, u64::MAX - 1));
    let k = (spec.n / 10).max(1);
    let mut x0 = Array1::zeros(spec.n);
    for idx in rand::seq::index::sample(&mut rng, spec.n, k) {
        x0[idx] = StandardNormal.sample(&mut rng);
    }
    x0
}

/// `y = A x0`, divided by `max |y_b|` when that exceeds one.
pub fn planted(a: ArrayView2<f64>, x0: &Array1<f64>) -> Array1<f64> {
    let y = a.dot(x0);
    let peak = y.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if peak > 1.0 {
        y / peak
    } else {
        y
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConcentrationReport {
    pub max_row_dev: f64,
    pub max_col_dev: f64,
}

/// `max_row_dev = max_i |sum_b a_bi^2 - 1|`, `max_col_dev = max_a |sum_j a_aj^2 - 1/delta|`.
pub fn row_col_concentration(a: ArrayView2<f64>) -> ConcentrationReport {
    let (m, n) = a.dim();
    let inv_delta = n as f64 / m as f64;
    let sq = a.mapv(|v| v * v);
    let max_row_dev = sq.sum_axis(ndarray::Axis(0)).iter().fold(0.0f64, |acc, s| acc.max((s - 1.0).abs()));
    let max_col_dev = sq.sum_axis(ndarray::Axis(1)).iter().fold(0.0f64, |acc, s| acc.max((s - inv_delta).abs()));
    ConcentrationReport { max_row_dev, max_col_dev }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn rademacher_entries_are_half() {
        let a = sample_matrix(&EnsembleSpec::new(Family::Rademacher, 4, 8, 1).unwrap()).unwrap();
        assert!(a.iter().all(|v| *v == 0.5 || *v == -0.5));
    }

    #[test]
    fn gaussian_pooled_variance() {
        let mut pooled = Vec::new();
        for s in 0..5 {
            let a = sample_matrix(&EnsembleSpec::new(Family::Gaussian, 100, 200, s).unwrap()).unwrap();
            pooled.extend(a.iter().copied());
        }
        let n = pooled.len() as f64;
        let mean = pooled.iter().sum::<f64>() / n;
        let var = pooled.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((var / 0.01 - 1.0).abs() < 0.05, "var {var}");
    }

    #[test]
    fn same_seed_same_instance() {
        let spec = EnsembleSpec::new(Family::Uniform, 5, 9, 42).unwrap();
        let p = ProblemInstance::generate(spec, OutcomeMode::UniformBox).unwrap();
        let q = ProblemInstance::generate(spec, OutcomeMode::UniformBox).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn invalid_dimensions_rejected() {
        assert!(EnsembleSpec::new(Family::Gaussian, 8, 8, 0).is_err());
        assert!(EnsembleSpec::new(Family::Gaussian, 0, 8, 0).is_err());
        let bad = EnsembleSpec { family: Family::Gaussian, m: 9, n: 3, seed: 0 };
        assert!(sample_matrix(&bad).is_err());
    }

    #[test]
    fn uniform_box_bounded() {
        let y = sample_outcome(&EnsembleSpec::new(Family::Gaussian, 3, 5, 3).unwrap(), OutcomeMode::UniformBox).unwrap();
        assert_eq!(y.len(), 3);
        assert!(y.iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn planted_examples() {
        let a = array![[0.5, -2.0, 0.1, 0.3], [1.5, 0.2, -0.7, 0.9]];
        assert_eq!(planted(a.view(), &Array1::zeros(4)), Array1::<f64>::zeros(2));
        let e1 = array![1.0, 0.0, 0.0, 0.0];
        // first column (0.5, 1.5) exceeds one, so it is divided by 1.5
        let y = planted(a.view(), &e1);
        assert!((y[0] - 0.5 / 1.5).abs() < 1e-15 && (y[1] - 1.0).abs() < 1e-15);
        let small = array![[0.5, 1.0, 1.0], [-0.25, 1.0, 1.0]];
        assert_eq!(planted(small.view(), &array![1.0, 0.0, 0.0]), array![0.5, -0.25]);
    }

    #[test]
    fn planted_outcome_in_box() {
        let spec = EnsembleSpec::new(Family::Gaussian, 30, 60, 9).unwrap();
        let y = sample_outcome(&spec, OutcomeMode::Planted).unwrap();
        assert!(y.iter().all(|v| v.abs() <= 1.0 + 1e-15));
        assert!(y.iter().any(|v| *v != 0.0));
    }

    #[test]
    fn concentration_examples() {
        let m = 4;
        let a = Array2::from_shape_fn((m, 8), |(r, c)| if (r + c) % 3 == 0 { -0.5 } else { 0.5 });
        let rep = row_col_concentration(a.view());
        assert!(rep.max_col_dev.abs() < 1e-15 && rep.max_row_dev.abs() < 1e-15);
        let rep = row_col_concentration(array![[2.0]].view());
        assert_eq!(rep.max_row_dev, 3.0);
    }
}
