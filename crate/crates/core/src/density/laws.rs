use num_complex::Complex64;
use statrs::function::gamma::{gamma_ur, ln_gamma};

use super::grid::{Grid, GridDensity, Moments};
use crate::error::{Error, Result};

pub const PRIOR_TAIL_MASS: f64 = 1e-6;

/// Centred initial laws with variance `v0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InitLaw {
    Gauss,
    Uniform,
    Laplace,
    /// `sqrt(v0) (E - 1)` with `E` standard exponential.
    Skew,
}

impl std::str::FromStr for InitLaw {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gauss" | "gaussian" => Ok(InitLaw::Gauss),
            "uniform" => Ok(InitLaw::Uniform),
            "laplace" => Ok(InitLaw::Laplace),
            "skew" | "exponential" => Ok(InitLaw::Skew),
            other => Err(Error::Parse(format!("unknown init law '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitDensity {
    pub law: InitLaw,
    pub v0: f64,
}

impl InitDensity {
    pub fn new(law: InitLaw, v0: f64) -> Result<Self> {
        if !(v0 > 0.0 && v0.is_finite()) {
            return Err(Error::InvalidParameter(format!("v0 must be positive, got {v0}")));
        }
        Ok(InitDensity { law, v0 })
    }

    pub fn pdf(&self, s: f64) -> f64 {
        let v = self.v0;
        match self.law {
            InitLaw::Gauss => (-s * s / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt(),
            InitLaw::Uniform => {
                let c = (3.0 * v).sqrt();
                if s.abs() <= c {
                    0.5 / c
                } else {
                    0.0
                }
            }
            InitLaw::Laplace => {
                let b = (v / 2.0).sqrt();
                (-s.abs() / b).exp() / (2.0 * b)
            }
            InitLaw::Skew => {
                let th = v.sqrt();
                if s >= -th {
                    (-(s / th + 1.0)).exp() / th
                } else {
                    0.0
                }
            }
        }
    }

    pub fn cf(&self, w: f64) -> Complex64 {
        let v = self.v0;
        match self.law {
            InitLaw::Gauss => Complex64::new((-0.5 * v * w * w).exp(), 0.0),
            InitLaw::Uniform => {
                let x = (3.0 * v).sqrt() * w;
                let re = if x.abs() < 1e-8 { 1.0 - x * x / 6.0 } else { x.sin() / x };
                Complex64::new(re, 0.0)
            }
            InitLaw::Laplace => Complex64::new(1.0 / (1.0 + 0.5 * v * w * w), 0.0),
            InitLaw::Skew => {
                let th = v.sqrt();
                Complex64::from_polar(1.0, -w * th) / Complex64::new(1.0, -w * th)
            }
        }
    }

    /// `log E[exp(r X)]`, or `None` outside the domain of the MGF.
    pub fn log_mgf(&self, r: f64) -> Option<f64> {
        let v = self.v0;
        match self.law {
            InitLaw::Gauss => Some(0.5 * v * r * r),
            InitLaw::Uniform => {
                let x = (3.0 * v).sqrt() * r;
                Some(if x.abs() < 1e-6 { x * x / 6.0 - x.powi(4) / 180.0 } else { (x.sinh() / x).ln() })
            }
            InitLaw::Laplace => {
                let b2r2 = 0.5 * v * r * r;
                (b2r2 < 1.0).then(|| -(1.0 - b2r2).ln())
            }
            InitLaw::Skew => {
                let rt = r * v.sqrt();
                (rt < 1.0).then(|| -rt - (1.0 - rt).ln())
            }
        }
    }

    pub fn moments(&self) -> Moments {
        let v = self.v0;
        let (m3, m4) = match self.law {
            InitLaw::Gauss => (0.0, 3.0 * v * v),
            InitLaw::Uniform => (0.0, 1.8 * v * v),
            InitLaw::Laplace => (0.0, 6.0 * v * v),
            InitLaw::Skew => (2.0 * v.powf(1.5), 9.0 * v * v),
        };
        Moments { m1: 0.0, var: v, m3_central: m3, m4_central: m4, rho3_raw: m3 }
    }

    pub fn to_grid(&self, grid: &Grid) -> Result<GridDensity> {
        GridDensity::from_fn(grid, |s| self.pdf(s))
    }
}

/// Probability that `|S| > w` under the prior `exp(-beta |s|^q)`.
pub fn prior_tail(q: f64, beta: f64, w: f64) -> f64 {
    gamma_ur(1.0 / q, beta * w.powf(q))
}

/// Smallest half-width (to a factor 1.01) leaving at most `PRIOR_TAIL_MASS` outside.
pub fn prior_window(q: f64, beta: f64) -> f64 {
    let mut w = 1.0;
    while prior_tail(q, beta, w) > PRIOR_TAIL_MASS {
        w *= 1.01;
    }
    w
}

/// Variance of the prior `exp(-beta |s|^q)`: `Gamma(3/q) / (beta^(2/q) Gamma(1/q))`.
pub fn prior_variance(q: f64, beta: f64) -> f64 {
    (ln_gamma(3.0 / q) - ln_gamma(1.0 / q)).exp() / beta.powf(2.0 / q)
}

/// Normalised `exp(-beta |s|^q)` on `grid`, widening the window (same point
/// count) up to four times when too much prior mass falls outside.
pub fn prior(q: f64, beta: f64, grid: &Grid) -> Result<GridDensity> {
    if !(q > 0.0 && beta > 0.0) {
        return Err(Error::InvalidParameter(format!("need q > 0 and beta > 0, got q={q} beta={beta}")));
    }
    let mut g = *grid;
    for _ in 0..5 {
        let w = g.lo.abs().min(g.hi().abs());
        if prior_tail(q, beta, w) <= PRIOR_TAIL_MASS {
            return GridDensity::from_fn(&g, |s| (-beta * s.abs().powf(q)).exp());
        }
        g = Grid { lo: 2.0 * g.lo, step: 2.0 * g.step, len: g.len };
    }
    Err(Error::GridTooNarrow(format!("prior q={q} beta={beta} leaks more than {PRIOR_TAIL_MASS} outside [{}, {}]", g.lo, g.hi())))
}
