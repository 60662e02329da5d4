use crate::error::{Error, Result};

/// Uniform grid `lo + k * step`, `k = 0..len`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub lo: f64,
    pub step: f64,
    pub len: usize,
}

impl Grid {
    pub fn symmetric(half_width: f64, len: usize) -> Self {
        assert!(len >= 3 && half_width > 0.0);
        Grid { lo: -half_width, step: 2.0 * half_width / (len - 1) as f64, len }
    }

    pub fn hi(&self) -> f64 {
        self.lo + self.step * (self.len - 1) as f64
    }

    pub fn point(&self, k: usize) -> f64 {
        self.lo + self.step * k as f64
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len).map(|k| self.point(k))
    }

    pub fn weight(&self, k: usize) -> f64 {
        if k == 0 || k + 1 == self.len {
            0.5 * self.step
        } else {
            self.step
        }
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        (0..self.len).map(|k| self.weight(k) * f(self.point(k))).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Moments {
    pub m1: f64,
    pub var: f64,
    pub m3_central: f64,
    pub m4_central: f64,
    pub rho3_raw: f64,
}

impl Moments {
    /// Central moments from raw moments `E[s], E[s^2], E[s^3], E[s^4]`.
    pub fn from_raw(r: [f64; 4]) -> Self {
        let [m1, m2, m3, m4] = r;
        Moments {
            m1,
            var: m2 - m1 * m1,
            m3_central: m3 - 3.0 * m1 * m2 + 2.0 * m1.powi(3),
            m4_central: m4 - 4.0 * m1 * m3 + 6.0 * m1 * m1 * m2 - 3.0 * m1.powi(4),
            rho3_raw: m3,
        }
    }

    pub fn third_cumulant(&self) -> f64 {
        self.m3_central
    }
}

/// Density sampled on a uniform grid over `[lo, hi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
    pub values: Vec<f64>,
}

impl GridDensity {
    pub fn from_fn(grid: &Grid, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::from_values(grid, grid.points().map(f).collect())
    }

    /// Normalises `values` (nonnegative, finite) to unit trapezoid mass.
    pub fn from_values(grid: &Grid, mut values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len {
            return Err(Error::InvalidDimensions(format!("{} values for a {}-point grid", values.len(), grid.len)));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::DegenerateDensity(format!("bad density value {v}")));
        }
        let mass: f64 = values.iter().enumerate().map(|(k, v)| grid.weight(k) * v).sum();
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::DegenerateDensity(format!("mass {mass}")));
        }
        values.iter_mut().for_each(|v| *v /= mass);
        Ok(GridDensity { lo: grid.lo, hi: grid.hi(), step: grid.step, values })
    }

    pub fn grid(&self) -> Grid {
        Grid { lo: self.lo, step: self.step, len: self.values.len() }
    }

    pub fn integral(&self) -> f64 {
        let g = self.grid();
        self.values.iter().enumerate().map(|(k, v)| g.weight(k) * v).sum()
    }

    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        let g = self.grid();
        self.values.iter().enumerate().map(|(k, v)| g.weight(k) * v * f(g.point(k))).sum()
    }

    /// Raw moments `E[s^k]` for `k = 1..=4`.
    pub fn raw_moments(&self) -> [f64; 4] {
        let g = self.grid();
        let mut r = [0.0; 4];
        for (k, v) in self.values.iter().enumerate() {
            let w = g.weight(k) * v;
            let s = g.point(k);
            let mut p = w;
            for slot in r.iter_mut() {
                p *= s;
                *slot += p;
            }
        }
        r
    }

    pub fn moments(&self) -> Moments {
        // centring first keeps the central moments accurate for shifted densities
        let g = self.grid();
        let mean = self.expect(|s| s);
        let mut c = [0.0; 3];
        for (k, v) in self.values.iter().enumerate() {
            let w = g.weight(k) * v;
            let d = g.point(k) - mean;
            c[0] += w * d * d;
            c[1] += w * d * d * d;
            c[2] += w * d.powi(4);
        }
        Moments { m1: mean, var: c[0], m3_central: c[1], m4_central: c[2], rho3_raw: c[1] + 3.0 * mean * c[0] + mean.powi(3) }
    }
}

pub fn moments(d: &GridDensity) -> Moments {
    d.moments()
}
