//! Deterministic schedules shared by BP, MP and AMP.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceSchedule {
    pub v0: f64,
    pub beta: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractionRates {
    pub rho1: f64,
    pub rho2: f64,
    pub gamma0: f64,
    /// False when `beta < (1 - delta) / (2 v0)`; the rates are still returned.
    pub valid: bool,
}

impl VarianceSchedule {
    pub fn new(v0: f64, beta: f64, delta: f64) -> Result<Self> {
        if !(v0 > 0.0 && v0.is_finite()) {
            return Err(Error::InvalidParameter(format!("v0 must be positive, got {v0}")));
        }
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::InvalidParameter(format!("beta must be nonnegative, got {beta}")));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidParameter(format!("delta must lie in (0,1), got {delta}")));
        }
        Ok(VarianceSchedule { v0, beta, delta })
    }

    fn delta_pow(&self, t: i32) -> f64 {
        self.delta.powi(t)
    }

    /// Closed form `v0 (1-d) / (d^t (1-d) + 2 beta v0 (1 - d^t))`.
    pub fn v(&self, t: u32) -> f64 {
        let (d, b, v0) = (self.delta, self.beta, self.v0);
        if b == 0.0 {
            return v0 / self.delta_pow(t as i32);
        }
        let dt = self.delta_pow(t as i32);
        if dt == 0.0 {
            return (1.0 - d) / (2.0 * b);
        }
        v0 * (1.0 - d) / (dt * (1.0 - d) + 2.0 * b * v0 * (1.0 - dt))
    }

    /// `v(t)` by iterating `v -> v / (2 beta v + delta)`.
    pub fn v_iterated(&self, t: u32) -> f64 {
        (0..t).fold(self.v0, |v, _| v / (2.0 * self.beta * v + self.delta))
    }

    pub fn v_limit(&self) -> f64 {
        if self.beta == 0.0 {
            f64::INFINITY
        } else {
            (1.0 - self.delta) / (2.0 * self.beta)
        }
    }

    /// Damping factor `delta / (2 beta v(t) + delta)`.
    pub fn delta_t(&self, t: u32) -> f64 {
        if self.beta == 0.0 {
            return 1.0;
        }
        self.delta / (2.0 * self.beta * self.v(t) + self.delta)
    }

    /// `gamma(beta, t)`, defined so that `delta_t(t) = delta - delta^(t+1) gamma(beta, t)`.
    pub fn gamma_beta(&self, t: u32) -> f64 {
        let (d, b, v0) = (self.delta, self.beta, self.v0);
        let dt1 = self.delta_pow(t as i32 + 1);
        (1.0 - d) * (2.0 * b * v0 - (1.0 - d)) / (dt1 * (1.0 - d) + 2.0 * b * v0 * (1.0 - dt1))
    }

    /// `delta_t` through the `gamma(beta, t)` identity.
    pub fn delta_t_via_gamma(&self, t: u32) -> f64 {
        self.delta - self.delta_pow(t as i32 + 1) * self.gamma_beta(t)
    }

    /// `Gamma^(t)_lambda = prod_{tau=1..lambda} delta_t(t - tau)`, for `1 <= lambda <= t`.
    pub fn gamma_lambda(&self, t: u32, lambda: u32) -> Result<f64> {
        if lambda < 1 || lambda > t {
            return Err(Error::InvalidParameter(format!("need 1 <= lambda <= t, got lambda={lambda} t={t}")));
        }
        Ok((1..=lambda).map(|tau| self.delta_t(t - tau)).product())
    }

    /// `beta` at which `gamma(beta, 0) = 0`.
    pub fn beta_threshold(&self) -> f64 {
        (1.0 - self.delta) / (2.0 * self.v0)
    }

    pub fn contraction_rates(&self) -> ContractionRates {
        let sd = self.delta.sqrt();
        let gamma0 = self.gamma_beta(0);
        ContractionRates {
            rho1: 1.0 - (1.0 - sd).powi(2) * (1.0 - gamma0),
            rho2: sd * (2.0 - sd),
            gamma0,
            valid: self.beta >= self.beta_threshold(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v0: f64, beta: f64, delta: f64) -> VarianceSchedule {
        VarianceSchedule::new(v0, beta, delta).unwrap()
    }

    #[test]
    fn worked_values() {
        let sc = s(1.0, 0.5, 0.5);
        assert_eq!(sc.v(0), 1.0);
        assert!((sc.v(1) - 2.0 / 3.0).abs() < 1e-15);
        assert!((sc.delta_t(1) - 3.0 / 7.0).abs() < 1e-15);
        assert!((sc.delta_t(0) - 1.0 / 3.0).abs() < 1e-15);
        assert!((sc.gamma_lambda(2, 2).unwrap() - 1.0 / 7.0).abs() < 1e-15);
        assert_eq!(sc.gamma_lambda(3, 1).unwrap(), sc.delta_t(2));
        assert!(sc.gamma_lambda(2, 3).is_err() && sc.gamma_lambda(2, 0).is_err());
    }

    #[test]
    fn zero_beta() {
        let sc = s(0.7, 0.0, 0.25);
        for t in 0..10 {
            assert!((sc.v(t) - 0.7 / 0.25f64.powi(t as i32)).abs() <= 1e-12 * sc.v(t));
            assert_eq!(sc.delta_t(t), 1.0);
        }
        assert_eq!(sc.gamma_lambda(5, 4).unwrap(), 1.0);
    }

    #[test]
    fn underflow_returns_limit() {
        let sc = s(1.0, 2.0, 0.1);
        assert_eq!(sc.v(100_000), sc.v_limit());
        assert!((sc.delta_t(100_000) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn rates() {
        let r = s(1.0, 1.0, 0.25).contraction_rates();
        assert!((r.rho2 - 0.75).abs() < 1e-15);
        let at = s(2.0, 0.0, 0.5);
        let edge = s(2.0, at.beta_threshold(), 0.5).contraction_rates();
        assert!(edge.gamma0.abs() < 1e-15 && (edge.rho1 - edge.rho2).abs() < 1e-15 && edge.valid);
        let low = s(1.0, 0.1, 0.5).contraction_rates();
        assert!(!low.valid);
        // delta_t(0) = 1/5 pins gamma(beta, 0) through the identity
        let r = s(1.0, 1.0, 0.5).contraction_rates();
        assert!((r.gamma0 - 0.6).abs() < 1e-15);
        assert!((r.rho1 - (1.0 - (1.0 - 0.5f64.sqrt()).powi(2) * 0.4)).abs() < 1e-15);
    }
}
