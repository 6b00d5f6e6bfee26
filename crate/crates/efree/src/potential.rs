//! The tilted double-well potential `V(Q) = Q^4/4 - mu Q^2/2 + nu Q`.

use crate::error::{EfError, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DoubleWellParams {
    pub mu: f64,
    pub nu: f64,
    /// Noise amplitude of `dQ = -V'(Q) dt + sigma dW`.
    pub sigma: f64,
}

impl Default for DoubleWellParams {
    fn default() -> Self {
        Self { mu: 6.0, nu: 0.3, sigma: 1.0 }
    }
}

impl DoubleWellParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) || !self.mu.is_finite() || !self.nu.is_finite() || !self.sigma.is_finite() {
            return Err(EfError::InvalidInput(format!("invalid double-well parameters {self:?}")));
        }
        Ok(())
    }

    #[inline]
    pub fn potential(&self, q: f64) -> f64 {
        let q2 = q * q;
        0.25 * q2 * q2 - 0.5 * self.mu * q2 + self.nu * q
    }

    /// Drift `-V'(Q)`.
    #[inline]
    pub fn drift(&self, q: f64) -> f64 {
        -(q * q * q - self.mu * q + self.nu)
    }

    /// `(V, -V')` at `q`.
    pub fn potential_and_drift(&self, q: f64) -> (f64, f64) {
        (self.potential(q), self.drift(q))
    }

    /// Real critical points of `V`, ascending.
    pub fn critical_points(&self) -> Vec<f64> {
        // Q^3 - mu Q + nu = 0 via the trigonometric form when three roots exist.
        let p = -self.mu;
        let q = self.nu;
        let disc = -(4.0 * p * p * p + 27.0 * q * q);
        if disc > 0.0 {
            let r = 2.0 * (-p / 3.0).sqrt();
            let phi = ((3.0 * q / (p * r)).clamp(-1.0, 1.0)).acos() / 3.0;
            let mut roots: Vec<f64> =
                (0..3).map(|k| r * (phi - 2.0 * std::f64::consts::PI * k as f64 / 3.0).cos()).collect();
            roots.sort_by(f64::total_cmp);
            roots
        } else {
            let s = (q * q / 4.0 + p * p * p / 27.0).sqrt();
            vec![(-q / 2.0 + s).cbrt() + (-q / 2.0 - s).cbrt()]
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values() {
        let p = DoubleWellParams::default();
        assert_eq!(p.potential_and_drift(0.0), (0.0, -0.3));
        assert!((p.potential(1.0) + 2.45).abs() < 1e-15);
        let s = DoubleWellParams { nu: 0.0, ..p };
        assert!(s.drift(6f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn critical_points_are_roots() {
        let p = DoubleWellParams::default();
        let roots = p.critical_points();
        assert_eq!(roots.len(), 3);
        for r in &roots {
            assert!(p.drift(*r).abs() < 1e-12);
        }
        assert!((roots[0] + 2.474).abs() < 1e-3);
        assert!((roots[1] - 0.050).abs() < 1e-3);
        assert!((roots[2] - 2.424).abs() < 1e-3);
        let single = DoubleWellParams { mu: -1.0, nu: 0.0, sigma: 1.0 };
        assert_eq!(single.critical_points().len(), 1);
    }
}
