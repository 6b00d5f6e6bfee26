//! Michaelis-Menten kinetics, `x' = eps (-x + (x + kappa - lambda) y)`,
//! `y' = x - (x + kappa) y`, with slow variable `x`.
//!
//! Systems can be posed in a rotated frame `v = R u`. Lifting `(x, 0.5)` and
//! restriction to the first coordinate always act on frame coordinates.

use crate::efcore::{MicroSystem, SolverConfig};
use crate::error::{EfError, Result};
use crate::integrate;
use crate::newton::{self, NewtonOptions};
use nalgebra::{DVector, Matrix2, Vector2};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MmParams {
    pub kappa: f64,
    pub lam: f64,
    pub eps: f64,
    /// Truncation order (0 to 3) of the manifold and fiber expansions.
    pub expansion_order: usize,
}

impl Default for MmParams {
    fn default() -> Self {
        Self { kappa: 1.0, lam: 0.5, eps: 0.01, expansion_order: 3 }
    }
}

impl MmParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0) || !(self.eps >= 0.0) || !self.lam.is_finite() || self.expansion_order > 3 {
            return Err(EfError::InvalidInput(format!("invalid Michaelis-Menten parameters {self:?}")));
        }
        Ok(())
    }

    fn field(&self, u: Vector2<f64>) -> Vector2<f64> {
        let (x, y) = (u[0], u[1]);
        Vector2::new(self.eps * (-x + (x + self.kappa - self.lam) * y), x - (x + self.kappa) * y)
    }

    fn check_x(&self, x: f64) -> Result<()> {
        if x > -self.kappa && x.is_finite() {
            Ok(())
        } else {
            Err(EfError::Domain(format!("expansions need x > -kappa = {}, got {x}", -self.kappa)))
        }
    }
}

/// Linear change of coordinates `v = R u`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Frame {
    r: Matrix2<f64>,
    r_inv: Matrix2<f64>,
}

impl Frame {
    pub fn identity() -> Self {
        Self { r: Matrix2::identity(), r_inv: Matrix2::identity() }
    }

    /// `R = [[1, 1], [-1, 1]]`.
    pub fn rotated() -> Self {
        Self::new(Matrix2::new(1.0, 1.0, -1.0, 1.0)).expect("invertible")
    }

    pub fn new(r: Matrix2<f64>) -> Result<Self> {
        let r_inv = r.try_inverse().ok_or_else(|| EfError::Singular("frame matrix".into()))?;
        Ok(Self { r, r_inv })
    }

    pub fn is_identity(&self) -> bool {
        self.r == Matrix2::identity()
    }

    pub fn to_frame(&self, u: [f64; 2]) -> [f64; 2] {
        let v = self.r * Vector2::new(u[0], u[1]);
        [v[0], v[1]]
    }

    pub fn to_physical(&self, v: [f64; 2]) -> [f64; 2] {
        let u = self.r_inv * Vector2::new(v[0], v[1]);
        [u[0], u[1]]
    }
}

/// The vector field in frame coordinates.
pub fn mm_vector_field(p: &MmParams, frame: &Frame, v: [f64; 2]) -> [f64; 2] {
    let u = frame.r_inv * Vector2::new(v[0], v[1]);
    let f = frame.r * p.field(u);
    [f[0], f[1]]
}

/// Terms `h_0 .. h_3` of the slow-manifold graph `y = sum eps^k h_k(x)`.
fn graph_terms(p: &MmParams, x: f64) -> [f64; 4] {
    let (k, l) = (p.kappa, p.lam);
    let s = x + k;
    let h0 = x / s;
    let h1 = k * l * x / s.powi(4);
    let h2 = -k * l * x * (k * k - 2.0 * k * l + k * x + 3.0 * l * x) / s.powi(7);
    let h3 = k
        * l
        * x
        * (k.powi(4) - 5.0 * k.powi(3) * l + 2.0 * k.powi(3) * x + 5.0 * k * k * l * l + 6.0 * k * k * l * x + k * k * x * x
            - 24.0 * k * l * l * x
            + 11.0 * k * l * x * x
            + 15.0 * l * l * x * x)
        / s.powi(10);
    [h0, h1, h2, h3]
}

fn truncated(terms: &[f64; 4], eps: f64, order: usize) -> f64 {
    terms.iter().take(order + 1).rev().fold(0.0, |acc, t| acc * eps + t)
}

/// Slow-manifold graph truncated at `p.expansion_order`.
pub fn slow_manifold_graph(p: &MmParams, x: f64) -> Result<f64> {
    slow_manifold_graph_order(p, x, p.expansion_order)
}

/// Slow-manifold graph truncated at `order`.
pub fn slow_manifold_graph_order(p: &MmParams, x: f64, order: usize) -> Result<f64> {
    p.check_x(x)?;
    if order > 3 {
        return Err(EfError::InvalidInput(format!("expansion order must be at most 3, got {order}")));
    }
    Ok(truncated(&graph_terms(p, x), p.eps, order))
}

/// Terms `g_0 .. g_3` of the fiber base point `g_x(x, y) = sum eps^k g_k(x, y)`.
fn fiber_terms(p: &MmParams, x: f64, y: f64) -> [f64; 4] {
    let (k, l) = (p.kappa, p.lam);
    let s = x + k;
    let g1 = (s - l) * (s * y - x) / (s * s);

    let c2 = x * (3.0 * k * l + l * x - l * l) + 3.0 * l * k * k - 2.0 * k * l * l;
    let c2 = k.powi(3) * l - k * k * l * l + x * c2;
    let c1 = x * (2.0 * k * l - 6.0 * k * k + x * (-2.0 * k - 2.0 * l)) - 4.0 * k * l * l + 10.0 * l * k * k - 6.0 * k.powi(3);
    let c1 = -4.0 * k * k * l * l + 6.0 * l * k.powi(3) - 2.0 * k.powi(4) + x * c1;
    let c0 = x * (-7.0 * k * l + 4.0 * k * k + l * l + x * (2.0 * k + l)) + 6.0 * k * l * l - 8.0 * l * k * k + 2.0 * k.powi(3);
    let c0 = x * c0;
    let g2 = (c2 * y * y + c1 * y + c0) / (2.0 * s.powi(5));

    let (k2, k3, k4, k5, k6) = (k * k, k.powi(3), k.powi(4), k.powi(5), k.powi(6));
    let (l2, l3) = (l * l, l.powi(3));
    let d3 = -6.0 * k3 * l3 + 10.0 * k4 * l2 - 4.0 * l * k5
        + x * (-18.0 * k2 * l3 + 40.0 * k3 * l2 - 20.0 * l * k4
            + x * (-18.0 * k * l3 + 60.0 * k2 * l2 - 40.0 * l * k3
                + x * (40.0 * k * l2 - 40.0 * l * k2 - 6.0 * l3 + x * (-20.0 * k * l - 4.0 * l * x + 10.0 * l2))));
    let d2 = -57.0 * k3 * l3 + 123.0 * k4 * l2 - 78.0 * l * k5 + 12.0 * k6
        + x * (-123.0 * k2 * l3 + 363.0 * k3 * l2 - 300.0 * l * k4 + 60.0 * k5
            + x * (-75.0 * k * l3 + 351.0 * k2 * l2 - 420.0 * l * k3 + 120.0 * k4
                + x * (105.0 * k * l2 - 240.0 * l * k2 + 120.0 * k3 - 9.0 * l3
                    + x * (-30.0 * k * l + 60.0 * k2 - 6.0 * l2 + x * (12.0 * k + 12.0 * l)))));
    let d1 = -72.0 * k3 * l3 + 144.0 * k4 * l2 - 84.0 * l * k5 + 12.0 * k6
        + x * (6.0 * k2 * l3 + 30.0 * k3 * l2 - 60.0 * l * k4 + 24.0 * k5
            + x * (78.0 * k * l3 - 390.0 * k2 * l2 + 312.0 * l * k3 - 24.0 * k4
                + x * (-294.0 * k * l2 + 456.0 * l * k2 - 96.0 * k3
                    + x * (156.0 * k * l - 84.0 * k2 - 18.0 * l2 + x * (-24.0 * k - 12.0 * l)))));
    let d0 = x
        * (120.0 * k2 * l3 - 216.0 * k3 * l2 + 108.0 * l * k4 - 12.0 * k5
            + x * (-45.0 * k * l3 - 45.0 * k2 * l2 + 102.0 * l * k3 - 24.0 * k4
                + x * (185.0 * k * l2 - 116.0 * l * k2 + 15.0 * l3
                    + x * (-106.0 * k * l + 24.0 * k2 + 14.0 * l2 + x * (12.0 * k + 4.0 * l)))));
    let g3 = (((d3 * y + d2) * y + d1) * y + d0) / (12.0 * s.powi(8));
    [x, g1, g2, g3]
}

/// Stable-fiber base point `g_x(u)` truncated at `p.expansion_order`.
pub fn fiber_base_x(p: &MmParams, u: [f64; 2]) -> Result<f64> {
    fiber_base_x_order(p, u, p.expansion_order)
}

/// Stable-fiber base point truncated at `order`.
pub fn fiber_base_x_order(p: &MmParams, u: [f64; 2], order: usize) -> Result<f64> {
    p.check_x(u[0])?;
    if order > 3 {
        return Err(EfError::InvalidInput(format!("expansion order must be at most 3, got {order}")));
    }
    Ok(truncated(&fiber_terms(p, u[0], u[1]), p.eps, order))
}

/// The first-order base point in the form `x + eps [(x + kappa - lambda)(y - 1) x + kappa y] / (x + kappa)`.
///
/// This form is not the identity on the slow manifold; it is kept for
/// comparison with [`fiber_base_x_order`].
pub fn printed_fiber_base_x(p: &MmParams, u: [f64; 2]) -> Result<f64> {
    let (x, y) = (u[0], u[1]);
    p.check_x(x)?;
    let (k, l) = (p.kappa, p.lam);
    Ok(x + p.eps * ((x + k - l) * (y - 1.0) * x + k * y) / (x + k))
}

/// Fiber base point found by trajectory matching: the `xi` whose manifold
/// trajectory `(xi, h(xi))` has the same `x`-coordinate as the trajectory of
/// `u` after time `horizon`.
pub fn matched_fiber_base_x(p: &MmParams, u: [f64; 2], horizon: f64, h: f64) -> Result<f64> {
    p.check_x(u[0])?;
    let flow = |u0: [f64; 2]| -> Result<f64> {
        let end = integrate::integrate(
            |_, y, dy| {
                let f = p.field(Vector2::new(y[0], y[1]));
                dy[0] = f[0];
                dy[1] = f[1];
            },
            0.0,
            &u0,
            horizon,
            h,
        )?;
        Ok(end[0])
    };
    let target = flow(u)?;
    let guess = fiber_base_x_order(p, u, 1).unwrap_or(u[0]);
    let opts = NewtonOptions { tol: 1e-13, fd_step: 1e-6, ..Default::default() };
    let out = newton::solve(
        |xi| {
            let y = slow_manifold_graph_order(p, xi[0], 3)?;
            Ok(DVector::from_element(1, flow([xi[0], y])? - target))
        },
        DVector::from_element(1, guess),
        &opts,
    )?;
    if !out.converged && out.residual > 1e-11 {
        return Err(EfError::NoConvergence { iterations: out.iterations, residual: out.residual });
    }
    Ok(out.x[0])
}

/// How the reference flow projects onto the slow manifold.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum FiberMethod {
    /// Truncated expansion of the given order.
    Expansion { order: usize },
    /// Trajectory matching over `horizon` with integrator step `h`.
    Matched { horizon: f64, h: f64 },
}

impl Default for FiberMethod {
    fn default() -> Self {
        FiberMethod::Matched { horizon: 40.0, h: 0.1 }
    }
}

/// Manifold point `g(u)` in physical coordinates.
fn project(p: &MmParams, u: [f64; 2], method: FiberMethod) -> Result<[f64; 2]> {
    let xi = match method {
        FiberMethod::Expansion { order } => fiber_base_x_order(p, u, order)?,
        FiberMethod::Matched { horizon, h } => matched_fiber_base_x(p, u, horizon, h)?,
    };
    Ok([xi, slow_manifold_graph_order(p, xi, 3)?])
}

/// Exact slow flow `Phi_*(delta; x)` in frame coordinates: the root `z` of
/// `R(g(L(z))) = R(M(delta; g(L(x))))`.
pub fn mm_reference_flow(
    p: &MmParams,
    frame: &Frame,
    delta: f64,
    x: f64,
    cfg: &SolverConfig,
    method: FiberMethod,
    h: f64,
) -> Result<f64> {
    p.validate()?;
    let lifted = |z: f64| frame.to_physical([z, 0.5]);
    let start = project(p, lifted(x), method)?;
    let moved = integrate::integrate(
        |_, y, dy| {
            let f = p.field(Vector2::new(y[0], y[1]));
            dy[0] = f[0];
            dy[1] = f[1];
        },
        0.0,
        &start,
        delta,
        h,
    )?;
    let target = frame.to_frame([moved[0], moved[1]])[0];
    let opts = NewtonOptions { tol: cfg.tolerance, max_iter: cfg.max_iterations, fd_step: cfg.fd_step, ..Default::default() };
    let out = newton::solve(
        |z| {
            let g = project(p, lifted(z[0]), method)?;
            Ok(DVector::from_element(1, frame.to_frame(g)[0] - target))
        },
        DVector::from_element(1, x),
        &opts,
    )?;
    if !out.converged {
        return Err(EfError::NoConvergence { iterations: out.iterations, residual: out.residual });
    }
    Ok(out.x[0])
}

/// Michaelis-Menten micro system with `L(x) = (x, 0.5)` and `R(v) = v_1` in frame coordinates.
#[derive(Clone, Debug)]
pub struct MmSystem {
    pub params: MmParams,
    pub frame: Frame,
    /// Integrator step.
    pub h: f64,
    label: String,
}

impl MmSystem {
    pub fn new(params: MmParams, frame: Frame, h: f64) -> Result<Self> {
        params.validate()?;
        if !(h > 0.0) {
            return Err(EfError::InvalidInput(format!("step must be positive, got {h}")));
        }
        let label = if frame.is_identity() { "michaelis-menten" } else { "michaelis-menten-rotated" };
        Ok(Self { params, frame, h, label: label.into() })
    }

    /// Trajectory in frame coordinates, sampled at every integrator step.
    pub fn trajectory(&self, v0: [f64; 2], t: f64) -> Result<Vec<(f64, [f64; 2])>> {
        let tr = integrate::trajectory(|_, y, dy| self.rhs(y, dy), 0.0, &v0, t, self.h)?;
        Ok(tr.into_iter().map(|(t, y)| (t, [y[0], y[1]])).collect())
    }

    fn rhs(&self, y: &[f64], dy: &mut [f64]) {
        let f = mm_vector_field(&self.params, &self.frame, [y[0], y[1]]);
        dy[0] = f[0];
        dy[1] = f[1];
    }
}

impl MicroSystem for MmSystem {
    type State = [f64; 2];

    fn label(&self) -> &str {
        &self.label
    }

    fn coarse_dim(&self) -> usize {
        1
    }

    fn lift(&self, x: &DVector<f64>) -> Result<[f64; 2]> {
        Ok([x[0], 0.5])
    }

    fn evolve(&self, t: f64, u: &[f64; 2]) -> Result<[f64; 2]> {
        let y = integrate::integrate(|_, y, dy| self.rhs(y, dy), 0.0, u, t, self.h)?;
        Ok([y[0], y[1]])
    }

    fn restrict(&self, u: &[f64; 2]) -> DVector<f64> {
        DVector::from_element(1, u[0])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn field_values() {
        let p = MmParams::default();
        assert_eq!(mm_vector_field(&p, &Frame::identity(), [0.0, 0.0]), [0.0, 0.0]);
        let f = mm_vector_field(&p, &Frame::identity(), [1.0, 0.5]);
        assert!((f[0] + 0.0025).abs() < 1e-15);
        assert_eq!(f[1], 0.0);
    }

    #[test]
    fn graph_values() {
        let p = MmParams::default();
        for order in 0..=3 {
            assert_eq!(slow_manifold_graph_order(&p, 0.0, order).unwrap(), 0.0);
        }
        let p0 = MmParams { eps: 0.0, ..p };
        assert_eq!(slow_manifold_graph_order(&p0, 1.0, 3).unwrap(), 0.5);
        assert!((slow_manifold_graph_order(&p, 1.0, 1).unwrap() - 0.5003125).abs() < 1e-15);
        assert!(slow_manifold_graph(&p, -1.0).is_err());
    }

    #[test]
    fn printed_first_order_value() {
        let p = MmParams::default();
        assert!((printed_fiber_base_x(&p, [0.3, 0.9]).unwrap() - 0.3067385).abs() < 1e-7);
    }

    #[test]
    fn fiber_singular_limit() {
        let p = MmParams { eps: 0.0, ..Default::default() };
        assert_eq!(fiber_base_x(&p, [0.2, 1.3]).unwrap(), 0.2);
    }

    #[test]
    fn fiber_is_identity_on_manifold_to_fourth_order() {
        for x in [-0.4, -0.1, 0.2, 0.5] {
            let miss = |eps: f64| {
                let p = MmParams { eps, ..Default::default() };
                let y = slow_manifold_graph_order(&p, x, 3).unwrap();
                (fiber_base_x_order(&p, [x, y], 3).unwrap() - x).abs()
            };
            let (a, b) = (miss(0.02), miss(0.01));
            assert!(b < 1e-6, "x={x}: {b}");
            assert!(a / b > 16.0 * 0.8, "x={x}: ratio {}", a / b);
        }
    }

    #[test]
    fn expansion_matches_trajectory_matching() {
        let p = MmParams::default();
        let m = matched_fiber_base_x(&p, [0.3, 0.9], 40.0, 0.1).unwrap();
        assert!((m - 0.304111772).abs() < 1e-8, "{m}");
        let e = fiber_base_x_order(&p, [0.3, 0.9], 3).unwrap();
        assert!((m - e).abs() < 1e-8, "{m} vs {e}");
    }

    #[test]
    fn lift_and_restrict() {
        let sys = MmSystem::new(MmParams::default(), Frame::identity(), 0.1).unwrap();
        let x = DVector::from_element(1, -0.1);
        assert_eq!(sys.lift(&x).unwrap(), [-0.1, 0.5]);
        assert_eq!(sys.restrict(&sys.lift(&x).unwrap())[0], -0.1);
    }
}
