//! Lift-evolve-restrict maps and the implicitly defined coarse flow.
//!
//! A backend implements [`MicroSystem`]. The coarse map is
//! `P(t; x) = R(M(t; L(x)))` and the implicit flow `y = Phi_tskip(delta; x)`
//! solves `P(t_skip; y) = P(t_skip + delta; x)`.

use crate::error::{EfError, Result};
use crate::newton::{self, NewtonOptions};
use crate::par;
use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// Lifting, evolution and restriction of one model.
pub trait MicroSystem: Sync {
    type State: Clone + Send + Sync;

    fn label(&self) -> &str;
    fn coarse_dim(&self) -> usize;
    fn lift(&self, x: &DVector<f64>) -> Result<Self::State>;
    /// Evolve over time `t >= 0`. `evolve(0, u)` must return `u`.
    fn evolve(&self, t: f64, u: &Self::State) -> Result<Self::State>;
    fn restrict(&self, u: &Self::State) -> DVector<f64>;

    /// Explicit slow map, if the backend knows it. Enables [`SolverMode::FixedPoint`].
    fn exact_map(&self) -> Option<&dyn ExactCoarseMap> {
        None
    }
}

/// The restriction of the slow dynamics `P_*(t; y)` and its inverse.
pub trait ExactCoarseMap: Sync {
    fn apply(&self, t: f64, y: &DVector<f64>) -> Result<DVector<f64>>;
    /// Solve `P_*(t; y) = b` for `y`, starting at `guess`.
    fn invert(&self, t: f64, b: &DVector<f64>, guess: &DVector<f64>) -> Result<DVector<f64>>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverMode {
    Newton,
    FixedPoint,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Max-norm tolerance on the residual (and on the final correction in fixed-point mode).
    pub tolerance: f64,
    pub max_iterations: usize,
    pub damping: f64,
    pub fd_step: f64,
    pub mode: SolverMode,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { tolerance: 1e-12, max_iterations: 50, damping: 1.0, fd_step: 1e-6, mode: SolverMode::Newton }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tolerance > 0.0 && self.damping > 0.0 && self.damping <= 1.0 && self.fd_step > 0.0 && self.max_iterations > 0 {
            Ok(())
        } else {
            Err(EfError::InvalidInput(format!("invalid solver configuration {self:?}")))
        }
    }

    fn newton(&self) -> NewtonOptions {
        NewtonOptions {
            tol: self.tolerance,
            max_iter: self.max_iterations,
            damping: self.damping,
            fd_step: self.fd_step,
            min_iter: 0,
            backtrack: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImplicitFlowResult {
    pub y: DVector<f64>,
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Size of the last fixed-point update; `None` in Newton mode.
    pub final_correction: Option<f64>,
}

impl ImplicitFlowResult {
    /// Turn a non-converged result into an error.
    pub fn require_converged(self) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(EfError::NoConvergence { iterations: self.iterations, residual: self.residual_norm })
        }
    }
}

fn check_state<S: MicroSystem + ?Sized>(sys: &S, x: &DVector<f64>) -> Result<()> {
    if x.len() != sys.coarse_dim() {
        return Err(EfError::InvalidInput(format!(
            "{}: coarse state has length {}, expected {}",
            sys.label(),
            x.len(),
            sys.coarse_dim()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(EfError::InvalidInput(format!("{}: non-finite coarse state", sys.label())));
    }
    Ok(())
}

fn check_time(name: &str, t: f64) -> Result<()> {
    if t >= 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(EfError::InvalidInput(format!("{name} must be finite and nonnegative, got {t}")))
    }
}

fn max_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0f64, |m, a| if a.is_nan() { f64::INFINITY } else { m.max(a.abs()) })
}

/// `P(t; x) = R(M(t; L(x)))`.
pub fn lift_evolve_restrict<S: MicroSystem + ?Sized>(sys: &S, t: f64, x: &DVector<f64>) -> Result<DVector<f64>> {
    check_time("t", t)?;
    check_state(sys, x)?;
    let u = sys.lift(x)?;
    let v = sys.evolve(t, &u)?;
    Ok(sys.restrict(&v))
}

/// Solve `P(t_skip; y) = P(t_skip + delta; x)`, starting from `guess` (default `x`).
pub fn implicit_flow<S: MicroSystem + ?Sized>(
    sys: &S,
    t_skip: f64,
    delta: f64,
    x: &DVector<f64>,
    cfg: &SolverConfig,
    guess: Option<&DVector<f64>>,
) -> Result<ImplicitFlowResult> {
    cfg.validate()?;
    check_time("t_skip", t_skip)?;
    check_time("delta", delta)?;
    check_state(sys, x)?;
    let b = lift_evolve_restrict(sys, t_skip + delta, x)?;
    let y0 = guess.cloned().unwrap_or_else(|| x.clone());
    check_state(sys, &y0)?;
    match cfg.mode {
        SolverMode::Newton => {
            let out = newton::solve(|y| Ok(lift_evolve_restrict(sys, t_skip, y)? - &b), y0, &cfg.newton())?;
            Ok(ImplicitFlowResult {
                y: out.x,
                residual_norm: out.residual,
                iterations: out.iterations,
                converged: out.converged,
                final_correction: None,
            })
        }
        SolverMode::FixedPoint => {
            let exact = sys.exact_map().ok_or_else(|| {
                EfError::InvalidInput(format!("{}: backend does not support fixed-point mode", sys.label()))
            })?;
            fixed_point(sys, exact, t_skip, &b, y0, cfg)
        }
    }
}

/// Iterate `y <- P_*^{-1}(t; b - P(t; y) + P_*(t; y))`.
fn fixed_point<S: MicroSystem + ?Sized>(
    sys: &S,
    exact: &dyn ExactCoarseMap,
    t: f64,
    b: &DVector<f64>,
    mut y: DVector<f64>,
    cfg: &SolverConfig,
) -> Result<ImplicitFlowResult> {
    let mut correction = f64::INFINITY;
    let mut iterations = 0;
    for k in 0..cfg.max_iterations {
        iterations = k + 1;
        let p = match lift_evolve_restrict(sys, t, &y) {
            Ok(p) => p,
            Err(_) => break,
        };
        let target = b - p + exact.apply(t, &y)?;
        let next = match exact.invert(t, &target, &y) {
            Ok(v) if v.iter().all(|a| a.is_finite()) => v,
            _ => break,
        };
        correction = max_norm(&(&next - &y));
        y = next;
        if correction <= cfg.tolerance {
            break;
        }
    }
    let residual = lift_evolve_restrict(sys, t, &y).map(|p| max_norm(&(p - b))).unwrap_or(f64::INFINITY);
    Ok(ImplicitFlowResult {
        converged: correction <= cfg.tolerance && residual <= cfg.tolerance,
        y,
        residual_norm: residual,
        iterations,
        final_correction: Some(correction),
    })
}

/// Restriction-coordinate variant: solve `P(t_skip; x_b) = x`, return `P(t_skip + delta; x_b)`.
pub fn restriction_coordinate_flow<S: MicroSystem + ?Sized>(
    sys: &S,
    t_skip: f64,
    delta: f64,
    x: &DVector<f64>,
    cfg: &SolverConfig,
) -> Result<DVector<f64>> {
    cfg.validate()?;
    check_time("t_skip", t_skip)?;
    check_time("delta", delta)?;
    check_state(sys, x)?;
    let out = newton::solve(|z| Ok(lift_evolve_restrict(sys, t_skip, z)? - x), x.clone(), &cfg.newton())?;
    if !out.converged {
        return Err(EfError::NoConvergence { iterations: out.iterations, residual: out.residual });
    }
    lift_evolve_restrict(sys, t_skip + delta, &out.x)
}

/// Approximate stable-fiber base point of `L(x)`: solve
/// `P(2 t_skip; x_g) = P(t_skip; x)` and return `M(t_skip; L(x_g))`.
pub fn approx_fiber_coordinates<S: MicroSystem + ?Sized>(
    sys: &S,
    t_skip: f64,
    x: &DVector<f64>,
    cfg: &SolverConfig,
) -> Result<S::State> {
    cfg.validate()?;
    check_time("t_skip", t_skip)?;
    check_state(sys, x)?;
    let b = lift_evolve_restrict(sys, t_skip, x)?;
    let out = newton::solve(|z| Ok(lift_evolve_restrict(sys, 2.0 * t_skip, z)? - &b), x.clone(), &cfg.newton())?;
    if !out.converged {
        return Err(EfError::NoConvergence { iterations: out.iterations, residual: out.residual });
    }
    sys.evolve(t_skip, &sys.lift(&out.x)?)
}

/// Dense row-major tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self { shape, data: vec![0.0; n] }
    }

    fn offset(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.shape).fold(0, |acc, (i, n)| acc * n + i)
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], v: f64) {
        let o = self.offset(idx);
        self.data[o] = v;
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Frobenius norm of `self - other`.
    pub fn distance(&self, other: &Tensor) -> Result<f64> {
        if self.shape != other.shape {
            return Err(EfError::InvalidInput(format!("shape mismatch {:?} vs {:?}", self.shape, other.shape)));
        }
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
    }
}

type Offset = Vec<i8>;

/// Stencil offsets (in units of the step) needed for derivatives up to `order`.
pub fn stencil(d: usize, order: usize) -> Vec<Offset> {
    let mut pts: Vec<Offset> = vec![vec![0; d]];
    let unit = |j: usize, s: i8| {
        let mut o = vec![0i8; d];
        o[j] = s;
        o
    };
    if order >= 1 {
        for j in 0..d {
            pts.push(unit(j, 1));
            pts.push(unit(j, -1));
        }
    }
    if order >= 2 {
        for j in 0..d {
            for k in j + 1..d {
                for (a, b) in [(1, 1), (1, -1), (-1, 1), (-1, -1)] {
                    let mut o = vec![0i8; d];
                    o[j] = a;
                    o[k] = b;
                    pts.push(o);
                }
            }
        }
    }
    pts
}

fn stencil_point(x: &DVector<f64>, o: &Offset, step: f64) -> DVector<f64> {
    DVector::from_fn(x.len(), |i, _| x[i] + step * o[i] as f64)
}

/// Central-difference derivative tensor of order `order` from values on [`stencil`].
fn assemble(d: usize, order: usize, step: f64, vals: &HashMap<Offset, DVector<f64>>) -> Result<Tensor> {
    let at = |o: &Offset| vals.get(o).ok_or_else(|| EfError::InvalidInput("missing stencil value".into()));
    let zero = vec![0i8; d];
    let f0 = at(&zero)?;
    let m = f0.len();
    let shift = |j: usize, s: i8, k: Option<(usize, i8)>| {
        let mut o = vec![0i8; d];
        o[j] = s;
        if let Some((k, t)) = k {
            o[k] = t;
        }
        o
    };
    match order {
        0 => Ok(Tensor { shape: vec![m], data: f0.iter().copied().collect() }),
        1 => {
            let mut t = Tensor::zeros(vec![m, d]);
            for j in 0..d {
                let fp = at(&shift(j, 1, None))?;
                let fm = at(&shift(j, -1, None))?;
                for i in 0..m {
                    t.set(&[i, j], (fp[i] - fm[i]) / (2.0 * step));
                }
            }
            Ok(t)
        }
        2 => {
            let mut t = Tensor::zeros(vec![m, d, d]);
            let h2 = step * step;
            for j in 0..d {
                let fp = at(&shift(j, 1, None))?;
                let fm = at(&shift(j, -1, None))?;
                for i in 0..m {
                    t.set(&[i, j, j], (fp[i] - 2.0 * f0[i] + fm[i]) / h2);
                }
                for k in j + 1..d {
                    let pp = at(&shift(j, 1, Some((k, 1))))?;
                    let pm = at(&shift(j, 1, Some((k, -1))))?;
                    let mp = at(&shift(j, -1, Some((k, 1))))?;
                    let mm = at(&shift(j, -1, Some((k, -1))))?;
                    for i in 0..m {
                        let v = (pp[i] - pm[i] - mp[i] + mm[i]) / (4.0 * h2);
                        t.set(&[i, j, k], v);
                        t.set(&[i, k, j], v);
                    }
                }
            }
            Ok(t)
        }
        _ => Err(EfError::InvalidInput(format!("derivative order must be 0, 1 or 2, got {order}"))),
    }
}

/// Finite-difference derivative of an arbitrary map at `x`.
pub fn fd_derivative<F>(f: F, x: &DVector<f64>, order: usize, step: f64) -> Result<Tensor>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>> + Sync,
{
    if order > 2 {
        return Err(EfError::InvalidInput(format!("derivative order must be 0, 1 or 2, got {order}")));
    }
    let pts = stencil(x.len(), order);
    let vals = par::map_indices(pts.len(), |i| f(&stencil_point(x, &pts[i], step)));
    let mut map = HashMap::new();
    for (o, v) in pts.into_iter().zip(vals) {
        map.insert(o, v?);
    }
    assemble(x.len(), order, step, &map)
}

/// Derivative of `Phi_tskip(delta; .)` at `x` of the given order by central differences.
pub fn macro_flow_derivative<S: MicroSystem + ?Sized>(
    sys: &S,
    t_skip: f64,
    delta: f64,
    x: &DVector<f64>,
    order: usize,
    step: f64,
    cfg: &SolverConfig,
) -> Result<Tensor> {
    if order == 0 || order > 2 {
        return Err(EfError::InvalidInput(format!("derivative order must be 1 or 2, got {order}")));
    }
    fd_derivative(
        |z| {
            let r = implicit_flow(sys, t_skip, delta, z, cfg, None)?;
            if !r.converged {
                return Err(EfError::NoConvergence { iterations: r.iterations, residual: r.residual_norm });
            }
            Ok(r.y)
        },
        x,
        order,
        step,
    )
}

/// One row of a healing-time sweep.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceRecord {
    pub t_skip: f64,
    /// `E^j` for `j = 0..=max_order`; empty when a solve failed.
    pub errors: Vec<f64>,
    pub converged: bool,
}

/// Settings for [`convergence_study`].
#[derive(Clone, Debug, PartialEq)]
pub struct StudyConfig {
    pub max_order: usize,
    /// Central-difference step for derivatives.
    pub step: f64,
    pub solver: SolverConfig,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self { max_order: 2, step: 1e-4, solver: SolverConfig::default() }
    }
}

/// Errors `E^j = |D^j Phi_tskip(delta; x) - D^j Phi_*(delta; x)|_F` over a `t_skip` grid.
///
/// The grid is swept in ascending order; each stencil point is warm-started
/// from its solution at the previous grid point.
pub fn convergence_study<S, F>(
    sys: &S,
    reference: F,
    x: &DVector<f64>,
    delta: f64,
    grid: &[f64],
    cfg: &StudyConfig,
) -> Result<Vec<ConvergenceRecord>>
where
    S: MicroSystem + ?Sized,
    F: Fn(&DVector<f64>) -> Result<DVector<f64>> + Sync,
{
    if cfg.max_order > 2 {
        return Err(EfError::InvalidInput(format!("max_order must be at most 2, got {}", cfg.max_order)));
    }
    if grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(EfError::InvalidInput("t_skip grid must be strictly ascending".into()));
    }
    check_state(sys, x)?;
    let d = x.len();
    let pts = stencil(d, cfg.max_order);
    let ref_vals = par::map_indices(pts.len(), |i| reference(&stencil_point(x, &pts[i], cfg.step)));
    let mut ref_map = HashMap::new();
    for (o, v) in pts.iter().zip(ref_vals) {
        ref_map.insert(o.clone(), v?);
    }
    let ref_tensors = (0..=cfg.max_order).map(|j| assemble(d, j, cfg.step, &ref_map)).collect::<Result<Vec<_>>>()?;

    let mut guesses: Vec<Option<DVector<f64>>> = vec![None; pts.len()];
    let mut records = Vec::with_capacity(grid.len());
    for &t in grid {
        let sols = par::map_indices(pts.len(), |i| {
            let z = stencil_point(x, &pts[i], cfg.step);
            implicit_flow(sys, t, delta, &z, &cfg.solver, guesses[i].as_ref())
        });
        let mut ok = true;
        let mut map = HashMap::new();
        for (i, s) in sols.into_iter().enumerate() {
            match s {
                Ok(r) if r.converged => {
                    guesses[i] = Some(r.y.clone());
                    map.insert(pts[i].clone(), r.y);
                }
                Ok(_) | Err(EfError::NoConvergence { .. }) | Err(EfError::NonFinite { .. }) | Err(EfError::Singular(_)) => {
                    ok = false
                }
                Err(e) => return Err(e),
            }
        }
        let errors = if ok {
            (0..=cfg.max_order)
                .map(|j| assemble(d, j, cfg.step, &map).and_then(|t| t.distance(&ref_tensors[j])))
                .collect::<Result<Vec<_>>>()?
        } else {
            Vec::new()
        };
        records.push(ConvergenceRecord { t_skip: t, errors, converged: ok });
    }
    Ok(records)
}

/// Least-squares slope of `ln(value)` against `t` over `window` (inclusive).
///
/// Points with non-positive or non-finite values are ignored.
pub fn fit_decay_rate(points: &[(f64, f64)], window: (f64, f64)) -> Result<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(t, v)| *t >= window.0 && *t <= window.1 && *v > 0.0 && v.is_finite())
        .map(|&(t, v)| (t, v.ln()))
        .collect();
    if pts.len() < 3 {
        return Err(EfError::InsufficientData(format!(
            "{} usable points in [{}, {}], need at least 3",
            pts.len(),
            window.0,
            window.1
        )));
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ml = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx = pts.iter().map(|p| (p.0 - mt).powi(2)).sum::<f64>();
    let sxy = pts.iter().map(|p| (p.0 - mt) * (p.1 - ml)).sum::<f64>();
    if sxx == 0.0 {
        return Err(EfError::InsufficientData("all points share one abscissa".into()));
    }
    Ok(sxy / sxx)
}

/// Abscissa where a decaying series reaches its floor: the first point whose
/// value is at most `factor` times the series minimum.
pub fn floor_onset(points: &[(f64, f64)], factor: f64) -> Option<f64> {
    let min = points.iter().map(|p| p.1).filter(|v| *v > 0.0 && v.is_finite()).fold(f64::INFINITY, f64::min);
    if !min.is_finite() {
        return None;
    }
    points.iter().find(|p| p.1 > 0.0 && p.1 <= factor * min).map(|p| p.0)
}

/// `-ln(delta_eval) / (d_tan_plus + d_tr)`.
pub fn optimal_healing_time(delta_eval: f64, d_tan_plus: f64, d_tr: f64) -> Result<f64> {
    if !(delta_eval > 0.0 && delta_eval < 1.0) {
        return Err(EfError::Domain(format!("evaluation error must lie in (0, 1), got {delta_eval}")));
    }
    if !(d_tr > 0.0) || !(d_tan_plus >= 0.0) {
        return Err(EfError::Domain(format!("need d_tr > 0 and d_tan+ >= 0, got {d_tr}, {d_tan_plus}")));
    }
    Ok(-delta_eval.ln() / (d_tan_plus + d_tr))
}
