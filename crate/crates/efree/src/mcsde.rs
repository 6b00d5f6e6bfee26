//! Monte Carlo ensembles of the double-well SDE.
//!
//! Coarse variables are `(N, mean, variance)`. Lifting draws `N` Gaussian
//! particles, evolution is Euler-Maruyama and restriction returns the raw
//! power sums `(sum 1, sum Q, sum Q^2)`.

use crate::error::{EfError, Result};
use crate::newton::{self, NewtonOptions};
use crate::par;
use crate::potential::DoubleWellParams;
use crate::rng::StreamKey;
use nalgebra::DVector;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    /// Ensemble size.
    pub n: usize,
    /// Euler-Maruyama step.
    pub h: f64,
    pub seed: u64,
    pub damping: f64,
    /// Residual tolerance in scaled moments.
    pub newton_tol: f64,
    pub fd_step: f64,
    pub max_iter: usize,
    /// Largest admissible `|Q|`.
    pub guard: f64,
    /// Reuse one noise realization for every map evaluation inside a solve.
    pub frozen_noise: bool,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            n: 100_000,
            h: 1e-2,
            seed: 0,
            damping: 0.5,
            newton_tol: 5e-2,
            fd_step: 5e-2,
            max_iter: 50,
            guard: 50.0,
            frozen_noise: false,
        }
    }
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.n >= 1
            && self.h > 0.0
            && self.damping > 0.0
            && self.damping <= 1.0
            && self.newton_tol > 0.0
            && self.fd_step > 0.0
            && self.guard > 0.0;
        if ok {
            Ok(())
        } else {
            Err(EfError::InvalidInput(format!("invalid Monte Carlo configuration {self:?}")))
        }
    }
}

/// Particle positions.
#[derive(Clone, Debug, PartialEq)]
pub struct Ensemble {
    positions: Vec<f64>,
}

impl Ensemble {
    pub fn from_positions(positions: Vec<f64>) -> Result<Self> {
        if positions.is_empty() {
            return Err(EfError::InvalidInput("an ensemble needs at least one particle".into()));
        }
        if positions.iter().any(|q| !q.is_finite()) {
            return Err(EfError::InvalidInput("non-finite particle position".into()));
        }
        Ok(Self { positions })
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Step count and final step length for a horizon `t`.
fn steps_for(t: f64, h: f64) -> (usize, f64) {
    if t <= 0.0 {
        return (0, h);
    }
    let full = (t / h + 1e-9).floor();
    let rem = t - full * h;
    if rem > 1e-9 * h {
        (full as usize + 1, rem)
    } else {
        (full as usize, h)
    }
}

fn check_horizon(t: f64, h: f64) -> Result<()> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(EfError::InvalidInput(format!("evolution time must be nonnegative, got {t}")));
    }
    if !(h > 0.0) {
        return Err(EfError::InvalidInput(format!("step must be positive, got {h}")));
    }
    Ok(())
}

#[inline]
fn normal<R: rand::Rng>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Draw `n` positions `mean + sqrt(var) * eta`.
pub fn ensemble_lift(n: usize, mean: f64, var: f64, key: StreamKey) -> Result<Ensemble> {
    if n == 0 {
        return Err(EfError::InvalidInput("an ensemble needs at least one particle".into()));
    }
    if !(var >= 0.0) || !mean.is_finite() || !var.is_finite() {
        return Err(EfError::Domain(format!("lifting needs a finite mean and variance >= 0, got ({mean}, {var})")));
    }
    let sd = var.sqrt();
    let mut positions = vec![0.0; n];
    par::for_each_chunk_mut(&mut positions, |start, chunk| {
        for (i, q) in chunk.iter_mut().enumerate() {
            let mut rng = key.particle((start + i) as u64);
            *q = if sd == 0.0 { mean } else { mean + sd * normal(&mut rng) };
        }
    });
    Ok(Ensemble { positions })
}

/// Advance one particle; returns the failing step on a guard violation.
#[inline]
fn advance<R: rand::Rng>(
    p: &DoubleWellParams,
    mut q: f64,
    steps: usize,
    h: f64,
    last: f64,
    guard: f64,
    rng: &mut R,
) -> std::result::Result<f64, usize> {
    let sh = h.sqrt();
    for s in 0..steps {
        let (dt, sdt) = if s + 1 == steps { (last, last.sqrt()) } else { (h, sh) };
        let xi = normal(rng);
        q += p.drift(q) * dt + sdt * p.sigma * xi;
        if !(q.abs() <= guard) {
            return Err(s + 1);
        }
    }
    Ok(q)
}

fn first_failure(fails: &[Option<usize>]) -> Option<usize> {
    fails.iter().flatten().copied().min()
}

/// Euler-Maruyama evolution over time `t` with step `h`; the last step may be shortened.
pub fn euler_maruyama_evolve(
    p: &DoubleWellParams,
    e: &Ensemble,
    t: f64,
    h: f64,
    guard: f64,
    key: StreamKey,
) -> Result<Ensemble> {
    check_horizon(t, h)?;
    let (steps, last) = steps_for(t, h);
    let n = e.positions.len();
    let parts = par::map_indices(n.div_ceil(par::CHUNK), |c| {
        let lo = c * par::CHUNK;
        let hi = (lo + par::CHUNK).min(n);
        let mut out = Vec::with_capacity(hi - lo);
        let mut fail: Option<usize> = None;
        for i in lo..hi {
            let mut rng = key.particle(i as u64);
            match advance(p, e.positions[i], steps, h, last, guard, &mut rng) {
                Ok(q) => out.push(q),
                Err(s) => {
                    fail = Some(fail.map_or(s, |f| f.min(s)));
                    out.push(f64::NAN);
                }
            }
        }
        (out, fail)
    });
    let fails: Vec<Option<usize>> = parts.iter().map(|p| p.1).collect();
    if let Some(step) = first_failure(&fails) {
        return Err(EfError::Unstable { guard, step });
    }
    let positions = parts.into_iter().flat_map(|p| p.0).collect();
    Ok(Ensemble { positions })
}

/// Raw power sums `(N, sum Q, sum Q^2)`.
pub fn ensemble_restrict(e: &Ensemble) -> [f64; 3] {
    let partial: Vec<[f64; 3]> = e.positions.chunks(par::CHUNK).map(power_sums).collect();
    combine(&partial)
}

fn power_sums(qs: &[f64]) -> [f64; 3] {
    let mut s = [0.0; 3];
    for &q in qs {
        s[0] += 1.0;
        s[1] += q;
        s[2] += q * q;
    }
    s
}

fn combine(partial: &[[f64; 3]]) -> [f64; 3] {
    partial.iter().fold([0.0; 3], |a, b| [a[0] + b[0], a[1] + b[1], a[2] + b[2]])
}

/// One stochastic evaluation of the coarse map at `x = (N, mean, var)`.
///
/// Particle `i` takes its lifting draw and then its path increments from
/// stream `i` of `key`.
pub fn noisy_macro_map(p: &DoubleWellParams, t: f64, x: [f64; 3], cfg: &McConfig, key: StreamKey) -> Result<[f64; 3]> {
    macro_map_skipping(p, t, x, cfg, key, 0)
}

/// As [`noisy_macro_map`], but each particle discards `skip` path increments
/// after its lifting draw.
fn macro_map_skipping(
    p: &DoubleWellParams,
    t: f64,
    x: [f64; 3],
    cfg: &McConfig,
    key: StreamKey,
    skip: usize,
) -> Result<[f64; 3]> {
    check_horizon(t, cfg.h)?;
    let n = x[0].round();
    if !(n >= 1.0) {
        return Err(EfError::InvalidInput(format!("ensemble size must be at least 1, got {}", x[0])));
    }
    let (mean, var) = (x[1], x[2]);
    if !(var >= 0.0) || !mean.is_finite() {
        return Err(EfError::Domain(format!("lifting needs a finite mean and variance >= 0, got ({mean}, {var})")));
    }
    let n = n as usize;
    let sd = var.sqrt();
    let (steps, last) = steps_for(t, cfg.h);
    let chunks = n.div_ceil(par::CHUNK);
    let results = par::map_indices(chunks, |c| {
        let lo = c * par::CHUNK;
        let hi = (lo + par::CHUNK).min(n);
        let mut s = [0.0; 3];
        let mut fail: Option<usize> = None;
        for i in lo..hi {
            let mut rng = key.particle(i as u64);
            let q0 = mean + sd * normal(&mut rng);
            for _ in 0..skip {
                normal(&mut rng);
            }
            match advance(p, q0, steps, cfg.h, last, cfg.guard, &mut rng) {
                Ok(q) => {
                    s[0] += 1.0;
                    s[1] += q;
                    s[2] += q * q;
                }
                Err(step) => fail = Some(fail.map_or(step, |f| f.min(step))),
            }
        }
        (s, fail)
    });
    let fails: Vec<Option<usize>> = results.iter().map(|r| r.1).collect();
    if let Some(step) = first_failure(&fails) {
        return Err(EfError::Unstable { guard: cfg.guard, step });
    }
    let sums: Vec<[f64; 3]> = results.into_iter().map(|r| r.0).collect();
    Ok(combine(&sums))
}

/// Solution of the noisy implicit equation in `(mean, var)`.
#[derive(Clone, Debug, PartialEq)]
pub struct McFlowResult {
    pub y: [f64; 2],
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Damped Newton for `P(t_skip; y) = P(t_skip + delta; x)` with `N` fixed.
///
/// `x` and `guess` are `(mean, var)`. The variance fed to the lifting is
/// clipped at zero.
pub fn mc_implicit_flow(
    p: &DoubleWellParams,
    t_skip: f64,
    delta: f64,
    x: [f64; 2],
    guess: Option<[f64; 2]>,
    cfg: &McConfig,
    key: StreamKey,
) -> Result<McFlowResult> {
    cfg.validate()?;
    if !(t_skip >= 0.0) || !(delta >= 0.0) {
        return Err(EfError::InvalidInput(format!("need t_skip >= 0 and delta >= 0, got {t_skip}, {delta}")));
    }
    let n = cfg.n as f64;
    // Frozen mode couples every evaluation to the target: particle i reuses
    // its lifting draw, and its path increments are shifted by delta so that
    // P(t_skip; y) follows the noise of the last t_skip of P(t_skip + delta; x).
    let frozen = key.derive(1);
    let b_key = if cfg.frozen_noise { frozen } else { key.derive(0) };
    let shift = if cfg.frozen_noise { (delta / cfg.h + 1e-9).floor() as usize } else { 0 };
    let b = noisy_macro_map(p, t_skip + delta, [n, x[0], x[1]], cfg, b_key)?;
    let mut evals = 0u64;
    let f = |y: &DVector<f64>| -> Result<DVector<f64>> {
        let k = if cfg.frozen_noise { frozen } else { key.derive(2 + evals) };
        evals += 1;
        let m = macro_map_skipping(p, t_skip, [n, y[0], y[1].max(0.0)], cfg, k, shift)?;
        Ok(DVector::from_vec(vec![(m[1] - b[1]) / n, (m[2] - b[2]) / n]))
    };
    let opts = NewtonOptions {
        tol: cfg.newton_tol,
        max_iter: cfg.max_iter,
        damping: cfg.damping,
        fd_step: cfg.fd_step,
        min_iter: 0,
        backtrack: false,
    };
    let g = guess.unwrap_or(x);
    let out = newton::solve(f, DVector::from_vec(g.to_vec()), &opts)?;
    Ok(McFlowResult { y: [out.x[0], out.x[1]], residual: out.residual, iterations: out.iterations, converged: out.converged })
}

/// One row of [`mc_error_study`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct McErrorRecord {
    pub t_skip: f64,
    pub err: f64,
    pub converged: bool,
    pub start_label: String,
    pub y: [f64; 2],
}

/// Distance of the implicit flow at each `t_skip` to its value at the largest `t_skip`.
///
/// Each start is swept along the ascending grid with warm starts. Noise keys
/// depend on `(seed, start index, grid index)` only.
pub fn mc_error_study(
    p: &DoubleWellParams,
    starts: &[(String, [f64; 2])],
    delta: f64,
    grid: &[f64],
    cfg: &McConfig,
) -> Result<Vec<McErrorRecord>> {
    if grid.is_empty() {
        return Err(EfError::InsufficientData("empty t_skip grid".into()));
    }
    if grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(EfError::InvalidInput("t_skip grid must be strictly ascending".into()));
    }
    let root = StreamKey::new(cfg.seed);
    let mut out = Vec::new();
    for (si, (label, x)) in starts.iter().enumerate() {
        let mut guess = *x;
        let mut rows = Vec::with_capacity(grid.len());
        for (gi, &t) in grid.iter().enumerate() {
            let key = root.derive(si as u64).derive(gi as u64);
            let res = mc_implicit_flow(p, t, delta, *x, Some(guess), cfg, key);
            match res {
                Ok(r) => {
                    if r.converged {
                        guess = r.y;
                    }
                    rows.push((t, r.y, r.converged));
                }
                Err(EfError::Unstable { .. }) | Err(EfError::Singular(_)) => rows.push((t, [f64::NAN; 2], false)),
                Err(e) => return Err(e),
            }
        }
        let reference = rows.last().map(|r| r.1).unwrap_or([f64::NAN; 2]);
        for (t, y, converged) in rows {
            let err = ((y[0] - reference[0]).powi(2) + (y[1] - reference[1]).powi(2)).sqrt();
            out.push(McErrorRecord { t_skip: t, err, converged, start_label: label.clone(), y });
        }
    }
    Ok(out)
}

/// Sample standard deviation of `component 2 / N` over repeated map evaluations.
pub fn mc_sampling_study(
    p: &DoubleWellParams,
    t: f64,
    x: [f64; 2],
    sizes: &[usize],
    repeats: usize,
    cfg: &McConfig,
) -> Result<Vec<(usize, f64)>> {
    if repeats < 2 {
        return Err(EfError::InsufficientData("need at least two repeats".into()));
    }
    let root = StreamKey::new(cfg.seed);
    sizes
        .iter()
        .map(|&n| {
            let vals = (0..repeats)
                .map(|r| {
                    let k = root.derive(n as u64).derive(r as u64);
                    noisy_macro_map(p, t, [n as f64, x[0], x[1]], cfg, k).map(|m| m[1] / n as f64)
                })
                .collect::<Result<Vec<f64>>>()?;
            let mean = vals.iter().sum::<f64>() / repeats as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (repeats - 1) as f64;
            Ok((n, var.sqrt()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key() -> StreamKey {
        StreamKey::new(42)
    }

    #[test]
    fn zero_variance_lift_is_exact() {
        let e = ensemble_lift(10, 1.25, 0.0, key()).unwrap();
        assert!(e.positions().iter().all(|&q| q == 1.25));
        let r = ensemble_restrict(&e);
        assert_eq!(r, [10.0, 12.5, 10.0 * 1.25 * 1.25]);
    }

    #[test]
    fn restrict_single_particle() {
        let e = Ensemble::from_positions(vec![2.0]).unwrap();
        assert_eq!(ensemble_restrict(&e), [1.0, 2.0, 4.0]);
        let z = Ensemble::from_positions(vec![0.0; 7]).unwrap();
        assert_eq!(ensemble_restrict(&z), [7.0, 0.0, 0.0]);
    }

    #[test]
    fn bad_inputs() {
        assert!(ensemble_lift(0, 0.0, 1.0, key()).is_err());
        assert!(ensemble_lift(5, 0.0, -1.0, key()).is_err());
        assert!(Ensemble::from_positions(vec![f64::NAN]).is_err());
        assert!(Ensemble::from_positions(vec![]).is_err());
    }

    #[test]
    fn deterministic_euler_when_noise_free() {
        let p = DoubleWellParams { mu: -1.0, nu: 0.0, sigma: 0.0 };
        let e = Ensemble::from_positions(vec![1.0, -0.5]).unwrap();
        let out = euler_maruyama_evolve(&p, &e, 0.01, 0.01, 50.0, key()).unwrap();
        for (a, b) in out.positions().iter().zip(e.positions()) {
            assert_eq!(*a, b + p.drift(*b) * 0.01);
        }
    }

    #[test]
    fn well_minimum_is_fixed_without_noise() {
        let p = DoubleWellParams { sigma: 0.0, ..Default::default() };
        let roots = p.critical_points();
        let e = Ensemble::from_positions(vec![roots[0], roots[2]]).unwrap();
        let out = euler_maruyama_evolve(&p, &e, 1.0, 0.01, 50.0, key()).unwrap();
        for (a, b) in out.positions().iter().zip(e.positions()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn guard_violation() {
        let p = DoubleWellParams::default();
        let e = Ensemble::from_positions(vec![0.0, 40.0]).unwrap();
        let err = euler_maruyama_evolve(&p, &e, 1.0, 0.01, 50.0, key()).unwrap_err();
        assert!(matches!(err, EfError::Unstable { step: 1, .. }));
    }

    #[test]
    fn map_at_time_zero_is_lift_then_restrict() {
        let cfg = McConfig { n: 1000, ..Default::default() };
        let p = DoubleWellParams::default();
        let m = noisy_macro_map(&p, 0.0, [1000.0, 0.3, 0.0], &cfg, key()).unwrap();
        assert_eq!(m[0], 1000.0);
        assert!((m[1] - 300.0).abs() < 1e-9);
        assert!((m[2] - 90.0).abs() < 1e-9);
    }

    #[test]
    fn steps_cover_horizon() {
        assert_eq!(steps_for(0.0, 0.01), (0, 0.01));
        let (n, last) = steps_for(1.0, 0.01);
        assert_eq!(n, 100);
        assert!((last - 0.01).abs() < 1e-15);
        let (n, last) = steps_for(0.105, 0.01);
        assert_eq!(n, 11);
        assert!((last - 0.005).abs() < 1e-12);
    }
}
