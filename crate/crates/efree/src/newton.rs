//! Damped Newton iteration with a central finite-difference Jacobian.

use crate::error::{EfError, Result};
use nalgebra::{DMatrix, DVector};

/// Settings for [`solve`].
#[derive(Clone, Debug, PartialEq)]
pub struct NewtonOptions {
    /// Success when the max-norm of the residual is at most `tol`.
    pub tol: f64,
    pub max_iter: usize,
    /// Fraction of the Newton step taken per iteration.
    pub damping: f64,
    /// Absolute step of the central differences.
    pub fd_step: f64,
    /// Iterations performed before the residual test is allowed to stop the loop.
    pub min_iter: usize,
    /// Halve the step while the residual grows. Only useful for smooth maps.
    pub backtrack: bool,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self { tol: 1e-12, max_iter: 50, damping: 1.0, fd_step: 1e-6, min_iter: 0, backtrack: true }
    }
}

/// Result of [`solve`]. When `converged` is false, `x` is the iterate with the smallest residual.
#[derive(Clone, Debug, PartialEq)]
pub struct NewtonOutcome {
    pub x: DVector<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn max_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0f64, |m, a| if a.is_nan() { f64::INFINITY } else { m.max(a.abs()) })
}

/// Central-difference Jacobian of `f` at `x`.
pub fn fd_jacobian<F>(f: &mut F, x: &DVector<f64>, step: f64) -> Result<DMatrix<f64>>
where
    F: FnMut(&DVector<f64>) -> Result<DVector<f64>>,
{
    let n = x.len();
    let mut jac: Option<DMatrix<f64>> = None;
    let mut xp = x.clone();
    for j in 0..n {
        xp[j] = x[j] + step;
        let fp = f(&xp)?;
        xp[j] = x[j] - step;
        let fm = f(&xp)?;
        xp[j] = x[j];
        let m = jac.get_or_insert_with(|| DMatrix::zeros(fp.len(), n));
        m.set_column(j, &((fp - fm) / (2.0 * step)));
    }
    jac.ok_or_else(|| EfError::InvalidInput("empty unknown vector".into()))
}

/// Solve `f(x) = 0` starting from `x0`.
pub fn solve<F>(mut f: F, x0: DVector<f64>, opts: &NewtonOptions) -> Result<NewtonOutcome>
where
    F: FnMut(&DVector<f64>) -> Result<DVector<f64>>,
{
    let mut x = x0;
    let mut fx = f(&x)?;
    if fx.len() != x.len() {
        return Err(EfError::InvalidInput(format!(
            "residual has {} components for {} unknowns",
            fx.len(),
            x.len()
        )));
    }
    let mut res = max_norm(&fx);
    let mut best = (x.clone(), res);
    for it in 0..opts.max_iter {
        if it >= opts.min_iter && res <= opts.tol {
            return Ok(NewtonOutcome { x, residual: res, iterations: it, converged: true });
        }
        let jac = fd_jacobian(&mut f, &x, opts.fd_step)?;
        let step = jac
            .lu()
            .solve(&fx)
            .ok_or_else(|| EfError::Singular(format!("finite-difference Jacobian at iteration {it}")))?;
        let mut scale = opts.damping;
        let mut trial = &x - &step * scale;
        let mut ft = f(&trial)?;
        let mut rt = max_norm(&ft);
        if opts.backtrack {
            let mut halvings = 0;
            while !(rt < res) && halvings < 12 {
                scale *= 0.5;
                trial = &x - &step * scale;
                ft = f(&trial)?;
                rt = max_norm(&ft);
                halvings += 1;
            }
        }
        let moved = (&trial - &x).amax();
        x = trial;
        fx = ft;
        res = rt;
        if res < best.1 {
            best = (x.clone(), res);
        }
        if opts.backtrack && moved <= f64::EPSILON * (1.0 + x.amax()) && res > opts.tol {
            break;
        }
    }
    if res <= opts.tol && opts.max_iter >= opts.min_iter {
        return Ok(NewtonOutcome { x, residual: res, iterations: opts.max_iter, converged: true });
    }
    Ok(NewtonOutcome { x: best.0, residual: best.1, iterations: opts.max_iter, converged: false })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_root() {
        let out = solve(|x| Ok(DVector::from_element(1, x[0] * x[0] - 2.0)), DVector::from_element(1, 1.0), &NewtonOptions::default())
            .unwrap();
        assert!(out.converged);
        assert!((out.x[0] - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn damped_linear_contracts() {
        let opts = NewtonOptions { damping: 0.5, backtrack: false, tol: 1e-6, ..Default::default() };
        let out = solve(|x| Ok(x.map(|v| v - 3.0)), DVector::from_element(2, 0.0), &opts).unwrap();
        assert!(out.converged);
        assert!(out.iterations > 10);
        assert!((out.x[0] - 3.0).abs() < 1e-6);
    }

    #[test]
    fn no_root_is_flagged() {
        let opts = NewtonOptions { max_iter: 20, ..Default::default() };
        let out = solve(|x| Ok(DVector::from_element(1, x[0] * x[0] + 1.0)), DVector::from_element(1, 0.5), &opts).unwrap();
        assert!(!out.converged);
        assert!(out.residual >= 1.0);
    }

    #[test]
    fn min_iter_forces_a_step() {
        let opts = NewtonOptions { min_iter: 1, tol: 1.0, ..Default::default() };
        let out = solve(|x| Ok(x.map(|v| v - 0.1)), DVector::from_element(1, 0.0), &opts).unwrap();
        assert!(out.converged);
        assert!(out.x[0] > 0.09);
    }
}
