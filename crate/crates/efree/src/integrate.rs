//! Fixed-step Dormand-Prince integration.
//!
//! The propagated solution is the fifth-order one. The embedded fourth-order
//! solution is not used for step control.

use crate::error::{EfError, Result};
use nalgebra::DMatrix;

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];

/// Default step size.
pub const DEFAULT_STEP: f64 = 0.1;

/// Right-hand side `f(t, y, dy)` writing the derivative into `dy`.
pub trait Rhs: Fn(f64, &[f64], &mut [f64]) {}
impl<F: Fn(f64, &[f64], &mut [f64])> Rhs for F {}

/// Reusable stage storage for a fixed dimension.
struct Stages {
    k: [Vec<f64>; 7],
    tmp: Vec<f64>,
}

impl Stages {
    fn new(n: usize) -> Self {
        Self { k: std::array::from_fn(|_| vec![0.0; n]), tmp: vec![0.0; n] }
    }

    fn step<F: Rhs>(&mut self, f: &F, t: f64, y: &mut [f64], h: f64) {
        let n = y.len();
        f(t, y, &mut self.k[0]);
        for s in 1..7 {
            for i in 0..n {
                let mut acc = 0.0;
                for (j, a) in A[s][..s].iter().enumerate() {
                    acc += a * self.k[j][i];
                }
                self.tmp[i] = y[i] + h * acc;
            }
            f(t + C[s] * h, &self.tmp, &mut self.k[s]);
        }
        for i in 0..n {
            let mut acc = 0.0;
            for (s, b) in B.iter().enumerate() {
                acc += b * self.k[s][i];
            }
            y[i] += h * acc;
        }
    }
}

/// Number of steps and the length of the last one for `[t0, t1]`.
fn schedule(t0: f64, t1: f64, h: f64) -> (usize, f64) {
    let span = t1 - t0;
    let ratio = span / h;
    let full = (ratio + 1e-9).floor();
    let rem = span - full * h;
    if rem > 1e-9 * h {
        (full as usize + 1, rem)
    } else {
        (full as usize, h)
    }
}

fn validate(t0: f64, t1: f64, h: f64) -> Result<()> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(EfError::InvalidInput(format!("step size must be positive, got {h}")));
    }
    if !(t1 >= t0) || !t1.is_finite() || !t0.is_finite() {
        return Err(EfError::InvalidInput(format!("require t0 <= t1, got [{t0}, {t1}]")));
    }
    Ok(())
}

/// Integrate `y' = f(t, y)` from `t0` to `t1` with steps of size `h`.
///
/// The last step is shortened to land exactly on `t1`.
pub fn integrate<F: Rhs>(f: F, t0: f64, y0: &[f64], t1: f64, h: f64) -> Result<Vec<f64>> {
    validate(t0, t1, h)?;
    let (steps, last) = schedule(t0, t1, h);
    let mut y = y0.to_vec();
    let mut st = Stages::new(y.len());
    for i in 0..steps {
        let hi = if i + 1 == steps { last } else { h };
        st.step(&f, t0 + i as f64 * h, &mut y, hi);
        if y.iter().any(|v| !v.is_finite()) {
            return Err(EfError::NonFinite { step: i + 1 });
        }
    }
    Ok(y)
}

/// Like [`integrate`] but records `(t, y)` after every step, starting with `(t0, y0)`.
pub fn trajectory<F: Rhs>(f: F, t0: f64, y0: &[f64], t1: f64, h: f64) -> Result<Vec<(f64, Vec<f64>)>> {
    validate(t0, t1, h)?;
    let (steps, last) = schedule(t0, t1, h);
    let mut y = y0.to_vec();
    let mut st = Stages::new(y.len());
    let mut out = Vec::with_capacity(steps + 1);
    out.push((t0, y.clone()));
    for i in 0..steps {
        let hi = if i + 1 == steps { last } else { h };
        st.step(&f, t0 + i as f64 * h, &mut y, hi);
        if y.iter().any(|v| !v.is_finite()) {
            return Err(EfError::NonFinite { step: i + 1 });
        }
        let t = if i + 1 == steps { t1 } else { t0 + (i + 1) as f64 * h };
        out.push((t, y.clone()));
    }
    Ok(out)
}

/// Central-difference Jacobian of `g` at `x` with step `eps`.
pub fn central_jacobian<G>(g: G, x: &[f64], eps: f64) -> Result<DMatrix<f64>>
where
    G: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let mut xp = x.to_vec();
    let mut cols = Vec::with_capacity(x.len());
    let mut rows = 0;
    for j in 0..x.len() {
        xp[j] = x[j] + eps;
        let fp = g(&xp)?;
        xp[j] = x[j] - eps;
        let fm = g(&xp)?;
        xp[j] = x[j];
        rows = fp.len();
        cols.push(fp.iter().zip(&fm).map(|(a, b)| (a - b) / (2.0 * eps)).collect::<Vec<_>>());
    }
    Ok(DMatrix::from_fn(rows, x.len(), |i, j| cols[j][i]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let y = integrate(|_, y, dy| dy[0] = -y[0], 0.0, &[1.0], 1.0, 0.1).unwrap();
        assert!((y[0] - (-1.0f64).exp()).abs() < 1e-8);
    }

    #[test]
    fn zero_span_is_identity() {
        let y = integrate(|_, y, dy| dy[0] = y[0] * y[0], 2.0, &[0.7], 2.0, 0.1).unwrap();
        assert_eq!(y, vec![0.7]);
    }

    #[test]
    fn partial_last_step() {
        let (n, last) = schedule(0.0, 1.05, 0.1);
        assert_eq!(n, 11);
        assert!((last - 0.05).abs() < 1e-12);
        let (n, last) = schedule(0.0, 1.0, 0.1);
        assert_eq!(n, 10);
        assert_eq!(last, 0.1);
    }

    #[test]
    fn blow_up_reports_step() {
        let err = integrate(|_, y, dy| dy[0] = y[0] * y[0], 0.0, &[1.0], 2.0, 0.1).unwrap_err();
        assert!(matches!(err, EfError::NonFinite { .. }));
    }

    #[test]
    fn bad_step() {
        assert!(integrate(|_, _, dy| dy[0] = 0.0, 0.0, &[1.0], 1.0, 0.0).is_err());
        assert!(integrate(|_, _, dy| dy[0] = 0.0, 1.0, &[1.0], 0.0, 0.1).is_err());
    }

    #[test]
    fn jacobian_of_linear_map() {
        let j = central_jacobian(|x| Ok(vec![2.0 * x[0] + x[1], -x[1]]), &[0.3, 0.4], 1e-4).unwrap();
        assert!((j[(0, 0)] - 2.0).abs() < 1e-10);
        assert!((j[(0, 1)] - 1.0).abs() < 1e-10);
        assert!((j[(1, 1)] + 1.0).abs() < 1e-10);
        assert!(j[(1, 0)].abs() < 1e-10);
    }
}
