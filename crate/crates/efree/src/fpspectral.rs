//! Spectral model of the Fokker-Planck equation of `dQ = -V'(Q) dt + sigma dW`.
//!
//! The generator is discretized on the interior points of a uniform grid with
//! zero (absorbing) boundary values as a birth-death process with rates
//! `r(i -> i±1) = c exp(-(V(i±1) - V(i)) / (2D))`, `c = D / h^2`, `D = sigma^2 / 2`.
//! These rates satisfy detailed balance with `exp(-V / D)` exactly, so the
//! stationary density is the discrete Boltzmann weight. The symmetrized
//! operator is tridiagonal and its eigenpairs give `phi_j` and the adjoint
//! functions `chi_j = phi_j / phi_1`.
//!
//! Densities are evolved on the full grid with a Talbot contour quadrature of
//! `exp(t L)`, so truncation to `m` modes only affects the spectral data.

use crate::efcore::{ExactCoarseMap, MicroSystem, SolverConfig};
use crate::error::{EfError, Result};
use crate::newton::{self, NewtonOptions};
use crate::par;
use crate::potential::DoubleWellParams;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Eigenvectors are computed where `(V - V_min) / (2D)` stays below this value.
const EIGEN_WINDOW: f64 = 350.0;
/// Adjoint functions are taken from eigenvector ratios where `sqrt(phi_1)`
/// exceeds this fraction of its maximum, and from the three-term recursion outside.
const RATIO_CUTOFF: f64 = 1e-6;
/// Nodes of the Talbot contour.
const TALBOT_NODES: usize = 32;
/// A moment vector column counts as nonzero above this size when fixing signs.
const SIGN_THRESHOLD: f64 = 1e-6;
/// Largest admissible condition number of `T_lin` and `R_d`.
const MAX_CONDITION: f64 = 1e10;

/// How densities are propagated in time.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Evolution {
    /// Full-grid `exp(t L) rho`.
    Exact,
    /// `sum_j exp(lambda_j t) <phi_j, rho>_1 phi_j` over the retained modes.
    Modal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralConfig {
    pub lo: f64,
    pub hi: f64,
    /// Grid points including both boundary points.
    pub n: usize,
    /// Retained eigenpairs.
    pub m: usize,
    /// Coarse dimension (number of moments).
    pub d: usize,
    pub evolution: Evolution,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        Self { lo: -10.0, hi: 10.0, n: 1000, m: 8, d: 3, evolution: Evolution::Exact }
    }
}

/// Discretized generator with its leading eigenpairs.
#[derive(Clone, Debug)]
pub struct SpectralModel {
    params: DoubleWellParams,
    cfg: SpectralConfig,
    q: Vec<f64>,
    h: f64,
    /// Generator entries: `(i + 1, i)`, `(i, i)` and `(i, i + 1)`.
    sub: Vec<f64>,
    diag: Vec<f64>,
    sup: Vec<f64>,
    lambda: Vec<f64>,
    phi: Vec<Vec<f64>>,
    chi: Vec<Vec<f64>>,
    r_d: DMatrix<f64>,
}

impl SpectralModel {
    /// Build the model and validate its spectrum.
    pub fn build(params: DoubleWellParams, cfg: SpectralConfig) -> Result<Self> {
        params.validate()?;
        if cfg.n < 200 || !(cfg.hi > cfg.lo) {
            return Err(EfError::InvalidInput(format!("need n >= 200 and lo < hi, got {cfg:?}")));
        }
        if cfg.m < cfg.d || cfg.m > cfg.n / 4 || cfg.d == 0 {
            return Err(EfError::InvalidInput(format!("need d <= m <= n/4, got d={} m={} n={}", cfg.d, cfg.m, cfg.n)));
        }
        let h = (cfg.hi - cfg.lo) / (cfg.n - 1) as f64;
        let diff = 0.5 * params.sigma * params.sigma;
        let c = diff / (h * h);
        let all: Vec<f64> = (0..cfg.n).map(|i| cfg.lo + i as f64 * h).collect();
        let u: Vec<f64> = all.iter().map(|&x| params.potential(x) / (2.0 * diff)).collect();
        let q = all[1..cfg.n - 1].to_vec();
        let ni = q.len();
        // rp[i] = r(i -> i+1), rm[i] = r(i -> i-1) for interior index i.
        let rp: Vec<f64> = (0..ni).map(|i| c * (u[i + 1] - u[i + 2]).exp()).collect();
        let rm: Vec<f64> = (0..ni).map(|i| c * (u[i + 1] - u[i]).exp()).collect();
        let diag: Vec<f64> = (0..ni).map(|i| -(rp[i] + rm[i])).collect();
        let sub = rp[..ni - 1].to_vec();
        let sup = rm[1..].to_vec();

        let ui = &u[1..cfg.n - 1];
        let umin = ui.iter().copied().fold(f64::INFINITY, f64::min);
        let (wlo, whi) = window(ui, umin, EIGEN_WINDOW)?;
        let (lambda, vecs) = eigen_window(&rp, &rm, wlo, whi, cfg.m, c)?;

        // Ground state of the symmetric form, exact on the full grid.
        let mut w: Vec<f64> = ui.iter().map(|&v| (-(v - umin)).exp()).collect();
        let wn = (w.iter().map(|a| a * a).sum::<f64>() * h).sqrt();
        w.iter_mut().for_each(|a| *a /= wn);

        // Near-degenerate pairs mix with the ground state, so the excited
        // vectors are made exactly orthogonal to it and their eigenvalues are
        // refined by Rayleigh quotients.
        let mut psi: Vec<Vec<f64>> = Vec::with_capacity(cfg.m);
        let mut lambda = lambda;
        psi.push(w.clone());
        for (j, v) in vecs.iter().enumerate().skip(1) {
            let mut full = vec![0.0; ni];
            full[wlo..whi].copy_from_slice(v);
            for p in &psi {
                let dot = full.iter().zip(p).map(|(a, b)| a * b).sum::<f64>() * h;
                full.iter_mut().zip(p).for_each(|(a, b)| *a -= dot * b);
            }
            let nrm = (full.iter().map(|a| a * a).sum::<f64>() * h).sqrt();
            full.iter_mut().for_each(|a| *a /= nrm);
            lambda[j] = rayleigh(&full, &rp, &rm, c) * h;
            psi.push(full);
        }
        let mut phi: Vec<Vec<f64>> = psi.iter().map(|p| p.iter().zip(&w).map(|(a, b)| a * b).collect()).collect();
        let mut chi: Vec<Vec<f64>> =
            (0..cfg.m).map(|j| adjoint_function(&psi[j], &w, lambda[j], &rp, &rm, j == 0)).collect();

        // Sign convention: leading significant raw moment of each phi_j is positive.
        let moments = |f: &[f64], k: i32| q.iter().zip(f).map(|(x, v)| x.powi(k) * v).sum::<f64>() * h;
        for j in 0..cfg.m {
            let lead = (0..cfg.m.max(cfg.d) as i32).map(|k| moments(&phi[j], k)).find(|v| v.abs() > SIGN_THRESHOLD);
            if lead.is_some_and(|v| v < 0.0) {
                phi[j].iter_mut().for_each(|a| *a = -*a);
                chi[j].iter_mut().for_each(|a| *a = -*a);
            }
        }
        let r_d = DMatrix::from_fn(cfg.d, cfg.d, |k, l| moments(&phi[l], k as i32));

        let model = Self { params, cfg, q, h, sub, diag, sup, lambda, phi, chi, r_d };
        model.validate_spectrum()?;
        Ok(model)
    }

    fn validate_spectrum(&self) -> Result<()> {
        if self.lambda.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(EfError::Eigen(format!("spectrum not strictly decreasing: {:?}", self.lambda)));
        }
        if !(self.lambda[1] < 0.0) {
            return Err(EfError::Eigen(format!("second eigenvalue must be negative, got {}", self.lambda[1])));
        }
        Ok(())
    }

    pub fn params(&self) -> &DoubleWellParams {
        &self.params
    }

    pub fn config(&self) -> &SpectralConfig {
        &self.cfg
    }

    /// Interior grid points.
    pub fn grid(&self) -> &[f64] {
        &self.q
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn d(&self) -> usize {
        self.cfg.d
    }

    pub fn m(&self) -> usize {
        self.cfg.m
    }

    /// Eigenvalues in descending order.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.lambda
    }

    /// Eigenfunction `phi_{j+1}` on the grid.
    pub fn phi(&self, j: usize) -> &[f64] {
        &self.phi[j]
    }

    /// Adjoint function `chi_{j+1} = phi_{j+1} / phi_1` on the grid.
    pub fn chi(&self, j: usize) -> &[f64] {
        &self.chi[j]
    }

    /// Stationary density `phi_1`.
    pub fn stationary(&self) -> &[f64] {
        &self.phi[0]
    }

    /// Moment matrix `(R_d)_{kl} = int Q^k phi_l`.
    pub fn r_d(&self) -> &DMatrix<f64> {
        &self.r_d
    }

    /// `diag(exp(lambda_l t))` for the first `d` modes, as a vector.
    pub fn m_d(&self, t: f64) -> DVector<f64> {
        DVector::from_fn(self.cfg.d, |l, _| (self.lambda[l] * t).exp())
    }

    /// Trapezoidal quadrature (boundary values are zero).
    pub fn integrate(&self, f: &[f64]) -> f64 {
        f.iter().sum::<f64>() * self.h
    }

    /// `<a, b>_1 = int a b / phi_1`, skipping points where `phi_1` underflows.
    pub fn weighted_inner(&self, a: &[f64], b: &[f64]) -> f64 {
        let phi1 = &self.phi[0];
        let mut s = 0.0;
        for i in 0..self.q.len() {
            if phi1[i] > 0.0 {
                s += a[i] * b[i] / phi1[i];
            }
        }
        s * self.h
    }

    /// `<phi_j, rho>_1 = int chi_j rho` for all retained modes.
    pub fn modal_coefficients(&self, rho: &[f64]) -> Vec<f64> {
        self.chi.iter().map(|c| self.integrate_product(c, rho)).collect()
    }

    fn integrate_product(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() * self.h
    }

    /// Density from modal coefficients.
    pub fn from_modal(&self, a: &[f64]) -> Vec<f64> {
        let mut rho = vec![0.0; self.q.len()];
        for (aj, pj) in a.iter().zip(&self.phi) {
            for (r, p) in rho.iter_mut().zip(pj) {
                *r += aj * p;
            }
        }
        rho
    }

    /// Projection onto `span(phi_1 .. phi_d)`.
    pub fn spectral_projection(&self, rho: &[f64]) -> Vec<f64> {
        let a: Vec<f64> = self.chi[..self.cfg.d].iter().map(|c| self.integrate_product(c, rho)).collect();
        self.from_modal(&a)
    }

    /// Raw moments `int Q^k rho` for `k = 0 .. d-1`.
    pub fn restrict_moments(&self, rho: &[f64]) -> DVector<f64> {
        let mut out = DVector::zeros(self.cfg.d);
        for (x, r) in self.q.iter().zip(rho) {
            let mut p = 1.0;
            for k in 0..self.cfg.d {
                out[k] += p * r;
                p *= x;
            }
        }
        out * self.h
    }

    /// `x_1 N(x_2, x_3)` sampled on the grid.
    pub fn lift_gauss(&self, x: &DVector<f64>) -> Result<Vec<f64>> {
        if x.len() != 3 {
            return Err(EfError::InvalidInput(format!("Gaussian lifting needs 3 coordinates, got {}", x.len())));
        }
        if !(x[2] > 0.0) || x.iter().any(|v| !v.is_finite()) {
            return Err(EfError::Domain(format!("Gaussian lifting needs variance > 0, got {}", x[2])));
        }
        let norm = x[0] / (2.0 * std::f64::consts::PI * x[2]).sqrt();
        Ok(self.q.iter().map(|&s| norm * (-(s - x[1]).powi(2) / (2.0 * x[2])).exp()).collect())
    }

    /// `exp(t L) rho`.
    pub fn evolve_density(&self, t: f64, rho: &[f64]) -> Result<Vec<f64>> {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(EfError::Domain(format!("densities evolve forward only, got t = {t}")));
        }
        if rho.len() != self.q.len() {
            return Err(EfError::InvalidInput(format!("density has {} samples, grid has {}", rho.len(), self.q.len())));
        }
        if t == 0.0 {
            return Ok(rho.to_vec());
        }
        match self.cfg.evolution {
            Evolution::Exact => Ok(self.talbot(t, rho)),
            Evolution::Modal => {
                let a: Vec<f64> =
                    self.modal_coefficients(rho).iter().zip(&self.lambda).map(|(a, l)| a * (l * t).exp()).collect();
                Ok(self.from_modal(&a))
            }
        }
    }

    /// Talbot quadrature of `exp(t A) v` on the cotangent contour.
    fn talbot(&self, t: f64, v: &[f64]) -> Vec<f64> {
        let nn = TALBOT_NODES as f64;
        let nodes: Vec<usize> = (0..TALBOT_NODES)
            .filter(|&k| -std::f64::consts::PI + (k as f64 + 0.5) * 2.0 * std::f64::consts::PI / nn > 0.0)
            .collect();
        let terms = par::map_indices(nodes.len(), |i| {
            let th = -std::f64::consts::PI + (nodes[i] as f64 + 0.5) * 2.0 * std::f64::consts::PI / nn;
            let (a, b) = (0.5017, 0.6407);
            let cot = 1.0 / (b * th).tan();
            let z = Complex64::new(nn * (a * th * cot - 0.6122), nn * 0.2645 * th);
            let dz = Complex64::new(nn * (a * cot - a * b * th / (b * th).sin().powi(2)), nn * 0.2645);
            let x = self.resolvent(z, t, v);
            let w = z.exp() * dz;
            x.into_iter().map(|xi| w * xi).collect::<Vec<Complex64>>()
        });
        let mut acc = vec![Complex64::new(0.0, 0.0); v.len()];
        for term in terms {
            for (a, b) in acc.iter_mut().zip(term) {
                *a += b;
            }
        }
        let scale = Complex64::new(0.0, nn).inv();
        acc.into_iter().map(|a| 2.0 * (a * scale).re).collect()
    }

    /// Solve `(z I - t A) x = v` for the tridiagonal generator `A`.
    fn resolvent(&self, z: Complex64, t: f64, v: &[f64]) -> Vec<Complex64> {
        let n = v.len();
        let mut cp = vec![Complex64::new(0.0, 0.0); n];
        let mut dp = vec![Complex64::new(0.0, 0.0); n];
        let d0 = z - t * self.diag[0];
        cp[0] = Complex64::new(-t * self.sup[0], 0.0) / d0;
        dp[0] = Complex64::new(v[0], 0.0) / d0;
        for i in 1..n {
            let lower = -t * self.sub[i - 1];
            let den = z - t * self.diag[i] - lower * cp[i - 1];
            if i < n - 1 {
                cp[i] = Complex64::new(-t * self.sup[i], 0.0) / den;
            }
            dp[i] = (v[i] - lower * dp[i - 1]) / den;
        }
        let mut x = vec![Complex64::new(0.0, 0.0); n];
        x[n - 1] = dp[n - 1];
        for i in (0..n - 1).rev() {
            x[i] = dp[i] - cp[i] * x[i + 1];
        }
        x
    }

    /// Apply the discrete generator to a density.
    pub fn apply_generator(&self, rho: &[f64]) -> Vec<f64> {
        let n = rho.len();
        (0..n)
            .map(|i| {
                let mut s = self.diag[i] * rho[i];
                if i > 0 {
                    s += self.sub[i - 1] * rho[i - 1];
                }
                if i + 1 < n {
                    s += self.sup[i] * rho[i + 1];
                }
                s
            })
            .collect()
    }
}

/// `psi^T H psi` for the symmetrized generator with off-diagonal `c`.
fn rayleigh(psi: &[f64], rp: &[f64], rm: &[f64], c: f64) -> f64 {
    let n = psi.len();
    let mut s = 0.0;
    for i in 0..n {
        let mut hp = -(rp[i] + rm[i]) * psi[i];
        if i > 0 {
            hp += c * psi[i - 1];
        }
        if i + 1 < n {
            hp += c * psi[i + 1];
        }
        s += psi[i] * hp;
    }
    s
}

/// Index range `[lo, hi)` where `u - umin < cutoff`.
fn window(u: &[f64], umin: f64, cutoff: f64) -> Result<(usize, usize)> {
    let lo = u.iter().position(|&v| v - umin < cutoff);
    let hi = u.iter().rposition(|&v| v - umin < cutoff);
    match (lo, hi) {
        (Some(lo), Some(hi)) => Ok((lo, hi + 1)),
        _ => Err(EfError::Eigen("empty eigenvalue window".into())),
    }
}

/// Leading `m` eigenpairs of the symmetrized generator restricted to `[lo, hi)`.
fn eigen_window(rp: &[f64], rm: &[f64], lo: usize, hi: usize, m: usize, c: f64) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let k = hi - lo;
    if k < m {
        return Err(EfError::Eigen(format!("window holds {k} points, need at least {m}")));
    }
    let mut a = DMatrix::zeros(k, k);
    for i in 0..k {
        a[(i, i)] = -(rp[lo + i] + rm[lo + i]);
        if i + 1 < k {
            a[(i, i + 1)] = c;
            a[(i + 1, i)] = c;
        }
    }
    let eig = SymmetricEigen::try_new(a, f64::EPSILON, 0).ok_or_else(|| EfError::Eigen("no convergence".into()))?;
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let lambda: Vec<f64> = order[..m].iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs: Vec<Vec<f64>> = order[..m].iter().map(|&i| eig.eigenvectors.column(i).iter().copied().collect()).collect();
    Ok((lambda, vecs))
}

/// `chi = psi / w` where `w` is well resolved, continued into the tails by the
/// backward-equation recursion `rm_i (chi_{i-1} - chi_i) + rp_i (chi_{i+1} - chi_i) = lambda chi_i`
/// with zero boundary values.
fn adjoint_function(psi: &[f64], w: &[f64], lambda: f64, rp: &[f64], rm: &[f64], ground: bool) -> Vec<f64> {
    let n = psi.len();
    if ground {
        return vec![1.0; n];
    }
    let wmax = w.iter().copied().fold(0.0, f64::max);
    let good: Vec<usize> = (0..n).filter(|&i| w[i] > RATIO_CUTOFF * wmax).collect();
    let (glo, ghi) = (good[0], *good.last().expect("nonempty"));
    let mut chi = vec![0.0; n];
    for i in glo..=ghi {
        chi[i] = psi[i] / w[i];
    }
    // Right tail: start from chi_n = 0 (boundary) and chi_{n-1} = 1.
    let mut xr = vec![0.0; n + 1];
    xr[n - 1] = 1.0;
    for i in (ghi..n).rev() {
        if i == 0 {
            break;
        }
        xr[i - 1] = ((lambda + rm[i] + rp[i]) * xr[i] - rp[i] * xr[i + 1]) / rm[i];
    }
    if xr[ghi] != 0.0 && xr[ghi].is_finite() {
        let s = chi[ghi] / xr[ghi];
        for i in ghi..n {
            chi[i] = s * xr[i];
        }
    }
    // Left tail: xl[k + 1] = chi_k with xl[0] the boundary value.
    let mut xl = vec![0.0; n + 2];
    xl[1] = 1.0;
    for i in 0..=glo {
        xl[i + 2] = ((lambda + rm[i] + rp[i]) * xl[i + 1] - rm[i] * xl[i]) / rp[i];
    }
    if xl[glo + 1] != 0.0 && xl[glo + 1].is_finite() {
        let s = chi[glo] / xl[glo + 1];
        for i in 0..=glo {
            chi[i] = s * xl[i + 1];
        }
    }
    chi
}

/// Densities `rho_j` of the linear lifting `L_lin(x) = sum_j x_j rho_j`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearLiftBasis {
    densities: Vec<Vec<f64>>,
}

impl LinearLiftBasis {
    /// Validate unit mass of every density.
    pub fn new(model: &SpectralModel, densities: Vec<Vec<f64>>) -> Result<Self> {
        if densities.len() != model.d() {
            return Err(EfError::InvalidInput(format!("need {} basis densities, got {}", model.d(), densities.len())));
        }
        for (j, r) in densities.iter().enumerate() {
            if r.len() != model.grid().len() {
                return Err(EfError::InvalidInput(format!("basis density {j} has the wrong length")));
            }
            let mass = model.integrate(r);
            if (mass - 1.0).abs() > 1e-8 {
                return Err(EfError::InvalidInput(format!("basis density {j} has mass {mass}, expected 1")));
            }
        }
        Ok(Self { densities })
    }

    /// Unit-mass Gaussians with the given means and common variance.
    pub fn gaussians(model: &SpectralModel, means: &[f64], var: f64) -> Result<Self> {
        let ds = means
            .iter()
            .map(|&m| model.lift_gauss(&DVector::from_vec(vec![1.0, m, var])))
            .collect::<Result<Vec<_>>>()?;
        Self::new(model, ds)
    }

    /// The slow eigenfunctions `phi_1 .. phi_d`. Only `phi_1` has unit mass.
    pub fn eigenfunctions(model: &SpectralModel) -> Self {
        Self { densities: (0..model.d()).map(|j| model.phi(j).to_vec()).collect() }
    }

    /// Means `-1.5, -0.5, 1` with variance 1.
    pub fn default_for(model: &SpectralModel) -> Result<Self> {
        Self::gaussians(model, &[-1.5, -0.5, 1.0], 1.0)
    }

    pub fn densities(&self) -> &[Vec<f64>] {
        &self.densities
    }
}

/// `sum_j x_j rho_j`.
pub fn lift_linear(model: &SpectralModel, basis: &LinearLiftBasis, x: &DVector<f64>) -> Vec<f64> {
    let mut rho = vec![0.0; model.grid().len()];
    for (xj, rj) in x.iter().zip(&basis.densities) {
        for (r, v) in rho.iter_mut().zip(rj) {
            *r += xj * v;
        }
    }
    rho
}

fn condition(m: &DMatrix<f64>) -> f64 {
    let s = m.clone().svd(false, false).singular_values;
    let max = s.iter().copied().fold(0.0, f64::max);
    let min = s.iter().copied().fold(f64::INFINITY, f64::min);
    max / min
}

fn smallest_singular_value(m: &DMatrix<f64>) -> f64 {
    m.clone().svd(false, false).singular_values.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Matrices of the linear lifting.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearMaps {
    /// `(T_lin)_{lj} = <phi_l, rho_j>_1`.
    pub t_lin: DMatrix<f64>,
    pub r_d: DMatrix<f64>,
    /// `lambda_1 .. lambda_d`.
    pub lambda: Vec<f64>,
}

impl LinearMaps {
    pub fn m_d(&self, t: f64) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_iterator(self.lambda.len(), self.lambda.iter().map(|l| (l * t).exp())))
    }

    /// `P_lin,*(t) = R_d M_d(t) T_lin`.
    pub fn p_star(&self, t: f64) -> DMatrix<f64> {
        &self.r_d * self.m_d(t) * &self.t_lin
    }
}

/// Assemble `T_lin` and `R_d`, rejecting ill-conditioned pairs.
pub fn linear_maps(model: &SpectralModel, basis: &LinearLiftBasis) -> Result<LinearMaps> {
    let d = model.d();
    let t_lin = DMatrix::from_fn(d, d, |l, j| model.integrate_product(model.chi(l), &basis.densities[j]));
    let r_d = model.r_d().clone();
    let (ct, cr) = (condition(&t_lin), condition(&r_d));
    if !(ct <= MAX_CONDITION && cr <= MAX_CONDITION) {
        return Err(EfError::Domain(format!("transversality violated: cond(T_lin) = {ct:e}, cond(R_d) = {cr:e}")));
    }
    Ok(LinearMaps { t_lin, r_d, lambda: model.eigenvalues()[..d].to_vec() })
}

/// `Phi_lin,*(delta) = T_lin^{-1} M_d(delta) T_lin`; `delta` may be negative.
pub fn exact_flow_linear(model: &SpectralModel, basis: &LinearLiftBasis, delta: f64) -> Result<DMatrix<f64>> {
    let maps = linear_maps(model, basis)?;
    let inv = maps.t_lin.clone().try_inverse().ok_or_else(|| EfError::Singular("T_lin".into()))?;
    Ok(inv * maps.m_d(delta) * &maps.t_lin)
}

/// `P_lin(t)`: column `j` holds the moments of the evolved basis density `rho_j`.
pub fn p_lin(model: &SpectralModel, basis: &LinearLiftBasis, t: f64) -> Result<DMatrix<f64>> {
    let d = model.d();
    let mut out = DMatrix::zeros(d, d);
    for (j, r) in basis.densities.iter().enumerate() {
        out.set_column(j, &model.restrict_moments(&model.evolve_density(t, r)?));
    }
    Ok(out)
}

/// `Phi_lin,tskip(delta) = P_lin(t_skip)^{-1} P_lin(t_skip + delta)`.
pub fn approx_flow_linear(model: &SpectralModel, basis: &LinearLiftBasis, t_skip: f64, delta: f64) -> Result<DMatrix<f64>> {
    let a = p_lin(model, basis, t_skip)?;
    let b = p_lin(model, basis, t_skip + delta)?;
    let smin = smallest_singular_value(&a);
    let inv = a.try_inverse().ok_or_else(|| EfError::Singular(format!("P_lin({t_skip}), smallest singular value {smin:e}")))?;
    Ok(inv * b)
}

/// `(|P_lin,*(t)^{-1}|, |P_lin,*(t) - P_lin(t)|, sigma_min(P_lin(t)))` in the Frobenius norm.
pub fn linear_error_components(model: &SpectralModel, basis: &LinearLiftBasis, t: f64) -> Result<(f64, f64, f64)> {
    let maps = linear_maps(model, basis)?;
    let star = maps.p_star(t);
    let p = p_lin(model, basis, t)?;
    let star_inv = star.clone().try_inverse().ok_or_else(|| EfError::Singular(format!("P_lin,*({t})")))?;
    Ok((star_inv.norm(), (star - &p).norm(), smallest_singular_value(&p)))
}

/// `T_Gauss(x)_k = <phi_k, L_Gauss(x)>_1` for `k = 1 .. d`.
pub fn t_gauss(model: &SpectralModel, x: &DVector<f64>) -> Result<DVector<f64>> {
    let rho = model.lift_gauss(x)?;
    Ok(DVector::from_fn(model.d(), |k, _| model.integrate_product(model.chi(k), &rho)))
}

fn gauss_newton_options(cfg: &SolverConfig) -> NewtonOptions {
    NewtonOptions {
        tol: cfg.tolerance,
        max_iter: cfg.max_iterations,
        damping: cfg.damping,
        fd_step: cfg.fd_step,
        min_iter: 0,
        backtrack: true,
    }
}

/// Solve `T_Gauss(y) = target` by Newton from `guess`.
pub fn t_gauss_inverse(
    model: &SpectralModel,
    target: &DVector<f64>,
    guess: &DVector<f64>,
    cfg: &SolverConfig,
) -> Result<DVector<f64>> {
    let out = newton::solve(|y| Ok(t_gauss(model, y)? - target), guess.clone(), &gauss_newton_options(cfg))?;
    if !out.converged {
        return Err(EfError::NoConvergence { iterations: out.iterations, residual: out.residual });
    }
    if !(out.x[2] > 0.0) {
        return Err(EfError::Domain(format!("inverse left the region var > 0: {:?}", out.x.as_slice())));
    }
    Ok(out.x)
}

/// `Phi_Gauss,*(delta; x) = T_Gauss^{-1}(M_d(delta) T_Gauss(x))`.
pub fn gauss_exact_flow(model: &SpectralModel, delta: f64, x: &DVector<f64>, cfg: &SolverConfig) -> Result<DVector<f64>> {
    let target = t_gauss(model, x)?.component_mul(&model.m_d(delta));
    t_gauss_inverse(model, &target, x, cfg)
}

/// Residual terms of the Gaussian lifting error identity.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussResiduals {
    pub res: DVector<f64>,
    pub res_delta: DVector<f64>,
    pub healed_res: DVector<f64>,
    pub healed_res_delta: DVector<f64>,
}

/// `res(y) = T(y) - M_d(-t) R_d^{-1} P(t; y)` and
/// `res_delta(x) = M_d(-t) R_d^{-1} P(t + delta; x) - M_d(delta) T(x)`, with healed
/// variants multiplied by `M_d(t)`.
pub fn gauss_residual_decomposition(
    model: &SpectralModel,
    t_skip: f64,
    delta: f64,
    x: &DVector<f64>,
    y: &DVector<f64>,
) -> Result<GaussResiduals> {
    let rd_inv = model.r_d().clone().try_inverse().ok_or_else(|| EfError::Singular("R_d".into()))?;
    let p = |t: f64, z: &DVector<f64>| -> Result<DVector<f64>> {
        Ok(model.restrict_moments(&model.evolve_density(t, &model.lift_gauss(z)?)?))
    };
    let back = model.m_d(-t_skip);
    let res = t_gauss(model, y)? - (&rd_inv * p(t_skip, y)?).component_mul(&back);
    let res_delta = (&rd_inv * p(t_skip + delta, x)?).component_mul(&back) - t_gauss(model, x)?.component_mul(&model.m_d(delta));
    let fwd = model.m_d(t_skip);
    Ok(GaussResiduals {
        healed_res: res.component_mul(&fwd),
        healed_res_delta: res_delta.component_mul(&fwd),
        res,
        res_delta,
    })
}

/// One sample of the projected one-dimensional drift.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DriftSample {
    pub x2: f64,
    pub drift: f64,
    pub converged: bool,
}

/// Drift `(y_2 - x_2) / delta` of the implicit flow restricted to the mean, with
/// mass 1 and variance frozen at `x3`. `y_2` solves
/// `P(t_skip; (1, y_2, x3))_2 = P(t_skip + delta; (1, x_2, x3))_2`.
pub fn projected_phase_portrait_1d(
    model: &SpectralModel,
    x3: f64,
    x2_grid: &[f64],
    delta: f64,
    t_skip: f64,
    cfg: &SolverConfig,
) -> Result<Vec<DriftSample>> {
    if !(x3 > 0.0) || !(delta > 0.0) || !(t_skip >= 0.0) {
        return Err(EfError::InvalidInput(format!("need x3 > 0, delta > 0, t_skip >= 0; got {x3}, {delta}, {t_skip}")));
    }
    let mean = |t: f64, m: f64| -> Result<f64> {
        let rho = model.lift_gauss(&DVector::from_vec(vec![1.0, m, x3]))?;
        Ok(model.restrict_moments(&model.evolve_density(t, &rho)?)[1])
    };
    let opts = gauss_newton_options(cfg);
    let rows = par::map_indices(x2_grid.len(), |i| -> Result<DriftSample> {
        let x2 = x2_grid[i];
        let b = mean(t_skip + delta, x2)?;
        match newton::solve(|y| Ok(DVector::from_element(1, mean(t_skip, y[0])? - b)), DVector::from_element(1, x2), &opts) {
            Ok(out) => Ok(DriftSample { x2, drift: (out.x[0] - x2) / delta, converged: out.converged }),
            Err(EfError::Singular(_) | EfError::NoConvergence { .. }) => Ok(DriftSample { x2, drift: f64::NAN, converged: false }),
            Err(e) => Err(e),
        }
    });
    rows.into_iter().collect()
}

/// Lifting used by [`FpSystem`].
#[derive(Clone, Debug)]
pub enum Lifting {
    Linear(LinearLiftBasis),
    Gauss,
}

/// Fokker-Planck micro system with moment restriction.
pub struct FpSystem<'a> {
    model: &'a SpectralModel,
    lifting: Lifting,
    /// Solver for `T_Gauss^{-1}` inside the fixed-point map.
    inner: SolverConfig,
    rd_inv: DMatrix<f64>,
    t_lin_inv: Option<DMatrix<f64>>,
    t_lin: Option<DMatrix<f64>>,
}

impl<'a> FpSystem<'a> {
    pub fn new(model: &'a SpectralModel, lifting: Lifting) -> Result<Self> {
        let rd_inv = model.r_d().clone().try_inverse().ok_or_else(|| EfError::Singular("R_d".into()))?;
        let (t_lin, t_lin_inv) = match &lifting {
            Lifting::Linear(b) => {
                let maps = linear_maps(model, b)?;
                let inv = maps.t_lin.clone().try_inverse().ok_or_else(|| EfError::Singular("T_lin".into()))?;
                (Some(maps.t_lin), Some(inv))
            }
            Lifting::Gauss => (None, None),
        };
        let inner = SolverConfig { tolerance: 1e-12, ..Default::default() };
        Ok(Self { model, lifting, inner, rd_inv, t_lin_inv, t_lin })
    }

    pub fn model(&self) -> &SpectralModel {
        self.model
    }

    fn coords(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        match &self.t_lin {
            Some(t) => Ok(t * y),
            None => t_gauss(self.model, y),
        }
    }
}

impl MicroSystem for FpSystem<'_> {
    type State = Vec<f64>;

    fn label(&self) -> &str {
        match self.lifting {
            Lifting::Linear(_) => "fokker-planck-linear",
            Lifting::Gauss => "fokker-planck-gauss",
        }
    }

    fn coarse_dim(&self) -> usize {
        self.model.d()
    }

    fn lift(&self, x: &DVector<f64>) -> Result<Vec<f64>> {
        match &self.lifting {
            Lifting::Linear(b) => Ok(lift_linear(self.model, b, x)),
            Lifting::Gauss => self.model.lift_gauss(x),
        }
    }

    fn evolve(&self, t: f64, u: &Vec<f64>) -> Result<Vec<f64>> {
        self.model.evolve_density(t, u)
    }

    fn restrict(&self, u: &Vec<f64>) -> DVector<f64> {
        self.model.restrict_moments(u)
    }

    fn exact_map(&self) -> Option<&dyn ExactCoarseMap> {
        Some(self)
    }
}

impl ExactCoarseMap for FpSystem<'_> {
    fn apply(&self, t: f64, y: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.model.r_d() * self.coords(y)?.component_mul(&self.model.m_d(t)))
    }

    fn invert(&self, t: f64, b: &DVector<f64>, guess: &DVector<f64>) -> Result<DVector<f64>> {
        let target = (&self.rd_inv * b).component_mul(&self.model.m_d(-t));
        match &self.t_lin_inv {
            Some(inv) => Ok(inv * target),
            None => t_gauss_inverse(self.model, &target, guess, &self.inner),
        }
    }
}
