//! Named experiments: parameter defaults and the tables each one writes.

use crate::error::{CliError, CliResult};
use crate::params::Params;
use crate::table::{Cell, Table};
use clap::ValueEnum;
use efree::efcore::{self, ConvergenceRecord, SolverConfig, SolverMode, StudyConfig};
use efree::fpspectral::{self, Evolution, FpSystem, LinearLiftBasis, Lifting, SpectralConfig, SpectralModel};
use efree::mcsde::{self, McConfig};
use efree::mmkinetics::{self, FiberMethod, Frame, MmParams, MmSystem};
use efree::newton::{self, NewtonOptions};
use efree::potential::DoubleWellParams;
use efree::EfError;
use nalgebra::DVector;
use toml::Value;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, ValueEnum)]
pub enum Experiment {
    MmGeometry,
    MmConvergence,
    FpSpectrum,
    FpLinear,
    FpGauss,
    FpProjected,
    McError,
    McSampling,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::MmGeometry => "mm-geometry",
            Experiment::MmConvergence => "mm-convergence",
            Experiment::FpSpectrum => "fp-spectrum",
            Experiment::FpLinear => "fp-linear",
            Experiment::FpGauss => "fp-gauss",
            Experiment::FpProjected => "fp-projected",
            Experiment::McError => "mc-error",
            Experiment::McSampling => "mc-sampling",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::value_variants().iter().copied().find(|e| e.name() == name)
    }

    /// Default parameters; every accepted key appears here.
    pub fn defaults(self) -> Params {
        let mut d = Vec::new();
        match self {
            Experiment::MmGeometry => {
                d.extend(mm_defaults("identity"));
                d.extend([
                    ("geometry.t_end", f(10.0)),
                    ("geometry.start_x", list(&[-0.4, 0.4, -0.45, 0.45])),
                    ("geometry.start_y", list(&[1.4, -0.4, -0.3, 1.3])),
                    ("geometry.manifold_points", int(101)),
                    ("geometry.fiber_bases", list(&[-0.3, -0.1, 0.1, 0.3])),
                    ("geometry.fiber_points", int(41)),
                    ("geometry.invariance_x", list(&[-0.2, -0.1, 0.2, 0.4, 1.0])),
                    ("geometry.shadow_point", list(&[0.3, 0.9])),
                    ("geometry.shadow_time", f(10.0)),
                ]);
            }
            Experiment::MmConvergence => {
                d.extend(mm_defaults("rotated"));
                d.extend([
                    ("study.x0", f(-0.1)),
                    ("study.delta", f(25.0)),
                    ("study.t_skip_min", f(0.0)),
                    ("study.t_skip_max", f(24.0)),
                    ("study.t_skip_step", f(1.0)),
                    ("study.max_order", int(2)),
                    ("study.fd_step", f(1e-4)),
                    ("solver.tolerance", f(1e-12)),
                    ("solver.max_iterations", int(50)),
                    ("solver.fd_step", f(1e-6)),
                    ("reference.method", s("matched")),
                    ("reference.horizon", f(40.0)),
                    ("check.slope_window", list(&[2.0, 14.0])),
                ]);
            }
            Experiment::FpSpectrum => d.extend(fp_defaults()),
            Experiment::FpLinear => {
                d.extend(fp_defaults());
                d.extend([
                    ("linear.means", list(&[-1.5, -0.5, 1.0])),
                    ("linear.var", f(1.0)),
                    ("linear.delta", f(0.1)),
                    ("linear.t_skip_min", f(0.0)),
                    ("linear.t_skip_max", f(4.0)),
                    ("linear.t_skip_step", f(0.25)),
                    ("check.r_window", list(&[0.5, 1.5])),
                    ("check.sigma_window", list(&[1.0, 3.0])),
                    ("check.floor_factor", f(2.0)),
                ]);
            }
            Experiment::FpGauss => {
                d.extend(fp_defaults());
                d.extend([
                    ("gauss.x", list(&[1.0, 0.5, 2.0])),
                    ("gauss.delta", f(0.1)),
                    ("gauss.t_skip_min", f(0.25)),
                    ("gauss.t_skip_max", f(3.0)),
                    ("gauss.t_skip_step", f(0.25)),
                    ("gauss.portrait_t_skip", list(&[0.25, 1.0, 2.0])),
                    ("gauss.portrait_s_max", f(0.2)),
                    ("gauss.portrait_s_step", f(0.01)),
                    ("solver.tolerance", f(1e-13)),
                    ("solver.max_iterations", int(50)),
                    ("solver.fd_step", f(1e-6)),
                    ("check.floor_factor", f(2.0)),
                ]);
            }
            Experiment::FpProjected => {
                d.extend(fp_defaults());
                d.extend([
                    ("projected.x3", f(0.04)),
                    ("projected.delta", f(1e-3)),
                    ("projected.t_skip", f(1.0)),
                    ("projected.x2_min", f(-3.0)),
                    ("projected.x2_max", f(3.0)),
                    ("projected.x2_step", f(0.05)),
                    ("solver.tolerance", f(1e-12)),
                    ("solver.max_iterations", int(50)),
                    ("solver.fd_step", f(1e-6)),
                ]);
            }
            Experiment::McError => {
                d.extend(mc_defaults());
                d.extend([
                    ("mc.n", int(100_000)),
                    ("mc.damping", f(0.5)),
                    ("mc.newton_tol", f(1e-6)),
                    ("mc.fd_step", f(5e-2)),
                    ("mc.max_iter", int(50)),
                    ("mc.frozen_noise", Value::Boolean(true)),
                    ("error.delta", f(0.1)),
                    ("error.t_skip_min", f(0.0)),
                    ("error.t_skip_max", f(0.8)),
                    ("error.t_skip_step", f(0.1)),
                    ("error.labels", Value::Array(vec![s("narrow"), s("wide")])),
                    ("error.means", list(&[-0.5, 0.5])),
                    ("error.vars", list(&[0.2, 2.0])),
                    ("noise.t", f(1.0)),
                    ("noise.repeats", int(50)),
                    ("check.floor_factor", f(3.0)),
                    ("check.d_tr", f(10.3)),
                    ("check.d_tan_plus", f(0.0)),
                ]);
            }
            Experiment::McSampling => {
                d.extend(mc_defaults());
                d.extend([
                    ("sampling.t", f(1.0)),
                    ("sampling.x", list(&[-0.5, 0.2])),
                    ("sampling.sizes", list(&[1e3, 1e4, 1e5])),
                    ("sampling.repeats", int(200)),
                ]);
            }
        }
        Params::from_defaults(d)
    }

    /// Compute every table of the experiment.
    pub fn run(self, p: &Params, seed: u64) -> CliResult<Vec<Table>> {
        match self {
            Experiment::MmGeometry => mm_geometry(p),
            Experiment::MmConvergence => mm_convergence(p),
            Experiment::FpSpectrum => Ok(vec![eigen_table(&fp_model(p)?)]),
            Experiment::FpLinear => fp_linear(p),
            Experiment::FpGauss => fp_gauss(p),
            Experiment::FpProjected => fp_projected(p),
            Experiment::McError => mc_error(p, seed),
            Experiment::McSampling => mc_sampling(p, seed),
        }
    }
}

fn f(v: f64) -> Value {
    Value::Float(v)
}

fn int(v: i64) -> Value {
    Value::Integer(v)
}

fn s(v: &str) -> Value {
    Value::String(v.to_string())
}

fn list(v: &[f64]) -> Value {
    Value::Array(v.iter().map(|&x| Value::Float(x)).collect())
}

fn mm_defaults(frame: &str) -> Vec<(&'static str, Value)> {
    let m = MmParams::default();
    vec![
        ("mm.kappa", f(m.kappa)),
        ("mm.lam", f(m.lam)),
        ("mm.eps", f(m.eps)),
        ("mm.expansion_order", int(m.expansion_order as i64)),
        ("mm.frame", s(frame)),
        ("mm.h", f(efree::integrate::DEFAULT_STEP)),
    ]
}

fn fp_defaults() -> Vec<(&'static str, Value)> {
    let p = DoubleWellParams::default();
    let c = SpectralConfig::default();
    vec![
        ("fp.mu", f(p.mu)),
        ("fp.nu", f(p.nu)),
        ("fp.sigma", f(p.sigma)),
        ("fp.lo", f(c.lo)),
        ("fp.hi", f(c.hi)),
        ("fp.n", int(c.n as i64)),
        ("fp.m", int(c.m as i64)),
        ("fp.evolution", s("exact")),
    ]
}

fn mc_defaults() -> Vec<(&'static str, Value)> {
    let p = DoubleWellParams::default();
    let c = McConfig::default();
    vec![
        ("mc.mu", f(p.mu)),
        ("mc.nu", f(p.nu)),
        ("mc.sigma", f(p.sigma)),
        ("mc.h", f(c.h)),
        ("mc.guard", f(c.guard)),
    ]
}

pub(crate) fn mm_params(p: &Params) -> CliResult<MmParams> {
    let m = MmParams {
        kappa: p.f64("mm.kappa")?,
        lam: p.f64("mm.lam")?,
        eps: p.f64("mm.eps")?,
        expansion_order: p.usize("mm.expansion_order")?,
    };
    m.validate()?;
    Ok(m)
}

pub(crate) fn frame(p: &Params) -> CliResult<Frame> {
    match p.str("mm.frame")? {
        "identity" => Ok(Frame::identity()),
        "rotated" => Ok(Frame::rotated()),
        other => Err(CliError::param("mm.frame", format!("expected `identity` or `rotated`, got `{other}`"))),
    }
}

fn solver(p: &Params) -> CliResult<SolverConfig> {
    let cfg = SolverConfig {
        tolerance: p.f64("solver.tolerance")?,
        max_iterations: p.usize("solver.max_iterations")?,
        fd_step: p.f64("solver.fd_step")?,
        ..Default::default()
    };
    cfg.validate()?;
    Ok(cfg)
}

fn series_table(name: &str) -> Table {
    Table::new(name, &["series_id", "coord1", "coord2", "t"])
}

fn mm_geometry(p: &Params) -> CliResult<Vec<Table>> {
    let mp = mm_params(p)?;
    let fr = frame(p)?;
    let sys = MmSystem::new(mp, fr, p.f64("mm.h")?)?;
    let order = mp.expansion_order;
    let mut t = series_table("geometry.csv");
    let push_traj = |t: &mut Table, id: String, u0: [f64; 2], horizon: f64| -> CliResult<()> {
        for (time, v) in sys.trajectory(fr.to_frame(u0), horizon)? {
            t.push(vec![id.clone().into(), v[0].into(), v[1].into(), time.into()]);
        }
        Ok(())
    };

    let (xs, ys) = (p.f64_list("geometry.start_x")?, p.f64_list("geometry.start_y")?);
    if xs.len() != ys.len() {
        return Err(CliError::param("geometry.start_y", "must have as many entries as geometry.start_x"));
    }
    let t_end = p.f64("geometry.t_end")?;
    for (k, (&x, &y)) in xs.iter().zip(&ys).enumerate() {
        push_traj(&mut t, format!("trajectory-{k}"), [x, y], t_end)?;
    }

    let n = p.usize("geometry.manifold_points")?.max(2);
    for i in 0..n {
        let x = -0.5 + i as f64 / (n - 1) as f64;
        let v = fr.to_frame([x, mmkinetics::slow_manifold_graph_order(&mp, x, order)?]);
        t.push(vec!["manifold".into(), v[0].into(), v[1].into(), 0.0.into()]);
    }

    let nf = p.usize("geometry.fiber_points")?.max(2);
    for (k, &base) in p.f64_list("geometry.fiber_bases")?.iter().enumerate() {
        for (id, printed) in [(format!("fiber-{k}"), false), (format!("printed-fiber-{k}"), true)] {
            for j in 0..nf {
                let y = -0.5 + 2.0 * j as f64 / (nf - 1) as f64;
                let g = |x: f64| {
                    if printed {
                        mmkinetics::printed_fiber_base_x(&mp, [x, y])
                    } else {
                        mmkinetics::fiber_base_x_order(&mp, [x, y], order)
                    }
                };
                let opts = NewtonOptions { tol: 1e-12, ..Default::default() };
                let sol = newton::solve(|z| Ok(DVector::from_element(1, g(z[0])? - base)), DVector::from_element(1, base), &opts);
                if let Ok(out) = sol {
                    if out.converged {
                        let v = fr.to_frame([out.x[0], y]);
                        t.push(vec![id.clone().into(), v[0].into(), v[1].into(), 0.0.into()]);
                    }
                }
            }
        }
    }

    for (k, &x) in p.f64_list("geometry.invariance_x")?.iter().enumerate() {
        let y = mmkinetics::slow_manifold_graph_order(&mp, x, order)?;
        push_traj(&mut t, format!("invariance-{k}"), [x, y], 10.0)?;
    }

    let u = p.f64_list("geometry.shadow_point")?;
    if u.len() != 2 {
        return Err(CliError::param("geometry.shadow_point", "expected two coordinates"));
    }
    let ts = p.f64("geometry.shadow_time")?;
    let base = mmkinetics::fiber_base_x_order(&mp, [u[0], u[1]], order)?;
    push_traj(&mut t, "shadow-full".into(), [u[0], u[1]], ts)?;
    push_traj(&mut t, "shadow-fiber".into(), [base, mmkinetics::slow_manifold_graph_order(&mp, base, order)?], ts)?;
    push_traj(&mut t, "shadow-naive".into(), [u[0], mmkinetics::slow_manifold_graph_order(&mp, u[0], order)?], ts)?;
    Ok(vec![t])
}

fn mm_convergence(p: &Params) -> CliResult<Vec<Table>> {
    let mp = mm_params(p)?;
    let fr = frame(p)?;
    let h = p.f64("mm.h")?;
    let sys = MmSystem::new(mp, fr, h)?;
    let method = match p.str("reference.method")? {
        "matched" => FiberMethod::Matched { horizon: p.f64("reference.horizon")?, h },
        "expansion" => FiberMethod::Expansion { order: mp.expansion_order },
        other => return Err(CliError::param("reference.method", format!("expected `matched` or `expansion`, got `{other}`"))),
    };
    let cfg = StudyConfig { max_order: p.usize("study.max_order")?, step: p.f64("study.fd_step")?, solver: solver(p)? };
    let delta = p.f64("study.delta")?;
    let reference = |z: &DVector<f64>| {
        mmkinetics::mm_reference_flow(&mp, &fr, delta, z[0], &cfg.solver, method, h).map(|v| DVector::from_element(1, v))
    };
    let x = DVector::from_element(1, p.f64("study.x0")?);
    let recs = efcore::convergence_study(&sys, reference, &x, delta, &p.grid("study.t_skip")?, &cfg)?;
    Ok(vec![convergence_table(&recs)])
}

fn convergence_table(recs: &[ConvergenceRecord]) -> Table {
    let mut t = Table::new("convergence.csv", &["t_skip", "E0", "E1", "E2", "converged"]);
    for r in recs {
        let e = |j: usize| Cell::Num(r.errors.get(j).copied().unwrap_or(f64::NAN));
        t.push(vec![r.t_skip.into(), e(0), e(1), e(2), r.converged.into()]);
    }
    t
}

pub(crate) fn fp_model(p: &Params) -> CliResult<SpectralModel> {
    let params = DoubleWellParams { mu: p.f64("fp.mu")?, nu: p.f64("fp.nu")?, sigma: p.f64("fp.sigma")? };
    let evolution = match p.str("fp.evolution")? {
        "exact" => Evolution::Exact,
        "modal" => Evolution::Modal,
        other => return Err(CliError::param("fp.evolution", format!("expected `exact` or `modal`, got `{other}`"))),
    };
    let cfg = SpectralConfig {
        lo: p.f64("fp.lo")?,
        hi: p.f64("fp.hi")?,
        n: p.usize("fp.n")?,
        m: p.usize("fp.m")?,
        d: 3,
        evolution,
    };
    Ok(SpectralModel::build(params, cfg)?)
}

fn eigen_table(model: &SpectralModel) -> Table {
    let mut t = Table::new("eigenvalues.csv", &["index", "lambda"]);
    for (i, l) in model.eigenvalues().iter().enumerate() {
        t.push(vec![Cell::Int(i as i64 + 1), (*l).into()]);
    }
    t
}

fn fp_linear(p: &Params) -> CliResult<Vec<Table>> {
    let model = fp_model(p)?;
    let basis = LinearLiftBasis::gaussians(&model, &p.f64_list("linear.means")?, p.f64("linear.var")?)?;
    let delta = p.f64("linear.delta")?;
    let star = fpspectral::exact_flow_linear(&model, &basis, delta)?;
    let mut t = Table::new("linear.csv", &["t_skip", "err_norm", "n_t", "r_t", "sigma_min"]);
    for ts in p.grid("linear.t_skip")? {
        let err = match fpspectral::approx_flow_linear(&model, &basis, ts, delta) {
            Ok(a) => (a - &star).norm(),
            Err(EfError::Singular(_)) => f64::NAN,
            Err(e) => return Err(e.into()),
        };
        let (n, r, smin) = fpspectral::linear_error_components(&model, &basis, ts)?;
        t.push(vec![ts.into(), err.into(), n.into(), r.into(), smin.into()]);
    }
    Ok(vec![t, eigen_table(&model)])
}

fn fp_gauss(p: &Params) -> CliResult<Vec<Table>> {
    let model = fp_model(p)?;
    let x = DVector::from_vec(p.f64_list("gauss.x")?);
    if x.len() != 3 {
        return Err(CliError::param("gauss.x", "expected (mass, mean, variance)"));
    }
    let delta = p.f64("gauss.delta")?;
    let cfg = solver(p)?;
    let coarse = SolverConfig { tolerance: cfg.tolerance.max(1e-12), ..cfg.clone() };
    let fixed = SolverConfig { mode: SolverMode::FixedPoint, ..cfg.clone() };
    let ystar = fpspectral::gauss_exact_flow(&model, delta, &x, &coarse)?;
    let sys = FpSystem::new(&model, Lifting::Gauss)?;

    let mut exact = Table::new("exact_flow.csv", &["component", "value"]);
    for (i, v) in ystar.iter().enumerate() {
        exact.push(vec![Cell::Int(i as i64 + 1), (*v).into()]);
    }

    let mut t = Table::new(
        "gauss.csv",
        &["t_skip", "err", "res", "res_delta", "healed_res", "healed_res_delta", "fp_correction"],
    );
    let (mut guess, mut fguess) = (x.clone(), x.clone());
    for ts in p.grid("gauss.t_skip")? {
        let nw = efcore::implicit_flow(&sys, ts, delta, &x, &cfg, Some(&guess)).ok().filter(|r| r.converged);
        let fp = efcore::implicit_flow(&sys, ts, delta, &x, &fixed, Some(&fguess)).ok();
        if let Some(r) = &nw {
            guess = r.y.clone();
        }
        if let Some(r) = fp.as_ref().filter(|r| r.y.iter().all(|v| v.is_finite()) && r.y[2] > 0.0) {
            fguess = r.y.clone();
        }
        let fp_correction = fp.and_then(|r| r.final_correction).unwrap_or(f64::NAN);
        let mut row: Vec<Cell> = vec![ts.into()];
        match &nw {
            Some(r) => {
                let d = fpspectral::gauss_residual_decomposition(&model, ts, delta, &x, &r.y)?;
                row.extend([(&r.y - &ystar).norm(), d.res.norm(), d.res_delta.norm(), d.healed_res.norm(), d.healed_res_delta.norm()].map(Cell::Num));
            }
            None => row.extend(std::iter::repeat(Cell::Num(f64::NAN)).take(5)),
        }
        row.push(fp_correction.into());
        t.push(row);
    }

    let mut portrait = series_table("gauss_portrait.csv");
    let s_grid = {
        let (hi, step) = (p.f64("gauss.portrait_s_max")?, p.f64("gauss.portrait_s_step")?);
        if !(step > 0.0 && hi >= 0.0) {
            return Err(CliError::param("gauss.portrait_s_step", "need step > 0 and s_max >= 0"));
        }
        let n = (hi / step + 1e-9).floor() as usize;
        (0..=n).map(|i| i as f64 * step).collect::<Vec<_>>()
    };
    let mut g = x.clone();
    for &sv in &s_grid {
        let target = fpspectral::t_gauss(&model, &x)?.component_mul(&model.m_d(sv));
        let Ok(next) = fpspectral::t_gauss_inverse(&model, &target, &g, &coarse) else {
            break;
        };
        g = next;
        portrait.push(vec!["exact".into(), g[1].into(), g[2].into(), sv.into()]);
    }
    for ts in p.f64_list("gauss.portrait_t_skip")? {
        let id = format!("t_skip={ts}");
        let mut g = x.clone();
        for &sv in &s_grid {
            let Some(r) = efcore::implicit_flow(&sys, ts, sv, &x, &coarse, Some(&g)).ok().filter(|r| r.converged) else {
                continue;
            };
            g = r.y;
            portrait.push(vec![id.clone().into(), g[1].into(), g[2].into(), sv.into()]);
        }
    }
    Ok(vec![t, exact, portrait, eigen_table(&model)])
}

fn fp_projected(p: &Params) -> CliResult<Vec<Table>> {
    let model = fp_model(p)?;
    let grid = p.grid("projected.x2")?;
    let samples = fpspectral::projected_phase_portrait_1d(
        &model,
        p.f64("projected.x3")?,
        &grid,
        p.f64("projected.delta")?,
        p.f64("projected.t_skip")?,
        &solver(p)?,
    )?;
    let mut t = Table::new("projected.csv", &["x2", "drift"]);
    for s in samples {
        t.push(vec![s.x2.into(), s.drift.into()]);
    }
    Ok(vec![t])
}

fn mc_potential(p: &Params) -> CliResult<DoubleWellParams> {
    let dw = DoubleWellParams { mu: p.f64("mc.mu")?, nu: p.f64("mc.nu")?, sigma: p.f64("mc.sigma")? };
    dw.validate()?;
    Ok(dw)
}

fn mc_error(p: &Params, seed: u64) -> CliResult<Vec<Table>> {
    let dw = mc_potential(p)?;
    let cfg = McConfig {
        n: p.usize("mc.n")?,
        h: p.f64("mc.h")?,
        seed,
        damping: p.f64("mc.damping")?,
        newton_tol: p.f64("mc.newton_tol")?,
        fd_step: p.f64("mc.fd_step")?,
        max_iter: p.usize("mc.max_iter")?,
        guard: p.f64("mc.guard")?,
        frozen_noise: p.bool("mc.frozen_noise")?,
    };
    cfg.validate()?;
    let (labels, means, vars) = (p.str_list("error.labels")?, p.f64_list("error.means")?, p.f64_list("error.vars")?);
    if labels.len() != means.len() || labels.len() != vars.len() || labels.is_empty() {
        return Err(CliError::param("error.labels", "labels, means and vars must have equal nonzero length"));
    }
    let starts: Vec<(String, [f64; 2])> =
        labels.iter().zip(means.iter().zip(&vars)).map(|(l, (&m, &v))| (l.clone(), [m, v])).collect();
    let recs = mcsde::mc_error_study(&dw, &starts, p.f64("error.delta")?, &p.grid("error.t_skip")?, &cfg)?;
    let mut t = Table::new("mc_error.csv", &["t_skip", "err", "converged", "start_label"]);
    for r in &recs {
        t.push(vec![r.t_skip.into(), r.err.into(), r.converged.into(), r.start_label.clone().into()]);
    }
    let noise = mcsde::mc_sampling_study(&dw, p.f64("noise.t")?, starts[0].1, &[cfg.n], p.usize("noise.repeats")?, &cfg)?;
    Ok(vec![t, sampling_table("noise.csv", &noise)])
}

fn sampling_table(name: &str, rows: &[(usize, f64)]) -> Table {
    let mut t = Table::new(name, &["N", "std_component2"]);
    for &(n, sd) in rows {
        t.push(vec![Cell::Int(n as i64), sd.into()]);
    }
    t
}

fn mc_sampling(p: &Params, seed: u64) -> CliResult<Vec<Table>> {
    let dw = mc_potential(p)?;
    let cfg = McConfig { h: p.f64("mc.h")?, guard: p.f64("mc.guard")?, seed, ..Default::default() };
    let x = p.f64_list("sampling.x")?;
    if x.len() != 2 {
        return Err(CliError::param("sampling.x", "expected (mean, variance)"));
    }
    let sizes = p
        .f64_list("sampling.sizes")?
        .into_iter()
        .map(|v| if v >= 1.0 && v.fract() == 0.0 { Ok(v as usize) } else { Err(CliError::param("sampling.sizes", "expected positive integers")) })
        .collect::<CliResult<Vec<_>>>()?;
    let rows = mcsde::mc_sampling_study(&dw, p.f64("sampling.t")?, [x[0], x[1]], &sizes, p.usize("sampling.repeats")?, &cfg)?;
    Ok(vec![sampling_table("sampling.csv", &rows)])
}
