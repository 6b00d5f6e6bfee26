//! Pass/fail checks evaluated from written tables.

use crate::error::{CliError, CliResult};
use crate::experiments::{self, Experiment};
use crate::params::Params;
use crate::table::Table;
use efree::efcore::{fit_decay_rate, floor_onset, optimal_healing_time};
use efree::mmkinetics;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: &str, pass: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), pass, detail: detail.into() }
    }

    fn from_result(name: &str, r: Result<(bool, String), String>) -> Self {
        match r {
            Ok((pass, detail)) => Self::new(name, pass, detail),
            Err(detail) => Self::new(name, false, detail),
        }
    }

    pub fn line(&self) -> String {
        format!("{} {}: {}", if self.pass { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

pub type Tables = BTreeMap<String, Table>;

fn table<'a>(tables: &'a Tables, name: &str) -> CliResult<&'a Table> {
    tables.get(name).ok_or_else(|| CliError::Format { path: name.into(), reason: "table not among the outputs".into() })
}

fn within(value: f64, target: f64, rel: f64) -> bool {
    (value - target).abs() <= rel * target.abs()
}

fn points(t: &[f64], v: &[f64]) -> Vec<(f64, f64)> {
    t.iter().zip(v).filter(|(_, v)| v.is_finite() && **v > 0.0).map(|(&t, &v)| (t, v)).collect()
}

fn at(ts: &[f64], vs: &[f64], t: f64) -> f64 {
    ts.iter().position(|&x| (x - t).abs() < 1e-9).map_or(f64::NAN, |i| vs[i])
}

fn slope(pts: &[(f64, f64)], lo: f64, hi: f64) -> Result<f64, String> {
    fit_decay_rate(pts, (lo, hi)).map_err(|e| e.to_string())
}

fn slope_check(name: &str, pts: &[(f64, f64)], window: (f64, f64), target: f64, rel: f64) -> Check {
    Check::from_result(
        name,
        slope(pts, window.0, window.1).map(|s| {
            (within(s, target, rel), format!("slope {s:.6} over [{}, {}], target {target:.6} +/- {}%", window.0, window.1, rel * 100.0))
        }),
    )
}

fn window(p: &Params, key: &str) -> CliResult<(f64, f64)> {
    match p.f64_list(key)?.as_slice() {
        &[a, b] if a < b => Ok((a, b)),
        _ => Err(CliError::param(key, "expected [lo, hi] with lo < hi")),
    }
}

fn spectrum(tables: &Tables) -> CliResult<Vec<f64>> {
    table(tables, "eigenvalues.csv")?.f64s("lambda")
}

fn lambda(l: &[f64], i: usize) -> CliResult<f64> {
    l.get(i).copied().ok_or_else(|| CliError::Format { path: "eigenvalues.csv".into(), reason: format!("fewer than {} eigenvalues", i + 1) })
}

/// Evaluate every check of `exp`.
pub fn evaluate(exp: Experiment, p: &Params, tables: &Tables) -> CliResult<Vec<Check>> {
    match exp {
        Experiment::MmGeometry => mm_geometry(p, tables),
        Experiment::MmConvergence => mm_convergence(p, tables),
        Experiment::FpSpectrum => fp_spectrum(tables),
        Experiment::FpLinear => fp_linear(p, tables),
        Experiment::FpGauss => fp_gauss(p, tables),
        Experiment::FpProjected => fp_projected(tables),
        Experiment::McError => mc_error(p, tables),
        Experiment::McSampling => mc_sampling(tables),
    }
}

fn mm_geometry(p: &Params, tables: &Tables) -> CliResult<Vec<Check>> {
    let mp = experiments::mm_params(p)?;
    let fr = experiments::frame(p)?;
    let t = table(tables, "geometry.csv")?;
    let (ids, c1, c2, ts) = (t.strings("series_id")?, t.f64s("coord1")?, t.f64s("coord2")?, t.f64s("t")?);
    let mut dev = 0.0f64;
    for i in (0..ids.len()).filter(|&i| ids[i].starts_with("invariance-")) {
        let u = fr.to_physical([c1[i], c2[i]]);
        let g = mmkinetics::slow_manifold_graph_order(&mp, u[0], mp.expansion_order)?;
        dev = dev.max((u[1] - g).abs());
    }
    let bound = 10.0 * mp.eps.powi(4);
    let invariance = Check::new("manifold_invariance", dev <= bound, format!("max deviation {dev:.3e}, bound {bound:.3e}"));

    let last = |id: &str| -> Option<[f64; 2]> {
        (0..ids.len()).filter(|&i| ids[i] == id).max_by(|&a, &b| ts[a].total_cmp(&ts[b])).map(|i| fr.to_physical([c1[i], c2[i]]))
    };
    let dist = |a: [f64; 2], b: [f64; 2]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
    let shadow = match (last("shadow-full"), last("shadow-fiber"), last("shadow-naive")) {
        (Some(full), Some(fiber), Some(naive)) => {
            let (ef, en) = (dist(full, fiber), dist(full, naive));
            let ratio = en / ef;
            Check::new("fiber_shadowing", ratio >= 10.0, format!("fiber base error {ef:.3e}, naive base error {en:.3e}, ratio {ratio:.2}"))
        }
        _ => Check::new("fiber_shadowing", false, "shadow series missing"),
    };
    Ok(vec![invariance, shadow])
}

fn mm_convergence(p: &Params, tables: &Tables) -> CliResult<Vec<Check>> {
    let t = table(tables, "convergence.csv")?;
    let ts = t.f64s("t_skip")?;
    let e: Vec<Vec<f64>> = ["E0", "E1", "E2"].iter().map(|c| t.f64s(c)).collect::<CliResult<_>>()?;
    let e00 = e[0].first().copied().unwrap_or(f64::NAN);
    if experiments::frame(p)?.is_identity() {
        return Ok(vec![Check::new("unrotated_initial_error", e00 <= 1e-2, format!("E0(0) = {e00:.3e}, bound 1e-2"))]);
    }
    let mut out = vec![Check::new("rotated_initial_error", e00 >= 0.1, format!("E0(0) = {e00:.6}, bound >= 0.1"))];
    let e20 = at(&ts, &e[0], 20.0);
    out.push(Check::new("rotated_final_error", e20 <= 1e-6, format!("E0(20) = {e20:.3e}, bound 1e-6")));
    let (lo, hi) = window(p, "check.slope_window")?;
    let slopes: Result<Vec<f64>, String> = e.iter().map(|v| slope(&points(&ts, v), lo, hi)).collect();
    out.push(Check::from_result(
        "rotated_slope_ordering",
        slopes.map(|s| (s[0] <= s[1] && s[1] <= s[2] && s[2] < 0.0, format!("slopes E0 {:.4}, E1 {:.4}, E2 {:.4} over [{lo}, {hi}]", s[0], s[1], s[2]))),
    ));
    let probe: Vec<f64> = [5.0, 10.0, 15.0, 20.0].iter().map(|&x| at(&ts, &e[0], x)).collect();
    let dec = probe.windows(2).all(|w| w[1] < w[0]);
    out.push(Check::new("rotated_monotone_decay", dec, format!("E0 at 5, 10, 15, 20: {probe:?}")));
    Ok(out)
}

fn fp_spectrum(tables: &Tables) -> CliResult<Vec<Check>> {
    let l = spectrum(tables)?;
    let (l1, l2, l3, l4) = (lambda(&l, 0)?, lambda(&l, 1)?, lambda(&l, 2)?, lambda(&l, 3)?);
    Ok(vec![
        Check::new("lambda1", l1.abs() < 1e-6, format!("{l1:.3e}, bound |.| < 1e-6")),
        Check::new("lambda2", l2 > -1e-6 && l2 < 0.0, format!("{l2:.3e}, bound (-1e-6, 0)")),
        Check::new("lambda3", within(l3, -5.71, 0.01), format!("{l3:.6}, target -5.71 +/- 1%")),
        Check::new("lambda4", within(l4, -10.3, 0.01), format!("{l4:.6}, target -10.3 +/- 1%")),
    ])
}

fn fp_linear(p: &Params, tables: &Tables) -> CliResult<Vec<Check>> {
    let l = spectrum(tables)?;
    let (l3, l4) = (lambda(&l, 2)?, lambda(&l, 3)?);
    let t = table(tables, "linear.csv")?;
    let ts = t.f64s("t_skip")?;
    let err = points(&ts, &t.f64s("err_norm")?);
    let mut out = vec![
        slope_check("remainder_rate", &points(&ts, &t.f64s("r_t")?), window(p, "check.r_window")?, l4, 0.15),
        slope_check("sigma_min_rate", &points(&ts, &t.f64s("sigma_min")?), window(p, "check.sigma_window")?, l3, 0.15),
    ];
    let factor = p.f64("check.floor_factor")?;
    out.push(match (err.first(), floor_onset(&err, factor)) {
        (Some(&(t0, _)), Some(onset)) => slope_check("error_rate", &err, (t0, onset), l4 - l3, 0.2),
        _ => Check::new("error_rate", false, "no finite errors"),
    });
    Ok(out)
}

fn fp_gauss(p: &Params, tables: &Tables) -> CliResult<Vec<Check>> {
    let l = spectrum(tables)?;
    let (l3, l4) = (lambda(&l, 2)?, lambda(&l, 3)?);
    let y = table(tables, "exact_flow.csv")?.f64s("value")?;
    let expect = [1.0, 0.8459, 6.4556];
    let ok = y.len() == 3 && y.iter().zip(expect).all(|(&a, b)| within(a, b, 1e-2));
    let mut out = vec![Check::new("exact_flow_value", ok, format!("{y:.6?}, target {expect:?} within 1% relative"))];

    let t = table(tables, "gauss.csv")?;
    let ts = t.f64s("t_skip")?;
    let factor = p.f64("check.floor_factor")?;
    let pre_floor = |name: &str, pts: &[(f64, f64)], target: f64, rel: f64| match (pts.first(), floor_onset(pts, factor)) {
        (Some(&(t0, _)), Some(onset)) => slope_check(name, pts, (t0, onset), target, rel),
        _ => Check::new(name, false, "no finite values"),
    };
    out.push(pre_floor("healed_res_rate", &points(&ts, &t.f64s("healed_res")?), l4, 0.15));
    out.push(pre_floor("healed_res_delta_rate", &points(&ts, &t.f64s("healed_res_delta")?), l4, 0.15));
    let err = t.f64s("err")?;
    out.push(pre_floor("error_rate", &points(&ts, &err), l4 - l3, 0.2));
    let corr = t.f64s("fp_correction")?;
    let bad: Vec<f64> = ts.iter().zip(err.iter().zip(&corr)).filter(|(_, (e, c))| !(c <= e)).map(|(&t, _)| t).collect();
    out.push(Check::new(
        "fixed_point_correction",
        bad.is_empty() && !ts.is_empty(),
        if bad.is_empty() { format!("correction <= error at all {} points", ts.len()) } else { format!("violated at t_skip {bad:?}") },
    ));
    Ok(out)
}

/// Sign changes between consecutive finite samples.
pub fn sign_changes(v: &[f64]) -> usize {
    let s: Vec<f64> = v.iter().copied().filter(|x| x.is_finite() && *x != 0.0).collect();
    s.windows(2).filter(|w| (w[0] > 0.0) != (w[1] > 0.0)).count()
}

fn fp_projected(tables: &Tables) -> CliResult<Vec<Check>> {
    let t = table(tables, "projected.csv")?;
    let (x2, drift) = (t.f64s("x2")?, t.f64s("drift")?);
    let n = sign_changes(&drift);
    let missing = drift.iter().filter(|d| !d.is_finite()).count();
    let roots: Vec<String> = x2
        .windows(2)
        .zip(drift.windows(2))
        .filter(|(_, d)| d[0].is_finite() && d[1].is_finite() && (d[0] > 0.0) != (d[1] > 0.0))
        .map(|(x, _)| format!("{:.2}", 0.5 * (x[0] + x[1])))
        .collect();
    Ok(vec![Check::new(
        "drift_sign_changes",
        n == 3 && missing == 0,
        format!("{n} sign changes near [{}], {missing} unsolved points, expected 3", roots.join(", ")),
    )])
}

fn log_slope(rows: &[(f64, f64)]) -> Result<f64, String> {
    let pts: Vec<(f64, f64)> = rows.iter().map(|&(n, s)| (n.ln(), s)).collect();
    let lo = pts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi = pts.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    slope(&pts, lo, hi)
}

fn mc_sampling(tables: &Tables) -> CliResult<Vec<Check>> {
    let t = table(tables, "sampling.csv")?;
    let rows: Vec<(f64, f64)> = t.f64s("N")?.into_iter().zip(t.f64s("std_component2")?).collect();
    Ok(vec![Check::from_result(
        "sampling_rate",
        log_slope(&rows).map(|s| ((s + 0.5).abs() <= 0.1, format!("log-log slope {s:.4}, target -0.5 +/- 0.1"))),
    )])
}

/// Floor statistics of one start of the Monte Carlo error study.
#[derive(Clone, Debug, PartialEq)]
pub struct FloorStats {
    pub initial: f64,
    pub onset: f64,
    pub floor: f64,
    pub slope: Result<f64, String>,
}

/// Rows of `label` minus the last (reference) row; onset by `factor`, floor as the median from onset.
pub fn floor_stats(ts: &[f64], err: &[f64], labels: &[String], label: &str, factor: f64) -> Option<FloorStats> {
    let idx: Vec<usize> = (0..ts.len()).filter(|&i| labels[i] == label).collect();
    let body = &idx[..idx.len().saturating_sub(1)];
    let pts: Vec<(f64, f64)> = body.iter().map(|&i| (ts[i], err[i])).filter(|p| p.1.is_finite() && p.1 > 0.0).collect();
    let onset = floor_onset(&pts, factor)?;
    let mut tail: Vec<f64> = pts.iter().filter(|p| p.0 >= onset).map(|p| p.1).collect();
    tail.sort_by(f64::total_cmp);
    let m = tail.len();
    let floor = if m % 2 == 1 { tail[m / 2] } else { 0.5 * (tail[m / 2 - 1] + tail[m / 2]) };
    let initial = body.first().map_or(f64::NAN, |&i| err[i]);
    let slope = slope(&pts, pts[0].0, onset);
    Some(FloorStats { initial, onset, floor, slope })
}

fn mc_error(p: &Params, tables: &Tables) -> CliResult<Vec<Check>> {
    let t = table(tables, "mc_error.csv")?;
    let (ts, err, labels) = (t.f64s("t_skip")?, t.f64s("err")?, t.strings("start_label")?);
    let names = p.str_list("error.labels")?;
    let factor = p.f64("check.floor_factor")?;
    let stats: Vec<Option<FloorStats>> = names.iter().map(|l| floor_stats(&ts, &err, &labels, l, factor)).collect();
    let mut out = Vec::new();
    let Some(narrow) = stats[0].clone() else {
        out.push(Check::new("error_drop", false, format!("no finite errors for `{}`", names[0])));
        return Ok(out);
    };
    let drop = narrow.initial / narrow.floor;
    out.push(Check::new(
        "error_drop",
        drop >= 10.0,
        format!("`{}`: initial {:.3e}, floor {:.3e} from t_skip {}, ratio {drop:.2}, bound >= 10", names[0], narrow.initial, narrow.floor, narrow.onset),
    ));
    if let (Some(name), Some(Some(wide))) = (names.get(1), stats.get(1)) {
        out.push(Check::new(
            "initial_error_order",
            wide.initial > narrow.initial,
            format!("`{name}` {:.3e} vs `{}` {:.3e}", wide.initial, names[0], narrow.initial),
        ));
        out.push(Check::from_result(
            "decay_slope_ratio",
            match (&narrow.slope, &wide.slope) {
                (Ok(a), Ok(b)) => Ok(((0.5..=2.0).contains(&(b / a)), format!("slopes {a:.4} and {b:.4}, ratio {:.3}, bound [0.5, 2]", b / a))),
                (Err(e), _) | (_, Err(e)) => Err(e.clone()),
            },
        ));
    }
    let noise = table(tables, "noise.csv")?.f64s("std_component2")?;
    let d = noise.first().copied().unwrap_or(f64::NAN);
    out.push(Check::from_result(
        "optimal_healing_time",
        optimal_healing_time(d, p.f64("check.d_tan_plus")?, p.f64("check.d_tr")?)
            .map(|pred| ((pred - narrow.onset).abs() <= 0.5, format!("predicted {pred:.3} with noise {d:.3e}, observed onset {}, tolerance 0.5", narrow.onset)))
            .map_err(|e| e.to_string()),
    ));
    Ok(out)
}
