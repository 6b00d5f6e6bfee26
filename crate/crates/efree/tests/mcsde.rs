use efree::fpspectral::{SpectralConfig, SpectralModel};
use efree::mcsde::*;
use efree::potential::DoubleWellParams;
use efree::rng::StreamKey;
use nalgebra::DVector;

fn p() -> DoubleWellParams {
    DoubleWellParams::default()
}

#[test]
fn lifting_moments() {
    let e = ensemble_lift(100_000, -0.5, 0.2, StreamKey::new(3)).unwrap();
    let s = ensemble_restrict(&e);
    let n = s[0];
    let mean = s[1] / n;
    let var = s[2] / n - mean * mean;
    assert_eq!(n, 100_000.0);
    assert!((mean + 0.5).abs() < 3.0 * (0.2f64 / n).sqrt());
    assert!((var - 0.2).abs() < 3.0 * 0.2 * (2.0 / n).sqrt());
    assert!(ensemble_lift(0, 0.0, 1.0, StreamKey::new(0)).is_err());
    assert!(ensemble_lift(10, 0.0, -1.0, StreamKey::new(0)).is_err());
}

#[test]
fn mean_matches_fokker_planck() {
    let model = SpectralModel::build(p(), SpectralConfig::default()).unwrap();
    let rho = model.lift_gauss(&DVector::from_vec(vec![1.0, -0.5, 0.2])).unwrap();
    let truth = model.restrict_moments(&model.evolve_density(1.0, &rho).unwrap())[1];
    let cfg = McConfig::default();
    let m = noisy_macro_map(&p(), 1.0, [1e5, -0.5, 0.2], &cfg, StreamKey::new(11)).unwrap();
    let mean = m[1] / m[0];
    assert!((mean - truth).abs() <= 4.2e-3 + 0.05, "{mean} vs {truth}");
}

#[test]
fn bimodal_after_long_run() {
    let cfg = McConfig::default();
    let e = ensemble_lift(20_000, 1.5, 3.5, StreamKey::new(5)).unwrap();
    let out = euler_maruyama_evolve(&p(), &e, 10.0, cfg.h, cfg.guard, StreamKey::new(6)).unwrap();
    let left = out.positions().iter().filter(|q| **q < 0.0).count() as f64 / 20_000.0;
    assert!(left >= 0.05 && left <= 0.95, "{left}");
}

#[test]
fn deterministic_limits() {
    let quiet = DoubleWellParams { sigma: 0.0, ..p() };
    let e = Ensemble::from_positions(vec![0.7, -1.3]).unwrap();
    let one = euler_maruyama_evolve(&quiet, &e, 0.01, 0.01, 50.0, StreamKey::new(0)).unwrap();
    for (a, b) in one.positions().iter().zip(e.positions()) {
        assert_eq!(*a, b + quiet.drift(*b) * 0.01);
    }
    let minimum = quiet.critical_points()[0];
    let still = euler_maruyama_evolve(&quiet, &Ensemble::from_positions(vec![minimum]).unwrap(), 5.0, 0.01, 50.0, StreamKey::new(0)).unwrap();
    assert!((still.positions()[0] - minimum).abs() < 1e-12);
}

#[test]
fn guard_violation_is_reported() {
    let e = Ensemble::from_positions(vec![40.0]).unwrap();
    assert!(euler_maruyama_evolve(&p(), &e, 1.0, 0.1, 50.0, StreamKey::new(0)).is_err());
}

#[test]
fn restriction_at_time_zero_matches_lifting() {
    let cfg = McConfig::default();
    let key = StreamKey::new(9);
    let m = noisy_macro_map(&p(), 0.0, [5000.0, 0.3, 1.7], &cfg, key).unwrap();
    let s = ensemble_restrict(&ensemble_lift(5000, 0.3, 1.7, key).unwrap());
    assert_eq!(m, s);
}

#[test]
fn zero_delta_returns_start() {
    let cfg = McConfig { n: 20_000, newton_tol: 1e-6, frozen_noise: true, ..Default::default() };
    let r = mc_implicit_flow(&p(), 0.3, 0.0, [-0.5, 0.2], None, &cfg, StreamKey::new(4)).unwrap();
    let std = 0.2f64.sqrt() / (cfg.n as f64).sqrt();
    let dist = ((r.y[0] + 0.5).powi(2) + (r.y[1] - 0.2).powi(2)).sqrt();
    assert!(dist <= cfg.newton_tol + 3.0 * std, "{dist}");
}

#[test]
fn reproducible_for_fixed_seed() {
    let cfg = McConfig::default();
    let a = noisy_macro_map(&p(), 0.5, [10_000.0, 0.1, 1.0], &cfg, StreamKey::new(42)).unwrap();
    let b = noisy_macro_map(&p(), 0.5, [10_000.0, 0.1, 1.0], &cfg, StreamKey::new(42)).unwrap();
    let c = noisy_macro_map(&p(), 0.5, [10_000.0, 0.1, 1.0], &cfg, StreamKey::new(43)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn sampling_std_halves_per_quadrupling() {
    let cfg = McConfig::default();
    let rows = mc_sampling_study(&p(), 0.5, [-0.5, 0.2], &[1000, 4000, 16_000], 60, &cfg).unwrap();
    let pts: Vec<(f64, f64)> = rows.iter().map(|&(n, s)| ((n as f64).ln(), s)).collect();
    let slope = efree::efcore::fit_decay_rate(&pts, (0.0, 20.0)).unwrap();
    assert!((slope + 0.5).abs() <= 0.15, "{slope}");
}

#[test]
fn error_study_shapes() {
    let cfg = McConfig { n: 20_000, newton_tol: 1e-6, frozen_noise: true, ..Default::default() };
    let starts = vec![("a".to_string(), [-0.5, 0.2]), ("b".to_string(), [0.5, 2.0])];
    let recs = mc_error_study(&p(), &starts, 0.1, &[0.0, 0.2, 0.4], &cfg).unwrap();
    assert_eq!(recs.len(), 6);
    assert_eq!(recs[2].err, 0.0);
    assert!(recs.iter().all(|r| r.err >= 0.0 || r.err.is_nan()));
    assert!(mc_error_study(&p(), &starts, 0.1, &[0.2, 0.0], &cfg).is_err());
}
