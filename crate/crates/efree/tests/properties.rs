use efree::efcore::{self, MicroSystem, SolverConfig, SolverMode};
use efree::fpspectral::{self, FpSystem, LinearLiftBasis, Lifting, SpectralConfig, SpectralModel};
use efree::integrate;
use efree::mcsde::{self, McConfig};
use efree::mmkinetics::{Frame, MmParams, MmSystem};
use efree::potential::DoubleWellParams;
use efree::rng::StreamKey;
use nalgebra::DVector;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngSeed, TestCaseError, TestRunner};
use std::sync::OnceLock;

const SEEDS: [u64; 3] = [1, 2, 3];

fn model() -> &'static SpectralModel {
    static M: OnceLock<SpectralModel> = OnceLock::new();
    M.get_or_init(|| SpectralModel::build(DoubleWellParams::default(), SpectralConfig::default()).unwrap())
}

fn runner(seed: u64, cases: u32) -> TestRunner {
    TestRunner::new(Config { cases, rng_seed: RngSeed::Fixed(seed), failure_persistence: None, ..Config::default() })
}

fn for_seeds<S: Strategy>(cases: u32, strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) {
    for seed in SEEDS {
        runner(seed, cases).run(&strategy, &test).unwrap_or_else(|e| panic!("seed {seed}: {e}"));
    }
}

fn close(a: &DVector<f64>, b: &DVector<f64>, tol: f64) -> Result<(), TestCaseError> {
    let d = (a - b).amax();
    prop_assert!(d <= tol, "{:?} vs {:?} (diff {d:e}, tol {tol:e})", a.as_slice(), b.as_slice());
    Ok(())
}

#[test]
fn zero_delta_is_identity_for_michaelis_menten() {
    let cfg = SolverConfig::default();
    for_seeds(8, (-0.4f64..0.4, 0.0f64..15.0, any::<bool>()), |(x, t, rot)| {
        let frame = if rot { Frame::rotated() } else { Frame::identity() };
        let sys = MmSystem::new(MmParams::default(), frame, 0.1).unwrap();
        let x = DVector::from_element(1, x);
        let r = efcore::implicit_flow(&sys, t, 0.0, &x, &cfg, None).unwrap();
        close(&r.y, &x, cfg.tolerance)
    });
}

#[test]
fn zero_delta_is_identity_for_fokker_planck() {
    let cfg = SolverConfig::default();
    let gauss = FpSystem::new(model(), Lifting::Gauss).unwrap();
    let lin = FpSystem::new(model(), Lifting::Linear(LinearLiftBasis::default_for(model()).unwrap())).unwrap();
    for_seeds(4, (0.5f64..1.5, -1.0f64..1.0, 0.5f64..3.0, 0.0f64..2.0), |(m, mean, var, t)| {
        let x = DVector::from_vec(vec![m, mean, var]);
        for sys in [&gauss, &lin] {
            let r = efcore::implicit_flow(sys, t, 0.0, &x, &cfg, None).unwrap();
            close(&r.y, &x, cfg.tolerance)?;
        }
        Ok(())
    });
}

#[test]
fn zero_delta_is_identity_for_monte_carlo() {
    let cfg = McConfig { n: 5000, newton_tol: 1e-6, frozen_noise: true, ..Default::default() };
    for_seeds(3, (-1.0f64..1.0, 0.1f64..1.0, 0.0f64..0.5, any::<u64>()), |(mean, var, t, seed)| {
        let r = mcsde::mc_implicit_flow(&DoubleWellParams::default(), t, 0.0, [mean, var], None, &cfg, StreamKey::new(seed)).unwrap();
        let std = (var / cfg.n as f64).sqrt();
        let dist = ((r.y[0] - mean).powi(2) + (r.y[1] - var).powi(2)).sqrt();
        prop_assert!(dist <= cfg.newton_tol + 3.0 * std, "distance {dist:e}");
        Ok(())
    });
}

#[test]
fn newton_and_fixed_point_agree_on_gauss() {
    let newton = SolverConfig::default();
    let fixed = SolverConfig { mode: SolverMode::FixedPoint, ..newton.clone() };
    let sys = FpSystem::new(model(), Lifting::Gauss).unwrap();
    for_seeds(3, (0.3f64..0.7, 1.5f64..2.5, 0.25f64..1.0), |(mean, var, t)| {
        let x = DVector::from_vec(vec![1.0, mean, var]);
        let a = efcore::implicit_flow(&sys, t, 0.1, &x, &newton, None).unwrap();
        let b = efcore::implicit_flow(&sys, t, 0.1, &x, &fixed, None).unwrap();
        if a.converged && b.converged {
            close(&a.y, &b.y, 10.0 * newton.tolerance.max(1e-9))?;
        }
        Ok(())
    });
}

#[test]
fn matrix_path_equals_newton_on_linear_lifting() {
    let cfg = SolverConfig::default();
    let basis = LinearLiftBasis::default_for(model()).unwrap();
    let sys = FpSystem::new(model(), Lifting::Linear(basis.clone())).unwrap();
    for_seeds(4, (prop::array::uniform3(-1.0f64..1.0), 0.0f64..1.5), |(x, t)| {
        let x = DVector::from_row_slice(&x);
        let y = efcore::implicit_flow(&sys, t, 0.1, &x, &cfg, None).unwrap();
        let m = fpspectral::approx_flow_linear(model(), &basis, t, 0.1).unwrap() * &x;
        close(&y.y, &m, 1e-8)
    });
}

#[test]
fn integrator_is_fifth_order() {
    for_seeds(16, (0.5f64..2.0, 0.5f64..2.0), |(rate, u0)| {
        let f = |_: f64, y: &[f64], dy: &mut [f64]| dy[0] = -rate * y[0];
        let err = |h: f64| (integrate::integrate(f, 0.0, &[u0], 1.0, h).unwrap()[0] - u0 * (-rate).exp()).abs();
        let e: Vec<f64> = [0.2, 0.1, 0.05].iter().map(|&h| err(h)).collect();
        for w in e.windows(2) {
            prop_assert!(w[0] / w[1] >= 2f64.powf(4.5), "errors {e:?}");
        }
        Ok(())
    });
}

#[test]
fn evolution_is_a_semigroup() {
    let sys = MmSystem::new(MmParams::default(), Frame::rotated(), 0.1).unwrap();
    for_seeds(16, (-0.4f64..0.4, 0u32..50, 0u32..50), |(x, a, b)| {
        let (s, t) = (a as f64 * 0.1, b as f64 * 0.1);
        let u = sys.lift(&DVector::from_element(1, x)).unwrap();
        let whole = sys.evolve(s + t, &u).unwrap();
        let split = sys.evolve(t, &sys.evolve(s, &u).unwrap()).unwrap();
        prop_assert!((whole[0] - split[0]).abs() < 1e-12 && (whole[1] - split[1]).abs() < 1e-12);
        Ok(())
    });
}

#[test]
fn noisy_map_reproducible_across_seeds_and_threads() {
    let p = DoubleWellParams::default();
    let cfg = McConfig::default();
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    for_seeds(3, (any::<u64>(), -1.0f64..1.0, 0.1f64..2.0), |(seed, mean, var)| {
        let eval = || mcsde::noisy_macro_map(&p, 0.3, [20_000.0, mean, var], &cfg, StreamKey::new(seed)).unwrap();
        let a = one.install(eval);
        let b = four.install(eval);
        prop_assert_eq!(a, b);
        prop_assert_eq!(a, eval());
        Ok(())
    });
}

#[test]
fn sigma_to_zero_approaches_euler() {
    let p = DoubleWellParams::default();
    for_seeds(8, -2.0f64..2.0, |q| {
        let e = mcsde::Ensemble::from_positions(vec![q]).unwrap();
        let exact = mcsde::euler_maruyama_evolve(&DoubleWellParams { sigma: 0.0, ..p }, &e, 0.5, 0.01, 50.0, StreamKey::new(0)).unwrap();
        let gaps: Vec<f64> = [1e-2, 1e-4]
            .iter()
            .map(|&s| {
                let r = mcsde::euler_maruyama_evolve(&DoubleWellParams { sigma: s, ..p }, &e, 0.5, 0.01, 50.0, StreamKey::new(0)).unwrap();
                (r.positions()[0] - exact.positions()[0]).abs()
            })
            .collect();
        prop_assert!(gaps[1] < gaps[0] && gaps[1] < 1e-3, "{gaps:?}");
        Ok(())
    });
}
