use efree::efcore::{self, SolverConfig};
use efree::integrate;
use efree::mmkinetics::*;
use nalgebra::DVector;

fn field(p: &MmParams) -> impl Fn(f64, &[f64], &mut [f64]) + '_ {
    move |_, y, dy| {
        let f = mm_vector_field(p, &Frame::identity(), [y[0], y[1]]);
        dy.copy_from_slice(&f);
    }
}

#[test]
fn graph_and_fiber_examples() {
    let p = MmParams::default();
    assert!((slow_manifold_graph_order(&p, 1.0, 1).unwrap() - 0.5003125).abs() < 1e-15);
    assert!((printed_fiber_base_x(&p, [0.3, 0.9]).unwrap() - 0.3067385).abs() < 1e-7);
    let flat = MmParams { eps: 0.0, ..p };
    for y in [-0.5, 0.2, 1.5] {
        assert_eq!(fiber_base_x(&flat, [0.2, y]).unwrap(), 0.2);
    }
    assert!(fiber_base_x(&p, [-1.2, 0.5]).is_err());
}

#[test]
fn fiber_projection_is_identity_on_manifold() {
    let residual = |x: f64, eps: f64| {
        let p = MmParams { eps, ..MmParams::default() };
        fiber_base_x(&p, [x, slow_manifold_graph(&p, x).unwrap()]).unwrap() - x
    };
    for x in [-0.4, -0.1, 0.25, 0.5] {
        let ratio = residual(x, 0.01) / residual(x, 0.005);
        assert!(ratio >= 0.8 * 16.0, "x = {x}: ratio {ratio}");
    }
    for x in [-0.1, 0.0, 0.25, 0.5] {
        assert!(residual(x, 0.01).abs() < 1e-8, "x = {x}");
    }
}

#[test]
fn manifold_invariance() {
    let p = MmParams::default();
    for x in [-0.2, -0.1, 0.2, 0.4, 1.0] {
        let y0 = slow_manifold_graph_order(&p, x, 3).unwrap();
        let tr = integrate::trajectory(field(&p), 0.0, &[x, y0], 10.0, 0.1).unwrap();
        let dev = tr.iter().map(|(_, u)| (u[1] - slow_manifold_graph_order(&p, u[0], 3).unwrap()).abs()).fold(0.0, f64::max);
        assert!(dev <= 10.0 * p.eps.powi(4), "x = {x}: {dev:e}");
    }
}

#[test]
fn expansion_consistency_under_halving_eps() {
    let residual = |eps: f64, order: usize| {
        let p = MmParams { eps, ..MmParams::default() };
        [-0.3, -0.1, 0.1, 0.3, 0.5]
            .iter()
            .map(|&x| {
                let h = |x: f64| slow_manifold_graph_order(&p, x, order).unwrap();
                let dh = (h(x + 1e-5) - h(x - 1e-5)) / 2e-5;
                let y = h(x);
                (eps * (-x + (x + p.kappa - p.lam) * y) * dh - (x - (x + p.kappa) * y)).abs()
            })
            .fold(0.0, f64::max)
    };
    for k in 0..=2 {
        let ratio = residual(0.02, k) / residual(0.01, k);
        assert!(ratio >= 0.8 * 2f64.powi(k as i32 + 1), "order {k}: ratio {ratio}");
    }
}

#[test]
fn shadowing_beats_naive_base_point() {
    let p = MmParams::default();
    let end = |u: [f64; 2]| integrate::integrate(field(&p), 0.0, &u, 10.0, 0.1).unwrap();
    let u = [0.3, 0.9];
    let full = end(u);
    let g = fiber_base_x(&p, u).unwrap();
    let on = end([g, slow_manifold_graph(&p, g).unwrap()]);
    let naive = end([u[0], slow_manifold_graph(&p, u[0]).unwrap()]);
    let d = |a: &[f64], b: &[f64]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
    assert!(d(&full, &naive) >= 10.0 * d(&full, &on));
}

#[test]
fn matched_and_expansion_fibers_agree() {
    let p = MmParams::default();
    for u in [[-0.2, 0.8], [0.1, 0.2], [0.3, 0.9]] {
        let a = fiber_base_x(&p, u).unwrap();
        let b = matched_fiber_base_x(&p, u, 40.0, 0.1).unwrap();
        assert!((a - b).abs() < 1e-6, "{u:?}: {a} vs {b}");
    }
}

#[test]
fn rotated_conjugacy() {
    let p = MmParams::default();
    let (id, rot) = (Frame::identity(), Frame::rotated());
    let a = MmSystem::new(p, id, 0.1).unwrap();
    let b = MmSystem::new(p, rot, 0.1).unwrap();
    for u in [[-0.1, 0.5], [0.3, 0.9], [0.4, -0.2]] {
        let ua = efcore::MicroSystem::evolve(&a, 7.0, &u).unwrap();
        let ub = efcore::MicroSystem::evolve(&b, 7.0, &rot.to_frame(u)).unwrap();
        let back = rot.to_physical(ub);
        assert!((ua[0] - back[0]).abs() < 1e-10 && (ua[1] - back[1]).abs() < 1e-10);
    }
}

#[test]
fn lifting_and_restriction() {
    let p = MmParams::default();
    for frame in [Frame::identity(), Frame::rotated()] {
        let sys = MmSystem::new(p, frame, 0.1).unwrap();
        let x = DVector::from_element(1, -0.1);
        assert_eq!(efcore::MicroSystem::lift(&sys, &x).unwrap(), [-0.1, 0.5]);
        assert_eq!(efcore::lift_evolve_restrict(&sys, 0.0, &x).unwrap(), x);
    }
}

#[test]
fn reference_flow_examples() {
    let p = MmParams::default();
    let cfg = SolverConfig::default();
    let m = FiberMethod::Matched { horizon: 40.0, h: 0.1 };
    assert!((mm_reference_flow(&p, &Frame::identity(), 0.0, -0.1, &cfg, m, 0.1).unwrap() + 0.1).abs() < 1e-12);
    let rot = mm_reference_flow(&p, &Frame::rotated(), 25.0, -0.1, &cfg, m, 0.1).unwrap();
    assert!(rot > -0.5 && rot < 0.0);

    let sys = MmSystem::new(p, Frame::rotated(), 0.1).unwrap();
    let x = DVector::from_element(1, -0.1);
    let mut guess = x.clone();
    for ts in [5.0, 10.0, 15.0, 20.0, 25.0] {
        guess = efcore::implicit_flow(&sys, ts, 25.0, &x, &cfg, Some(&guess)).unwrap().y;
    }
    assert!((guess[0] - rot).abs() <= 1e-6, "{} vs {rot}", guess[0]);
}

#[test]
fn reference_flow_frame_invariance() {
    let p = MmParams::default();
    let cfg = SolverConfig::default();
    let m = FiberMethod::Matched { horizon: 40.0, h: 0.1 };
    let rot = Frame::rotated();
    let x = -0.1;
    let z = mm_reference_flow(&p, &rot, 25.0, x, &cfg, m, 0.1).unwrap();
    let start = matched_fiber_base_x(&p, rot.to_physical([x, 0.5]), 40.0, 0.1).unwrap();
    let end = integrate::integrate(field(&p), 0.0, &[start, slow_manifold_graph(&p, start).unwrap()], 25.0, 0.1).unwrap();
    let img = matched_fiber_base_x(&p, rot.to_physical([z, 0.5]), 40.0, 0.1).unwrap();
    let img = rot.to_frame([img, slow_manifold_graph(&p, img).unwrap()])[0];
    let end = rot.to_frame([end[0], end[1]])[0];
    assert!((img - end).abs() < 1e-9, "{img} vs {end}");
}
