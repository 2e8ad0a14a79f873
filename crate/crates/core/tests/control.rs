//! Keyframe kinematics, objective discretization, and MDMM behavior.

use cutsim_core::autodiff::RolloutFunctional;
use cutsim_core::control::*;
use cutsim_core::dynamics::{RolloutConfig, Scene, SimOptions, SimParams, StepRecord};
use cutsim_core::knife::KnifeGeometry;
use cutsim_core::math::Vec3;
use cutsim_core::mesh::{box_mesh, preprocess_cut, CutSurface};
use cutsim_core::params::{ParamKey, ParamTable};

#[test]
fn rbf_weights_basics() {
    let times = [0.0, 0.225, 0.45, 0.675, 0.9];
    let sigma = (0.03f64).sqrt();
    // At a keyframe time its own weight is exactly 1.
    for (i, &ti) in times.iter().enumerate() {
        let w = rbf_weights(ti, &times, sigma);
        assert_eq!(w[i], 1.0);
    }
    // Midway between two keyframes both weights are equal.
    let w = rbf_weights(0.1125, &times, sigma);
    assert!((w[0] - w[1]).abs() < 1e-15);
    // Matches the direct formula everywhere, and never vanishes.
    for k in 0..=100 {
        let t = 0.9 * k as f64 / 100.0;
        let w = rbf_weights(t, &times, sigma);
        for (i, &ti) in times.iter().enumerate() {
            let direct = (-((t - ti) * (t - ti)) / (2.0 * sigma * sigma)).exp();
            assert!((w[i] - direct).abs() < 1e-15);
            assert!(w[i] > 0.0);
        }
    }
}

#[test]
fn knife_velocity_formula() {
    let mut mp = MotionParams::vertical(5, 0.9, (0.03f64).sqrt(), -0.05);
    mp.a = vec![0.01, 0.02, 0.0, -0.01, 0.03];
    mp.b = vec![10.0, 5.0, 0.0, 20.0, 15.0];
    // a = 0 everywhere gives zero lateral velocity.
    let zero_a = MotionParams::vertical(5, 0.9, (0.03f64).sqrt(), -0.05);
    for k in 0..=20 {
        let t = 0.9 * k as f64 / 20.0;
        let (_, zdot) = knife_velocity(t, &zero_a);
        assert_eq!(zdot, 0.0);
    }
    // At t = 0 the cosine factor is 1: zdot = a . w(0).
    let (_, zdot0) = knife_velocity(0.0, &mp);
    let w0 = rbf_weights(0.0, &mp.times, mp.sigma);
    let aw: f64 = mp.a.iter().zip(&w0).map(|(a, w)| a * w).sum();
    assert!((zdot0 - aw).abs() < 1e-15);
    // Independent re-evaluation across the horizon.
    for k in 0..=100 {
        let t = 0.9 * k as f64 / 100.0;
        let w = rbf_weights(t, &mp.times, mp.sigma);
        let aw: f64 = mp.a.iter().zip(&w).map(|(a, wi)| a * wi).sum();
        let bw: f64 = mp.b.iter().zip(&w).map(|(b, wi)| b * wi).sum();
        let cw: f64 = mp.c.iter().zip(&w).map(|(c, wi)| c * wi).sum();
        let (ydot, zdot) = knife_velocity(t, &mp);
        assert!((ydot - cw).abs() < 1e-15);
        assert!((zdot - aw * (bw * t).cos()).abs() < 1e-14);
    }
}

fn synthetic_records(fnorm: &[f64], ydot: f64) -> Vec<StepRecord<f64>> {
    fnorm
        .iter()
        .enumerate()
        .map(|(i, &f)| StepRecord {
            t: (i + 1) as f64 * 1e-4,
            force: Vec3::new(0.0, f, 0.0),
            fnorm: f,
            knife_y: 0.0,
            knife_z: 0.01,
            ydot,
        })
        .collect()
}

#[test]
fn objective_discretization() {
    let functional = ControlFunctional::default();
    // Zero contact, constant ydot = c: the objective is exactly c.
    let c = -0.05;
    let records = synthetic_records(&[0.0; 64], c);
    let outs = functional.eval(1.0f64, &records, &[]).unwrap();
    assert!((outs[OUT_OBJECTIVE] - c).abs() < 1e-13 * c.abs());
    // Adding a constant 1 N force raises the objective by exactly 1.
    let records1 = synthetic_records(&[1.0; 64], c);
    let outs1 = functional.eval(1.0f64, &records1, &[]).unwrap();
    assert!((outs1[OUT_OBJECTIVE] - (outs[OUT_OBJECTIVE] + 1.0)).abs() < 1e-15);
    // The objective equals a re-summation of the recorded integrand in the
    // same order.
    let fnorm: Vec<f64> = (0..100).map(|i| (i as f64 * 0.37).sin().abs()).collect();
    let records = synthetic_records(&fnorm, c);
    let outs = functional.eval(1.0f64, &records, &[]).unwrap();
    let mut acc = 0.0;
    for r in &records {
        acc += r.fnorm + r.ydot;
    }
    let resum = acc / records.len() as f64;
    assert!(((outs[OUT_OBJECTIVE] - resum) / resum.abs()).abs() < 1e-12);
}

#[test]
fn smooth_max_bounds_hard_max() {
    let functional = ControlFunctional::default();
    let mut records = synthetic_records(&[0.5; 40], -0.05);
    for (i, r) in records.iter_mut().enumerate() {
        r.knife_z = 0.02 * ((i as f64) * 0.3).sin();
    }
    let outs = functional.eval(1.0f64, &records, &[]).unwrap();
    let hard = records.iter().map(|r| r.knife_z.abs()).fold(0.0f64, f64::max);
    assert_eq!(outs[OUT_MAX_ABS_Z], hard);
    assert!(outs[OUT_SMOOTH_MAX_Z] >= hard);
    assert!(outs[OUT_SMOOTH_MAX_Z] <= hard + (records.len() as f64).ln() / 1e3 + 1e-12);
}

#[test]
fn mdmm_toy_quadratic_reaches_kkt_point() {
    // minimize x^2 subject to x >= 1, slack form g = x - 1 - gamma^2.
    // KKT: x* = 1, |lambda*| = 2, gamma* = 0.
    let mut u = [3.0f64, 1.2]; // x, gamma (feasible start: g ~ 0.56)
    let mut state = MdmmState { lambda: 0.0, c_damp: 4.0, step_size: 0.02, lambda_step: 0.02 };
    for _ in 0..20_000 {
        let (x, gamma) = (u[0], u[1]);
        let g = x - 1.0 - gamma * gamma;
        let grad_l = [2.0 * x, 0.0];
        let grad_g = [1.0, -2.0 * gamma];
        mdmm_step(&mut u, &grad_l, g, &grad_g, &mut state);
    }
    assert!((u[0] - 1.0).abs() < 1e-3, "x converged to {}", u[0]);
    assert!((state.lambda.abs() - 2.0).abs() < 1e-3, "lambda = {}", state.lambda);
    assert!(u[1].abs() < 0.05, "slack = {}", u[1]);
}

#[test]
fn mdmm_feasible_interior_leaves_multiplier_unchanged() {
    // gamma^2 absorbs the margin so g = 0 and lambda stays put.
    let x = 2.0f64;
    let gamma = 1.0f64; // margin of x >= 1 at x = 2
    let g = x - 1.0 - gamma * gamma;
    assert_eq!(g, 0.0);
    let mut u = [x, gamma];
    let mut state = MdmmState { lambda: 0.5, c_damp: 10.0, step_size: 0.01, lambda_step: 0.01 };
    mdmm_step(&mut u, &[0.0, 0.0], g, &[1.0, -2.0 * gamma], &mut state);
    assert_eq!(state.lambda, 0.5);
}

#[test]
fn mdmm_degenerates_to_gradient_descent() {
    // c = 0 and lambda = 0 reduce the update to -eta * grad L.
    let mut u = [2.0f64];
    let mut state = MdmmState { lambda: 0.0, c_damp: 0.0, step_size: 0.1, lambda_step: 0.0 };
    mdmm_step(&mut u, &[4.0], 0.7, &[1.0], &mut state);
    assert_eq!(u[0], 2.0 - 0.1 * 4.0);
    assert_eq!(state.lambda, 0.0);
}

fn toy_scene() -> (Scene, ParamTable) {
    let mesh = box_mesh(
        Vec3::new(-8e-3, 0.0, -8e-3),
        Vec3::new(16e-3, 8e-3, 16e-3),
        (2, 1, 2),
        600.0,
    );
    let cut = preprocess_cut(&mesh, &CutSurface::plane_x(0.8e-3)).unwrap();
    let mut table = ParamTable::default();
    table.set_bounds(ParamKey::Young, 1e3, 1e6).unwrap();
    table.set_scalar(ParamKey::Young, 1e4).unwrap();
    table.set_scalar(ParamKey::Poisson, 0.3).unwrap();
    table.set_scalar(ParamKey::Density, 600.0).unwrap();
    table.set_scalar(ParamKey::CutSpringKe, 200.0).unwrap();
    table.set_scalar(ParamKey::CutSpringKd, 0.01).unwrap();
    table.set_scalar(ParamKey::SdfKd, 0.1).unwrap();
    table.set_bounds(ParamKey::InitialY, 1e-3, 0.8).unwrap();
    table.set_scalar(ParamKey::InitialY, 8.5e-3).unwrap();
    let options = SimOptions { dt: 1e-4, ..SimOptions::default() };
    (Scene::new(cut, 0.8e-3, KnifeGeometry::default(), options).unwrap(), table)
}

#[test]
fn rollout_objective_matches_trajectory_resum() {
    let (scene, table) = toy_scene();
    let horizon = 0.04;
    let motion = MotionParams::vertical(3, horizon, (0.03f64).sqrt(), -0.05);
    let l = objective(&scene, &table, &motion, &RolloutConfig::new(horizon, 1)).unwrap();
    // Independent re-integration from a plain rollout.
    let params = SimParams::from_table(&table, scene.n_springs()).unwrap();
    let traj = cutsim_core::dynamics::rollout(
        &scene,
        &params,
        &motion,
        &RolloutConfig::new(horizon, 1),
    )
    .unwrap();
    let resum: f64 =
        traj.records.iter().map(|r| r.fnorm + r.ydot).sum::<f64>() / traj.records.len() as f64;
    assert!(((l - resum) / resum.abs()).abs() < 1e-12, "{l} vs {resum}");
}

#[test]
fn motion_optimization_smoke() {
    let (scene, table) = toy_scene();
    let horizon = 0.04;
    let init = MotionParams::vertical(3, horizon, (0.03f64).sqrt(), -0.05);
    let config = MotionOptConfig {
        iters: 4,
        constrained: true,
        step_size: 1e-3,
        lambda_step: 1e-3,
        checkpoint_interval: 100,
        ..MotionOptConfig::default()
    };
    let result = optimize_motion(&scene, &table, init.clone(), &config).unwrap();
    assert_eq!(result.history.len(), 4);
    // The initial iterate starts feasible, with the slack absorbing the
    // full margin.
    assert!(result.history[0].constraint.abs() < 1e-9);
    assert!(result.history.iter().all(|h| h.objective.is_finite()));
    assert!(result.history.iter().all(|h| h.max_abs_z <= 0.075));

    // Unconstrained Adam mode runs as well.
    let config = MotionOptConfig { iters: 3, constrained: false, ..config };
    let result = optimize_motion(&scene, &table, init, &config).unwrap();
    assert_eq!(result.history.len(), 3);
}
