//! Keyframe-parameterized knife motion, the mean-force/velocity objective,
//! and constrained trajectory optimization with the modified differential
//! method of multipliers.
//!
//! The knife velocity trajectory is defined by `k` keyframes, each carrying
//! a lateral sinusoid amplitude `a`, a lateral frequency `b` and a vertical
//! velocity `c`. Radial-basis weighting of the keyframes keeps every
//! keyframe contributing at all times, so gradients reach all of them.

use crate::autodiff::{record_rollout, DiffConfig, MotionSel, RolloutFunctional};
use crate::dynamics::{Motion, RolloutConfig, Scene, SimParams, StepRecord};
use crate::error::{Result, SimError};
use crate::inference::{AdamConfig, AdamState};
use crate::math::Vec3;
use crate::params::ParamTable;
use crate::scalar::Real;
use alloc::vec;
use alloc::vec::Vec;

/// Keyframed slicing motion. `a`, `b`, `c` are per-keyframe lateral
/// amplitude (m/s), lateral frequency (rad/s) and vertical velocity (m/s).
#[derive(Clone, Debug)]
pub struct MotionParams<T> {
    pub a: Vec<T>,
    pub b: Vec<T>,
    pub c: Vec<T>,
    /// Keyframe times, equidistant in `[0, horizon]`.
    pub times: Vec<f64>,
    /// RBF kernel width (s).
    pub sigma: f64,
}

impl MotionParams<f64> {
    /// Vertical-only motion: all lateral parameters zero, every keyframe's
    /// vertical velocity set to `velocity_y`.
    pub fn vertical(keyframes: usize, horizon: f64, sigma: f64, velocity_y: f64) -> Self {
        assert!(keyframes >= 1 && sigma > 0.0);
        let times = equidistant(keyframes, horizon);
        MotionParams {
            a: vec![0.0; keyframes],
            b: vec![0.0; keyframes],
            c: vec![velocity_y; keyframes],
            times,
            sigma,
        }
    }
}

impl<T: Real> MotionParams<T> {
    pub fn keyframes(&self) -> usize {
        self.a.len()
    }
}

fn equidistant(k: usize, horizon: f64) -> Vec<f64> {
    if k == 1 {
        return vec![0.5 * horizon];
    }
    (0..k).map(|i| horizon * i as f64 / (k - 1) as f64).collect()
}

/// Unnormalized RBF weights `w_i(t) = exp(-(t - t_i)^2 / (2 sigma^2))`.
/// Strictly positive for every keyframe at every time.
pub fn rbf_weights(t: f64, times: &[f64], sigma: f64) -> Vec<f64> {
    let inv = 1.0 / (2.0 * sigma * sigma);
    times.iter().map(|ti| (-(t - ti) * (t - ti) * inv).exp()).collect()
}

/// Knife velocities at time `t`: lateral `zdot = (a.w) cos((b.w) t)` and
/// vertical `ydot = c.w`.
pub fn knife_velocity<T: Real>(t: f64, params: &MotionParams<T>) -> (T, T) {
    let w = rbf_weights(t, &params.times, params.sigma);
    let ctx = params.c[0];
    let dot = |vs: &[T]| -> T {
        let mut acc = ctx.lift(0.0);
        for (v, wi) in vs.iter().zip(&w) {
            acc = acc + *v * *wi;
        }
        acc
    };
    let aw = dot(&params.a);
    let bw = dot(&params.b);
    let ydot = dot(&params.c);
    let zdot = aw * (bw * t).cos();
    (ydot, zdot)
}

impl<T: Real> Motion<T> for MotionParams<T> {
    fn velocity(&self, t: f64, params: &SimParams<T>) -> Vec3<T> {
        let (ydot, zdot) = knife_velocity(t, self);
        Vec3::new(params.ctx().lift(0.0), ydot, zdot)
    }
}

/// Outputs of the control functional, in order: the objective
/// `mean(|f| + ydot)`, the smooth maximum of `|z|` over the horizon, the
/// mean knife force, and the hard maximum of `|z|` (diagnostics only).
pub struct ControlFunctional {
    /// Sharpness of the smooth maximum used for the lateral constraint.
    pub smoothmax_sharpness: f64,
}

impl Default for ControlFunctional {
    fn default() -> Self {
        ControlFunctional { smoothmax_sharpness: 1e3 }
    }
}

pub const OUT_OBJECTIVE: usize = 0;
pub const OUT_SMOOTH_MAX_Z: usize = 1;
pub const OUT_MEAN_FORCE: usize = 2;
pub const OUT_MAX_ABS_Z: usize = 3;

impl RolloutFunctional for ControlFunctional {
    fn n_outputs(&self) -> usize {
        4
    }

    fn eval<T: Real>(
        &self,
        ctx: T,
        records: &[StepRecord<T>],
        _snapshots: &[(usize, Vec<Vec3<T>>)],
    ) -> Result<Vec<T>> {
        if records.is_empty() {
            return Err(SimError::Config("control objective needs a recorded rollout".into()));
        }
        let n = records.len() as f64;
        // Discretized objective: mean of the per-step integrand, in
        // recording order so it matches a re-summation of the records.
        let mut objective = ctx.lift(0.0);
        let mut mean_force = ctx.lift(0.0);
        for r in records {
            objective = objective + r.fnorm + r.ydot;
            mean_force = mean_force + r.fnorm;
        }
        objective = objective / n;
        mean_force = mean_force / n;

        // Smooth maximum of |z|, stabilized by the primal maximum.
        let k = self.smoothmax_sharpness;
        let m = records
            .iter()
            .map(|r| r.knife_z.primal().abs())
            .fold(f64::NEG_INFINITY, f64::max);
        let mut sum = ctx.lift(0.0);
        for r in records {
            sum = sum + ((r.knife_z.abs() - m) * k).exp();
        }
        let smooth_max = sum.ln() / k + m;

        // Hard maximum (selected by primal comparison).
        let mut hard = records[0].knife_z.abs();
        for r in &records[1..] {
            hard = hard.max_val(r.knife_z.abs());
        }
        Ok(vec![objective, smooth_max, mean_force, hard])
    }
}

/// Multiplier state of the modified differential method of multipliers.
#[derive(Clone, Debug)]
pub struct MdmmState {
    pub lambda: f64,
    /// Quadratic penalty damping factor.
    pub c_damp: f64,
    /// Step size applied to the parameter update.
    pub step_size: f64,
    /// Step size applied to the multiplier update.
    pub lambda_step: f64,
}

/// One MDMM update for an equality constraint `g(u) = 0`:
/// `u' = u - eta (dL + lambda dg + c g dg)`, `lambda' = lambda + eta_l g`.
pub fn mdmm_step(
    u: &mut [f64],
    grad_l: &[f64],
    g: f64,
    grad_g: &[f64],
    state: &mut MdmmState,
) {
    for i in 0..u.len() {
        u[i] -= state.step_size
            * (grad_l[i] + state.lambda * grad_g[i] + state.c_damp * g * grad_g[i]);
    }
    state.lambda += state.lambda_step * g;
}

/// Mean knife force plus mean vertical velocity over one rollout
/// (records must be taken every step for the discrete integral).
pub fn objective(
    scene: &Scene,
    table: &ParamTable,
    motion: &MotionParams<f64>,
    rollout: &RolloutConfig,
) -> Result<f64> {
    let functional = ControlFunctional::default();
    let diff = DiffConfig { checkpoint_interval: 0, ..DiffConfig::default() };
    let (outputs, _) = record_rollout(
        scene,
        table,
        MotionSel::Keyframed(motion.clone()),
        rollout.clone(),
        diff,
        &functional,
    )?;
    Ok(outputs[OUT_OBJECTIVE])
}

#[derive(Clone, Debug)]
pub struct MotionOptConfig {
    pub iters: usize,
    pub constrained: bool,
    /// Blade length; the lateral constraint is `|z| <= blade_length / 2`.
    pub blade_length: f64,
    /// MDMM parameter step.
    pub step_size: f64,
    /// MDMM multiplier step.
    pub lambda_step: f64,
    /// MDMM quadratic penalty factor.
    pub c_damp: f64,
    /// Learning rate of the unconstrained Adam variant.
    pub adam_lr: f64,
    pub smoothmax_sharpness: f64,
    pub checkpoint_interval: usize,
}

impl Default for MotionOptConfig {
    fn default() -> Self {
        MotionOptConfig {
            iters: 50,
            constrained: true,
            blade_length: 0.15,
            step_size: 1e-3,
            lambda_step: 1e-3,
            c_damp: 10.0,
            adam_lr: 0.01,
            smoothmax_sharpness: 1e3,
            checkpoint_interval: 200,
        }
    }
}

/// Per-iteration diagnostics of the motion optimization.
#[derive(Clone, Debug)]
pub struct MotionIterate {
    pub objective: f64,
    pub mean_force: f64,
    pub max_abs_z: f64,
    pub constraint: f64,
    pub lambda: f64,
}

#[derive(Clone, Debug)]
pub struct MotionOptResult {
    pub motion: MotionParams<f64>,
    pub history: Vec<MotionIterate>,
}

/// Gradient-based knife-motion optimization. Constrained mode runs MDMM on
/// `g = blade_length/2 - smoothmax|z| - slack^2`; unconstrained mode runs
/// Adam on the raw objective. Errors out if the objective grows tenfold
/// over its initial value.
pub fn optimize_motion(
    scene: &Scene,
    table: &ParamTable,
    init: MotionParams<f64>,
    config: &MotionOptConfig,
) -> Result<MotionOptResult> {
    let k = init.keyframes();
    let functional = ControlFunctional { smoothmax_sharpness: config.smoothmax_sharpness };
    let rollout = RolloutConfig::new(
        // Records every step; the horizon is the last keyframe time.
        last_time(&init),
        1,
    );
    let diff = DiffConfig {
        motion_active: true,
        checkpoint_interval: config.checkpoint_interval,
        ..DiffConfig::default()
    };

    let mut motion = init;
    let mut history = Vec::with_capacity(config.iters);
    let mut mdmm = MdmmState {
        lambda: 0.0,
        c_damp: config.c_damp,
        step_size: config.step_size,
        lambda_step: config.lambda_step,
    };
    let mut slack: Option<f64> = None;
    let mut adam = AdamState::new(3 * k);
    let adam_cfg = AdamConfig { lr: config.adam_lr, ..AdamConfig::default() };
    let mut initial_objective = f64::INFINITY;

    for iter in 0..config.iters {
        let (outputs, tape) = record_rollout(
            scene,
            table,
            MotionSel::Keyframed(motion.clone()),
            rollout.clone(),
            diff.clone(),
            &functional,
        )?;
        let mut wanted = vec![false; 4];
        wanted[OUT_OBJECTIVE] = true;
        wanted[OUT_SMOOTH_MAX_Z] = config.constrained;
        let mut grads = tape.backward_masked(&wanted)?;
        let grad_l = grads[OUT_OBJECTIVE].take().expect("objective gradient requested");

        let objective = outputs[OUT_OBJECTIVE];
        if iter == 0 {
            initial_objective = objective;
        } else if objective.abs() > 10.0 * initial_objective.abs().max(1e-9)
            && objective > initial_objective
        {
            return Err(SimError::Diverged { iteration: iter, value: objective });
        }

        let smooth_max = outputs[OUT_SMOOTH_MAX_Z];
        let gamma = *slack.get_or_insert_with(|| {
            // Start feasible: g = 0 at the initial motion.
            (0.5 * config.blade_length - smooth_max).max(0.0).sqrt()
        });
        let g = 0.5 * config.blade_length - smooth_max - gamma * gamma;
        history.push(MotionIterate {
            objective,
            mean_force: outputs[OUT_MEAN_FORCE],
            max_abs_z: outputs[OUT_MAX_ABS_Z],
            constraint: g,
            lambda: mdmm.lambda,
        });

        let mut u: Vec<f64> = motion
            .a
            .iter()
            .chain(&motion.b)
            .chain(&motion.c)
            .copied()
            .collect();
        if config.constrained {
            let grad_z = grads[OUT_SMOOTH_MAX_Z].take().expect("constraint gradient requested");
            // g = L/2 - smoothmax - gamma^2: motion part of dg is -dZ, the
            // slack part is -2 gamma.
            let mut u_full = u.clone();
            u_full.push(gamma);
            let mut grad_l_full = grad_l.clone();
            grad_l_full.push(0.0);
            let mut grad_g: Vec<f64> = grad_z.iter().map(|z| -z).collect();
            grad_g.push(-2.0 * gamma);
            mdmm_step(&mut u_full, &grad_l_full, g, &grad_g, &mut mdmm);
            slack = Some(u_full.pop().expect("slack present"));
            u = u_full;
        } else {
            let (m_hat, v_hat) = adam.moments(&grad_l, adam_cfg.beta1, adam_cfg.beta2);
            for i in 0..u.len() {
                u[i] -= adam_cfg.lr * m_hat[i] / (v_hat[i].sqrt() + adam_cfg.eps);
            }
        }
        motion.a.copy_from_slice(&u[0..k]);
        motion.b.copy_from_slice(&u[k..2 * k]);
        motion.c.copy_from_slice(&u[2 * k..3 * k]);
    }
    Ok(MotionOptResult { motion, history })
}

fn last_time(motion: &MotionParams<f64>) -> f64 {
    motion.times.last().copied().unwrap_or(0.0).max(
        // A single mid-horizon keyframe still spans twice its time.
        if motion.times.len() == 1 { 2.0 * motion.times[0] } else { 0.0 },
    )
}
