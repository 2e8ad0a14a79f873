//! Trajectory losses, the likelihood they induce, and the three
//! parameter-inference drivers: Adam point estimation, preconditioned
//! stochastic gradient Langevin dynamics, and Hamiltonian Monte Carlo.
//!
//! All optimizers run in unconstrained space; parameters are materialized
//! through the sigmoid projection, so every reported sample or estimate
//! satisfies its bounds by construction.

use crate::autodiff::{record_rollout, DiffConfig, MotionSel, RolloutFunctional, RolloutTape};
use crate::dynamics::{RolloutConfig, Scene, StepRecord, Trajectory};
use crate::error::{Result, SimError};
use crate::math::Vec3;
use crate::params::{ParamKey, ParamTable, ParamVector};
use crate::scalar::Real;
use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

/// Trajectory comparison norms. L1 and L2 are per-timestep means so they
/// report in mean-absolute-error units; the other two operate on the whole
/// series.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossKind {
    L1,
    L2,
    InverseCosine,
    LogSumExp,
}

impl LossKind {
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "l1" => Some(LossKind::L1),
            "l2" => Some(LossKind::L2),
            "inverse-cosine" | "cosine" => Some(LossKind::InverseCosine),
            "logsumexp" => Some(LossKind::LogSumExp),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LossKind::L1 => "l1",
            LossKind::L2 => "l2",
            LossKind::InverseCosine => "inverse-cosine",
            LossKind::LogSumExp => "logsumexp",
        }
    }
}

#[derive(Clone, Debug)]
pub struct LossConfig {
    pub kind: LossKind,
    /// Weight of the optional vertex-position term (0 disables it).
    pub vertex_weight: f64,
    /// Denominator floor of the inverse cosine similarity.
    pub cosine_eps: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig { kind: LossKind::L1, vertex_weight: 0.0, cosine_eps: 1e-8 }
    }
}

/// Loss between a simulated knife-force profile and a reference, on the
/// recorded `fnorm` series, plus the optional vertex-position L2 term
/// against reference snapshots.
pub fn loss<T: Real>(
    ctx: T,
    records: &[StepRecord<T>],
    snapshots: &[(usize, Vec<Vec3<T>>)],
    reference: &Trajectory,
    config: &LossConfig,
) -> Result<T> {
    if records.len() != reference.records.len() {
        return Err(SimError::TrajectoryMismatch {
            expected: reference.records.len(),
            got: records.len(),
        });
    }
    for (s, r) in records.iter().zip(&reference.records) {
        if (s.t - r.t).abs() > 1e-9 {
            return Err(SimError::TrajectoryMismatch {
                expected: reference.records.len(),
                got: records.len(),
            });
        }
    }
    let n = records.len();
    let mut total = ctx.lift(0.0);
    if n > 0 {
        match config.kind {
            LossKind::L1 => {
                for (s, r) in records.iter().zip(&reference.records) {
                    total = total + (s.fnorm - r.fnorm).abs();
                }
                total = total / n as f64;
            }
            LossKind::L2 => {
                for (s, r) in records.iter().zip(&reference.records) {
                    total = total + (s.fnorm - r.fnorm).sq();
                }
                total = total / n as f64;
            }
            LossKind::InverseCosine => {
                let mut dot = ctx.lift(0.0);
                let mut ns = ctx.lift(0.0);
                let mut nr = 0.0f64;
                for (s, r) in records.iter().zip(&reference.records) {
                    dot = dot + s.fnorm * r.fnorm;
                    ns = ns + s.fnorm.sq();
                    nr += r.fnorm * r.fnorm;
                }
                let denom = (ns.sqrt() * nr.sqrt()).max_val(ctx.lift(config.cosine_eps));
                total = -(dot / denom) + 1.0;
            }
            LossKind::LogSumExp => {
                // Stabilized with the primal maximum difference.
                let m = records
                    .iter()
                    .zip(&reference.records)
                    .map(|(s, r)| s.fnorm.primal() - r.fnorm)
                    .fold(f64::NEG_INFINITY, f64::max);
                let mut sum = ctx.lift(0.0);
                for (s, r) in records.iter().zip(&reference.records) {
                    sum = sum + (s.fnorm - r.fnorm - m).exp();
                }
                total = sum.ln() + m;
            }
        }
    }
    if config.vertex_weight > 0.0 {
        if snapshots.len() != reference.snapshots.len() {
            return Err(SimError::TrajectoryMismatch {
                expected: reference.snapshots.len(),
                got: snapshots.len(),
            });
        }
        let mut vertex_term = ctx.lift(0.0);
        let mut count = 0usize;
        for ((step, xs), (rstep, rs)) in snapshots.iter().zip(&reference.snapshots) {
            if step != rstep || xs.len() != rs.len() {
                return Err(SimError::TrajectoryMismatch { expected: *rstep, got: *step });
            }
            for (p, q) in xs.iter().zip(rs) {
                vertex_term = vertex_term + (*p - Vec3::from_f64(ctx, *q)).norm_sq();
                count += 1;
            }
        }
        if count > 0 {
            total = total + vertex_term * (config.vertex_weight / count as f64);
        }
    }
    Ok(total)
}

/// [`RolloutFunctional`] adapter for [`loss`].
pub struct TrajectoryLoss<'r> {
    pub config: LossConfig,
    pub reference: &'r Trajectory,
}

impl RolloutFunctional for TrajectoryLoss<'_> {
    fn n_outputs(&self) -> usize {
        1
    }

    fn eval<T: Real>(
        &self,
        ctx: T,
        records: &[StepRecord<T>],
        snapshots: &[(usize, Vec<Vec3<T>>)],
    ) -> Result<Vec<T>> {
        Ok(vec![loss(ctx, records, snapshots, self.reference, &self.config)?])
    }
}

/// Records a rollout and its loss against a reference trajectory. The
/// returned tape yields the gradient w.r.t. the active parameters via
/// [`RolloutTape::backward`].
pub fn record_rollout_loss<'a>(
    scene: &'a Scene,
    table: &'a ParamTable,
    motion: MotionSel,
    rollout: RolloutConfig,
    diff: DiffConfig,
    loss_config: &LossConfig,
    reference: &Trajectory,
) -> Result<(f64, RolloutTape<'a>)> {
    let functional = TrajectoryLoss { config: loss_config.clone(), reference };
    let (outputs, tape) = record_rollout(scene, table, motion, rollout, diff, &functional)?;
    Ok((outputs[0], tape))
}

/// Differentiable scalar objective over unconstrained coordinates.
pub trait EnergyFn {
    fn dim(&self) -> usize;
    fn value_grad(&mut self, x: &[f64]) -> Result<(f64, Vec<f64>)>;
    /// Constrained view of a point (identity for unbounded problems).
    fn constrain(&self, x: &[f64]) -> Vec<f64> {
        x.to_vec()
    }
}

/// Posterior energy `U(x) = scale * loss(project(x))` over the active
/// simulation parameters; the uniform-in-bounds prior contributes no
/// gradient. `scale` defaults to the number of recorded samples so `U`
/// matches the unnormalized series norm of the likelihood.
pub struct RolloutEnergy<'a> {
    pub scene: &'a Scene,
    pub table: ParamTable,
    pub active: Vec<ParamKey>,
    pub motion: MotionSel,
    pub rollout: RolloutConfig,
    pub loss_config: LossConfig,
    pub reference: &'a Trajectory,
    pub diff: DiffConfig,
    pub scale: f64,
    vector: ParamVector,
}

impl<'a> RolloutEnergy<'a> {
    pub fn new(
        scene: &'a Scene,
        table: ParamTable,
        active: Vec<ParamKey>,
        rollout: RolloutConfig,
        loss_config: LossConfig,
        reference: &'a Trajectory,
    ) -> Result<Self> {
        let vector = ParamVector::from_table(&table, &active, scene.n_springs())?;
        let scale = reference.records.len().max(1) as f64;
        let diff = DiffConfig { active: active.clone(), ..DiffConfig::default() };
        Ok(RolloutEnergy {
            scene,
            table,
            active,
            motion: MotionSel::Vertical,
            rollout,
            loss_config,
            reference,
            diff,
            scale,
            vector,
        })
    }

    pub fn initial_x(&self) -> Vec<f64> {
        self.vector.x.clone()
    }

    /// Table with the given unconstrained point materialized.
    pub fn table_at(&self, x: &[f64]) -> Result<ParamTable> {
        let mut pv = self.vector.clone();
        pv.x = x.to_vec();
        let mut table = self.table.clone();
        table.unflatten(&self.active, self.scene.n_springs(), &pv.values())?;
        Ok(table)
    }
}

impl EnergyFn for RolloutEnergy<'_> {
    fn dim(&self) -> usize {
        self.vector.len()
    }

    fn value_grad(&mut self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let table = self.table_at(x)?;
        let (value, tape) = record_rollout_loss(
            self.scene,
            &table,
            self.motion.clone(),
            self.rollout.clone(),
            self.diff.clone(),
            &self.loss_config,
            self.reference,
        )?;
        let grad_theta = tape.backward()?.remove(0);
        let mut pv = self.vector.clone();
        pv.x = x.to_vec();
        let grad_x = pv.chain_grad(&grad_theta);
        Ok((self.scale * value, grad_x.iter().map(|g| g * self.scale).collect()))
    }

    fn constrain(&self, x: &[f64]) -> Vec<f64> {
        let mut pv = self.vector.clone();
        pv.x = x.to_vec();
        pv.values()
    }
}

/// Adam with bias-corrected first and second moments.
#[derive(Clone, Debug)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub iters: usize,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 0.05, beta1: 0.9, beta2: 0.999, eps: 1e-8, iters: 300 }
    }
}

/// Running Adam moments; shared by the optimizer and the Langevin sampler.
#[derive(Clone, Debug)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: usize,
}

impl AdamState {
    pub fn new(dim: usize) -> Self {
        AdamState { m: vec![0.0; dim], v: vec![0.0; dim], t: 0 }
    }

    /// Bias-corrected moments for the latest gradient.
    pub fn moments(&mut self, grad: &[f64], beta1: f64, beta2: f64) -> (Vec<f64>, Vec<f64>) {
        self.t += 1;
        let b1t = 1.0 - libm::pow(beta1, self.t as f64);
        let b2t = 1.0 - libm::pow(beta2, self.t as f64);
        let mut m_hat = vec![0.0; grad.len()];
        let mut v_hat = vec![0.0; grad.len()];
        for i in 0..grad.len() {
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * grad[i];
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * grad[i] * grad[i];
            m_hat[i] = self.m[i] / b1t;
            v_hat[i] = self.v[i] / b2t;
        }
        (m_hat, v_hat)
    }
}

#[derive(Clone, Debug)]
pub struct AdamResult {
    pub x: Vec<f64>,
    /// Objective value per iteration (evaluated at the pre-update point).
    pub history: Vec<f64>,
}

/// Minimizes an [`EnergyFn`] with Adam. Aborts with the iteration index if
/// the objective turns NaN.
pub fn adam_minimize(
    f: &mut dyn EnergyFn,
    x0: &[f64],
    config: &AdamConfig,
) -> Result<AdamResult> {
    let mut x = x0.to_vec();
    let mut adam = AdamState::new(x.len());
    let mut history = Vec::with_capacity(config.iters);
    for iter in 0..config.iters {
        let (value, grad) = f.value_grad(&x)?;
        if value.is_nan() {
            return Err(SimError::NanLoss { iteration: iter });
        }
        history.push(value);
        let (m_hat, v_hat) = adam.moments(&grad, config.beta1, config.beta2);
        for i in 0..x.len() {
            x[i] -= config.lr * m_hat[i] / (v_hat[i].sqrt() + config.eps);
        }
    }
    Ok(AdamResult { x, history })
}

/// One posterior draw.
#[derive(Clone, Debug)]
pub struct PosteriorSample {
    /// Constrained parameter values (always inside bounds).
    pub params: Vec<f64>,
    /// `-U` at this point.
    pub log_likelihood: f64,
    pub iteration: usize,
}

/// Which Langevin update rule to run: the Adam-preconditioned rule is the
/// primary; the plain preconditioned rule (step `alpha/2 A grad`) is kept
/// as an option.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SgldRule {
    AdamPreconditioned,
    Preconditioned,
}

#[derive(Clone, Debug)]
pub struct SgldConfig {
    pub lr: f64,
    /// Momentum decay (Adam rule only).
    pub beta1: f64,
    /// Preconditioner decay; 0.95 is the reference setting.
    pub beta2: f64,
    pub eps: f64,
    pub iters: usize,
    pub burn_in: usize,
    pub rule: SgldRule,
    /// Scales the injected Gaussian noise; 0 turns SGLD into deterministic
    /// preconditioned descent.
    pub noise_scale: f64,
    /// Freeze the preconditioner to the identity (test hook).
    pub identity_preconditioner: bool,
    pub seed: u64,
}

impl Default for SgldConfig {
    fn default() -> Self {
        SgldConfig {
            lr: 0.05,
            beta1: 0.9,
            beta2: 0.95,
            eps: 1e-8,
            iters: 300,
            burn_in: 90,
            rule: SgldRule::AdamPreconditioned,
            noise_scale: 1.0,
            identity_preconditioner: false,
            seed: 0,
        }
    }
}

/// Stochastic gradient Langevin dynamics with the Adam-style
/// preconditioner: `A = diag(1 / (sqrt(v_hat) + eps))`, noise
/// `N(0, lr * A)`, update `x <- x - lr * m_hat * A + noise`.
pub fn sgld_sample(
    f: &mut dyn EnergyFn,
    x0: &[f64],
    config: &SgldConfig,
) -> Result<Vec<PosteriorSample>> {
    let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
    let mut x = x0.to_vec();
    let mut adam = AdamState::new(x.len());
    let mut v_plain = vec![0.0f64; x.len()];
    let mut samples = Vec::new();
    for iter in 0..config.iters {
        let (value, grad) = f.value_grad(&x)?;
        if value.is_nan() {
            return Err(SimError::NanLoss { iteration: iter });
        }
        if iter >= config.burn_in {
            samples.push(PosteriorSample {
                params: f.constrain(&x),
                log_likelihood: -value,
                iteration: iter,
            });
        }
        match config.rule {
            SgldRule::AdamPreconditioned => {
                let (m_hat, v_hat) = adam.moments(&grad, config.beta1, config.beta2);
                for i in 0..x.len() {
                    let a = if config.identity_preconditioner {
                        1.0
                    } else {
                        1.0 / (v_hat[i].sqrt() + config.eps)
                    };
                    let noise: f64 = rng.sample(StandardNormal);
                    let std = (config.lr * a).sqrt() * config.noise_scale;
                    x[i] += -config.lr * m_hat[i] * a + std * noise;
                }
            }
            SgldRule::Preconditioned => {
                for i in 0..x.len() {
                    v_plain[i] =
                        config.beta2 * v_plain[i] + (1.0 - config.beta2) * grad[i] * grad[i];
                    let a = if config.identity_preconditioner {
                        1.0
                    } else {
                        1.0 / (config.eps + v_plain[i].sqrt())
                    };
                    let noise: f64 = rng.sample(StandardNormal);
                    let std = (config.lr * a).sqrt() * config.noise_scale;
                    x[i] += -0.5 * config.lr * a * grad[i] + std * noise;
                }
            }
        }
    }
    Ok(samples)
}

#[derive(Clone, Debug)]
pub struct HmcConfig {
    pub step_size: f64,
    pub leapfrog_steps: usize,
    pub iters: usize,
    pub burn_in: usize,
    pub seed: u64,
}

impl Default for HmcConfig {
    fn default() -> Self {
        HmcConfig { step_size: 0.05, leapfrog_steps: 10, iters: 300, burn_in: 50, seed: 0 }
    }
}

/// Standard HMC: unit mass matrix, leapfrog integration, Metropolis
/// acceptance. Returns the kept samples and the overall acceptance rate.
pub fn hmc_sample(
    f: &mut dyn EnergyFn,
    x0: &[f64],
    config: &HmcConfig,
) -> Result<(Vec<PosteriorSample>, f64)> {
    let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
    let mut x = x0.to_vec();
    let (mut u, mut grad) = f.value_grad(&x)?;
    let mut samples = Vec::new();
    let mut accepted = 0usize;
    for iter in 0..config.iters {
        let p0: Vec<f64> = (0..x.len()).map(|_| rng.sample(StandardNormal)).collect();
        let mut xn = x.clone();
        let mut p = p0.clone();
        let mut gn = grad.clone();
        // Leapfrog.
        for i in 0..p.len() {
            p[i] -= 0.5 * config.step_size * gn[i];
        }
        let mut un = u;
        for l in 0..config.leapfrog_steps {
            for i in 0..xn.len() {
                xn[i] += config.step_size * p[i];
            }
            let (u_new, g_new) = f.value_grad(&xn)?;
            un = u_new;
            gn = g_new;
            let half = if l + 1 == config.leapfrog_steps { 0.5 } else { 1.0 };
            for i in 0..p.len() {
                p[i] -= half * config.step_size * gn[i];
            }
        }
        let k0: f64 = p0.iter().map(|p| 0.5 * p * p).sum();
        let k1: f64 = p.iter().map(|p| 0.5 * p * p).sum();
        let dh = (un + k1) - (u + k0);
        let accept = dh <= 0.0 || rng.random::<f64>() < (-dh).exp();
        if accept {
            x = xn;
            u = un;
            grad = gn;
            accepted += 1;
        }
        if iter >= config.burn_in {
            samples.push(PosteriorSample {
                params: f.constrain(&x),
                log_likelihood: -u,
                iteration: iter,
            });
        }
    }
    Ok((samples, accepted as f64 / config.iters as f64))
}
