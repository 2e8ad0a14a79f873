//! Force models, damage update, boundary conditions, and the semi-implicit
//! Euler simulation loop.
//!
//! Everything is generic over the [`Real`] scalar so the same code drives
//! plain rollouts (`f64`) and taped rollouts (`Var`). Branch decisions
//! (contact activation, clamps, boundary fixing, inversion checks) compare
//! primal values, making the branch pattern part of the primal and the
//! computation piecewise smooth.
//!
//! Step order per simulation step:
//! 1. gravity and ground contact forces (with boundary-condition update),
//! 2. elastic forces with strain-rate damping,
//! 3. knife contact forces on the material-side edge sections,
//! 4. damage update of the cutting spring stiffnesses,
//! 5. cutting spring forces,
//! 6. semi-implicit Euler integration of the vertices,
//! 7. Euler integration of the prescribed knife motion.

use crate::error::{Result, SimError};
use crate::knife::{self, KnifeGeometry, KnifePose};
use crate::math::{Mat3, Vec3, Vec3f};
use crate::mesh::CutMesh;
use crate::params::{ParamKey, ParamTable};
use crate::scalar::{tanh_over, Real};
use alloc::vec;
use alloc::vec::Vec;

/// Elastic material with derived Lame parameters.
///
/// The rest-stability constant `alpha` is chosen so the first
/// Piola-Kirchhoff stress vanishes exactly at `F = I`; without it a rest
/// mesh self-deforms and every calibration run starts polluted.
#[derive(Clone, Copy, Debug)]
pub struct Material<T> {
    pub young: T,
    pub poisson: T,
    pub density: f64,
}

impl<T: Real> Material<T> {
    pub fn new(young: T, poisson: T, density: f64) -> Result<Self> {
        let nu = poisson.primal();
        if !(nu > 0.0 && nu < 0.5) {
            return Err(SimError::OutOfBounds {
                name: "poisson".into(),
                value: nu,
                lb: 0.0,
                ub: 0.5,
            });
        }
        if young.primal() <= 0.0 || density <= 0.0 {
            return Err(SimError::Config("young and density must be positive".into()));
        }
        Ok(Material { young, poisson, density })
    }

    /// `lambda = E nu / ((1 + nu)(1 - 2 nu))`
    pub fn lame_lambda(&self) -> T {
        let nu = self.poisson;
        self.young * nu / ((nu + 1.0) * (-(nu * 2.0) + 1.0))
    }

    /// `mu = E / (2 (1 + nu))`
    pub fn lame_mu(&self) -> T {
        self.young / ((self.poisson + 1.0) * 2.0)
    }

    /// `alpha = 1 + 3 mu / (4 lambda)`, the root of `dPsi/dF(I) = 0`.
    pub fn alpha(&self) -> T {
        self.lame_mu() * 0.75 / self.lame_lambda() + 1.0
    }
}

/// Full per-rollout parameter set (Table of model parameters), spring-level
/// entries expanded to one value per cutting spring.
#[derive(Clone, Debug)]
pub struct SimParams<T> {
    pub velocity_y: T,
    pub initial_y: T,
    pub cut_spring_ke: Vec<T>,
    pub cut_spring_kd: Vec<T>,
    pub cut_spring_softness: Vec<T>,
    pub sdf_radius: Vec<T>,
    pub sdf_ke: Vec<T>,
    pub sdf_kd: Vec<T>,
    pub sdf_kf: Vec<T>,
    pub sdf_mu: Vec<T>,
    pub ground_ke: T,
    pub ground_kd: T,
    pub ground_kf: T,
    pub ground_mu: T,
    pub ground_radius: T,
    pub material: Material<T>,
}

impl<T: Real> SimParams<T> {
    /// Builds the expanded parameter set by querying one scalar per slot.
    /// `get(key, Some(i))` is asked for spring-level entries, `get(key,
    /// None)` for global scalars; shared parameters may return the same
    /// value (or tape leaf) for every index.
    pub fn build(
        n_springs: usize,
        get: impl FnMut(ParamKey, Option<usize>) -> T,
    ) -> Result<Self> {
        let per_spring = |get: &mut dyn FnMut(ParamKey, Option<usize>) -> T, key| {
            (0..n_springs).map(|i| get(key, Some(i))).collect::<Vec<_>>()
        };
        let mut g = get;
        let material = Material::new(
            g(ParamKey::Young, None),
            g(ParamKey::Poisson, None),
            g(ParamKey::Density, None).primal(),
        )?;
        Ok(SimParams {
            velocity_y: g(ParamKey::VelocityY, None),
            initial_y: g(ParamKey::InitialY, None),
            cut_spring_ke: per_spring(&mut g, ParamKey::CutSpringKe),
            cut_spring_kd: per_spring(&mut g, ParamKey::CutSpringKd),
            cut_spring_softness: per_spring(&mut g, ParamKey::CutSpringSoftness),
            sdf_radius: per_spring(&mut g, ParamKey::SdfRadius),
            sdf_ke: per_spring(&mut g, ParamKey::SdfKe),
            sdf_kd: per_spring(&mut g, ParamKey::SdfKd),
            sdf_kf: per_spring(&mut g, ParamKey::SdfKf),
            sdf_mu: per_spring(&mut g, ParamKey::SdfMu),
            ground_ke: g(ParamKey::GroundKe, None),
            ground_kd: g(ParamKey::GroundKd, None),
            ground_kf: g(ParamKey::GroundKf, None),
            ground_mu: g(ParamKey::GroundMu, None),
            ground_radius: g(ParamKey::GroundRadius, None),
            material,
        })
    }

    /// A context scalar for lifting constants onto the same tape.
    pub fn ctx(&self) -> T {
        self.material.young
    }
}

impl SimParams<f64> {
    pub fn from_table(table: &ParamTable, n_springs: usize) -> Result<Self> {
        let mut err = None;
        let params = SimParams::build(n_springs, |key, idx| {
            if key.spring_level() {
                match table.expanded(key, n_springs) {
                    Ok(vs) => vs[idx.unwrap_or(0)],
                    Err(e) => {
                        err.get_or_insert(e);
                        f64::NAN
                    }
                }
            } else {
                table.scalar(key)
            }
        });
        match err {
            Some(e) => Err(e),
            None => params,
        }
    }
}

/// Non-differentiable run options.
#[derive(Clone, Debug)]
pub struct SimOptions {
    /// Time step (s).
    pub dt: f64,
    /// Gravitational acceleration along y (m/s^2); set 0.0 to disable.
    pub gravity: f64,
    pub enable_ground: bool,
    /// Normal damping term of the knife contact (kept switchable; the
    /// contact model is sometimes run stiffness+friction only).
    pub enable_knife_damping: bool,
    pub enable_friction: bool,
    pub enable_damage: bool,
    /// Strain-rate dissipation coefficient (seconds); the damping stress is
    /// `strain_rate_damping * mu * dF/dt`.
    pub strain_rate_damping: f64,
    /// Vertices touching the ground at least this far (m) from the cutting
    /// plane are fixed in place.
    pub fixed_band: f64,
    /// Frank-Wolfe iterations for the closest-point search.
    pub fw_iters: usize,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            dt: 1e-5,
            gravity: -9.81,
            enable_ground: true,
            enable_knife_damping: true,
            enable_friction: true,
            enable_damage: true,
            strain_rate_damping: 1e-4,
            fixed_band: 0.01,
            fw_iters: knife::DEFAULT_FW_ITERS,
        }
    }
}

/// Immutable per-simulation data: preprocessed mesh, knife shape, cut plane
/// position and run options.
#[derive(Clone, Debug)]
pub struct Scene {
    pub mesh: CutMesh,
    pub cut_x: f64,
    pub knife: KnifeGeometry,
    pub options: SimOptions,
}

impl Scene {
    pub fn new(mesh: CutMesh, cut_x: f64, knife: KnifeGeometry, options: SimOptions) -> Result<Self> {
        knife.validate()?;
        if !(options.dt > 0.0) {
            return Err(SimError::Config("dt must be positive".into()));
        }
        if mesh.base.tets.is_empty() {
            return Err(SimError::Config("mesh has no elements".into()));
        }
        if let Some(i) = mesh.base.mass.iter().position(|m| *m <= 0.0) {
            return Err(SimError::Config(alloc::format!(
                "vertex {i} has zero lumped mass (unreferenced vertex?)"
            )));
        }
        Ok(Scene { mesh, cut_x, knife, options })
    }

    pub fn n_springs(&self) -> usize {
        self.mesh.springs.len()
    }

    pub fn n_vertices(&self) -> usize {
        self.mesh.base.vertices.len()
    }
}

/// Prescribed knife motion model.
pub trait Motion<T: Real> {
    fn velocity(&self, t: f64, params: &SimParams<T>) -> Vec3<T>;
}

/// Straight vertical descent at `params.velocity_y`.
pub struct VerticalMotion;

impl<T: Real> Motion<T> for VerticalMotion {
    fn velocity(&self, _t: f64, params: &SimParams<T>) -> Vec3<T> {
        let zero = params.velocity_y.lift(0.0);
        Vec3::new(zero, params.velocity_y, zero)
    }
}

/// Mutable simulation state.
#[derive(Clone, Debug)]
pub struct SimState<T> {
    pub x: Vec<Vec3<T>>,
    pub v: Vec<Vec3<T>>,
    /// Current cutting spring stiffnesses; monotonically non-increasing.
    pub k_spring: Vec<T>,
    pub knife: KnifePose<T>,
    pub t: f64,
    pub step_index: usize,
    pub fixed: Vec<bool>,
}

impl<T: Real> SimState<T> {
    /// Rest state with the knife parked at `initial_y` above the origin of
    /// the cut plane.
    pub fn initial(scene: &Scene, params: &SimParams<T>) -> Self {
        let ctx = params.ctx();
        let zero = ctx.lift(0.0);
        let x = scene.mesh.base.vertices.iter().map(|&p| Vec3::from_f64(ctx, p)).collect();
        let n = scene.mesh.base.vertices.len();
        SimState {
            x,
            v: vec![Vec3::zero_like(ctx); n],
            k_spring: params.cut_spring_ke.clone(),
            knife: KnifePose {
                position: Vec3::new(ctx.lift(scene.cut_x), params.initial_y, zero),
                velocity: Vec3::zero_like(ctx),
            },
            t: 0.0,
            step_index: 0,
            fixed: vec![false; n],
        }
    }

    pub fn primal(&self) -> SimState<f64> {
        SimState {
            x: self.x.iter().map(|p| p.primal()).collect(),
            v: self.v.iter().map(|p| p.primal()).collect(),
            k_spring: self.k_spring.iter().map(|k| k.primal()).collect(),
            knife: KnifePose {
                position: self.knife.position.primal(),
                velocity: self.knife.velocity.primal(),
            },
            t: self.t,
            step_index: self.step_index,
            fixed: self.fixed.clone(),
        }
    }
}

/// Deformation gradient of one element: `F = Ds * Dm^{-1}`.
pub fn deformation_gradient<T: Real>(scene: &Scene, x: &[Vec3<T>], element: usize) -> Mat3<T> {
    let tet = scene.mesh.base.tets[element];
    let [a, b, c, d] = tet.map(|i| x[i as usize]);
    let ds = Mat3::from_cols(b - a, c - a, d - a);
    let ctx = a.x;
    ds.mul_mat(Mat3::from_f64(ctx, scene.mesh.base.rest_inv[element]))
}

/// Strain-energy density `Psi = mu/2 (Ic - 3) + lambda/2 (J - alpha)^2 -
/// mu/2 ln(Ic + 1)`.
pub fn elastic_energy<T: Real>(f: Mat3<T>, material: &Material<T>) -> T {
    let mu = material.lame_mu();
    let lambda = material.lame_lambda();
    let alpha = material.alpha();
    let ic = f.frobenius_sq();
    let j = f.det();
    let dj = j - alpha;
    mu * (ic - 3.0) * 0.5 + lambda * dj.sq() * 0.5 - mu * (ic + 1.0).ln() * 0.5
}

/// First Piola-Kirchhoff stress of the constitutive model.
fn piola_stress<T: Real>(f: Mat3<T>, material: &Material<T>) -> (Mat3<T>, T) {
    let mu = material.lame_mu();
    let lambda = material.lame_lambda();
    let alpha = material.alpha();
    let ic = f.frobenius_sq();
    let j = f.det();
    let scale_f = mu * (-(ic + 1.0).recip() + 1.0);
    let scale_cof = lambda * (j - alpha);
    (f.scale(scale_f).add(f.cofactor().scale(scale_cof)), j)
}

/// Elastic and strain-rate damping forces accumulated into `out`.
pub fn elastic_forces<T: Real>(
    scene: &Scene,
    params: &SimParams<T>,
    state: &SimState<T>,
    out: &mut [Vec3<T>],
) -> Result<()> {
    let mesh = &scene.mesh.base;
    let damping = scene.options.strain_rate_damping;
    let mu = params.material.lame_mu();
    for e in 0..mesh.tets.len() {
        let tet = mesh.tets[e];
        let f = deformation_gradient(scene, &state.x, e);
        let (mut p, j) = piola_stress(f, &params.material);
        if j.primal() <= 0.0 {
            return Err(SimError::InvertedElement { element: e, step: state.step_index });
        }
        if damping > 0.0 {
            let [a, b, c, d] = tet.map(|i| state.v[i as usize]);
            let vs = Mat3::from_cols(b - a, c - a, d - a);
            let ctx = a.x;
            let fdot = vs.mul_mat(Mat3::from_f64(ctx, mesh.rest_inv[e]));
            p = p.add(fdot.scale(mu * damping));
        }
        // H = V P Dm^{-T}; forces are -H columns on vertices 1..3 and the
        // balancing sum on vertex 0.
        let ctx = state.x[tet[0] as usize].x;
        let h = p
            .mul_mat(Mat3::from_f64(ctx, mesh.rest_inv[e]).transpose())
            .scale(ctx.lift(mesh.rest_volume[e]));
        let f0 = h.cols[0] + h.cols[1] + h.cols[2];
        out[tet[0] as usize] = out[tet[0] as usize] + f0;
        for k in 0..3 {
            let vi = tet[k + 1] as usize;
            out[vi] = out[vi] - h.cols[k];
        }
    }
    Ok(())
}

/// Smooth saturated Coulomb friction: `-mu |f_n| tanh(k_f |v_t|) v_t/|v_t|`,
/// always bounded by `mu |f_n|` and exactly zero at `v_t = 0`.
pub fn friction_force<T: Real>(normal_force: Vec3<T>, v_tangential: Vec3<T>, mu: T, kf: T) -> Vec3<T> {
    let fn_mag = normal_force.norm();
    let speed = v_tangential.norm();
    let scale = mu * fn_mag * tanh_over(kf, speed);
    -v_tangential.scale(scale)
}

/// Ground plane (y = 0) penalty contact on vertex spheres. Fixed vertices
/// receive no forces.
pub fn ground_contact_forces<T: Real>(
    scene: &Scene,
    params: &SimParams<T>,
    state: &SimState<T>,
    out: &mut [Vec3<T>],
) {
    let ctx = params.ctx();
    for i in 0..state.x.len() {
        if state.fixed[i] {
            continue;
        }
        let p = state.x[i];
        let depth = params.ground_radius - p.y;
        if depth.primal() <= 0.0 {
            continue;
        }
        let up = Vec3::new(ctx.lift(0.0), ctx.lift(1.0), ctx.lift(0.0));
        let normal = up.scale(params.ground_ke * depth.sq());
        let damping = up.scale(-(params.ground_kd * state.v[i].y));
        let mut force = normal + damping;
        if scene.options.enable_friction {
            let vt = Vec3::new(state.v[i].x, ctx.lift(0.0), state.v[i].z);
            force = force + friction_force(normal, vt, params.ground_mu, params.ground_kf);
        }
        out[i] = out[i] + force;
    }
}

/// Marks vertices that are (1) touching the ground and (2) at least
/// `fixed_band` away from the cutting plane as fixed, with velocity zeroed.
/// Fixing is permanent within a rollout (the mask freezes once set).
/// Returns the total number of fixed vertices.
pub fn apply_boundary_conditions<T: Real>(
    scene: &Scene,
    params: &SimParams<T>,
    state: &mut SimState<T>,
) -> usize {
    let ctx = params.ctx();
    let radius = params.ground_radius.primal();
    for i in 0..state.x.len() {
        if state.fixed[i] {
            continue;
        }
        let p = state.x[i];
        let touching = p.y.primal() < radius;
        if touching && (p.x.primal() - scene.cut_x).abs() >= scene.options.fixed_band {
            state.fixed[i] = true;
            state.v[i] = Vec3::zero_like(ctx);
        }
    }
    state.fixed.iter().filter(|f| **f).count()
}

/// Knife contact over the material-side edge sections. Accumulates vertex
/// forces into `out`, per-spring applied force magnitudes into `mags`, and
/// returns the total reaction force on the knife.
pub fn knife_contact_forces<T: Real>(
    scene: &Scene,
    params: &SimParams<T>,
    state: &SimState<T>,
    out: &mut [Vec3<T>],
    mags: &mut [T],
) -> Vec3<T> {
    let ctx = params.ctx();
    let mut reaction = Vec3::zero_like(ctx);
    let pose_primal = KnifePose {
        position: state.knife.position.primal(),
        velocity: state.knife.velocity.primal(),
    };
    for section in &scene.mesh.sections {
        let s = section.spring as usize;
        let node = &scene.mesh.virtual_nodes[section.node as usize];
        let p1 = state.x[section.vertex as usize];
        let p2 = node.position(&state.x);
        let p1p = p1.primal();
        let p2p = p2.primal();
        let seg_len = (p2p - p1p).norm();
        if seg_len < 1e-12 {
            continue;
        }
        // 1-Lipschitz lower bound on the distance anywhere along the
        // segment; skips the closest-point search for far sections.
        let d1 = knife::sdf_eval(&scene.knife, &pose_primal, p1p);
        let d2 = knife::sdf_eval(&scene.knife, &pose_primal, p2p);
        if 0.5 * (d1 + d2 - seg_len) > params.sdf_radius[s].primal() {
            continue;
        }
        // The Frank-Wolfe coordinate is piecewise constant in the inputs
        // (it depends on them only through branch signs), so it is computed
        // on primal values and enters the taped path as a constant.
        let u = knife::closest_point_frank_wolfe(
            &scene.knife,
            &pose_primal,
            p1p,
            p2p,
            scene.options.fw_iters,
        );
        let cp = p1.scale(ctx.lift(1.0 - u)) + p2.scale(ctx.lift(u));
        let (d, normal, _) = knife::sdf_with_grad(&scene.knife, &state.knife, cp);
        let depth = params.sdf_radius[s] - d;
        if depth.primal() <= 0.0 {
            continue;
        }
        let fn_vec = normal.scale(params.sdf_ke[s] * depth.sq());
        let v1 = state.v[section.vertex as usize];
        let v2 = node.position(&state.v);
        let v_rel = v1.scale(ctx.lift(1.0 - u)) + v2.scale(ctx.lift(u)) - state.knife.velocity;
        let mut force = fn_vec;
        if scene.options.enable_knife_damping {
            let vn = v_rel.dot(normal);
            force = force + normal.scale(-(params.sdf_kd[s] * vn));
        }
        if scene.options.enable_friction {
            let vt = v_rel - normal.scale(v_rel.dot(normal));
            force = force + friction_force(fn_vec, vt, params.sdf_mu[s], params.sdf_kf[s]);
        }
        // Distribute to the section endpoints, then through the virtual
        // node to its parents.
        let to_vertex = force.scale(ctx.lift(1.0 - u));
        let to_node = force.scale(ctx.lift(u));
        out[section.vertex as usize] = out[section.vertex as usize] + to_vertex;
        let (pi, pj) = (node.parent_i as usize, node.parent_j as usize);
        out[pi] = out[pi] + to_node.scale(ctx.lift(1.0 - node.u));
        out[pj] = out[pj] + to_node.scale(ctx.lift(node.u));
        mags[s] = mags[s] + force.norm();
        reaction = reaction - force;
    }
    reaction
}

/// Damage law: once per step, `k' = max(0, k - softness * |f_knife|)`.
pub fn update_spring_stiffness<T: Real>(k: &mut [T], mags: &[T], softness: &[T]) {
    for i in 0..k.len() {
        k[i] = (k[i] - softness[i] * mags[i]).max_zero();
    }
}

/// Zero-rest-length spring-damper forces between paired virtual nodes,
/// distributed to their parent vertices.
pub fn cutting_spring_forces<T: Real>(
    scene: &Scene,
    params: &SimParams<T>,
    state: &SimState<T>,
    out: &mut [Vec3<T>],
) {
    for (s, spring) in scene.mesh.springs.iter().enumerate() {
        let na = &scene.mesh.virtual_nodes[spring.node_above as usize];
        let nb = &scene.mesh.virtual_nodes[spring.node_below as usize];
        let (xa, va) = na.state(&state.x, &state.v);
        let (xb, vb) = nb.state(&state.x, &state.v);
        let dx = xa - xb;
        let dv = va - vb;
        let fa = -(dx.scale(state.k_spring[s]) + dv.scale(params.cut_spring_kd[s]));
        let ctx = fa.x;
        for (node, sign) in [(na, 1.0), (nb, -1.0)] {
            let f = fa * sign;
            let (pi, pj) = (node.parent_i as usize, node.parent_j as usize);
            out[pi] = out[pi] + f.scale(ctx.lift(1.0 - node.u));
            out[pj] = out[pj] + f.scale(ctx.lift(node.u));
        }
    }
}

/// Per-step observables: knife reaction force and the prescribed vertical
/// knife velocity used during the step.
pub struct StepOutput<T> {
    pub knife_force: Vec3<T>,
    pub ydot: T,
}

/// One semi-implicit Euler step.
pub fn step<T: Real>(
    scene: &Scene,
    params: &SimParams<T>,
    motion: &dyn Motion<T>,
    state: &mut SimState<T>,
) -> Result<StepOutput<T>> {
    let dt = scene.options.dt;
    let ctx = params.ctx();
    let n = state.x.len();
    let mut forces = vec![Vec3::zero_like(ctx); n];

    state.knife.velocity = motion.velocity(state.t, params);

    // 1. Gravity and ground contact (with boundary fixing).
    if scene.options.gravity != 0.0 {
        for (i, f) in forces.iter_mut().enumerate() {
            f.y = f.y + scene.mesh.base.mass[i] * scene.options.gravity;
        }
    }
    if scene.options.enable_ground {
        apply_boundary_conditions(scene, params, state);
        ground_contact_forces(scene, params, state, &mut forces);
    }

    // 2. Elastic + strain-rate damping.
    elastic_forces(scene, params, state, &mut forces)?;

    // 3. Knife contact.
    let mut mags = vec![ctx.lift(0.0); scene.n_springs()];
    let knife_force = knife_contact_forces(scene, params, state, &mut forces, &mut mags);

    // 4. Damage update.
    if scene.options.enable_damage {
        update_spring_stiffness(&mut state.k_spring, &mags, &params.cut_spring_softness);
    }

    // 5. Cutting spring forces.
    cutting_spring_forces(scene, params, state, &mut forces);

    // 6. Integrate vertices (fixed vertices stay put).
    for i in 0..n {
        if state.fixed[i] {
            state.v[i] = Vec3::zero_like(ctx);
            continue;
        }
        let inv_m = 1.0 / scene.mesh.base.mass[i];
        state.v[i] = state.v[i] + forces[i] * (dt * inv_m);
        state.x[i] = state.x[i] + state.v[i] * dt;
    }

    // 7. Integrate the knife.
    let ydot = state.knife.velocity.y;
    state.knife.position = state.knife.position + state.knife.velocity * dt;

    state.t += dt;
    state.step_index += 1;

    for i in 0..n {
        if !state.v[i].is_finite() || !state.x[i].is_finite() {
            return Err(SimError::NonFinite { step: state.step_index });
        }
    }
    if !knife_force.is_finite() {
        return Err(SimError::NonFinite { step: state.step_index });
    }

    Ok(StepOutput { knife_force, ydot })
}

/// One recorded trajectory sample.
#[derive(Clone, Copy, Debug)]
pub struct StepRecord<T> {
    pub t: f64,
    pub force: Vec3<T>,
    pub fnorm: T,
    pub knife_y: T,
    pub knife_z: T,
    pub ydot: T,
}

impl StepRecord<f64> {
    pub fn is_finite(&self) -> bool {
        self.t.is_finite() && self.force.is_finite() && self.fnorm.is_finite()
    }
}

/// Recording configuration for a rollout.
#[derive(Clone, Debug)]
pub struct RolloutConfig {
    /// Total simulated time (s); must be an integral multiple of dt.
    pub duration: f64,
    /// Record every `record_stride` steps.
    pub record_stride: usize,
    /// Steps (1-based, post-step) at which to snapshot vertex positions.
    pub snapshot_steps: Vec<usize>,
}

impl RolloutConfig {
    pub fn new(duration: f64, record_stride: usize) -> Self {
        RolloutConfig { duration, record_stride, snapshot_steps: Vec::new() }
    }

    pub fn n_steps(&self, dt: f64) -> Result<usize> {
        let steps = crate::scalar::round(self.duration / dt);
        if (steps * dt - self.duration).abs() > 1e-9 * self.duration.max(1.0) {
            return Err(SimError::Config(alloc::format!(
                "duration {} is not an integral multiple of dt {}",
                self.duration,
                dt
            )));
        }
        Ok(steps as usize)
    }
}

/// Recorded observables of a rollout, generic over the scalar so taped
/// segments can share the recording logic.
pub struct RolloutSink<T> {
    pub records: Vec<StepRecord<T>>,
    pub snapshots: Vec<(usize, Vec<Vec3<T>>)>,
}

impl<T> RolloutSink<T> {
    pub fn new() -> Self {
        RolloutSink { records: Vec::new(), snapshots: Vec::new() }
    }
}

impl<T> Default for RolloutSink<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Advances `n_steps` steps, recording per the config. `state.step_index`
/// keeps global step counting consistent across checkpoint segments.
pub fn run_steps<T: Real>(
    scene: &Scene,
    params: &SimParams<T>,
    motion: &dyn Motion<T>,
    state: &mut SimState<T>,
    n_steps: usize,
    config: &RolloutConfig,
    sink: &mut RolloutSink<T>,
) -> Result<()> {
    for _ in 0..n_steps {
        let out = step(scene, params, motion, state)?;
        let idx = state.step_index;
        if config.record_stride > 0 && idx % config.record_stride == 0 {
            sink.records.push(StepRecord {
                t: state.t,
                force: out.knife_force,
                fnorm: out.knife_force.norm(),
                knife_y: state.knife.position.y,
                knife_z: state.knife.position.z,
                ydot: out.ydot,
            });
        }
        if config.snapshot_steps.contains(&idx) {
            sink.snapshots.push((idx, state.x.clone()));
        }
    }
    Ok(())
}

/// A plain trajectory: the time series the CSV format stores and losses
/// consume.
#[derive(Clone, Debug, Default)]
pub struct Trajectory {
    pub records: Vec<StepRecord<f64>>,
    pub snapshots: Vec<(usize, Vec<Vec3f>)>,
}

/// Full primal rollout from the rest state.
pub fn rollout(
    scene: &Scene,
    params: &SimParams<f64>,
    motion: &dyn Motion<f64>,
    config: &RolloutConfig,
) -> Result<Trajectory> {
    let n_steps = config.n_steps(scene.options.dt)?;
    let mut state = SimState::initial(scene, params);
    let mut sink = RolloutSink::new();
    run_steps(scene, params, motion, &mut state, n_steps, config, &mut sink)?;
    Ok(Trajectory { records: sink.records, snapshots: sink.snapshots })
}

// ---------------------------------------------------------------------------
// Energy bookkeeping (diagnostics and conservation tests).
// ---------------------------------------------------------------------------

/// Total elastic energy relative to the rest state, `sum V (Psi(F) -
/// Psi(I))`.
pub fn total_elastic_energy<T: Real>(
    scene: &Scene,
    params: &SimParams<T>,
    state: &SimState<T>,
) -> Result<T> {
    let ctx = params.ctx();
    let rest = elastic_energy(Mat3::identity_like(ctx), &params.material);
    let mut total = ctx.lift(0.0);
    for e in 0..scene.mesh.base.tets.len() {
        let f = deformation_gradient(scene, &state.x, e);
        if f.det().primal() <= 0.0 {
            return Err(SimError::InvertedElement { element: e, step: state.step_index });
        }
        total = total + (elastic_energy(f, &params.material) - rest) * scene.mesh.base.rest_volume[e];
    }
    Ok(total)
}

/// Total cutting-spring energy `sum 1/2 k |xa - xb|^2`.
pub fn total_spring_energy<T: Real>(scene: &Scene, state: &SimState<T>) -> T {
    let ctx = state.x[0].x;
    let mut total = ctx.lift(0.0);
    for (s, spring) in scene.mesh.springs.iter().enumerate() {
        let xa = scene.mesh.virtual_nodes[spring.node_above as usize].position(&state.x);
        let xb = scene.mesh.virtual_nodes[spring.node_below as usize].position(&state.x);
        total = total + state.k_spring[s] * (xa - xb).norm_sq() * 0.5;
    }
    total
}

/// Total kinetic energy `sum 1/2 m |v|^2`.
pub fn total_kinetic_energy<T: Real>(scene: &Scene, state: &SimState<T>) -> T {
    let ctx = state.x[0].x;
    let mut total = ctx.lift(0.0);
    for (i, v) in state.v.iter().enumerate() {
        total = total + v.norm_sq() * (0.5 * scene.mesh.base.mass[i]);
    }
    total
}
