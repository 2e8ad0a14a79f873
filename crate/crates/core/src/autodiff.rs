//! Reverse-mode differentiation of whole rollouts with checkpointed
//! backprop through time.
//!
//! A rollout is differentiated in two levels:
//!
//! 1. The primal rollout runs in plain `f64`, storing a full state snapshot
//!    every `checkpoint_interval` steps. The scalar outputs (loss, or the
//!    control objective and constraint) are evaluated once more on a small
//!    tape whose leaves are the recorded observables, yielding the
//!    cotangent seed of every observable.
//! 2. Segments are then replayed in reverse order on fresh tapes with the
//!    active parameters and the incoming state as leaves. Each replay
//!    executes bit-identical arithmetic to the primal pass, so gradients
//!    are evaluated exactly at the primal trajectory. Observable seeds and
//!    the state adjoints from the following segment are pushed backward,
//!    accumulating parameter gradients segment by segment.
//!
//! Memory is bounded by one segment's tape; 90k-step rollouts are
//! differentiated without storing 90k steps of records.

use crate::control::MotionParams;
use crate::dynamics::{
    run_steps, Motion, RolloutConfig, RolloutSink, Scene, SimParams, SimState, StepRecord,
    VerticalMotion,
};
use crate::error::{Result, SimError};
use crate::knife::KnifePose;
use crate::math::{Vec3, Vec3f};
use crate::params::{ParamKey, ParamTable};
use crate::scalar::Real;
use crate::tape::{Tape, Var};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

/// Scalar functional(s) of a rollout's observables. Implementations must
/// read only `fnorm`, `ydot`, `knife_y`, `knife_z` and the vertex
/// snapshots; the raw force components are not seeded in the backward pass.
pub trait RolloutFunctional {
    fn n_outputs(&self) -> usize;
    fn eval<T: Real>(
        &self,
        ctx: T,
        records: &[StepRecord<T>],
        snapshots: &[(usize, Vec<Vec3<T>>)],
    ) -> Result<Vec<T>>;
}

/// Knife motion selection for a differentiable rollout.
#[derive(Clone, Debug)]
pub enum MotionSel {
    /// Constant vertical descent at `velocity_y`.
    Vertical,
    /// Keyframed slicing motion; its `a`, `b`, `c` vectors become gradient
    /// slots when `DiffConfig::motion_active` is set.
    Keyframed(MotionParams<f64>),
}

/// What to differentiate and how to bound memory.
#[derive(Clone, Debug)]
pub struct DiffConfig {
    /// Simulation parameters exposed as gradient slots (layout follows
    /// [`ParamTable::layout`]).
    pub active: Vec<ParamKey>,
    /// Also expose the keyframe motion parameters as gradient slots.
    pub motion_active: bool,
    /// Steps per checkpoint segment (0 means a single segment).
    pub checkpoint_interval: usize,
    /// Tape record budget per segment.
    pub tape_budget: usize,
}

impl Default for DiffConfig {
    fn default() -> Self {
        DiffConfig {
            active: Vec::new(),
            motion_active: false,
            checkpoint_interval: 100,
            tape_budget: Tape::DEFAULT_BUDGET,
        }
    }
}

struct RecordSeed {
    fnorm: f64,
    knife_y: f64,
    knife_z: f64,
    ydot: f64,
}

/// Differentiation record of one rollout: checkpoints plus per-observable
/// cotangent seeds. `backward` replays segments in reverse and returns one
/// gradient per functional output, aligned with the slot layout
/// ([`RolloutTape::slot_names`]).
pub struct RolloutTape<'a> {
    scene: &'a Scene,
    table: &'a ParamTable,
    motion: MotionSel,
    diff: DiffConfig,
    rollout: RolloutConfig,
    n_steps: usize,
    checkpoints: Vec<SimState<f64>>,
    record_seeds: Vec<Vec<RecordSeed>>,
    snapshot_seeds: Vec<Vec<Vec<Vec3f>>>,
    snapshot_step_order: Vec<usize>,
    /// Primal outputs of the functional.
    pub outputs: Vec<f64>,
    n_slots: usize,
}

/// Records a rollout and the given functional of it, returning the primal
/// outputs together with the replayable differentiation record.
pub fn record_rollout<'a, F: RolloutFunctional>(
    scene: &'a Scene,
    table: &'a ParamTable,
    motion: MotionSel,
    rollout: RolloutConfig,
    diff: DiffConfig,
    functional: &F,
) -> Result<(Vec<f64>, RolloutTape<'a>)> {
    let n_springs = scene.n_springs();
    let n_steps = rollout.n_steps(scene.options.dt)?;
    let seg = if diff.checkpoint_interval == 0 { n_steps.max(1) } else { diff.checkpoint_interval };

    // Primal forward pass with checkpoints.
    let params = SimParams::from_table(table, n_springs)?;
    let mut state = SimState::initial(scene, &params);
    let mut sink = RolloutSink::new();
    let mut checkpoints = Vec::new();
    let mut done = 0usize;
    while done < n_steps {
        checkpoints.push(state.clone());
        let len = seg.min(n_steps - done);
        match &motion {
            MotionSel::Vertical => {
                run_steps(scene, &params, &VerticalMotion, &mut state, len, &rollout, &mut sink)?
            }
            MotionSel::Keyframed(mp) => {
                run_steps(scene, &params, mp, &mut state, len, &rollout, &mut sink)?
            }
        }
        done += len;
    }

    let outputs = functional.eval(1.0f64, &sink.records, &sink.snapshots)?;

    // Observable cotangent seeds from a small tape over the recordings.
    let tape = Tape::with_budget(diff.tape_budget);
    let leaf_records: Vec<StepRecord<Var<'_>>> = sink
        .records
        .iter()
        .map(|r| StepRecord {
            t: r.t,
            force: Vec3::from_f64(tape.constant(0.0), r.force),
            fnorm: tape.var(r.fnorm),
            knife_y: tape.var(r.knife_y),
            knife_z: tape.var(r.knife_z),
            ydot: tape.var(r.ydot),
        })
        .collect();
    let leaf_snapshots: Vec<(usize, Vec<Vec3<Var<'_>>>)> = sink
        .snapshots
        .iter()
        .map(|(s, xs)| {
            (*s, xs.iter().map(|p| Vec3::new(tape.var(p.x), tape.var(p.y), tape.var(p.z))).collect())
        })
        .collect();
    let taped_outputs = functional.eval(tape.constant(0.0), &leaf_records, &leaf_snapshots)?;
    for (a, b) in outputs.iter().zip(&taped_outputs) {
        debug_assert_eq!(*a, b.value(), "functional must be scalar-path independent");
    }

    let mut record_seeds = Vec::with_capacity(outputs.len());
    let mut snapshot_seeds = Vec::with_capacity(outputs.len());
    for out in &taped_outputs {
        let adj = tape.backward(*out);
        record_seeds.push(
            leaf_records
                .iter()
                .map(|r| RecordSeed {
                    fnorm: adj.grad(r.fnorm),
                    knife_y: adj.grad(r.knife_y),
                    knife_z: adj.grad(r.knife_z),
                    ydot: adj.grad(r.ydot),
                })
                .collect(),
        );
        snapshot_seeds.push(
            leaf_snapshots
                .iter()
                .map(|(_, xs)| {
                    xs.iter()
                        .map(|p| Vec3::new(adj.grad(p.x), adj.grad(p.y), adj.grad(p.z)))
                        .collect()
                })
                .collect(),
        );
    }
    let snapshot_step_order = sink.snapshots.iter().map(|(s, _)| *s).collect();

    let n_slots = table.layout(&diff.active, n_springs).len()
        + match (&motion, diff.motion_active) {
            (MotionSel::Keyframed(mp), true) => 3 * mp.keyframes(),
            _ => 0,
        };

    let tape = RolloutTape {
        scene,
        table,
        motion,
        diff,
        rollout,
        n_steps,
        checkpoints,
        record_seeds,
        snapshot_seeds,
        snapshot_step_order,
        outputs: outputs.clone(),
        n_slots,
    };
    Ok((outputs, tape))
}

impl<'a> RolloutTape<'a> {
    /// Gradient slot names, aligned with `backward`'s output.
    pub fn slot_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self
            .table
            .layout(&self.diff.active, self.scene.n_springs())
            .iter()
            .map(|slot| {
                if slot.spec.mode == crate::params::Mode::Individual {
                    alloc::format!("{}[{}]", slot.spec.key.name(), slot.index)
                } else {
                    String::from(slot.spec.key.name())
                }
            })
            .collect();
        if let (MotionSel::Keyframed(mp), true) = (&self.motion, self.diff.motion_active) {
            for prefix in ["a", "b", "c"] {
                for i in 0..mp.keyframes() {
                    names.push(alloc::format!("motion_{prefix}[{i}]"));
                }
            }
        }
        names
    }

    pub fn n_slots(&self) -> usize {
        self.n_slots
    }

    /// Reverse pass over all segments. Returns one gradient vector per
    /// functional output.
    pub fn backward(&self) -> Result<Vec<Vec<f64>>> {
        let wanted = vec![true; self.outputs.len()];
        Ok(self
            .backward_masked(&wanted)?
            .into_iter()
            .map(|g| g.expect("all outputs requested"))
            .collect())
    }

    /// Reverse pass computing gradients only for the masked outputs (one
    /// adjoint sweep per requested output per segment).
    pub fn backward_masked(&self, wanted: &[bool]) -> Result<Vec<Option<Vec<f64>>>> {
        assert_eq!(wanted.len(), self.outputs.len());
        let n_out = self.outputs.len();
        let n_springs = self.scene.n_springs();
        let n_verts = self.scene.n_vertices();
        let seg = if self.diff.checkpoint_interval == 0 {
            self.n_steps.max(1)
        } else {
            self.diff.checkpoint_interval
        };

        let mut grads = vec![vec![0.0f64; self.n_slots]; n_out];
        // Adjoint of the segment-entry state, per output.
        let mut state_adj: Vec<StateAdjoint> = (0..n_out)
            .map(|_| StateAdjoint::zeros(n_verts, n_springs))
            .collect();

        for seg_idx in (0..self.checkpoints.len()).rev() {
            let start_step = seg_idx * seg;
            let len = seg.min(self.n_steps - start_step);
            let tape = Tape::with_budget(self.diff.tape_budget);

            // Parameter leaves in slot-layout order.
            let flat = self.table.flatten(&self.diff.active, n_springs)?;
            let slot_vars: Vec<Var<'_>> = flat.iter().map(|v| tape.var(*v)).collect();
            let params = self.instantiate_params(&tape, &slot_vars, n_springs)?;
            let (motion, motion_vars) = self.instantiate_motion(&tape);

            // Segment-entry state: leaves for later segments, the
            // parameter-derived initial state for segment 0 (so initial_y
            // and cut_spring_ke receive their initial-condition gradient).
            let snapshot = &self.checkpoints[seg_idx];
            let (mut state, state_vars) = if seg_idx == 0 {
                (SimState::initial(self.scene, &params), None)
            } else {
                let (s, vars) = lift_state(&tape, snapshot);
                (s, Some(vars))
            };

            let mut sink: RolloutSink<Var<'_>> = RolloutSink::new();
            run_steps(self.scene, &params, motion.as_ref(), &mut state, len, &self.rollout, &mut sink)?;
            if tape.over_budget() {
                return Err(SimError::TapeBudget { steps_recorded: state.step_index });
            }

            for out_idx in 0..n_out {
                if !wanted[out_idx] {
                    continue;
                }
                let mut seeds: Vec<(Var<'_>, f64)> = Vec::new();
                // Observable seeds for records falling in this segment.
                for rec in &sink.records {
                    let global = global_record_index(rec.t, self.scene.options.dt, &self.rollout);
                    let seed = &self.record_seeds[out_idx][global];
                    seeds.push((rec.fnorm, seed.fnorm));
                    seeds.push((rec.knife_y, seed.knife_y));
                    seeds.push((rec.knife_z, seed.knife_z));
                    seeds.push((rec.ydot, seed.ydot));
                }
                for (step, xs) in &sink.snapshots {
                    let global = self
                        .snapshot_step_order
                        .iter()
                        .position(|s| s == step)
                        .expect("snapshot step recorded in primal pass");
                    let seed = &self.snapshot_seeds[out_idx][global];
                    for (p, s) in xs.iter().zip(seed) {
                        seeds.push((p.x, s.x));
                        seeds.push((p.y, s.y));
                        seeds.push((p.z, s.z));
                    }
                }
                // Exit-state adjoints from the segment already processed.
                state_adj[out_idx].seed_into(&state, &mut seeds);

                let adj = tape.backward_seeded(&seeds);
                for (g, v) in grads[out_idx].iter_mut().zip(&slot_vars) {
                    *g += adj.grad(*v);
                }
                for (g, v) in grads[out_idx][flat.len()..].iter_mut().zip(&motion_vars) {
                    *g += adj.grad(*v);
                }
                if let Some(vars) = &state_vars {
                    state_adj[out_idx] = vars.read_adjoints(&adj);
                }
            }
        }
        Ok(grads
            .into_iter()
            .zip(wanted)
            .map(|(g, w)| if *w { Some(g) } else { None })
            .collect())
    }

    fn instantiate_params<'t>(
        &self,
        tape: &'t Tape,
        slot_vars: &[Var<'t>],
        n_springs: usize,
    ) -> Result<SimParams<Var<'t>>> {
        // Map each key to its slot range.
        let layout = self.table.layout(&self.diff.active, n_springs);
        let mut err: Option<SimError> = None;
        let params = SimParams::build(n_springs, |key, idx| {
            if let Some(start) = layout.iter().position(|s| s.spec.key == key) {
                let shared = layout[start].spec.mode == crate::params::Mode::Shared
                    || !key.spring_level();
                if shared {
                    slot_vars[start]
                } else {
                    slot_vars[start + idx.unwrap_or(0)]
                }
            } else if key.spring_level() {
                match self.table.expanded(key, n_springs) {
                    Ok(vs) => tape.constant(vs[idx.unwrap_or(0)]),
                    Err(e) => {
                        err.get_or_insert(e);
                        tape.constant(f64::NAN)
                    }
                }
            } else {
                tape.constant(self.table.scalar(key))
            }
        });
        match err {
            Some(e) => Err(e),
            None => params,
        }
    }

    fn instantiate_motion<'t>(
        &self,
        tape: &'t Tape,
    ) -> (alloc::boxed::Box<dyn Motion<Var<'t>> + 't>, Vec<Var<'t>>) {
        match &self.motion {
            MotionSel::Vertical => (alloc::boxed::Box::new(VerticalMotion), Vec::new()),
            MotionSel::Keyframed(mp) => {
                let mut vars = Vec::new();
                let lift_vec = |vals: &[f64], vars: &mut Vec<Var<'t>>, active: bool| -> Vec<Var<'t>> {
                    vals.iter()
                        .map(|v| {
                            if active {
                                let var = tape.var(*v);
                                vars.push(var);
                                var
                            } else {
                                tape.constant(*v)
                            }
                        })
                        .collect()
                };
                let a = lift_vec(&mp.a, &mut vars, self.diff.motion_active);
                let b = lift_vec(&mp.b, &mut vars, self.diff.motion_active);
                let c = lift_vec(&mp.c, &mut vars, self.diff.motion_active);
                let lifted = MotionParams {
                    a,
                    b,
                    c,
                    times: mp.times.clone(),
                    sigma: mp.sigma,
                };
                (alloc::boxed::Box::new(lifted), vars)
            }
        }
    }
}

fn global_record_index(t: f64, dt: f64, rollout: &RolloutConfig) -> usize {
    let step = crate::scalar::round(t / dt) as usize;
    step / rollout.record_stride - 1
}

/// State leaves for a non-initial segment.
struct StateVars<'t> {
    x: Vec<Vec3<Var<'t>>>,
    v: Vec<Vec3<Var<'t>>>,
    k: Vec<Var<'t>>,
    knife_pos: Vec3<Var<'t>>,
}

impl<'t> StateVars<'t> {
    fn read_adjoints(&self, adj: &crate::tape::Adjoints) -> StateAdjoint {
        StateAdjoint {
            x: self.x.iter().map(|p| Vec3::new(adj.grad(p.x), adj.grad(p.y), adj.grad(p.z))).collect(),
            v: self.v.iter().map(|p| Vec3::new(adj.grad(p.x), adj.grad(p.y), adj.grad(p.z))).collect(),
            k: self.k.iter().map(|k| adj.grad(*k)).collect(),
            knife_pos: Vec3::new(
                adj.grad(self.knife_pos.x),
                adj.grad(self.knife_pos.y),
                adj.grad(self.knife_pos.z),
            ),
        }
    }
}

/// Adjoint of a segment-entry state, carried across segments.
struct StateAdjoint {
    x: Vec<Vec3f>,
    v: Vec<Vec3f>,
    k: Vec<f64>,
    knife_pos: Vec3f,
}

impl StateAdjoint {
    fn zeros(n_verts: usize, n_springs: usize) -> Self {
        StateAdjoint {
            x: vec![Vec3::new(0.0, 0.0, 0.0); n_verts],
            v: vec![Vec3::new(0.0, 0.0, 0.0); n_verts],
            k: vec![0.0; n_springs],
            knife_pos: Vec3::new(0.0, 0.0, 0.0),
        }
    }

    /// Seeds the exit-state variables of the preceding segment.
    fn seed_into<'t>(&self, state: &SimState<Var<'t>>, seeds: &mut Vec<(Var<'t>, f64)>) {
        for (p, s) in state.x.iter().zip(&self.x) {
            seeds.push((p.x, s.x));
            seeds.push((p.y, s.y));
            seeds.push((p.z, s.z));
        }
        for (p, s) in state.v.iter().zip(&self.v) {
            seeds.push((p.x, s.x));
            seeds.push((p.y, s.y));
            seeds.push((p.z, s.z));
        }
        for (k, s) in state.k_spring.iter().zip(&self.k) {
            seeds.push((*k, *s));
        }
        seeds.push((state.knife.position.x, self.knife_pos.x));
        seeds.push((state.knife.position.y, self.knife_pos.y));
        seeds.push((state.knife.position.z, self.knife_pos.z));
    }
}

fn lift_state<'t>(tape: &'t Tape, snapshot: &SimState<f64>) -> (SimState<Var<'t>>, StateVars<'t>) {
    let x: Vec<Vec3<Var<'t>>> = snapshot
        .x
        .iter()
        .map(|p| Vec3::new(tape.var(p.x), tape.var(p.y), tape.var(p.z)))
        .collect();
    let v: Vec<Vec3<Var<'t>>> = snapshot
        .v
        .iter()
        .map(|p| Vec3::new(tape.var(p.x), tape.var(p.y), tape.var(p.z)))
        .collect();
    let k: Vec<Var<'t>> = snapshot.k_spring.iter().map(|k| tape.var(*k)).collect();
    let knife_pos = Vec3::new(
        tape.var(snapshot.knife.position.x),
        tape.var(snapshot.knife.position.y),
        tape.var(snapshot.knife.position.z),
    );
    let vars = StateVars { x: x.clone(), v: v.clone(), k: k.clone(), knife_pos };
    let state = SimState {
        x,
        v,
        k_spring: k,
        knife: KnifePose {
            position: knife_pos,
            velocity: Vec3::from_f64(tape.constant(0.0), snapshot.knife.velocity.primal()),
        },
        t: snapshot.t,
        step_index: snapshot.step_index,
        fixed: snapshot.fixed.clone(),
    };
    (state, vars)
}

/// One row of the gradient self-check: analytic tape gradient against a
/// central finite difference in parameter space.
#[derive(Clone, Debug)]
pub struct GradCheckRow {
    pub name: String,
    pub analytic: f64,
    pub fd: f64,
    pub rel_error: f64,
}

/// Central finite-difference verification of the tape gradient, slot by
/// slot, in constrained parameter space. `h_rel` scales the step per slot:
/// `h = h_rel * max(|value|, 1e-3 (ub - lb))`.
pub fn grad_check<F: RolloutFunctional>(
    scene: &Scene,
    table: &ParamTable,
    motion: MotionSel,
    rollout: RolloutConfig,
    diff: DiffConfig,
    functional: &F,
    h_rel: f64,
) -> Result<Vec<GradCheckRow>> {
    assert_eq!(functional.n_outputs(), 1, "grad_check works on scalar functionals");
    let n_springs = scene.n_springs();
    let (_, tape) = record_rollout(scene, table, motion.clone(), rollout.clone(), diff.clone(), functional)?;
    let analytic = tape.backward()?.remove(0);
    let names = tape.slot_names();

    let eval = |t: &ParamTable| -> Result<f64> {
        let params = SimParams::from_table(t, n_springs)?;
        let mut state = SimState::initial(scene, &params);
        let mut sink = RolloutSink::new();
        let n = rollout.n_steps(scene.options.dt)?;
        match &motion {
            MotionSel::Vertical => {
                run_steps(scene, &params, &VerticalMotion, &mut state, n, &rollout, &mut sink)?
            }
            MotionSel::Keyframed(mp) => {
                run_steps(scene, &params, mp, &mut state, n, &rollout, &mut sink)?
            }
        }
        Ok(functional.eval(1.0f64, &sink.records, &sink.snapshots)?[0])
    };

    let base = table.flatten(&diff.active, n_springs)?;
    let layout = table.layout(&diff.active, n_springs);
    let mut rows = Vec::with_capacity(base.len());
    for i in 0..base.len() {
        let spec = layout[i].spec;
        let h = h_rel * base[i].abs().max(1e-3 * (spec.ub - spec.lb));
        let mut plus = base.clone();
        plus[i] += h;
        let mut minus = base.clone();
        minus[i] -= h;
        let mut tp = table.clone();
        tp.unflatten(&diff.active, n_springs, &plus)?;
        let mut tm = table.clone();
        tm.unflatten(&diff.active, n_springs, &minus)?;
        let fd = (eval(&tp)? - eval(&tm)?) / (2.0 * h);
        let denom = fd.abs().max(analytic[i].abs()).max(1e-12);
        rows.push(GradCheckRow {
            name: names[i].clone(),
            analytic: analytic[i],
            fd,
            rel_error: (analytic[i] - fd).abs() / denom,
        });
    }
    Ok(rows)
}
