//! Simulation parameter catalog: defaults, bounds, shared/individual modes,
//! and the sigmoid reparameterization every optimizer runs through.
//!
//! Spring-level parameters exist in two modes: shared (one scalar broadcast
//! to all cutting springs) or individual (one value per spring). Optimizers
//! operate on unconstrained reals; materialized values are always strictly
//! inside their bounds via `sigmoid(x) * (ub - lb) + lb`.

use crate::error::{Result, SimError};
use crate::scalar::Real;
use alloc::collections::BTreeMap;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum ParamKey {
    VelocityY,
    InitialY,
    CutSpringKe,
    CutSpringKd,
    CutSpringSoftness,
    SdfRadius,
    SdfKe,
    SdfKd,
    SdfKf,
    SdfMu,
    GroundKe,
    GroundKd,
    GroundKf,
    GroundMu,
    GroundRadius,
    Young,
    Poisson,
    Density,
}

impl ParamKey {
    pub const ALL: [ParamKey; 18] = [
        ParamKey::VelocityY,
        ParamKey::InitialY,
        ParamKey::CutSpringKe,
        ParamKey::CutSpringKd,
        ParamKey::CutSpringSoftness,
        ParamKey::SdfRadius,
        ParamKey::SdfKe,
        ParamKey::SdfKd,
        ParamKey::SdfKf,
        ParamKey::SdfMu,
        ParamKey::GroundKe,
        ParamKey::GroundKd,
        ParamKey::GroundKf,
        ParamKey::GroundMu,
        ParamKey::GroundRadius,
        ParamKey::Young,
        ParamKey::Poisson,
        ParamKey::Density,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ParamKey::VelocityY => "velocity_y",
            ParamKey::InitialY => "initial_y",
            ParamKey::CutSpringKe => "cut_spring_ke",
            ParamKey::CutSpringKd => "cut_spring_kd",
            ParamKey::CutSpringSoftness => "cut_spring_softness",
            ParamKey::SdfRadius => "sdf_radius",
            ParamKey::SdfKe => "sdf_ke",
            ParamKey::SdfKd => "sdf_kd",
            ParamKey::SdfKf => "sdf_kf",
            ParamKey::SdfMu => "sdf_mu",
            ParamKey::GroundKe => "ground_ke",
            ParamKey::GroundKd => "ground_kd",
            ParamKey::GroundKf => "ground_kf",
            ParamKey::GroundMu => "ground_mu",
            ParamKey::GroundRadius => "ground_radius",
            ParamKey::Young => "young",
            ParamKey::Poisson => "poisson",
            ParamKey::Density => "density",
        }
    }

    pub fn from_name(name: &str) -> Option<ParamKey> {
        ParamKey::ALL.into_iter().find(|k| k.name() == name)
    }

    /// Spring-level parameters may be tuned individually per cutting spring.
    pub fn spring_level(self) -> bool {
        matches!(
            self,
            ParamKey::CutSpringKe
                | ParamKey::CutSpringKd
                | ParamKey::CutSpringSoftness
                | ParamKey::SdfRadius
                | ParamKey::SdfKe
                | ParamKey::SdfKd
                | ParamKey::SdfKf
                | ParamKey::SdfMu
        )
    }

    pub fn default_value(self) -> f64 {
        match self {
            ParamKey::VelocityY => -0.05,
            ParamKey::InitialY => 0.08,
            ParamKey::CutSpringKe => 500.0,
            ParamKey::CutSpringKd => 0.1,
            ParamKey::CutSpringSoftness => 500.0,
            ParamKey::SdfRadius => 0.5e-3,
            ParamKey::SdfKe => 1000.0,
            ParamKey::SdfKd => 1.0,
            ParamKey::SdfKf => 0.01,
            ParamKey::SdfMu => 0.5,
            ParamKey::GroundKe => 100.0,
            ParamKey::GroundKd => 0.1,
            ParamKey::GroundKf => 0.2,
            ParamKey::GroundMu => 0.6,
            ParamKey::GroundRadius => 1.0e-3,
            ParamKey::Young => 3.0e6,
            ParamKey::Poisson => 0.17,
            ParamKey::Density => 787.0,
        }
    }

    /// Default bounds: `[default/10, default*10]` except where explicit
    /// ranges exist (contact and spring stiffness) or physics restricts the
    /// value (Poisson ratio inside (0, 0.5)).
    pub fn default_bounds(self) -> (f64, f64) {
        match self {
            ParamKey::SdfKe => (500.0, 8000.0),
            ParamKey::CutSpringKe => (100.0, 1500.0),
            ParamKey::Poisson => (0.01, 0.499),
            _ => {
                let d = self.default_value();
                let (a, b) = (d / 10.0, d * 10.0);
                if a < b {
                    (a, b)
                } else {
                    (b, a)
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Shared,
    Individual,
}

/// Bounds, mode and identity of one parameter.
#[derive(Clone, Copy, Debug)]
pub struct ParamSpec {
    pub key: ParamKey,
    pub lb: f64,
    pub ub: f64,
    pub mode: Mode,
}

impl ParamSpec {
    pub fn new(key: ParamKey) -> Self {
        let (lb, ub) = key.default_bounds();
        ParamSpec { key, lb, ub, mode: Mode::Shared }
    }

    /// Sigmoid projection from an unconstrained real into `(lb, ub)`.
    pub fn project(&self, x: f64) -> f64 {
        sigmoid(x) * (self.ub - self.lb) + self.lb
    }

    /// Inverse of [`ParamSpec::project`]; errors at or outside the bounds.
    pub fn unproject(&self, value: f64) -> Result<f64> {
        let t = (value - self.lb) / (self.ub - self.lb);
        if !(t > 0.0 && t < 1.0) {
            return Err(SimError::OutOfBounds {
                name: self.key.name().to_string(),
                value,
                lb: self.lb,
                ub: self.ub,
            });
        }
        Ok((t / (1.0 - t)).ln())
    }

    /// Exact chain-rule factor `d value / d x = sigmoid'(x) (ub - lb)`.
    pub fn project_grad(&self, x: f64) -> f64 {
        let s = sigmoid(x);
        s * (1.0 - s) * (self.ub - self.lb)
    }

    pub fn contains(&self, value: f64) -> bool {
        value >= self.lb && value <= self.ub
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// One parameter's current value.
#[derive(Clone, Debug, PartialEq)]
pub enum ParamValue {
    Scalar(f64),
    PerSpring(Vec<f64>),
}

/// Broadcast a shared scalar to `n` springs; validate individual vectors.
pub fn expand(value: &ParamValue, key: ParamKey, n_springs: usize) -> Result<Vec<f64>> {
    match value {
        ParamValue::Scalar(v) => Ok(vec![*v; n_springs]),
        ParamValue::PerSpring(vs) => {
            if vs.len() != n_springs {
                return Err(SimError::LengthMismatch {
                    name: key.name().to_string(),
                    expected: n_springs,
                    got: vs.len(),
                });
            }
            Ok(vs.clone())
        }
    }
}

#[derive(Clone, Debug)]
pub struct ParamEntry {
    pub spec: ParamSpec,
    pub value: ParamValue,
}

/// The full parameter table with current values, bounds and modes.
#[derive(Clone, Debug)]
pub struct ParamTable {
    entries: BTreeMap<ParamKey, ParamEntry>,
}

impl Default for ParamTable {
    fn default() -> Self {
        let mut entries = BTreeMap::new();
        for key in ParamKey::ALL {
            entries.insert(
                key,
                ParamEntry {
                    spec: ParamSpec::new(key),
                    value: ParamValue::Scalar(key.default_value()),
                },
            );
        }
        ParamTable { entries }
    }
}

impl ParamTable {
    pub fn entry(&self, key: ParamKey) -> &ParamEntry {
        &self.entries[&key]
    }

    pub fn spec(&self, key: ParamKey) -> ParamSpec {
        self.entries[&key].spec
    }

    pub fn scalar(&self, key: ParamKey) -> f64 {
        match &self.entries[&key].value {
            ParamValue::Scalar(v) => *v,
            ParamValue::PerSpring(vs) => vs.iter().sum::<f64>() / vs.len() as f64,
        }
    }

    pub fn set_scalar(&mut self, key: ParamKey, value: f64) -> Result<()> {
        let entry = self.entries.get_mut(&key).expect("catalog covers all keys");
        if !entry.spec.contains(value) {
            return Err(SimError::OutOfBounds {
                name: key.name().to_string(),
                value,
                lb: entry.spec.lb,
                ub: entry.spec.ub,
            });
        }
        entry.value = ParamValue::Scalar(value);
        Ok(())
    }

    pub fn set_individual(&mut self, key: ParamKey, values: Vec<f64>) -> Result<()> {
        if !key.spring_level() {
            return Err(SimError::Config(alloc::format!(
                "{} cannot be individually parameterized",
                key.name()
            )));
        }
        let entry = self.entries.get_mut(&key).expect("catalog covers all keys");
        for &v in &values {
            if !entry.spec.contains(v) {
                return Err(SimError::OutOfBounds {
                    name: key.name().to_string(),
                    value: v,
                    lb: entry.spec.lb,
                    ub: entry.spec.ub,
                });
            }
        }
        entry.spec.mode = Mode::Individual;
        entry.value = ParamValue::PerSpring(values);
        Ok(())
    }

    pub fn set_mode(&mut self, key: ParamKey, mode: Mode) -> Result<()> {
        if mode == Mode::Individual && !key.spring_level() {
            return Err(SimError::Config(alloc::format!(
                "{} cannot be individually parameterized",
                key.name()
            )));
        }
        self.entries.get_mut(&key).expect("catalog covers all keys").spec.mode = mode;
        Ok(())
    }

    pub fn set_bounds(&mut self, key: ParamKey, lb: f64, ub: f64) -> Result<()> {
        if !(lb < ub) {
            return Err(SimError::Config(alloc::format!(
                "{}: bounds must satisfy lb < ub",
                key.name()
            )));
        }
        let entry = self.entries.get_mut(&key).expect("catalog covers all keys");
        entry.spec.lb = lb;
        entry.spec.ub = ub;
        Ok(())
    }

    /// Expanded per-spring values for a spring-level parameter.
    pub fn expanded(&self, key: ParamKey, n_springs: usize) -> Result<Vec<f64>> {
        expand(&self.entries[&key].value, key, n_springs)
    }

    pub fn material_preset(&mut self, name: &str) -> Result<()> {
        let (e, nu, rho) = match name {
            "apple" => (3.0e6, 0.17, 787.0),
            "potato" => (2.0e6, 0.45, 630.0),
            "cucumber" => (2.5e6, 0.37, 950.0),
            other => {
                return Err(SimError::Config(alloc::format!("unknown material preset '{other}'")))
            }
        };
        // Re-center bounds on the preset before setting values.
        self.set_bounds(ParamKey::Young, e / 10.0, e * 10.0)?;
        self.set_bounds(ParamKey::Density, rho / 10.0, rho * 10.0)?;
        self.set_scalar(ParamKey::Young, e)?;
        self.set_scalar(ParamKey::Poisson, nu)?;
        self.set_scalar(ParamKey::Density, rho)?;
        Ok(())
    }

    /// Flattened slot layout for the given active keys: shared parameters
    /// contribute one slot, individual ones contribute `n_springs` slots.
    pub fn layout(&self, active: &[ParamKey], n_springs: usize) -> Vec<Slot> {
        let mut slots = Vec::new();
        for &key in active {
            let entry = &self.entries[&key];
            let count = if key.spring_level() && entry.spec.mode == Mode::Individual {
                n_springs
            } else {
                1
            };
            for i in 0..count {
                slots.push(Slot { spec: entry.spec, index: i });
            }
        }
        slots
    }

    /// Current constrained values flattened according to [`ParamTable::layout`].
    pub fn flatten(&self, active: &[ParamKey], n_springs: usize) -> Result<Vec<f64>> {
        let mut out = Vec::new();
        for &key in active {
            let entry = &self.entries[&key];
            match (&entry.value, entry.spec.mode) {
                (_, Mode::Individual) => out.extend(self.expanded(key, n_springs)?),
                (ParamValue::Scalar(v), Mode::Shared) => out.push(*v),
                (ParamValue::PerSpring(_), Mode::Shared) => {
                    return Err(SimError::Config(alloc::format!(
                        "{} holds per-spring values but is in shared mode",
                        key.name()
                    )))
                }
            }
        }
        Ok(out)
    }

    /// Writes flattened constrained values back into the table.
    pub fn unflatten(&mut self, active: &[ParamKey], n_springs: usize, values: &[f64]) -> Result<()> {
        let mut cursor = 0usize;
        for &key in active {
            let mode = self.entries[&key].spec.mode;
            if key.spring_level() && mode == Mode::Individual {
                let vs = values[cursor..cursor + n_springs].to_vec();
                cursor += n_springs;
                self.set_individual(key, vs)?;
            } else {
                self.set_scalar(key, values[cursor])?;
                cursor += 1;
            }
        }
        if cursor != values.len() {
            return Err(SimError::Config("flattened value length mismatch".into()));
        }
        Ok(())
    }
}

/// One scalar degree of freedom in a flattened parameter vector.
#[derive(Clone, Copy, Debug)]
pub struct Slot {
    pub spec: ParamSpec,
    /// Spring index for individual-mode slots, 0 for shared.
    pub index: usize,
}

/// Optimizer-facing view: unconstrained coordinates plus the slot metadata
/// needed to materialize constrained values.
#[derive(Clone, Debug)]
pub struct ParamVector {
    pub slots: Vec<Slot>,
    pub x: Vec<f64>,
}

impl ParamVector {
    pub fn from_table(table: &ParamTable, active: &[ParamKey], n_springs: usize) -> Result<Self> {
        let slots = table.layout(active, n_springs);
        let values = table.flatten(active, n_springs)?;
        let x = slots
            .iter()
            .zip(&values)
            .map(|(s, &v)| s.spec.unproject(v))
            .collect::<Result<Vec<_>>>()?;
        Ok(ParamVector { slots, x })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Materialized constrained values, strictly inside bounds.
    pub fn values(&self) -> Vec<f64> {
        self.slots.iter().zip(&self.x).map(|(s, &x)| s.spec.project(x)).collect()
    }

    /// Chain a gradient w.r.t. constrained values into unconstrained space.
    pub fn chain_grad(&self, grad_values: &[f64]) -> Vec<f64> {
        self.slots
            .iter()
            .zip(&self.x)
            .zip(grad_values)
            .map(|((s, &x), &g)| g * s.spec.project_grad(x))
            .collect()
    }
}

/// Generic sigmoid projection used by both `f64` and taped paths when the
/// unconstrained coordinate itself must stay differentiable.
pub fn project_value<T: Real>(x: T, lb: f64, ub: f64) -> T {
    let s = (-x).exp() + 1.0;
    s.recip() * (ub - lb) + lb
}
