use alloc::string::String;
use core::fmt;

/// Errors raised by mesh construction, preprocessing, simulation and the
/// gradient machinery.
#[derive(Debug, Clone, PartialEq)]
pub enum SimError {
    /// A tetrahedron has non-positive signed volume in its rest state.
    DegenerateTet { element: usize, volume: f64 },
    /// A vertex or tet index is out of range.
    IndexOutOfRange { element: usize, index: usize, len: usize },
    /// An edge of the given element lies inside the cutting surface, so the
    /// intersection parameter is undefined.
    DegenerateCut { element: usize },
    /// An element inverted (det F <= 0) during simulation.
    InvertedElement { element: usize, step: usize },
    /// A non-finite value appeared in the state.
    NonFinite { step: usize },
    /// The tape hit its record budget while recording a rollout.
    TapeBudget { steps_recorded: usize },
    /// Two trajectories that must share a time grid do not.
    TrajectoryMismatch { expected: usize, got: usize },
    /// A value lies outside the open interval required by the operation.
    OutOfBounds { name: String, value: f64, lb: f64, ub: f64 },
    /// Parameter vector has the wrong length for individual mode.
    LengthMismatch { name: String, expected: usize, got: usize },
    /// Invalid configuration value.
    Config(String),
    /// Loss became NaN during optimization.
    NanLoss { iteration: usize },
    /// Objective grew by more than 10x over its initial value.
    Diverged { iteration: usize, value: f64 },
    /// Mesh file is malformed (line number and message).
    Parse { line: usize, message: String },
}

impl fmt::Display for SimError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SimError::DegenerateTet { element, volume } => {
                write!(f, "tet {element} has non-positive rest volume {volume:e}")
            }
            SimError::IndexOutOfRange { element, index, len } => {
                write!(f, "tet {element} references vertex {index} but mesh has {len} vertices")
            }
            SimError::DegenerateCut { element } => {
                write!(f, "an edge of element {element} lies inside the cutting surface")
            }
            SimError::InvertedElement { element, step } => {
                write!(f, "element {element} inverted at step {step}")
            }
            SimError::NonFinite { step } => write!(f, "non-finite state at step {step}"),
            SimError::TapeBudget { steps_recorded } => {
                write!(f, "tape record budget exceeded after {steps_recorded} steps")
            }
            SimError::TrajectoryMismatch { expected, got } => {
                write!(f, "trajectory length mismatch: expected {expected}, got {got}")
            }
            SimError::OutOfBounds { name, value, lb, ub } => {
                write!(f, "{name} = {value} outside ({lb}, {ub})")
            }
            SimError::LengthMismatch { name, expected, got } => {
                write!(f, "{name}: expected {expected} values, got {got}")
            }
            SimError::Config(msg) => write!(f, "config error: {msg}"),
            SimError::NanLoss { iteration } => write!(f, "loss is NaN at iteration {iteration}"),
            SimError::Diverged { iteration, value } => {
                write!(f, "objective diverged at iteration {iteration} (value {value:e})")
            }
            SimError::Parse { line, message } => write!(f, "line {line}: {message}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for SimError {}

pub type Result<T> = core::result::Result<T, SimError>;
