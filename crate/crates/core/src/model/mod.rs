//! Electrical models of the microgrid: per-DGU parameters and topology,
//! operating points, small-signal state-space models and their augmented
//! (integral-action) and ESR variants, the assembled global model, and the
//! nonlinear averaged dynamics used by the simulator.

mod global;
mod nonlinear;
mod operating_point;
mod params;
mod small_signal;

pub use global::{assemble_global, assemble_global_dynamic, GlobalModel, GlobalVariant};
pub use nonlinear::{
    network_equilibrium, nonlinear_derivative, DguEquilibrium, Equilibrium, LineMode, ModelVariant,
    PlantInput, StateLayout,
};
pub use operating_point::{compute_operating_point, qsl_line_current, OperatingPoint};
pub use params::{DguId, DguParams, LineParams, Topology};
pub use small_signal::{
    build_augmented, build_esr_small_signal, build_small_signal, build_small_signal_decoupled,
    AugmentedModel, NeighborLine, SmallSignalModel,
};

use thiserror::Error;

/// Errors raised while validating parameters or assembling models.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("dgu {id}: {field} must be positive, got {value}")]
    NonPositiveParameter {
        id: DguId,
        field: &'static str,
        value: f64,
    },
    #[error("dgu {id}: reference voltage {v_ref} V must exceed input voltage {v_in} V for boost operation")]
    ReferenceBelowInput { id: DguId, v_ref: f64, v_in: f64 },
    #[error("dgu {id}: load demand {p_load} W exceeds rated power {p_rated} W")]
    LoadExceedsRating { id: DguId, p_load: f64, p_rated: f64 },
    #[error("line {a}-{b}: {field} must be positive, got {value}")]
    NonPositiveLineParameter {
        a: DguId,
        b: DguId,
        field: &'static str,
        value: f64,
    },
    #[error("line endpoints must be distinct, got {0}-{0}")]
    SelfLoop(DguId),
    #[error("line {a}-{b} references unknown DGU id {unknown}")]
    UnknownDgu { a: DguId, b: DguId, unknown: DguId },
    #[error("duplicate DGU id {0}")]
    DuplicateDgu(DguId),
    #[error("duplicate line {a}-{b}")]
    DuplicateLine { a: DguId, b: DguId },
    #[error("no line {a}-{b} declared in the topology")]
    NoSuchLine { a: DguId, b: DguId },
    #[error("line {a}-{b} is already {}", if *.active { "connected" } else { "disconnected" })]
    LineAlreadyInState { a: DguId, b: DguId, active: bool },
    #[error("unknown DGU id {0}")]
    NoSuchDgu(DguId),
    #[error("duty cycle {0} outside [0, 1)")]
    DutyOutOfRange(f64),
    #[error("dgu {id}: no feasible operating point, source cannot supply {demand} W through its series resistance")]
    InfeasibleEquilibrium { id: DguId, demand: f64 },
    #[error("state vector length {got} does not match layout length {expected}")]
    StateLengthMismatch { got: usize, expected: usize },
}
