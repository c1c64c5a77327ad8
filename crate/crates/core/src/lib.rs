//! Simulation and control synthesis for DC islanded microgrids built from
//! DC-DC boost-converter distributed generation units (DGUs).
//!
//! The crate covers the full offline-to-runtime chain:
//!
//! * [`model`] — operating points, nonlinear averaged converter dynamics,
//!   small-signal state-space models (quasi-stationary or dynamic lines,
//!   with or without capacitor ESR) and assembly of the global
//!   interconnected model for an arbitrary line topology.
//! * [`synthesis`] — baseline gain synthesis (LQI or pole placement),
//!   Lyapunov solves, the control-canonical predictor design, matched
//!   uncertainty bounds and the low-pass-filter bandwidth condition.
//! * [`controller`] — the per-DGU runtime control laws: static
//!   state-feedback baseline with integral action, type III compensator,
//!   and the adaptive augmentation (state predictor, projection-bounded
//!   adaptive law, filtered control channel).
//! * [`sim`] — deterministic fixed-step closed-loop simulation with
//!   scripted plug-in/out, load-step and reference-step events, plus
//!   settling/overshoot metric extraction and CSV export.
//! * [`stability`] — offline eigenvalue and Lyapunov-decomposition checks
//!   of the assembled global closed loop.
//! * [`presets`] — the bundled six-DGU reference grid and scenario scripts.

pub mod controller;
pub mod model;
pub mod presets;
pub mod sim;
pub mod stability;
pub mod synthesis;

pub use model::{
    AugmentedModel, DguId, DguParams, GlobalModel, GlobalVariant, LineParams, ModelError,
    OperatingPoint, SmallSignalModel, Topology,
};
pub use synthesis::{
    FilterDesign, GainVector, PredictorDesign, SynthesisError, ThetaPolytope, UncertaintyBound,
};
