//! Deterministic fixed-step closed-loop simulation with scripted events,
//! metric extraction and CSV export.

mod engine;
mod metrics;
mod scenario;
mod timeseries;

pub use engine::{
    apply_event, run_scenario, DivergenceReason, DivergenceReport, SimError, SimOutput, SimState,
};
pub use metrics::{compute_metrics, Metrics, MetricsRow};
pub use scenario::{EventKind, Scenario, ScenarioEvent, SimConfig};
pub use timeseries::{sig9, TimeSeries};
