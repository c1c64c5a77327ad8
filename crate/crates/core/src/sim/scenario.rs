use crate::model::{DguId, LineMode, ModelVariant};

/// A scripted change applied to the running microgrid.
#[derive(Debug, Clone, PartialEq)]
pub enum EventKind {
    /// Connects the listed declared lines, bringing `dgu` into the grid.
    PlugIn {
        dgu: DguId,
        lines: Vec<(DguId, DguId)>,
    },
    /// Disconnects every line incident to `dgu`; the unit keeps feeding its
    /// local load.
    PlugOut { dgu: DguId },
    LoadStep { dgu: DguId, p_load: f64 },
    VrefStep { dgu: DguId, v_ref: f64 },
    AdaptationSwitch { dgu: DguId, on: bool },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioEvent {
    pub t: f64,
    pub kind: EventKind,
}

impl EventKind {
    pub fn dgu(&self) -> DguId {
        match self {
            EventKind::PlugIn { dgu, .. }
            | EventKind::PlugOut { dgu }
            | EventKind::LoadStep { dgu, .. }
            | EventKind::VrefStep { dgu, .. }
            | EventKind::AdaptationSwitch { dgu, .. } => *dgu,
        }
    }
}

/// One scripted experiment: an event list over a horizon, plus switches the
/// scenario forces on every controller.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub horizon: f64,
    /// Runs the adaptive augmentation when true; pure baseline otherwise.
    pub l1_enabled: bool,
    /// Replaces the configured duty ceiling, e.g. to demonstrate unclamped
    /// runaway.
    pub duty_max_override: Option<f64>,
    pub events: Vec<ScenarioEvent>,
}

/// Fixed-step simulation settings.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub dt_plant: f64,
    pub dt_ctrl: f64,
    pub line_mode: LineMode,
    pub model_variant: ModelVariant,
    /// Controller samples per recorded output row.
    pub output_decimation: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt_plant: 1e-6,
            dt_ctrl: 4e-5,
            line_mode: LineMode::Qsl,
            model_variant: ModelVariant::Ideal,
            output_decimation: 10,
        }
    }
}
