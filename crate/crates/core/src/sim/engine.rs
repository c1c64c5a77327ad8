use thiserror::Error;

use super::{compute_metrics, EventKind, Metrics, Scenario, SimConfig, TimeSeries};
use crate::controller::{ControllerConfig, DguController};
use crate::model::{
    network_equilibrium, nonlinear_derivative, DguId, LineMode, ModelError, PlantInput,
    StateLayout, Topology,
};
use crate::synthesis::GridSynthesis;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("controller period {dt_ctrl} s is not an integer multiple of the plant step {dt_plant} s")]
    NonIntegerStepRatio { dt_plant: f64, dt_ctrl: f64 },
    #[error("controller period {dt_ctrl} s exceeds the switching period of dgu {id}")]
    SamplePeriodTooSlow { id: DguId, dt_ctrl: f64 },
    #[error("event times must be non-decreasing (event {index} at {t} s)")]
    EventsOutOfOrder { index: usize, t: f64 },
    #[error("no synthesis result for dgu {0}")]
    MissingSynthesis(DguId),
    #[error("scenario event error at t = {t} s: {source}")]
    Event {
        t: f64,
        #[source]
        source: ModelError,
    },
}

/// Why a run was aborted.
#[derive(Debug, Clone, PartialEq)]
pub struct DivergenceReport {
    pub t: f64,
    pub dgu: DguId,
    pub v_dc: f64,
    pub reason: DivergenceReason,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DivergenceReason {
    NonFinite,
    OverVoltage,
    VoltageCollapse,
}

impl std::fmt::Display for DivergenceReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let what = match self.reason {
            DivergenceReason::NonFinite => "non-finite state",
            DivergenceReason::OverVoltage => "voltage beyond ten times its reference",
            DivergenceReason::VoltageCollapse => "output voltage collapsed to zero",
        };
        write!(
            f,
            "divergence at t = {:.6} s on dgu {}: {} (v_dc = {:.3} V)",
            self.t, self.dgu, what, self.v_dc
        )
    }
}

/// Result of a scenario run. A diverged run still carries the partial
/// series and whatever metrics windows completed.
#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub series: TimeSeries,
    pub metrics: Metrics,
    pub divergence: Option<DivergenceReport>,
}

/// Live simulation state bundled for event application.
#[derive(Debug, Clone)]
pub struct SimState {
    pub topology: Topology,
    pub layout: StateLayout,
    pub x: Vec<f64>,
    /// Runtime reference per DGU slot, volts.
    pub v_ref: Vec<f64>,
    /// Runtime load demand per DGU slot, watts.
    pub p_load: Vec<f64>,
}

impl SimState {
    fn dgu_slot(&self, id: DguId) -> Result<usize, ModelError> {
        self.layout.dgu_slot(id).ok_or(ModelError::NoSuchDgu(id))
    }
}

/// Applies one scripted event to the running state.
///
/// Plug events toggle declared lines; in dynamic-line mode the state vector
/// is rebuilt, initialising any newly connected line current at its
/// quasi-stationary value so connection does not inject an artificial
/// inrush. Load and reference steps touch only the target DGU and never
/// re-synthesise controller operating points.
pub fn apply_event(
    state: &mut SimState,
    controllers: &mut [DguController],
    kind: &EventKind,
) -> Result<(), ModelError> {
    match kind {
        EventKind::PlugIn { dgu, lines } => {
            state.topology.dgu(*dgu)?;
            for (a, b) in lines {
                state.topology.set_line_active(*a, *b, true)?;
            }
            rebuild_line_states(state);
        }
        EventKind::PlugOut { dgu } => {
            state.topology.unplug_dgu(*dgu)?;
            rebuild_line_states(state);
        }
        EventKind::LoadStep { dgu, p_load } => {
            let slot = state.dgu_slot(*dgu)?;
            state.p_load[slot] = *p_load;
            state.topology.dgu_mut(*dgu)?.p_load = *p_load;
        }
        EventKind::VrefStep { dgu, v_ref } => {
            let slot = state.dgu_slot(*dgu)?;
            state.v_ref[slot] = *v_ref;
            state.topology.dgu_mut(*dgu)?.v_ref = *v_ref;
            controllers[slot].v_ref = *v_ref;
        }
        EventKind::AdaptationSwitch { dgu, on } => {
            let slot = state.dgu_slot(*dgu)?;
            controllers[slot].set_adaptation(*on);
        }
    }
    Ok(())
}

/// Rebuilds the state layout after a topology change, carrying DGU states
/// over and initialising fresh line states at their quasi-stationary values.
fn rebuild_line_states(state: &mut SimState) {
    if state.layout.mode != LineMode::Dynamic {
        return;
    }
    let new_layout = StateLayout::new(&state.topology, LineMode::Dynamic);
    let mut x_new = vec![0.0; new_layout.len()];
    let n_dgu = 2 * new_layout.dgu_ids.len();
    x_new[..n_dgu].copy_from_slice(&state.x[..n_dgu]);
    for (k, line) in new_layout.lines.iter().enumerate() {
        let carried = state
            .layout
            .lines
            .iter()
            .position(|l| l.a == line.a && l.b == line.b)
            .map(|old_k| state.x[state.layout.line_index(old_k)]);
        x_new[new_layout.line_index(k)] = carried.unwrap_or_else(|| {
            let slot_a = new_layout.dgu_slot(line.a).expect("endpoint in layout");
            let slot_b = new_layout.dgu_slot(line.b).expect("endpoint in layout");
            let v_a = state.x[new_layout.v_dc_index(slot_a)];
            let v_b = state.x[new_layout.v_dc_index(slot_b)];
            (v_a - v_b) / line.r
        });
    }
    state.layout = new_layout;
    state.x = x_new;
}

fn validate(
    top: &Topology,
    scenario: &Scenario,
    cfg: &SimConfig,
) -> Result<usize, SimError> {
    let ratio = cfg.dt_ctrl / cfg.dt_plant;
    let ctrl_every = ratio.round() as usize;
    if ctrl_every == 0 || (ratio - ctrl_every as f64).abs() > 1e-9 * ratio {
        return Err(SimError::NonIntegerStepRatio {
            dt_plant: cfg.dt_plant,
            dt_ctrl: cfg.dt_ctrl,
        });
    }
    for p in top.dgus() {
        if cfg.dt_ctrl > 1.0 / p.f_s + 1e-12 {
            return Err(SimError::SamplePeriodTooSlow {
                id: p.id,
                dt_ctrl: cfg.dt_ctrl,
            });
        }
    }
    let mut prev = 0.0;
    for (index, ev) in scenario.events.iter().enumerate() {
        if ev.t < prev {
            return Err(SimError::EventsOutOfOrder { index, t: ev.t });
        }
        prev = ev.t;
        top.dgu(ev.kind.dgu()).map_err(|source| SimError::Event {
            t: ev.t,
            source,
        })?;
    }
    Ok(ctrl_every)
}

/// Runs one scripted scenario to completion (or divergence).
///
/// Fixed-step fourth-order integration of the plant at `dt_plant`,
/// controllers sampled with zero-order hold every `dt_ctrl`, events applied
/// exactly at their timestamps by splitting the affected plant step. The
/// run starts at the exact closed-loop equilibrium of the initial topology.
pub fn run_scenario(
    top: &Topology,
    grid: &GridSynthesis,
    scenario: &Scenario,
    cfg: &SimConfig,
) -> Result<SimOutput, SimError> {
    let ctrl_every = validate(top, scenario, cfg)?;

    // Controllers in DGU order, seeded at the initial equilibrium.
    let mut controllers: Vec<DguController> = Vec::with_capacity(top.dgu_count());
    for p in top.dgus() {
        let ds = grid
            .dgu(p.id)
            .ok_or(SimError::MissingSynthesis(p.id))?;
        let mut ctrl_cfg = ControllerConfig::from_synthesis(grid, p.id, cfg.dt_ctrl)
            .ok_or(SimError::MissingSynthesis(p.id))?;
        if let Some(dmax) = scenario.duty_max_override {
            ctrl_cfg.duty_max = dmax;
        }
        controllers.push(DguController::new(
            ctrl_cfg,
            ds.op,
            p.v_ref,
            scenario.l1_enabled,
        ));
    }

    let mut state = {
        let topology = top.clone();
        let layout = StateLayout::new(&topology, cfg.line_mode);
        let eq = network_equilibrium(&topology)?;
        let mut x = vec![0.0; layout.len()];
        for (slot, d) in eq.dgus.iter().enumerate() {
            x[layout.i_t_index(slot)] = d.i_t;
            x[layout.v_dc_index(slot)] = d.v;
            controllers[slot].seed_equilibrium(d.i_t, d.duty);
        }
        for (k, line) in layout.lines.iter().enumerate() {
            let current = eq
                .line_currents
                .iter()
                .find(|(l, _)| l.a == line.a && l.b == line.b)
                .map(|(_, i)| *i)
                .unwrap_or(0.0);
            x[layout.line_index(k)] = current;
        }
        let v_ref = topology.dgus().iter().map(|d| d.v_ref).collect();
        let p_load = topology.dgus().iter().map(|d| d.p_load).collect();
        SimState {
            topology,
            layout,
            x,
            v_ref,
            p_load,
        }
    };

    let dgu_ids: Vec<DguId> = state.layout.dgu_ids.clone();
    let line_keys: Vec<(DguId, DguId)> = state
        .topology
        .declared_lines()
        .map(|(l, _)| (l.a, l.b))
        .collect();
    let mut series = TimeSeries::new(dgu_ids, line_keys, state.v_ref.clone());

    let n_dgu = state.layout.dgu_ids.len();
    let mut duties = vec![0.0; n_dgu];
    let mut samples = vec![None; n_dgu];
    let total_steps = (scenario.horizon / cfg.dt_plant).round() as usize;
    let record_every = ctrl_every * cfg.output_decimation.max(1);
    let mut ev_idx = 0usize;
    let mut clamp_events = 0u64;
    let mut divergence = None;

    'time: for k in 0..=total_steps {
        let t_k = k as f64 * cfg.dt_plant;

        // Catch up on events due at or before this boundary.
        while ev_idx < scenario.events.len() && scenario.events[ev_idx].t <= t_k {
            let ev = &scenario.events[ev_idx];
            apply_event(&mut state, &mut controllers, &ev.kind)
                .map_err(|source| SimError::Event { t: ev.t, source })?;
            ev_idx += 1;
        }

        if k % ctrl_every == 0 {
            for (slot, ctrl) in controllers.iter_mut().enumerate() {
                let i_t = state.x[state.layout.i_t_index(slot)];
                let v = state.x[state.layout.v_dc_index(slot)];
                let sample = ctrl.step(i_t, v, cfg.dt_ctrl);
                duties[slot] = sample.duty;
                samples[slot] = Some(sample);
            }
        }

        if k % record_every == 0 || k == total_steps {
            record_row(&mut series, &state, t_k, &samples);
        }
        if k == total_steps {
            break;
        }

        // Integrate this plant step, splitting at any event strictly inside.
        let t_next = (k + 1) as f64 * cfg.dt_plant;
        let mut t_cur = t_k;
        while ev_idx < scenario.events.len() && scenario.events[ev_idx].t < t_next {
            let ev_t = scenario.events[ev_idx].t;
            if ev_t > t_cur {
                clamp_events += rk4_step(&mut state, &duties, ev_t - t_cur, cfg);
            }
            let ev = &scenario.events[ev_idx];
            apply_event(&mut state, &mut controllers, &ev.kind)
                .map_err(|source| SimError::Event { t: ev.t, source })?;
            ev_idx += 1;
            t_cur = ev_t;
        }
        clamp_events += rk4_step(&mut state, &duties, t_next - t_cur, cfg);

        if let Some(report) = check_divergence(&state, t_next) {
            record_row(&mut series, &state, t_next, &samples);
            divergence = Some(report);
            break 'time;
        }
    }

    series.clamp_events = clamp_events;
    let metrics = compute_metrics(&series, &scenario.events);
    Ok(SimOutput {
        series,
        metrics,
        divergence,
    })
}

/// Constant-power load currents at the given state, clamping the divisor
/// one volt to keep the model regular through deep transients. Returns the
/// number of clamped evaluations.
fn load_currents(state: &SimState, x: &[f64], out: &mut [f64]) -> u64 {
    let mut clamped = 0;
    for slot in 0..state.layout.dgu_ids.len() {
        let v = x[state.layout.v_dc_index(slot)];
        let v_eff = if v < 1.0 {
            clamped += 1;
            1.0
        } else {
            v
        };
        out[slot] = state.p_load[slot] / v_eff;
    }
    clamped
}

fn rk4_step(state: &mut SimState, duties: &[f64], h: f64, cfg: &SimConfig) -> u64 {
    if h <= 0.0 {
        return 0;
    }
    let n = state.layout.len();
    let mut clamped = 0;
    let stage = |x: &[f64], clamped: &mut u64| -> Vec<f64> {
        let mut loads = vec![0.0; state.layout.dgu_ids.len()];
        *clamped += load_currents(state, x, &mut loads);
        let mut dxdt = vec![0.0; n];
        nonlinear_derivative(
            &state.topology,
            &state.layout,
            cfg.model_variant,
            x,
            &PlantInput {
                duty: duties,
                load_current: &loads,
            },
            &mut dxdt,
        )
        .expect("validated inputs");
        dxdt
    };

    let x0 = state.x.clone();
    let k1 = stage(&x0, &mut clamped);
    let mut x1 = x0.clone();
    axpy(&mut x1, &k1, 0.5 * h);
    let k2 = stage(&x1, &mut clamped);
    let mut x2 = x0.clone();
    axpy(&mut x2, &k2, 0.5 * h);
    let k3 = stage(&x2, &mut clamped);
    let mut x3 = x0.clone();
    axpy(&mut x3, &k3, h);
    let k4 = stage(&x3, &mut clamped);
    for i in 0..n {
        state.x[i] = x0[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    clamped
}

fn axpy(y: &mut [f64], x: &[f64], a: f64) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn check_divergence(state: &SimState, t: f64) -> Option<DivergenceReport> {
    for (slot, id) in state.layout.dgu_ids.iter().enumerate() {
        let v = state.x[state.layout.v_dc_index(slot)];
        let i = state.x[state.layout.i_t_index(slot)];
        let reason = if !v.is_finite() || !i.is_finite() {
            Some(DivergenceReason::NonFinite)
        } else if v.abs() > 10.0 * state.v_ref[slot] {
            Some(DivergenceReason::OverVoltage)
        } else if v <= 0.0 {
            Some(DivergenceReason::VoltageCollapse)
        } else {
            None
        };
        if let Some(reason) = reason {
            return Some(DivergenceReport {
                t,
                dgu: *id,
                v_dc: v,
                reason,
            });
        }
    }
    None
}

fn record_row(
    series: &mut TimeSeries,
    state: &SimState,
    t: f64,
    samples: &[Option<crate::controller::ControlSample>],
) {
    series.t.push(t);
    for slot in 0..state.layout.dgu_ids.len() {
        series.v_dc[slot].push(state.x[state.layout.v_dc_index(slot)]);
        series.i_t[slot].push(state.x[state.layout.i_t_index(slot)]);
        let (duty, u_l1, theta) = samples[slot]
            .as_ref()
            .map(|s| {
                (
                    s.duty,
                    s.u_l1,
                    s.theta_hat.iter().map(|v| v.abs()).sum::<f64>(),
                )
            })
            .unwrap_or((0.0, 0.0, 0.0));
        series.duty[slot].push(duty);
        series.u_l1[slot].push(u_l1);
        series.theta[slot].push(theta);
    }
    for (l, key) in series.line_keys.clone().iter().enumerate() {
        let (line, active) = state
            .topology
            .line(key.0, key.1)
            .expect("declared line");
        let current = if !active {
            0.0
        } else {
            match state.layout.mode {
                LineMode::Qsl => {
                    let slot_a = state.layout.dgu_slot(line.a).unwrap();
                    let slot_b = state.layout.dgu_slot(line.b).unwrap();
                    let v_a = state.x[state.layout.v_dc_index(slot_a)];
                    let v_b = state.x[state.layout.v_dc_index(slot_b)];
                    (v_a - v_b) / line.r
                }
                LineMode::Dynamic => {
                    let k = state
                        .layout
                        .lines
                        .iter()
                        .position(|l| l.a == line.a && l.b == line.b)
                        .expect("active line in layout");
                    state.x[state.layout.line_index(k)]
                }
            }
        };
        series.line_current[l].push(current);
    }
}
