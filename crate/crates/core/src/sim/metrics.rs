use super::{ScenarioEvent, TimeSeries};
use crate::model::DguId;
use crate::sim::EventKind;

/// Step-response figures for one DGU voltage over one inter-event window.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub event_index: usize,
    pub event_time: f64,
    pub dgu: DguId,
    /// Seconds from the event until the signal stays inside the one-percent
    /// band around its window-final value; `None` when it never settles.
    pub settling_time: Option<f64>,
    /// Peak excursion beyond the final value, as a fraction of the step
    /// size when the window contains a commanded step, of the final value
    /// otherwise.
    pub overshoot: f64,
    /// Final tracking error against the active reference, volts.
    pub steady_state_error: f64,
    /// Max minus min over the window, volts.
    pub peak_swing: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Metrics {
    pub rows: Vec<MetricsRow>,
}

impl Metrics {
    pub fn row(&self, event_index: usize, dgu: DguId) -> Option<&MetricsRow> {
        self.rows
            .iter()
            .find(|r| r.event_index == event_index && r.dgu == dgu)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(
            "event  t_event_s  dgu  settling_s  overshoot_frac  ss_error_V  peak_swing_V\n",
        );
        for r in &self.rows {
            let settle = r
                .settling_time
                .map(|s| format!("{s:.6}"))
                .unwrap_or_else(|| "unsettled".to_string());
            out.push_str(&format!(
                "{:>5}  {:>9.4}  {:>3}  {:>10}  {:>14.6}  {:>10.4}  {:>12.4}\n",
                r.event_index, r.event_time, r.dgu, settle, r.overshoot, r.steady_state_error,
                r.peak_swing
            ));
        }
        out
    }
}

/// Window metrics for every (event, DGU) pair. Each window runs from the
/// event to the next event (or the end of the series); setting and
/// overshoot are measured on the DGU voltage channel.
pub fn compute_metrics(ts: &TimeSeries, events: &[ScenarioEvent]) -> Metrics {
    let mut rows = Vec::new();
    if ts.is_empty() {
        return Metrics { rows };
    }
    let t_end = *ts.t.last().unwrap();
    // Track the active reference through the reference steps.
    let mut v_ref = ts.initial_v_ref.clone();
    for (idx, ev) in events.iter().enumerate() {
        let window_start = ev.t;
        let window_end = events
            .get(idx + 1)
            .map(|nxt| nxt.t)
            .unwrap_or(t_end)
            .min(t_end);
        if window_start >= window_end {
            // Coincident events share a timestamp; nothing to measure.
            if let EventKind::VrefStep { dgu, v_ref: new } = &ev.kind {
                if let Some(slot) = ts.dgu_slot(*dgu) {
                    v_ref[slot] = *new;
                }
            }
            continue;
        }
        let lo = ts.t.partition_point(|&t| t < window_start - 1e-12);
        let hi = ts.t.partition_point(|&t| t <= window_end + 1e-12);
        if hi - lo < 2 {
            continue;
        }
        // The reference active inside this window includes this event's own
        // step.
        if let EventKind::VrefStep { dgu, v_ref: new } = &ev.kind {
            if let Some(slot) = ts.dgu_slot(*dgu) {
                v_ref[slot] = *new;
            }
        }
        for (slot, id) in ts.dgu_ids.iter().enumerate() {
            let y = &ts.v_dc[slot][lo..hi];
            let t = &ts.t[lo..hi];
            rows.push(window_metrics(
                idx,
                ev,
                *id,
                t,
                y,
                v_ref[slot],
                matches!(&ev.kind, EventKind::VrefStep { dgu, .. } if dgu == id),
            ));
        }
    }
    Metrics { rows }
}

fn window_metrics(
    event_index: usize,
    ev: &ScenarioEvent,
    dgu: DguId,
    t: &[f64],
    y: &[f64],
    v_ref: f64,
    own_ref_step: bool,
) -> MetricsRow {
    let final_value = *y.last().unwrap();
    let start_value = y[0];
    let band = 0.01 * final_value.abs();
    // Last sample outside the band determines the settling instant.
    let mut settled_from = 0usize;
    for (k, &v) in y.iter().enumerate() {
        if (v - final_value).abs() > band {
            settled_from = k + 1;
        }
    }
    let settling_time = if settled_from < y.len() {
        Some((t[settled_from] - ev.t).max(0.0))
    } else {
        None
    };

    let step = final_value - start_value;
    let denom = if own_ref_step || step.abs() > band.max(1e-12) {
        step.abs()
    } else {
        final_value.abs()
    };
    let overshoot = if step.abs() > band.max(1e-12) {
        let dir = step.signum();
        y.iter()
            .map(|v| dir * (v - final_value))
            .fold(0.0f64, f64::max)
            / denom.max(1e-12)
    } else {
        y.iter()
            .map(|v| (v - final_value).abs())
            .fold(0.0f64, f64::max)
            / denom.max(1e-12)
    };

    let peak_swing = y.iter().cloned().fold(f64::MIN, f64::max)
        - y.iter().cloned().fold(f64::MAX, f64::min);
    MetricsRow {
        event_index,
        event_time: ev.t,
        dgu,
        settling_time,
        overshoot,
        steady_state_error: (final_value - v_ref).abs(),
        peak_swing,
    }
}
