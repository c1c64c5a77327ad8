use crate::synthesis::GainVector;

/// State of the baseline controller: the tracking-error integral and the
/// previous error sample for the trapezoidal update.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BaselineState {
    pub xi: f64,
    prev_error: f64,
    has_prev: bool,
}

/// One baseline sample: advances the tracking-error integral by the
/// trapezoidal rule (frozen while the duty command is saturated, as
/// anti-windup) and returns the state-feedback duty deviation
/// `-(k_i di + k_v dv + k_xi xi)`.
pub fn baseline_step(
    s: &BaselineState,
    dev_i: f64,
    dev_v: f64,
    v_ref_dev: f64,
    dt: f64,
    gains: &GainVector,
    freeze_integrator: bool,
) -> (f64, BaselineState) {
    debug_assert!(dt > 0.0);
    let error = v_ref_dev - dev_v;
    let mut next = *s;
    if !freeze_integrator {
        let prev = if s.has_prev { s.prev_error } else { error };
        next.xi += 0.5 * dt * (prev + error);
    }
    next.prev_error = error;
    next.has_prev = true;
    let u = -(gains.k_i * dev_i + gains.k_v * dev_v + gains.k_xi * next.xi);
    (u, next)
}
