use super::{DguParams, ModelError};

/// Steady-state operating point of one boost converter: duty cycle, output
/// voltage and inductor current about which the small-signal models are
/// linearised.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingPoint {
    pub duty: f64,
    pub v_dc: f64,
    pub i_t: f64,
}

/// Nominal operating point of a DGU regulating its output at `v_ref` while
/// feeding its local load.
///
/// The boost voltage gain gives `D = 1 - V_in/V_ref`, and with the load
/// expressed as the equivalent resistance `R_L = V_ref^2 / P_load` the
/// inductor current is `V_in / ((1 - D)^2 R_L)`, i.e. the load power drawn
/// from the source side.
pub fn compute_operating_point(p: &DguParams) -> Result<OperatingPoint, ModelError> {
    if p.v_ref <= p.v_in {
        return Err(ModelError::ReferenceBelowInput {
            id: p.id,
            v_ref: p.v_ref,
            v_in: p.v_in,
        });
    }
    if !(p.p_load > 0.0) {
        return Err(ModelError::NonPositiveParameter {
            id: p.id,
            field: "p_load",
            value: p.p_load,
        });
    }
    let duty = 1.0 - p.v_in / p.v_ref;
    let r_l = p.nominal_load_resistance();
    let one_minus_d = 1.0 - duty;
    let i_t = p.v_in / (one_minus_d * one_minus_d * r_l);
    Ok(OperatingPoint {
        duty,
        v_dc: p.v_ref,
        i_t,
    })
}

/// Line current seen from DGU `i` under the quasi-stationary approximation:
/// the inductance is neglected and the current is algebraic in the terminal
/// voltages, `(v_j - v_i) / R_ij`. Positive current flows into node `i`.
pub fn qsl_line_current(v_i: f64, v_j: f64, r_ij: f64) -> f64 {
    debug_assert!(r_ij > 0.0);
    (v_j - v_i) / r_ij
}
