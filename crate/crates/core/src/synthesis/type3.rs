use nalgebra::Complex;

use crate::model::{DguParams, OperatingPoint};

/// Continuous-time type III compensator `k_c/s * (s + w_z)^2 / (s + w_p)^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Type3Design {
    pub k_c: f64,
    pub omega_z: f64,
    pub omega_p: f64,
}

/// Duty-to-output transfer function of the decoupled converter on its
/// nominal resistive load, evaluated at `s`:
/// `(-I/C)(s - w_rhp) / (s^2 + a1 s + a0)` with the right-half-plane zero
/// at `((1-D)^2 R_L - R_t)/L`.
pub fn duty_to_voltage(p: &DguParams, op: &OperatingPoint, s: Complex<f64>) -> Complex<f64> {
    let r_l = p.nominal_load_resistance();
    let omd = 1.0 - op.duty;
    let omega_rhp = (omd * omd * r_l - p.r_t) / p.l_t;
    let gain = -op.i_t / p.c_t;
    let a1 = p.r_t / p.l_t + 1.0 / (r_l * p.c_t);
    let a0 = (omd * omd + p.r_t / r_l) / (p.l_t * p.c_t);
    (s - Complex::new(omega_rhp, 0.0)).scale(gain)
        / (s * s + s.scale(a1) + Complex::new(a0, 0.0))
}

impl Type3Design {
    pub fn eval(&self, s: Complex<f64>) -> Complex<f64> {
        let z = s + Complex::new(self.omega_z, 0.0);
        let p = s + Complex::new(self.omega_p, 0.0);
        (z * z).scale(self.k_c) / (s * p * p)
    }
}

/// Tunes a type III compensator for one DGU: both zeros at the converter
/// resonance, both poles a decade above, and the gain normalised to unit
/// loop magnitude where the loop phase crosses -120 degrees, leaving a 60
/// degree phase margin.
pub fn tune_type3(p: &DguParams, op: &OperatingPoint) -> Type3Design {
    let r_l = p.nominal_load_resistance();
    let omd = 1.0 - op.duty;
    let omega_res = (omd * omd / (p.l_t * p.c_t) + p.r_t / (r_l * p.l_t * p.c_t)).sqrt();
    let design = Type3Design {
        k_c: 1.0,
        omega_z: omega_res,
        omega_p: 10.0 * omega_res,
    };
    // Loop phase is gain independent; find the frequency closest to the
    // -120 degree crossing over four decades around the resonance.
    let mut crossover = omega_res * 0.1;
    let mut best_err = f64::INFINITY;
    let n = 400;
    for k in 0..=n {
        let w = omega_res * 0.01 * 10f64.powf(4.0 * k as f64 / n as f64);
        let s = Complex::new(0.0, w);
        let loop_tf = design.eval(s) * duty_to_voltage(p, op, s);
        let phase = loop_tf.arg().to_degrees();
        let err = (phase - (-120.0)).abs();
        if err < best_err {
            best_err = err;
            crossover = w;
        }
    }
    let s = Complex::new(0.0, crossover);
    let mag = (design.eval(s) * duty_to_voltage(p, op, s)).norm();
    Type3Design {
        k_c: 1.0 / mag,
        ..design
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::compute_operating_point;
    use crate::presets::reference_grid_dgus;

    #[test]
    fn zeros_at_resonance_poles_a_decade_up() {
        let p = &reference_grid_dgus()[0];
        let op = compute_operating_point(p).unwrap();
        let d = tune_type3(p, &op);
        assert!((d.omega_p / d.omega_z - 10.0).abs() < 1e-9);
        assert!(d.omega_z > 0.0 && d.k_c.is_finite() && d.k_c > 0.0);
    }

    #[test]
    fn converter_has_rhp_zero_and_positive_dc_gain() {
        let p = &reference_grid_dgus()[0];
        let op = compute_operating_point(p).unwrap();
        let r_l = p.nominal_load_resistance();
        let omega_rhp = ((1.0 - op.duty) * (1.0 - op.duty) * r_l - p.r_t) / p.l_t;
        assert!(omega_rhp > 0.0);
        let at_zero = duty_to_voltage(p, &op, Complex::new(omega_rhp, 0.0));
        assert!(at_zero.norm() < 1e-9);
        let dc = duty_to_voltage(p, &op, Complex::new(0.0, 0.0));
        assert!(dc.re > 0.0 && dc.im == 0.0);
    }
}
