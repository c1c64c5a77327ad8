//! Runtime control laws executed per DGU at the controller sample rate.
//!
//! Each DGU owns one controller instance that reads only its local
//! measurements; no API exposes neighbour state, which is what makes the
//! architecture decentralised. The composite command is the stored
//! operating-point duty plus the baseline and adaptive contributions,
//! clamped to the configured duty range.

mod baseline;
mod l1;
mod type3;

pub use baseline::{baseline_step, BaselineState};
pub use l1::{
    adaptive_step, l1_control, predictor_step, project_update, L1ControllerState,
};
pub use type3::{type3_step, Type3State};

use nalgebra::{Matrix3, Vector3};

use crate::model::OperatingPoint;
use crate::synthesis::{GainVector, GridSynthesis, PredictorDesign};

/// Everything a runtime controller instance needs, produced by synthesis.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerConfig {
    pub sample_period: f64,
    pub gains: GainVector,
    pub predictor: PredictorDesign,
    /// Lyapunov matrix of the companion desired dynamics.
    pub p_lyap: Matrix3<f64>,
    /// Adaptive gain.
    pub gamma: f64,
    /// Filter bandwidth of the adaptive channel, rad/s.
    pub omega_c: f64,
    /// Projection bound on the parameter estimate 1-norm.
    pub theta_max: f64,
    /// Per-component bound on the estimate rate, units/s.
    pub rate_limit: f64,
    pub duty_min: f64,
    pub duty_max: f64,
    /// Internal predictor integration substeps per controller sample, chosen
    /// so the fastest desired mode stays well resolved.
    pub predictor_substeps: usize,
}

impl ControllerConfig {
    /// Assembles the runtime configuration for one DGU from the grid
    /// synthesis output. Returns `None` when the DGU was not synthesised.
    pub fn from_synthesis(
        grid: &GridSynthesis,
        id: crate::model::DguId,
        sample_period: f64,
    ) -> Option<Self> {
        let dgu = grid.dgu(id)?;
        let pd = grid.predictor.clone();
        // Resolve the fastest companion mode to about a tenth of a radian
        // per substep so the fixed-step predictor integration stays accurate.
        let rho = nalgebra::DMatrix::from_fn(3, 3, |i, j| pd.a_m_cc[(i, j)])
            .complex_eigenvalues()
            .iter()
            .map(|e| e.norm())
            .fold(0.0f64, f64::max);
        let substeps = ((rho * sample_period / 0.1).ceil() as usize).max(1);
        Some(Self {
            sample_period,
            gains: dgu.gains,
            predictor: pd,
            p_lyap: grid.p_lyap,
            gamma: grid.options.gamma,
            omega_c: grid.filter.selected.omega_c,
            theta_max: grid.uncertainty.theta_max_canonical,
            rate_limit: grid.options.rate_limit,
            duty_min: grid.options.duty_min,
            duty_max: grid.options.duty_max,
            predictor_substeps: substeps,
        })
    }
}

/// A duty command plus the telemetry the simulator streams per sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlSample {
    pub duty: f64,
    pub saturated: bool,
    pub u_baseline: f64,
    pub u_l1: f64,
    pub z_tilde: Vector3<f64>,
    pub theta_hat: Vector3<f64>,
}

/// Clamps the composite command `D + u_bl + u_l1` to the duty range and
/// reports saturation so the baseline integrator can freeze next sample.
pub fn composite_control(
    duty_op: f64,
    u_baseline: f64,
    u_l1: f64,
    duty_min: f64,
    duty_max: f64,
) -> (f64, bool) {
    let raw = duty_op + u_baseline + u_l1;
    let clamped = raw.clamp(duty_min, duty_max);
    (clamped, clamped != raw)
}

/// Runtime controller of one DGU: baseline state feedback with integral
/// action plus the adaptive augmentation.
#[derive(Debug, Clone, PartialEq)]
pub struct DguController {
    pub cfg: ControllerConfig,
    pub op: OperatingPoint,
    /// Reference the loop is currently tracking (absolute volts). Reference
    /// steps change this value; the stored operating point stays fixed.
    pub v_ref: f64,
    pub baseline: BaselineState,
    pub l1: L1ControllerState,
    pub l1_enabled: bool,
    saturated_last: bool,
    initialized: bool,
}

impl DguController {
    pub fn new(cfg: ControllerConfig, op: OperatingPoint, v_ref: f64, l1_enabled: bool) -> Self {
        Self {
            cfg,
            op,
            v_ref,
            baseline: BaselineState::default(),
            l1: L1ControllerState::default(),
            l1_enabled,
            saturated_last: false,
            initialized: false,
        }
    }

    /// Presets the integral state so the loop starts at an equilibrium duty
    /// without a transient.
    pub fn seed_equilibrium(&mut self, i_t: f64, duty: f64) {
        let g = &self.cfg.gains;
        if g.k_xi != 0.0 {
            let dev_i = i_t - self.op.i_t;
            self.baseline.xi = -((duty - self.op.duty) + g.k_i * dev_i) / g.k_xi;
        }
    }

    pub fn set_adaptation(&mut self, on: bool) {
        self.l1.adaptation_enabled = on;
    }

    /// One controller sample: integrates the tracking error, updates the
    /// adaptive loop, and produces the clamped duty command.
    pub fn step(&mut self, i_t_meas: f64, v_dc_meas: f64, dt: f64) -> ControlSample {
        let dev_i = i_t_meas - self.op.i_t;
        let dev_v = v_dc_meas - self.op.v_dc;
        let v_ref_dev = self.v_ref - self.op.v_dc;

        let (u_bl, xi) = baseline_step(
            &self.baseline,
            dev_i,
            dev_v,
            v_ref_dev,
            dt,
            &self.cfg.gains,
            self.saturated_last,
        );
        self.baseline = xi;

        let x_bar = Vector3::new(dev_i, dev_v, self.baseline.xi);
        let z_meas = self.cfg.predictor.t * x_bar;
        if !self.initialized {
            // Zero-knowledge start: the predictor state snaps to the first
            // measurement, the parameter estimate starts at zero.
            self.l1.z_hat = z_meas;
            self.initialized = true;
        }

        let (u_l1, z_tilde) = if self.l1_enabled {
            let z_tilde = z_meas - self.l1.z_hat;
            adaptive_step(&mut self.l1, z_meas, dt, &self.cfg);
            let u_l1 = l1_control(&mut self.l1, z_meas, dt, &self.cfg);
            predictor_step(&mut self.l1, z_meas, u_l1, dt, &self.cfg);
            (u_l1, z_tilde)
        } else {
            (0.0, Vector3::zeros())
        };

        let (duty, saturated) = composite_control(
            self.op.duty,
            u_bl,
            u_l1,
            self.cfg.duty_min,
            self.cfg.duty_max,
        );
        self.saturated_last = saturated;
        ControlSample {
            duty,
            saturated,
            u_baseline: u_bl,
            u_l1,
            z_tilde,
            theta_hat: self.l1.theta_hat,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn composite_passes_through_and_clamps() {
        assert_eq!(composite_control(0.75, 0.0, 0.0, 0.0, 0.8), (0.75, false));
        let (d, sat) = composite_control(0.75, 0.04, 0.02, 0.0, 0.8);
        assert_eq!(d, 0.8);
        assert!(sat);
        let (d, sat) = composite_control(0.1, -0.2, 0.0, 0.0, 0.8);
        assert_eq!(d, 0.0);
        assert!(sat);
    }
}
