use nalgebra::Vector3;

use super::ControllerConfig;

/// Runtime state of the adaptive augmentation: predicted canonical state,
/// parameter estimate, filter state, and the adaptation switch.
#[derive(Debug, Clone, PartialEq)]
pub struct L1ControllerState {
    pub z_hat: Vector3<f64>,
    pub theta_hat: Vector3<f64>,
    pub u_filt: f64,
    filt_prev_input: f64,
    filt_has_prev: bool,
    pub adaptation_enabled: bool,
}

impl Default for L1ControllerState {
    fn default() -> Self {
        Self {
            z_hat: Vector3::zeros(),
            theta_hat: Vector3::zeros(),
            u_filt: 0.0,
            filt_prev_input: 0.0,
            filt_has_prev: false,
            adaptation_enabled: true,
        }
    }
}

/// Projection of a raw adaptive update onto the 1-norm ball of radius
/// `theta_max`, with a smooth boundary layer occupying the outer `boundary`
/// fraction of the radius: outward components are scaled away linearly
/// across the layer and fully cancelled on the boundary itself.
pub fn project_update(theta: &[f64], raw: &[f64], theta_max: f64, boundary: f64, out: &mut [f64]) {
    debug_assert_eq!(theta.len(), raw.len());
    debug_assert_eq!(theta.len(), out.len());
    out.copy_from_slice(raw);
    if theta_max <= 0.0 {
        out.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    let norm1: f64 = theta.iter().map(|v| v.abs()).sum();
    let layer_start = (1.0 - boundary) * theta_max;
    if norm1 <= layer_start {
        return;
    }
    // Subgradient of the 1-norm; zero components do not push outward.
    let g: Vec<f64> = theta.iter().map(|v| v.signum() * ((*v != 0.0) as i32 as f64)).collect();
    let outward: f64 = g.iter().zip(raw).map(|(gi, ri)| gi * ri).sum();
    if outward <= 0.0 {
        return;
    }
    let g_sq: f64 = g.iter().map(|v| v * v).sum();
    if g_sq == 0.0 {
        return;
    }
    let f = ((norm1 - layer_start) / (boundary * theta_max)).clamp(0.0, 1.0);
    for (o, gi) in out.iter_mut().zip(&g) {
        *o -= f * gi * outward / g_sq;
    }
}

/// One adaptive-law sample: the prediction error scaled through the
/// Lyapunov matrix drives the estimate along the measured state direction,
/// projected onto the 1-norm bound and rate limited per component. No-op
/// while adaptation is switched off.
pub fn adaptive_step(s: &mut L1ControllerState, z_meas: Vector3<f64>, dt: f64, cfg: &ControllerConfig) {
    if !s.adaptation_enabled {
        return;
    }
    let z_tilde = z_meas - s.z_hat;
    let p_b = cfg.p_lyap * cfg.predictor.b_cc;
    let drive = z_tilde.dot(&p_b);
    let raw = z_meas * (cfg.gamma * drive);
    let mut projected = [0.0f64; 3];
    project_update(
        s.theta_hat.as_slice(),
        raw.as_slice(),
        cfg.theta_max,
        0.1,
        &mut projected,
    );
    for v in projected.iter_mut() {
        *v = v.clamp(-cfg.rate_limit, cfg.rate_limit);
    }
    s.theta_hat += Vector3::from_column_slice(&projected) * dt;
    // Discrete backstop: a finite Euler step may overshoot the ball the
    // continuous projection never leaves.
    let norm1: f64 = s.theta_hat.iter().map(|v| v.abs()).sum();
    if norm1 > cfg.theta_max && norm1 > 0.0 {
        s.theta_hat *= cfg.theta_max / norm1;
    }
}

/// One filter sample: the adaptive channel `-theta_hat' z` passed through
/// the first-order low-pass, discretised exactly with the input held
/// piecewise linear between samples.
pub fn l1_control(s: &mut L1ControllerState, z_meas: Vector3<f64>, dt: f64, cfg: &ControllerConfig) -> f64 {
    let w = -s.theta_hat.dot(&z_meas);
    let a = cfg.omega_c;
    let e = (-a * dt).exp();
    if s.filt_has_prev {
        let c1 = 1.0 - (1.0 - e) / (a * dt);
        let c0 = (1.0 - e) * (1.0 + 1.0 / (a * dt)) - 1.0;
        s.u_filt = e * s.u_filt + c0 * s.filt_prev_input + c1 * w;
    } else {
        s.u_filt = e * s.u_filt + (1.0 - e) * w;
    }
    s.filt_prev_input = w;
    s.filt_has_prev = true;
    s.u_filt
}

/// Advances the state predictor over one controller sample with the filtered
/// control and the estimate term held constant: classic fourth-order
/// Runge-Kutta, internally substepped so fast desired dynamics stay
/// resolved.
pub fn predictor_step(
    s: &mut L1ControllerState,
    z_meas: Vector3<f64>,
    u_l1: f64,
    dt: f64,
    cfg: &ControllerConfig,
) {
    let a = &cfg.predictor.a_m_cc;
    let b = &cfg.predictor.b_cc;
    let input = u_l1 + s.theta_hat.dot(&z_meas);
    let f = |z: &Vector3<f64>| a * z + b * input;
    let n = cfg.predictor_substeps.max(1);
    let h = dt / n as f64;
    let mut z = s.z_hat;
    for _ in 0..n {
        let k1 = f(&z);
        let k2 = f(&(z + k1 * (h / 2.0)));
        let k3 = f(&(z + k2 * (h / 2.0)));
        let k4 = f(&(z + k3 * h));
        z += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    s.z_hat = z;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthesis::{companion, solve_lyapunov, GainVector, PredictorDesign};
    use nalgebra::{DMatrix, Matrix2, Matrix3, RowVector3, Vector2};

    fn test_config(a_cc: Matrix3<f64>, gamma: f64, theta_max: f64) -> ControllerConfig {
        let a_d = DMatrix::from_fn(3, 3, |i, j| a_cc[(i, j)]);
        let p = solve_lyapunov(&a_d, &DMatrix::identity(3, 3)).unwrap();
        ControllerConfig {
            sample_period: 4e-5,
            gains: GainVector {
                k_i: 0.0,
                k_v: 0.0,
                k_xi: 0.0,
            },
            predictor: PredictorDesign {
                a_m: a_cc,
                a_m_cc: a_cc,
                b_cc: Vector3::new(0.0, 0.0, 1.0),
                c_cc: RowVector3::new(1.0, 0.0, 0.0),
                t: Matrix3::identity(),
                t_inv: Matrix3::identity(),
                e: [0.0; 3],
                f: [0.0; 3],
                ctrb_condition: 1.0,
            },
            p_lyap: Matrix3::from_fn(|i, j| p[(i, j)]),
            gamma,
            omega_c: 500.0,
            theta_max,
            rate_limit: 1e9,
            duty_min: 0.0,
            duty_max: 0.8,
            predictor_substeps: 1,
        }
    }

    fn slow_companion() -> Matrix3<f64> {
        // Eigenvalues around -40..-120 rad/s, slow enough for single-step
        // fourth-order integration at the controller rate.
        companion(&[-(-50.0f64 * -80.0 * -120.0), 50.0 * 80.0 + 50.0 * 120.0 + 80.0 * 120.0, 250.0])
    }

    #[test]
    fn predictor_rest_stays_at_rest() {
        let cfg = test_config(slow_companion(), 0.0, 1.0);
        let mut s = L1ControllerState::default();
        predictor_step(&mut s, Vector3::zeros(), 0.0, 4e-5, &cfg);
        assert_eq!(s.z_hat, Vector3::zeros());
    }

    #[test]
    fn predictor_decays_without_input() {
        let cfg = test_config(slow_companion(), 0.0, 1.0);
        let mut s = L1ControllerState {
            z_hat: Vector3::new(1.0, 0.5, -0.2),
            ..Default::default()
        };
        let initial = s.z_hat.norm();
        for _ in 0..20_000 {
            predictor_step(&mut s, Vector3::zeros(), 0.0, 4e-5, &cfg);
        }
        assert!(s.z_hat.norm() < 1e-3 * initial);
    }

    /// One fourth-order step against the truncated Taylor series of the
    /// exact propagator, evaluated to machine precision.
    #[test]
    fn predictor_single_step_matches_matrix_exponential() {
        let cfg = test_config(slow_companion(), 0.0, 1.0);
        let dt = 4e-5;
        let a = cfg.predictor.a_m_cc;
        // Scaling-and-squaring matrix exponential with a long Taylor tail.
        let expm = |m: Matrix3<f64>| -> Matrix3<f64> {
            let s = (m.norm() / 0.05).log2().ceil().max(0.0) as u32;
            let small = m / 2f64.powi(s as i32);
            let mut term = Matrix3::identity();
            let mut sum = Matrix3::identity();
            for k in 1..25 {
                term = term * small / k as f64;
                sum += term;
            }
            let mut out = sum;
            for _ in 0..s {
                out *= out.clone();
            }
            out
        };
        let phi = expm(a * dt);
        let z0 = Vector3::new(0.3, -0.7, 0.9);
        let mut s = L1ControllerState {
            z_hat: z0,
            ..Default::default()
        };
        predictor_step(&mut s, Vector3::zeros(), 0.0, dt, &cfg);
        let exact = phi * z0;
        assert!(
            (s.z_hat - exact).norm() < 1e-10 * exact.norm().max(1.0),
            "one-step error {}",
            (s.z_hat - exact).norm()
        );
    }

    #[test]
    fn zero_error_freezes_estimate() {
        let cfg = test_config(slow_companion(), 1e4, 10.0);
        let mut s = L1ControllerState {
            z_hat: Vector3::new(0.2, 0.1, 0.0),
            theta_hat: Vector3::new(0.5, -0.5, 0.1),
            ..Default::default()
        };
        let before = s.theta_hat;
        // Measurement equals prediction: no drive.
        let z = s.z_hat;
        adaptive_step(&mut s, z, 4e-5, &cfg);
        assert_eq!(s.theta_hat, before);
    }

    #[test]
    fn adaptation_switch_gates_updates() {
        let cfg = test_config(slow_companion(), 1e4, 10.0);
        let mut s = L1ControllerState {
            adaptation_enabled: false,
            ..Default::default()
        };
        adaptive_step(&mut s, Vector3::new(1.0, 1.0, 1.0), 4e-5, &cfg);
        assert_eq!(s.theta_hat, Vector3::zeros());
    }

    #[test]
    fn projection_keeps_estimate_inside_bound() {
        let theta_max = 2.0;
        let cfg = test_config(slow_companion(), 1e9, theta_max);
        let mut s = L1ControllerState {
            // Start exactly on the bound.
            theta_hat: Vector3::new(1.0, -0.5, 0.5),
            ..Default::default()
        };
        for k in 0..1000 {
            let z = Vector3::new((k as f64).sin() + 1.2, 0.7, -0.9);
            adaptive_step(&mut s, z, 4e-5, &cfg);
            let n1: f64 = s.theta_hat.iter().map(|v| v.abs()).sum();
            assert!(n1 <= theta_max * (1.0 + 1e-12), "norm {n1} escaped");
        }
    }

    #[test]
    fn filter_step_response_time_constant() {
        let cfg = test_config(slow_companion(), 0.0, 1.0);
        let dt = 4e-5;
        let mut s = L1ControllerState {
            theta_hat: Vector3::new(-1.0, 0.0, 0.0),
            ..Default::default()
        };
        // Constant drive w = -theta' z = 1.
        let z = Vector3::new(1.0, 0.0, 0.0);
        let mut t = 0.0;
        let mut reached = None;
        while t < 5.0 / cfg.omega_c {
            let u = l1_control(&mut s, z, dt, &cfg);
            t += dt;
            if reached.is_none() && u >= 1.0 - (-1.0f64).exp() {
                reached = Some(t);
            }
        }
        let t63 = reached.expect("should cross 63.2 percent");
        assert!(
            (t63 - 1.0 / cfg.omega_c).abs() <= dt + 1e-12,
            "63.2 percent at {t63}, expected {}",
            1.0 / cfg.omega_c
        );
    }

    #[test]
    fn filter_attenuates_well_above_bandwidth() {
        let cfg = test_config(slow_companion(), 0.0, 1.0);
        let dt = 4e-5;
        let w_drive = 10.0 * cfg.omega_c;
        let mut s = L1ControllerState {
            theta_hat: Vector3::new(-1.0, 0.0, 0.0),
            ..Default::default()
        };
        let period = 2.0 * std::f64::consts::PI / w_drive;
        let n = (600.0 * period / dt) as usize;
        let mut peak = 0.0f64;
        for k in 0..n {
            let t = k as f64 * dt;
            let z = Vector3::new((w_drive * t).sin(), 0.0, 0.0);
            let u = l1_control(&mut s, z, dt, &cfg);
            if k > n / 2 {
                peak = peak.max(u.abs());
            }
        }
        let attenuation_db = -20.0 * peak.log10();
        assert!(
            attenuation_db >= 19.0,
            "attenuation {attenuation_db} dB at 10x bandwidth"
        );
    }

    /// Two-state identification rig: plant and predictor share the desired
    /// dynamics, a constant true parameter vector perturbs the plant, and a
    /// two-tone input keeps the regressor exciting.
    struct ToyRig {
        a: Matrix2<f64>,
        b: Vector2<f64>,
        p: Matrix2<f64>,
        theta_true: Vector2<f64>,
        gamma: f64,
        theta_max: f64,
    }

    impl ToyRig {
        fn new(gamma: f64) -> Self {
            let a = Matrix2::new(0.0, 1.0, -20.0, -4.0);
            let a_d = DMatrix::from_fn(2, 2, |i, j| a[(i, j)]);
            let p_d = solve_lyapunov(&a_d, &DMatrix::identity(2, 2)).unwrap();
            Self {
                a,
                b: Vector2::new(0.0, 1.0),
                p: Matrix2::from_fn(|i, j| p_d[(i, j)]),
                theta_true: Vector2::new(3.0, -1.5),
                gamma,
                theta_max: 4.0 * (3.0 + 1.5),
            }
        }

        fn rk4<F: Fn(&Vector2<f64>) -> Vector2<f64>>(x: &Vector2<f64>, f: F, h: f64) -> Vector2<f64> {
            let k1 = f(x);
            let k2 = f(&(x + k1 * (h / 2.0)));
            let k3 = f(&(x + k2 * (h / 2.0)));
            let k4 = f(&(x + k3 * h));
            x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
        }

        /// Runs the identification loop, returning the parameter estimate
        /// trace and the Lyapunov function trace.
        fn run(&self, horizon: f64, dt: f64) -> (Vector2<f64>, Vec<f64>) {
            let mut z = Vector2::new(0.0, 0.0);
            let mut z_hat = Vector2::new(0.4, -0.3);
            let mut theta_hat = Vector2::zeros();
            let mut lyap = Vec::new();
            let steps = (horizon / dt) as usize;
            for k in 0..steps {
                let t = k as f64 * dt;
                let u = 2.0 * (1.5 * t).sin() + (4.7 * t).sin();
                let z_tilde = z - z_hat;
                // Record V = z~' P z~ + theta~' theta~ / gamma.
                let theta_err = self.theta_true - theta_hat;
                lyap.push((z_tilde.transpose() * self.p * z_tilde)[0]
                    + theta_err.dot(&theta_err) / self.gamma);

                // Adaptive update with projection.
                let drive = z_tilde.dot(&(self.p * self.b));
                let raw = z * (self.gamma * drive);
                let mut proj = [0.0f64; 2];
                project_update(
                    theta_hat.as_slice(),
                    raw.as_slice(),
                    self.theta_max,
                    0.1,
                    &mut proj,
                );
                theta_hat += Vector2::from_column_slice(&proj) * dt;

                let theta_c = theta_hat;
                let z_c = z;
                z_hat = Self::rk4(
                    &z_hat,
                    |s| self.a * s + self.b * (u + theta_c.dot(&z_c)),
                    dt,
                );
                z = Self::rk4(
                    &z,
                    |s| self.a * s + self.b * (u + self.theta_true.dot(&s)),
                    dt,
                );
            }
            (theta_hat, lyap)
        }
    }

    #[test]
    fn toy_plant_parameters_converge_under_excitation() {
        let rig = ToyRig::new(2000.0);
        let (theta_hat, _) = rig.run(60.0, 2e-4);
        let err = (theta_hat - rig.theta_true).norm() / rig.theta_true.norm();
        assert!(err < 0.05, "parameter error {err}");
    }

    #[test]
    fn lyapunov_function_non_increasing_between_samples() {
        let rig = ToyRig::new(500.0);
        let (_, lyap) = rig.run(5.0, 1e-4);
        let v0 = lyap[0];
        for w in lyap.windows(2) {
            assert!(
                w[1] <= w[0] + 1e-6 * v0,
                "Lyapunov increase {} -> {}",
                w[0],
                w[1]
            );
        }
    }
}
