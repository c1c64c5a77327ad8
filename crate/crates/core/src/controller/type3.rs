use crate::synthesis::Type3Design;

/// Discrete type III compensator: the bilinear transform of
/// `k_c/s * (s + w_z)^2 / (s + w_p)^2`, prewarped at the zero frequency,
/// realised in transposed direct form II with three states.
#[derive(Debug, Clone, PartialEq)]
pub struct Type3State {
    /// Numerator coefficients b0..b3 of the discrete transfer function.
    b: [f64; 4],
    /// Denominator coefficients a1..a3 (a0 = 1).
    a: [f64; 3],
    w: [f64; 3],
    dt: f64,
}

impl Type3State {
    /// Discretises the design at the given sample period.
    pub fn new(design: &Type3Design, dt: f64) -> Self {
        assert!(dt > 0.0);
        // Prewarp so the response at the compensator zero is exact.
        let wz = design.omega_z;
        let k = wz / (wz * dt / 2.0).tan();

        // Continuous numerator k_c (s + wz)^2 and denominator s (s + wp)^2,
        // mapped with s = k (z-1)/(z+1). Multiply through by (z+1)^3.
        let np = [design.k_c * wz * wz, 2.0 * design.k_c * wz, design.k_c];
        let dp = [0.0, design.omega_p * design.omega_p, 2.0 * design.omega_p, 1.0];

        // (z+1)^m (z-1)^n expansions for each power term.
        let poly_mul = |a: &[f64], b: &[f64]| -> Vec<f64> {
            let mut out = vec![0.0; a.len() + b.len() - 1];
            for (i, &x) in a.iter().enumerate() {
                for (j, &y) in b.iter().enumerate() {
                    out[i + j] += x * y;
                }
            }
            out
        };
        let zp1 = [1.0, 1.0];
        let zm1 = [-1.0, 1.0];
        // term s^j -> k^j (z-1)^j (z+1)^(3-j), coefficients ascending in z.
        let term = |j: usize| -> Vec<f64> {
            let mut t = vec![1.0];
            for _ in 0..j {
                t = poly_mul(&t, &zm1);
            }
            for _ in 0..(3 - j) {
                t = poly_mul(&t, &zp1);
            }
            t
        };
        let mut num = vec![0.0; 4];
        let mut den = vec![0.0; 4];
        for j in 0..=2 {
            let t = term(j);
            let kj = k.powi(j as i32);
            for (c, v) in t.iter().enumerate() {
                num[c] += np[j] * kj * v;
            }
        }
        for j in 0..=3 {
            let t = term(j);
            let kj = k.powi(j as i32);
            for (c, v) in t.iter().enumerate() {
                den[c] += dp.get(j).copied().unwrap_or(0.0) * kj * v;
            }
        }
        // Normalise to descending powers with a0 = 1: index 3 is z^3.
        let a0 = den[3];
        let b = [num[3] / a0, num[2] / a0, num[1] / a0, num[0] / a0];
        let a = [den[2] / a0, den[1] / a0, den[0] / a0];
        Self {
            b,
            a,
            w: [0.0; 3],
            dt,
        }
    }

    pub fn sample_period(&self) -> f64 {
        self.dt
    }
}

/// One compensator sample: voltage error in, duty deviation out.
pub fn type3_step(s: &mut Type3State, error: f64) -> f64 {
    let y = s.b[0] * error + s.w[0];
    s.w[0] = s.b[1] * error - s.a[0] * y + s.w[1];
    s.w[1] = s.b[2] * error - s.a[1] * y + s.w[2];
    s.w[2] = s.b[3] * error - s.a[2] * y;
    y
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Complex;

    fn design() -> Type3Design {
        Type3Design {
            k_c: 2.0,
            omega_z: 7.0e3,
            omega_p: 7.0e4,
        }
    }

    #[test]
    fn zero_input_history_zero_output() {
        let mut s = Type3State::new(&design(), 4e-5);
        assert_eq!(type3_step(&mut s, 0.0), 0.0);
        assert_eq!(type3_step(&mut s, 0.0), 0.0);
    }

    #[test]
    fn constant_input_integrates_without_bound() {
        let mut s = Type3State::new(&design(), 4e-5);
        let mut y_quarter = 0.0;
        let mut y_full = 0.0;
        let n = 40_000;
        for k in 0..n {
            let y = type3_step(&mut s, 1.0);
            if k == n / 4 {
                y_quarter = y;
            }
            y_full = y;
        }
        // Pole at z = 1: the output keeps growing linearly.
        assert!(y_full > 2.0 * y_quarter && y_full.is_finite());
    }

    #[test]
    fn frequency_response_matches_continuous_evaluation() {
        let d = design();
        let dt = 4e-5;
        let mut s = Type3State::new(&d, dt);
        let w = d.omega_z;
        // Settle transients, then project the steady response on the drive
        // quadratures over whole periods.
        let period_samples = (2.0 * std::f64::consts::PI / (w * dt)).round() as usize;
        let total = 400 * period_samples;
        let mut acc_sin = 0.0;
        let mut acc_cos = 0.0;
        let mut count = 0usize;
        for k in 0..total {
            let t = k as f64 * dt;
            let y = type3_step(&mut s, (w * t).sin());
            if k >= total / 2 && (total - k) % period_samples != 0 {
                acc_sin += y * (w * t).sin();
                acc_cos += y * (w * t).cos();
                count += 1;
            }
        }
        let half = count as f64 / 2.0;
        let amp = (acc_sin * acc_sin + acc_cos * acc_cos).sqrt() / half;
        let expected = d.eval(Complex::new(0.0, w)).norm();
        assert!(
            (amp - expected).abs() / expected < 0.02,
            "amp {amp} vs continuous {expected}"
        );
    }
}
