use nalgebra::{DMatrix, DVector, Matrix3, RowVector3, Vector3};

use super::lyapunov::{is_hurwitz, solve_lyapunov_relaxed};
use super::{GainVector, SynthesisError};
use crate::model::AugmentedModel;

/// Controllability matrix `[B, AB, A^2 B, ...]` of a single-input pair.
pub fn controllability_matrix(a: &DMatrix<f64>, b: &DVector<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let mut cm = DMatrix::zeros(n, n);
    let mut col = b.clone();
    for j in 0..n {
        cm.column_mut(j).copy_from(&col);
        col = a * col;
    }
    cm
}

/// Column-equilibrated copy: physical units make the raw columns span many
/// decades, so rank and conditioning are judged scale free.
pub(crate) fn equilibrate_columns(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for mut col in out.column_iter_mut() {
        let norm = col.norm();
        if norm > 0.0 {
            col /= norm;
        }
    }
    out
}

fn controllability_rank(cm: &DMatrix<f64>) -> usize {
    let svd = equilibrate_columns(cm).svd(false, false);
    let smax = svd.singular_values.max();
    svd.singular_values
        .iter()
        .filter(|&&s| s > smax * 1e-10)
        .count()
}

/// Stabilising initial gain for the Newton iteration, following Bass:
/// with `beta` beyond the spectral radius of `A`, the anti-stable shift
/// `A + beta I` admits `Z > 0` with `(A + beta I) Z + Z (A + beta I)' = 2BB'`
/// and `K0 = B' Z^{-1}` places `A - B K0` in the left half-plane. The input
/// vector is normalised first so the solve stays well scaled.
fn bass_initial_gain(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>, SynthesisError> {
    let n = a.nrows();
    let scale = b.norm();
    let b_hat = b / scale;
    let beta = a.norm() + 1.0;
    let shifted = -(a.transpose() + DMatrix::identity(n, n) * beta);
    let bbt = &b_hat * b_hat.transpose() * 2.0 + DMatrix::identity(n, n) * 1e-8;
    let z = solve_lyapunov_relaxed(&shifted, &bbt)?;
    let k0 = z
        .lu()
        .solve(&b_hat)
        .ok_or(SynthesisError::SingularBlock)?;
    Ok(k0 / scale)
}

/// Solves the continuous algebraic Riccati equation
/// `A'P + PA - P B r^{-1} B' P + Q = 0` for a single-input system by
/// Kleinman's Newton iteration on Lyapunov solves.
pub fn solve_care(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    q: &DMatrix<f64>,
    r: f64,
) -> Result<DMatrix<f64>, SynthesisError> {
    assert!(r > 0.0, "control weight must be positive");
    let n = a.nrows();
    let cm = controllability_matrix(a, b);
    let rank = controllability_rank(&cm);
    if rank < n {
        return Err(SynthesisError::Uncontrollable { rank, dim: n });
    }

    let mut k = bass_initial_gain(a, b)?;
    let mut p_prev: Option<DMatrix<f64>> = None;
    for _ in 0..60 {
        let a_cl = a - b * k.transpose();
        let q_aug = q + &k * k.transpose() * r;
        let p = solve_lyapunov_relaxed(&a_cl, &q_aug)?;
        let k_next = (&p * b) / r;
        let delta = (&k_next - &k).norm();
        k = k_next;
        let converged = delta < 1e-13 * (1.0 + k.norm())
            || p_prev
                .as_ref()
                .map(|pp| (pp - &p).norm() < 1e-13 * p.norm())
                .unwrap_or(false);
        p_prev = Some(p);
        if converged {
            break;
        }
    }
    let p = p_prev.expect("at least one Newton step");
    let quad = (&p * b) * (b.transpose() * &p) / r;
    let residual = (a.transpose() * &p + &p * a - &quad + q).norm();
    let tol = 1e-8 * q.norm() + 1e-11 * (a.norm() * p.norm() + quad.norm());
    if residual > tol {
        return Err(SynthesisError::ResidualTooLarge { residual });
    }
    Ok(p)
}

/// State-deviation weights scaled by the steady stored energies: the current
/// state is weighted by the inductor energy, the voltage state normalised to
/// the capacitor energy, and the integral state by the tunable `g_i`, all
/// under a common `1/(C V^2)` prefactor.
pub fn energy_weights(l_t: f64, c_t: f64, i_t: f64, v_dc: f64, g_i: f64) -> Matrix3<f64> {
    let prefactor = 1.0 / (c_t * v_dc * v_dc);
    Matrix3::from_diagonal(&Vector3::new(
        prefactor * l_t * i_t * i_t,
        prefactor,
        prefactor * c_t * g_i,
    ))
}

/// Optimal integral-action state feedback for one augmented DGU model.
///
/// Returns the gain row such that `A - B K` is Hurwitz and minimises the
/// usual infinite-horizon quadratic cost with the given weights.
pub fn lqi_gains(
    aug: &AugmentedModel,
    q: &Matrix3<f64>,
    r: f64,
) -> Result<GainVector, SynthesisError> {
    let a = DMatrix::from_fn(3, 3, |i, j| aug.a[(i, j)]);
    let b = DVector::from_column_slice(aug.b.as_slice());
    let qd = DMatrix::from_fn(3, 3, |i, j| q[(i, j)]);
    let p = solve_care(&a, &b, &qd, r)?;
    let k = (b.transpose() * &p) / r;
    let gains = GainVector {
        k_i: k[0],
        k_v: k[1],
        k_xi: k[2],
    };
    let a_cl = aug.a - aug.b * gains.row();
    let a_cl_d = DMatrix::from_fn(3, 3, |i, j| a_cl[(i, j)]);
    if !is_hurwitz(&a_cl_d) {
        return Err(SynthesisError::ClosedLoopUnstable);
    }
    Ok(gains)
}

/// State feedback placing the closed-loop poles of the augmented model at
/// the requested locations (real parts, with complex pairs given as
/// `(re, im)` and `im != 0` implying its conjugate), via Ackermann's formula.
pub fn pole_placement_gains(
    aug: &AugmentedModel,
    poles: &[(f64, f64); 3],
) -> Result<GainVector, SynthesisError> {
    // Desired monic characteristic polynomial, ascending powers of s.
    // Complex poles must come in conjugate pairs for real coefficients.
    let mut coeffs: Vec<f64> = vec![1.0];
    let mul = |coeffs: &mut Vec<f64>, factor: &[f64]| {
        let mut out = vec![0.0; coeffs.len() + factor.len() - 1];
        for (i, &a) in coeffs.iter().enumerate() {
            for (j, &b) in factor.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        *coeffs = out;
    };
    let mut i = 0;
    while i < 3 {
        let (re, im) = poles[i];
        if im == 0.0 {
            mul(&mut coeffs, &[-re, 1.0]);
            i += 1;
        } else {
            if !(i + 1 < 3 && poles[i + 1] == (re, -im)) {
                return Err(SynthesisError::PolesNotConjugate);
            }
            mul(&mut coeffs, &[re * re + im * im, -2.0 * re, 1.0]);
            i += 2;
        }
    }
    debug_assert_eq!(coeffs.len(), 4);
    // Reorder to [1, c2, c1, c0] as used below.
    let coeffs = [coeffs[3], coeffs[2], coeffs[1], coeffs[0]];

    let a = aug.a;
    let phi = a * a * a
        + a * a * coeffs[1]
        + a * coeffs[2]
        + Matrix3::identity() * coeffs[3];
    let ad = DMatrix::from_fn(3, 3, |i, j| a[(i, j)]);
    let bd = DVector::from_column_slice(aug.b.as_slice());
    let cm = controllability_matrix(&ad, &bd);
    let rank = controllability_rank(&cm);
    if rank < 3 {
        return Err(SynthesisError::Uncontrollable { rank, dim: 3 });
    }
    // K = e_n' Cm^{-1} phi(A)
    let phid = DMatrix::from_fn(3, 3, |i, j| phi[(i, j)]);
    let last = cm
        .transpose()
        .lu()
        .solve(&DVector::from_column_slice(&[0.0, 0.0, 1.0]))
        .ok_or(SynthesisError::SingularBlock)?;
    let krow = last.transpose() * phid;
    let gains = GainVector {
        k_i: krow[0],
        k_v: krow[1],
        k_xi: krow[2],
    };
    let a_cl = aug.a - aug.b * gains.row();
    let a_cl_d = DMatrix::from_fn(3, 3, |i, j| a_cl[(i, j)]);
    if !is_hurwitz(&a_cl_d) {
        return Err(SynthesisError::ClosedLoopUnstable);
    }
    Ok(gains)
}

impl GainVector {
    pub fn row(&self) -> RowVector3<f64> {
        RowVector3::new(self.k_i, self.k_v, self.k_xi)
    }

    pub fn norm(&self) -> f64 {
        (self.k_i * self.k_i + self.k_v * self.k_v + self.k_xi * self.k_xi).sqrt()
    }
}
