use nalgebra::{DMatrix, DVector, Matrix3, RowVector3, Vector3};

use super::lyapunov::is_hurwitz;
use super::riccati::controllability_matrix;
use super::{GainVector, PredictorDesign, SynthesisError};
use crate::model::AugmentedModel;

/// Coefficients of the monic characteristic polynomial
/// `s^3 + e2 s^2 + e1 s + e0` of a 3x3 matrix.
pub fn char_poly_coeffs(a: &Matrix3<f64>) -> [f64; 3] {
    let tr = a.trace();
    let minors = a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)]
        + a[(0, 0)] * a[(2, 2)]
        - a[(0, 2)] * a[(2, 0)]
        + a[(1, 1)] * a[(2, 2)]
        - a[(1, 2)] * a[(2, 1)];
    let det = a.determinant();
    [-det, minors, -tr]
}

/// Companion realisation of the polynomial `s^3 + e2 s^2 + e1 s + e0`.
pub fn companion(e: &[f64; 3]) -> Matrix3<f64> {
    Matrix3::new(
        0.0, 1.0, 0.0, //
        0.0, 0.0, 1.0, //
        -e[0], -e[1], -e[2],
    )
}

/// Builds the control-canonical predictor design for the desired closed loop
/// `A_m = A - B K` of the given augmented model.
///
/// The design carries the normal-form matrix, its companion form with the
/// known input vector `b = [0, 0, 1]'`, and the similarity `T` mapping
/// measured states to canonical ones, computed from the two controllability
/// matrices. The output row in canonical coordinates supplies the transfer
/// numerator coefficients.
pub fn canonical_transform(
    aug: &AugmentedModel,
    gains: &GainVector,
) -> Result<PredictorDesign, SynthesisError> {
    let a_m = aug.a - aug.b * gains.row();
    let a_m_d = DMatrix::from_fn(3, 3, |i, j| a_m[(i, j)]);
    if !is_hurwitz(&a_m_d) {
        return Err(SynthesisError::ClosedLoopUnstable);
    }
    let e = char_poly_coeffs(&a_m);
    let a_cc = companion(&e);
    let b_cc = Vector3::new(0.0, 0.0, 1.0);

    let ctrb_x = controllability_matrix(&a_m_d, &DVector::from_column_slice(aug.b.as_slice()));
    // Column scales span many decades because of the physical units, so the
    // conditioning gate is applied after equilibration; the transform solve
    // below uses the same scaling.
    let col_scales: Vec<f64> = ctrb_x.column_iter().map(|c| c.norm()).collect();
    if col_scales.iter().any(|s| *s == 0.0) {
        return Err(SynthesisError::Uncontrollable { rank: 0, dim: 3 });
    }
    let mut ctrb_x_eq = ctrb_x.clone();
    for (j, s) in col_scales.iter().enumerate() {
        ctrb_x_eq.column_mut(j).scale_mut(1.0 / s);
    }
    let svd = ctrb_x_eq.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(cond < 1e12) {
        return Err(SynthesisError::IllConditionedTransform { cond });
    }
    let a_cc_d = DMatrix::from_fn(3, 3, |i, j| a_cc[(i, j)]);
    let mut ctrb_z = controllability_matrix(&a_cc_d, &DVector::from_column_slice(b_cc.as_slice()));
    for (j, s) in col_scales.iter().enumerate() {
        ctrb_z.column_mut(j).scale_mut(1.0 / s);
    }

    // T = Cz * Cx^{-1} with both sides sharing the column scaling, solved
    // row by row as T Cx_eq = Cz_eq.
    let cx_t = ctrb_x_eq.transpose();
    let lu = cx_t.lu();
    let mut t = Matrix3::zeros();
    for row in 0..3 {
        let rhs = DVector::from_column_slice(ctrb_z.row(row).transpose().as_slice());
        let sol = lu.solve(&rhs).ok_or(SynthesisError::SingularBlock)?;
        for col in 0..3 {
            t[(row, col)] = sol[col];
        }
    }
    let t_inv = t
        .try_inverse()
        .ok_or(SynthesisError::IllConditionedTransform { cond: f64::INFINITY })?;
    let c_cc_row = aug.c * t_inv;
    let f = [c_cc_row[0], c_cc_row[1], c_cc_row[2]];

    // The similarity must reproduce the companion pair.
    let check = t * a_m * t_inv - a_cc;
    if check.norm() > 1e-6 * a_cc.norm() {
        return Err(SynthesisError::IllConditionedTransform { cond });
    }

    Ok(PredictorDesign {
        a_m,
        a_m_cc: a_cc,
        b_cc,
        c_cc: RowVector3::new(f[0], f[1], f[2]),
        t,
        t_inv,
        e,
        f,
        ctrb_condition: cond,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        build_augmented, build_small_signal, compute_operating_point, NeighborLine,
    };
    use crate::presets::reference_grid_dgus;
    use crate::synthesis::riccati::{energy_weights, lqi_gains};
    use approx::assert_relative_eq;

    fn nominal_like_design() -> (AugmentedModel, GainVector) {
        let p = &reference_grid_dgus()[0];
        let op = compute_operating_point(p).unwrap();
        let lines = [
            NeighborLine {
                neighbor: 2,
                r: 1.0,
                neighbor_v_ref: 380.0,
            },
            NeighborLine {
                neighbor: 3,
                r: 1.0,
                neighbor_v_ref: 380.0,
            },
        ];
        let aug = build_augmented(&build_small_signal(p, &op, &lines));
        let q = energy_weights(p.l_t, p.c_t, op.i_t, op.v_dc, 1.0);
        let gains = lqi_gains(&aug, &q, 1.0).unwrap();
        (aug, gains)
    }

    #[test]
    fn identity_transform_for_companion_input() {
        // A model already in companion coordinates with b = [0,0,1]'.
        let e = [6.0e9, 1.1e7, 6.0e3];
        let aug = AugmentedModel {
            a: companion(&e),
            a_coupling: vec![],
            b: Vector3::new(0.0, 0.0, 1.0),
            e: nalgebra::Matrix3x2::zeros(),
            c: RowVector3::new(1.0, 0.0, 0.0),
        };
        let zero = GainVector {
            k_i: 0.0,
            k_v: 0.0,
            k_xi: 0.0,
        };
        let pd = canonical_transform(&aug, &zero).unwrap();
        assert_relative_eq!(pd.t, Matrix3::identity(), epsilon = 1e-9);
    }

    #[test]
    fn transform_maps_input_to_canonical_axis() {
        let (aug, gains) = nominal_like_design();
        let pd = canonical_transform(&aug, &gains).unwrap();
        let tb = pd.t * aug.b;
        assert_relative_eq!(tb, Vector3::new(0.0, 0.0, 1.0), epsilon = 1e-9);
    }

    #[test]
    fn companion_char_poly_matches() {
        let (aug, gains) = nominal_like_design();
        let pd = canonical_transform(&aug, &gains).unwrap();
        let direct = char_poly_coeffs(&pd.a_m);
        let comp = char_poly_coeffs(&pd.a_m_cc);
        for k in 0..3 {
            assert_relative_eq!(direct[k], comp[k], max_relative = 1e-9);
        }
    }

    #[test]
    fn similarity_preserves_eigenvalues() {
        let (aug, gains) = nominal_like_design();
        let pd = canonical_transform(&aug, &gains).unwrap();
        let sim = pd.t_inv * pd.a_m_cc * pd.t;
        let a = DMatrix::from_fn(3, 3, |i, j| pd.a_m[(i, j)]);
        let b = DMatrix::from_fn(3, 3, |i, j| sim[(i, j)]);
        let mut ea: Vec<_> = a.complex_eigenvalues().iter().map(|c| (c.re, c.im)).collect();
        let mut eb: Vec<_> = b.complex_eigenvalues().iter().map(|c| (c.re, c.im)).collect();
        ea.sort_by(|x, y| x.partial_cmp(y).unwrap());
        eb.sort_by(|x, y| x.partial_cmp(y).unwrap());
        for ((ra, ia), (rb, ib)) in ea.iter().zip(eb) {
            assert_relative_eq!(*ra, rb, max_relative = 1e-9);
            assert_relative_eq!(*ia, ib, max_relative = 1e-9, epsilon = 1e-9);
        }
    }

    /// The denominator coefficients evaluated from the closed-form entries
    /// of the closed-loop matrix. The e2 and e0 expressions follow the
    /// textbook trace/determinant expansions in the circuit symbols; e1 is
    /// verified against the principal-minor sum.
    #[test]
    fn denominator_coefficients_closed_form() {
        let p = &reference_grid_dgus()[0];
        let op = compute_operating_point(p).unwrap();
        let lines = [
            NeighborLine {
                neighbor: 2,
                r: 1.0,
                neighbor_v_ref: 380.0,
            },
            NeighborLine {
                neighbor: 3,
                r: 1.0,
                neighbor_v_ref: 380.0,
            },
        ];
        let aug = build_augmented(&build_small_signal(p, &op, &lines));
        let q = energy_weights(p.l_t, p.c_t, op.i_t, op.v_dc, 1.0);
        let gains = lqi_gains(&aug, &q, 1.0).unwrap();
        let pd = canonical_transform(&aug, &gains).unwrap();

        let g_sum = 2.0; // two 1-ohm lines
        let (l, c) = (p.l_t, p.c_t);
        let (v, i) = (op.v_dc, op.i_t);
        let omd = 1.0 - op.duty;
        let (ki, kv, kxi) = (gains.k_i, gains.k_v, gains.k_xi);

        let e2 = (g_sum - i * kv) / c + (p.r_t + v * ki) / l;
        let e1 = ((p.r_t + v * ki) * (g_sum - i * kv) + (omd + v * kv) * (omd + i * ki))
            / (l * c)
            + i * kxi / c;
        let e0 = kxi * (i * p.r_t - v * omd) / (l * c);

        assert_relative_eq!(pd.e[2], e2, max_relative = 1e-9);
        assert_relative_eq!(pd.e[1], e1, max_relative = 1e-9);
        assert_relative_eq!(pd.e[0], e0, max_relative = 1e-9);
    }
}
