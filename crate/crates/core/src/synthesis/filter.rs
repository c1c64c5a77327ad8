use nalgebra::{DMatrix, DVector};

use super::lyapunov::max_real_eigenvalue;
use super::{FilterDesign, FilterTable, SynthesisError};

/// Adaptive Cash-Karp 4(5) step. Returns the fifth-order estimate and the
/// embedded error estimate.
fn rk45_step<F: Fn(&DVector<f64>, &mut DVector<f64>)>(
    f: &F,
    y: &DVector<f64>,
    h: f64,
    work: &mut [DVector<f64>; 7],
) -> (DVector<f64>, f64) {
    const A: [[f64; 5]; 5] = [
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0],
        [3.0 / 10.0, -9.0 / 10.0, 6.0 / 5.0, 0.0, 0.0],
        [-11.0 / 54.0, 5.0 / 2.0, -70.0 / 27.0, 35.0 / 27.0, 0.0],
        [
            1631.0 / 55296.0,
            175.0 / 512.0,
            575.0 / 13824.0,
            44275.0 / 110592.0,
            253.0 / 4096.0,
        ],
    ];
    const B5: [f64; 6] = [
        37.0 / 378.0,
        0.0,
        250.0 / 621.0,
        125.0 / 594.0,
        0.0,
        512.0 / 1771.0,
    ];
    const B4: [f64; 6] = [
        2825.0 / 27648.0,
        0.0,
        18575.0 / 48384.0,
        13525.0 / 55296.0,
        277.0 / 14336.0,
        1.0 / 4.0,
    ];

    let n = y.len();
    f(y, &mut work[0]);
    for stage in 0..5 {
        let mut yi = y.clone();
        for (j, row) in A[stage][..=stage].iter().enumerate() {
            if *row != 0.0 {
                yi.axpy(h * row, &work[j], 1.0);
            }
        }
        let (head, tail) = work.split_at_mut(stage + 1);
        let _ = head;
        f(&yi, &mut tail[0]);
    }
    let mut y5 = y.clone();
    let mut err = DVector::zeros(n);
    for k in 0..6 {
        y5.axpy(h * B5[k], &work[k], 1.0);
        err.axpy(h * (B5[k] - B4[k]), &work[k], 1.0);
    }
    (y5, err.amax())
}

/// Integrates the absolute impulse response of the strictly proper system
/// `x' = A x` from `x(0) = b`, accumulating one integral per requested
/// output row. Integration stops once the decay envelope estimated from the
/// slowest eigenvalue bounds the remaining tail below `1e-6` of the
/// accumulated value.
fn impulse_abs_integrals(
    a: &DMatrix<f64>,
    x0: &DVector<f64>,
    rows: &[usize],
) -> Result<Vec<f64>, SynthesisError> {
    let n = a.nrows();
    let max_re = max_real_eigenvalue(a);
    if !(max_re < 0.0) {
        return Err(SynthesisError::NotHurwitz { max_re });
    }
    let alpha = -max_re;

    // Augment the state with the |output| quadratures.
    let m = n + rows.len();
    let rhs = |y: &DVector<f64>, out: &mut DVector<f64>| {
        let x = y.rows(0, n);
        let dx = a * x;
        out.rows_mut(0, n).copy_from(&dx);
        for (k, &r) in rows.iter().enumerate() {
            out[n + k] = y[r].abs();
        }
    };

    let mut y = DVector::zeros(m);
    y.rows_mut(0, n).copy_from(x0);
    let mut work: [DVector<f64>; 7] = std::array::from_fn(|_| DVector::zeros(m));
    let scale0 = x0.amax().max(1e-300);

    let mut t = 0.0;
    let mut h = 1e-3 / a.amax().max(alpha);
    let t_settle = 5.0 / alpha;
    let t_max = 400.0 / alpha;
    let rtol = 1e-10;
    let atol = 1e-13 * scale0;

    while t < t_max {
        let (y_next, err) = rk45_step(&rhs, &y, h, &mut work);
        let tol = atol + rtol * y.amax().max(y_next.amax());
        if err <= tol || h < 1e-16 * t_max {
            t += h;
            y = y_next;
            let state_norm = y.rows(0, n).norm();
            if t > t_settle {
                let accumulated: f64 = (0..rows.len()).map(|k| y[n + k]).sum();
                let tail = state_norm / alpha;
                if tail < 1e-6 * accumulated.max(1e-300) {
                    break;
                }
            }
        }
        let grow = if err > 0.0 {
            0.9 * (tol / err).powf(0.2)
        } else {
            5.0
        };
        h *= grow.clamp(0.2, 5.0);
    }
    Ok((0..rows.len()).map(|k| y[n + k]).collect())
}

/// L1 norms of weighted outputs `w' G(s)` of the filtered loop, one per
/// weight vector, all integrated in a single pass. Used to probe how much
/// conservatism the row-wise bound carries for specific uncertainty
/// directions.
pub fn filtered_loop_l1_norms_weighted(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    omega_c: f64,
    weights: &[DVector<f64>],
) -> Result<Vec<f64>, SynthesisError> {
    assert!(omega_c > 0.0);
    let n = a.nrows();
    let mut ag = DMatrix::zeros(n + 1, n + 1);
    ag[(0, 0)] = -omega_c;
    for i in 0..n {
        ag[(i + 1, 0)] = -omega_c * b[i];
        for j in 0..n {
            ag[(i + 1, j + 1)] = a[(i, j)];
        }
    }
    let mut x0 = DVector::zeros(n + 1);
    x0[0] = 1.0;
    for i in 0..n {
        x0[i + 1] = b[i];
    }
    let max_re = max_real_eigenvalue(&ag);
    if !(max_re < 0.0) {
        return Err(SynthesisError::NotHurwitz { max_re });
    }
    let alpha = -max_re;
    let m = n + 1 + weights.len();
    let rhs = |y: &DVector<f64>, out: &mut DVector<f64>| {
        let x = y.rows(0, n + 1);
        let dx = &ag * x;
        out.rows_mut(0, n + 1).copy_from(&dx);
        for (k, w) in weights.iter().enumerate() {
            let mut v = 0.0;
            for i in 0..n {
                v += w[i] * y[i + 1];
            }
            out[n + 1 + k] = v.abs();
        }
    };
    let mut y = DVector::zeros(m);
    y.rows_mut(0, n + 1).copy_from(&x0);
    let mut work: [DVector<f64>; 7] = std::array::from_fn(|_| DVector::zeros(m));
    let scale0 = x0.amax().max(1e-300);
    let mut t = 0.0;
    let mut h = 1e-3 / ag.amax().max(alpha);
    let t_settle = 5.0 / alpha;
    let t_max = 400.0 / alpha;
    while t < t_max {
        let (y_next, err) = rk45_step(&rhs, &y, h, &mut work);
        let tol = 1e-13 * scale0 + 1e-10 * y.amax().max(y_next.amax());
        if err <= tol || h < 1e-16 * t_max {
            t += h;
            y = y_next;
            if t > t_settle && y.rows(0, n + 1).norm() / alpha < 1e-6 * scale0 {
                break;
            }
        }
        let grow = if err > 0.0 {
            0.9 * (tol / err).powf(0.2)
        } else {
            5.0
        };
        h *= grow.clamp(0.2, 5.0);
    }
    Ok((0..weights.len()).map(|k| y[n + 1 + k]).collect())
}

/// Row-wise L1 norms of `G(s) = (sI - A)^{-1} b * s/(s + omega_c)`:
/// the desired closed loop driven through the complementary high-pass of a
/// first-order filter with bandwidth `omega_c`.
///
/// Realised as the cascade `xf' = -omega_c xf + w`, `v = w - omega_c xf`,
/// `z' = A z + b v`; the impulse response of row `i` is integrated in
/// absolute value.
pub fn filtered_loop_l1_norms(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    omega_c: f64,
) -> Result<Vec<f64>, SynthesisError> {
    assert!(omega_c > 0.0);
    let n = a.nrows();
    let mut ag = DMatrix::zeros(n + 1, n + 1);
    ag[(0, 0)] = -omega_c;
    for i in 0..n {
        ag[(i + 1, 0)] = -omega_c * b[i];
        for j in 0..n {
            ag[(i + 1, j + 1)] = a[(i, j)];
        }
    }
    let mut x0 = DVector::zeros(n + 1);
    x0[0] = 1.0;
    for i in 0..n {
        x0[i + 1] = b[i];
    }
    let rows: Vec<usize> = (1..=n).collect();
    impulse_abs_integrals(&ag, &x0, &rows)
}

/// Sweeps the filter bandwidth grid, evaluating the stability margin
/// `lambda = ||G||_L1 * theta_max` at every point, and selects twice the
/// smallest feasible bandwidth as the design value.
pub fn l1_norm_condition(
    a_m_cc: &DMatrix<f64>,
    b_cc: &DVector<f64>,
    theta_max: f64,
    grid: &[f64],
) -> Result<FilterTable, SynthesisError> {
    assert!(!grid.is_empty());
    let mut points = Vec::with_capacity(grid.len());
    let mut first_feasible = None;
    for &omega in grid {
        let norms = filtered_loop_l1_norms(a_m_cc, b_cc, omega)?;
        let g_norm = norms.iter().cloned().fold(0.0f64, f64::max);
        let lambda = g_norm * theta_max;
        if lambda < 1.0 && first_feasible.is_none() {
            first_feasible = Some(omega);
        }
        points.push(FilterDesign { omega_c: omega, lambda });
    }
    let Some(omega_base) = first_feasible else {
        let best = points
            .iter()
            .cloned()
            .min_by(|a, b| a.lambda.partial_cmp(&b.lambda).unwrap())
            .unwrap();
        return Err(SynthesisError::FilterInfeasible {
            best_lambda: best.lambda,
            at_omega: best.omega_c,
        });
    };
    // Safety factor of two on the bandwidth.
    let omega_sel = 2.0 * omega_base;
    let norms = filtered_loop_l1_norms(a_m_cc, b_cc, omega_sel)?;
    let lambda_sel = norms.iter().cloned().fold(0.0f64, f64::max) * theta_max;
    if !(lambda_sel < 1.0) {
        return Err(SynthesisError::FilterInfeasible {
            best_lambda: lambda_sel,
            at_omega: omega_sel,
        });
    }
    Ok(FilterTable {
        points,
        selected: FilterDesign {
            omega_c: omega_sel,
            lambda: lambda_sel,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Closed form for the first-order case `H = 1/(s+a)`,
    /// `C = w/(s+w)`: the impulse response of `H (1 - C)` is
    /// `g(t) = (w e^{-w t} - a e^{-a t})/(w - a)`, whose absolute integral
    /// splits at the single sign change.
    fn first_order_oracle(a: f64, w: f64) -> f64 {
        assert!(a != w);
        let seg = |t0: f64, t1: f64| -> f64 {
            // integral of g over [t0, t1]
            let part = |t: f64| (a * (-a * t).exp() - w * (-w * t).exp()) / (w - a) / 1.0;
            // antiderivative of g: (e^{-a t} - e^{-w t}) ... derive directly:
            // int w e^{-w t} = -e^{-w t}; int a e^{-a t} = -e^{-a t}
            let anti = |t: f64| (-(-w * t).exp() + (-a * t).exp()) / (w - a);
            let _ = part;
            anti(t1) - anti(t0)
        };
        let t_star = (w / a).ln() / (w - a);
        if t_star > 0.0 {
            seg(0.0, t_star).abs() + seg(t_star, 1e3 / a.min(w)).abs()
        } else {
            seg(0.0, 1e3 / a.min(w)).abs()
        }
    }

    #[test]
    fn first_order_matches_closed_form() {
        for (a, w) in [(10.0, 100.0), (50.0, 20.0), (3.0, 300.0)] {
            let a_m = DMatrix::from_row_slice(1, 1, &[-a]);
            let b = DVector::from_column_slice(&[1.0]);
            let got = filtered_loop_l1_norms(&a_m, &b, w).unwrap()[0];
            let want = first_order_oracle(a, w);
            assert_relative_eq!(got, want, max_relative = 1e-4);
        }
    }

    #[test]
    fn norm_is_homogeneous_in_gain() {
        let a_m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -4.0e4, -400.0]);
        let b = DVector::from_column_slice(&[0.0, 1.0]);
        let base = filtered_loop_l1_norms(&a_m, &b, 500.0).unwrap();
        let scaled = filtered_loop_l1_norms(&a_m, &(&b * 3.5), 500.0).unwrap();
        for (s, g) in scaled.iter().zip(&base) {
            assert_relative_eq!(*s, 3.5 * g, max_relative = 1e-5);
        }
        assert!(base.iter().all(|v| *v > 0.0));
    }

    #[test]
    fn zero_uncertainty_always_feasible() {
        let a_m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -4.0e4, -400.0]);
        let b = DVector::from_column_slice(&[0.0, 1.0]);
        let grid = [10.0, 100.0, 1000.0];
        let table = l1_norm_condition(&a_m, &b, 0.0, &grid).unwrap();
        assert!(table.points.iter().all(|p| p.lambda == 0.0));
        assert_relative_eq!(table.selected.omega_c, 20.0);
    }

    #[test]
    fn infeasible_grid_reports_best_point() {
        let a_m = DMatrix::from_row_slice(1, 1, &[-10.0]);
        let b = DVector::from_column_slice(&[1.0]);
        let err = l1_norm_condition(&a_m, &b, 1e9, &[1.0, 10.0]).unwrap_err();
        match err {
            SynthesisError::FilterInfeasible { best_lambda, .. } => {
                assert!(best_lambda >= 1.0)
            }
            other => panic!("unexpected error {other:?}"),
        }
    }
}
