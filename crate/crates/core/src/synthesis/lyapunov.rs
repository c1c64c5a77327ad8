use nalgebra::{DMatrix, DVector};

use super::SynthesisError;

/// Largest real part over the eigenvalues of a real square matrix.
pub fn max_real_eigenvalue(a: &DMatrix<f64>) -> f64 {
    a.complex_eigenvalues()
        .iter()
        .map(|e| e.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn is_hurwitz(a: &DMatrix<f64>) -> bool {
    max_real_eigenvalue(a) < 0.0
}

/// Solves the continuous Lyapunov equation `A' P + P A = -Q` for Hurwitz `A`
/// and symmetric positive-definite `Q` via the real Schur decomposition:
/// with `A = U T U'` the transformed equation `T' Y + Y T = -U' Q U` is
/// solved column-block forward over the quasi-triangular structure, then
/// mapped back and symmetrised.
pub fn solve_lyapunov(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>, SynthesisError> {
    let asym = (q - q.transpose()).norm();
    if asym > 1e-10 * q.norm().max(1.0) {
        return Err(SynthesisError::NotSymmetric { residual: asym });
    }
    if q.clone().cholesky().is_none() {
        return Err(SynthesisError::NotPositiveDefinite);
    }
    let p = solve_lyapunov_relaxed(a, q)?;
    if p.clone().cholesky().is_none() {
        return Err(SynthesisError::NotPositiveDefinite);
    }
    Ok(p)
}

/// Same solve without the definiteness contracts on `Q` and `P`; used by
/// internal iterations whose right-hand sides are only semi-definite or
/// wildly scaled.
pub(crate) fn solve_lyapunov_relaxed(
    a: &DMatrix<f64>,
    q: &DMatrix<f64>,
) -> Result<DMatrix<f64>, SynthesisError> {
    let n = a.nrows();
    assert_eq!(a.ncols(), n);
    assert_eq!((q.nrows(), q.ncols()), (n, n));

    let max_re = max_real_eigenvalue(a);
    if !(max_re < 0.0) {
        return Err(SynthesisError::NotHurwitz { max_re });
    }
    let schur = a
        .clone()
        .try_schur(1e-14, 10_000)
        .ok_or(SynthesisError::SchurFailed)?;
    let (u, t) = schur.unpack();
    let q_t = u.transpose() * q * &u;
    let y = solve_quasi_triangular(&t, &(-q_t))?;
    let p_raw = &u * y * u.transpose();
    let p = (&p_raw + p_raw.transpose()) * 0.5;

    // Backward-style residual bound: the floating-point evaluation of the
    // left-hand side itself carries noise of order eps |A||P|, so the
    // tolerance scales with the problem.
    let residual = (a.transpose() * &p + &p * a + q).norm();
    let tol = 1e-8 * q.norm() + 1e-11 * a.norm() * p.norm();
    if residual > tol {
        return Err(SynthesisError::ResidualTooLarge { residual });
    }
    Ok(p)
}

/// Solves `T' Y + Y T = C` with `T` quasi-upper-triangular, advancing over
/// the 1x1 and 2x2 diagonal blocks of `T` left to right. Each column block
/// reduces to a small dense linear system.
fn solve_quasi_triangular(
    t: &DMatrix<f64>,
    c: &DMatrix<f64>,
) -> Result<DMatrix<f64>, SynthesisError> {
    let n = t.nrows();
    let tt = t.transpose();
    let mut y = DMatrix::zeros(n, n);

    let mut j = 0;
    while j < n {
        let width = if j + 1 < n && t[(j + 1, j)].abs() > 0.0 {
            2
        } else {
            1
        };
        // rhs = C[:, j..j+w] - Y[:, 0..j] * T[0..j, j..j+w]
        let mut rhs = c.columns(j, width).clone_owned();
        if j > 0 {
            rhs -= y.columns(0, j) * t.view((0, j), (j, width));
        }
        if width == 1 {
            let m = &tt + DMatrix::identity(n, n) * t[(j, j)];
            let sol = m
                .lu()
                .solve(&DVector::from_column_slice(rhs.column(0).as_slice()))
                .ok_or(SynthesisError::SingularBlock)?;
            y.column_mut(j).copy_from(&sol);
        } else {
            // Couple the two columns: (I2 (x) T' + S' (x) I) vec(Yj) = vec(rhs)
            // with S the 2x2 diagonal block.
            let s = t.view((j, j), (2, 2));
            let mut m = DMatrix::zeros(2 * n, 2 * n);
            for bi in 0..2 {
                m.view_mut((bi * n, bi * n), (n, n)).copy_from(&tt);
                for bj in 0..2 {
                    for d in 0..n {
                        m[(bi * n + d, bj * n + d)] += s[(bj, bi)];
                    }
                }
            }
            let mut v = DVector::zeros(2 * n);
            v.rows_mut(0, n).copy_from(&rhs.column(0));
            v.rows_mut(n, n).copy_from(&rhs.column(1));
            let sol = m.lu().solve(&v).ok_or(SynthesisError::SingularBlock)?;
            y.column_mut(j).copy_from(&sol.rows(0, n));
            y.column_mut(j + 1).copy_from(&sol.rows(n, n));
        }
        j += width;
    }
    Ok(y)
}
