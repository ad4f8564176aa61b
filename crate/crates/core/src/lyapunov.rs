//! Dense Lyapunov solver: real Schur reduction and quasi-triangular
//! back-substitution (Bartels-Stewart).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Eigenvalues of a 1x1 or 2x2 diagonal Schur block as (re, im).
fn block_eigenvalue(t: &DMatrix<f64>, start: usize, size: usize) -> (f64, f64) {
    if size == 1 {
        (t[(start, start)], 0.0)
    } else {
        let (a, b) = (t[(start, start)], t[(start, start + 1)]);
        let (c, d) = (t[(start + 1, start)], t[(start + 1, start + 1)]);
        let tr = 0.5 * (a + d);
        let disc = 0.25 * (a - d) * (a - d) + b * c;
        if disc >= 0.0 {
            (tr + disc.sqrt(), 0.0)
        } else {
            (tr, (-disc).sqrt())
        }
    }
}

/// Diagonal block starts and sizes of a real quasi-triangular matrix.
fn diagonal_blocks(t: &DMatrix<f64>) -> Vec<(usize, usize)> {
    let n = t.nrows();
    let mut blocks = Vec::new();
    let mut i = 0;
    while i < n {
        let size = if i + 1 < n && t[(i + 1, i)] != 0.0 { 2 } else { 1 };
        blocks.push((i, size));
        i += size;
    }
    blocks
}

/// Solves T' X + X T = C for upper quasi-triangular T by block forward
/// substitution. Each small system is a <=4x4 Kronecker solve.
fn solve_quasi_triangular(t: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = t.nrows();
    let blocks = diagonal_blocks(t);
    let mut x = DMatrix::<f64>::zeros(n, n);
    let scale = t.norm().max(1e-300);

    for &(js, q) in &blocks {
        // right-hand side for this column block: C[:,J] - X[:,0..js] T[0..js,J]
        let mut acc = c.columns(js, q).into_owned();
        if js > 0 {
            acc -= x.view((0, 0), (n, js)) * t.view((0, js), (js, q));
        }
        for &(is, p) in &blocks {
            let rhs = acc.view((is, 0), (p, q)).into_owned();
            // solve T_II' Y + Y T_JJ = rhs via Kronecker vectorization
            let tii = t.view((is, is), (p, p));
            let tjj = t.view((js, js), (q, q));
            let mut kron = DMatrix::<f64>::zeros(p * q, p * q);
            for col in 0..q {
                for row in 0..p {
                    let r = col * p + row;
                    for k in 0..p {
                        kron[(r, col * p + k)] += tii[(k, row)]; // T_II'
                    }
                    for k in 0..q {
                        kron[(r, k * p + row)] += tjj[(k, col)]; // T_JJ acting from the right
                    }
                }
            }
            let ill_posed = || Error::LyapunovIllPosed {
                a: block_eigenvalue(t, is, p),
                b: block_eigenvalue(t, js, q),
            };
            let lu = kron.lu();
            // near-singular small blocks mean lambda_I + lambda_J ~ 0
            let u_diag: Vec<f64> = (0..p * q).map(|k| lu.u()[(k, k)].abs()).collect();
            let u_min = u_diag.iter().cloned().fold(f64::MAX, f64::min);
            if u_min < 1e-13 * scale {
                return Err(ill_posed());
            }
            let rhs_vec = DVector::from_fn(p * q, |r, _| rhs[(r % p, r / p)]);
            let sol = lu.solve(&rhs_vec).ok_or_else(ill_posed)?;
            for col in 0..q {
                for row in 0..p {
                    x[(is + row, js + col)] = sol[col * p + row];
                }
            }
            // propagate T_IK' X_IJ to the row blocks below I
            let below = is + p;
            if below < n {
                let update = t.view((is, below), (p, n - below)).transpose()
                    * x.view((is, js), (p, q));
                let mut target = acc.view_mut((below, 0), (n - below, q));
                target -= update;
            }
        }
    }
    Ok(x)
}

/// Solves the Lyapunov equation A' X + X A + Q = 0.
///
/// Requires that A and -A share no eigenvalue; a near-common pair is reported
/// as [`Error::LyapunovIllPosed`]. The returned X is symmetrized, and the
/// residual is verified against 1e-10 (norm(A) norm(X) + norm(Q)).
pub fn lyapunov_solve(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n || q.nrows() != n || q.ncols() != n {
        return Err(Error::DimensionMismatch {
            what: "lyapunov_solve operands",
            expected: n,
            got: q.nrows().max(a.ncols()),
        });
    }
    let sym_dev = (q - q.transpose()).norm();
    if sym_dev > 1e-10 * q.norm().max(1.0) {
        return Err(Error::InvalidParameter(format!(
            "Lyapunov right-hand side is not symmetric (deviation {sym_dev:.3e})"
        )));
    }
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    // Francis QR can stall at machine-epsilon deflation thresholds on stiff
    // coupled matrices; retry with looser deflation, the residual check below
    // still guards the accuracy of the returned solution.
    let max_iter = 40 * n.max(20);
    let schur = [f64::EPSILON, 1e-12, 1e-10]
        .iter()
        .find_map(|&eps| nalgebra::linalg::Schur::try_new(a.clone(), eps, max_iter))
        .ok_or(Error::SchurFailure { dim: n })?;
    let (u, t) = schur.unpack();
    let c = u.transpose() * (-q) * &u;
    let x_tilde = solve_quasi_triangular(&t, &c)?;
    let x = &u * x_tilde * u.transpose();
    let x = 0.5 * (&x + x.transpose());

    let residual = (a.transpose() * &x + &x * a + q).norm();
    let bound = 1e-10 * (a.norm() * x.norm() + q.norm());
    if residual > bound.max(1e-300) {
        return Err(Error::LyapunovResidual { residual, bound });
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};

    #[test]
    fn negative_identity_gives_half_q() {
        let a = DMatrix::from_diagonal_element(2, 2, -1.0);
        let q = DMatrix::identity(2, 2);
        let x = lyapunov_solve(&a, &q).unwrap();
        assert_relative_eq!((x - DMatrix::from_diagonal_element(2, 2, 0.5)).norm(), 0.0, epsilon = 1e-14);
    }

    /// Diagonal spectrum closed form: X_ij = Q_ij / (lambda_i + lambda_j).
    #[test]
    fn diagonal_spectrum_closed_form() {
        let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![-1.0, -2.0]));
        let q = -DMatrix::from_element(2, 2, 1.0);
        // A'X + XA = -Q  with Q=ones: X_ij = 1/(l_i + l_j)
        let x = lyapunov_solve(&a, &(-q)).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[0.5, 1.0 / 3.0, 1.0 / 3.0, 0.25]);
        assert_relative_eq!((x - expected).norm(), 0.0, epsilon = 1e-13);
    }

    #[test]
    fn random_stable_system_meets_residual_bound() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for trial in 0..5 {
            let n = 8;
            let mut a = DMatrix::from_fn(n, n, |_, _| rng.gen::<f64>() - 0.5);
            for i in 0..n {
                a[(i, i)] -= 3.0; // shift left
            }
            let b = DMatrix::from_fn(n, n, |_, _| rng.gen::<f64>() - 0.5);
            let q = &b + b.transpose();
            let x = lyapunov_solve(&a, &q).unwrap();
            let residual = (a.transpose() * &x + &x * &a + &q).norm();
            let bound = 1e-10 * (a.norm() * x.norm() + q.norm());
            assert!(residual <= bound, "trial {trial}: {residual:.2e} > {bound:.2e}");
        }
    }

    #[test]
    fn complex_pair_blocks_are_handled() {
        // eigenvalues -1 +- 2i and -3
        let a = DMatrix::from_row_slice(
            3,
            3,
            &[-1.0, 2.0, 0.3, -2.0, -1.0, 0.1, 0.0, 0.0, -3.0],
        );
        let q = DMatrix::identity(3, 3);
        let x = lyapunov_solve(&a, &q).unwrap();
        let residual = (a.transpose() * &x + &x * &a + &q).norm();
        assert!(residual <= 1e-12);
    }

    #[test]
    fn opposite_eigenvalues_are_rejected() {
        let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, -1.0]));
        let q = DMatrix::identity(2, 2);
        let err = lyapunov_solve(&a, &q).unwrap_err();
        assert!(matches!(err, Error::LyapunovIllPosed { .. }), "{err}");
    }

    #[test]
    fn solution_is_symmetric_for_symmetric_q() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let n = 12;
        let mut a = DMatrix::from_fn(n, n, |_, _| rng.gen::<f64>() - 0.5);
        for i in 0..n {
            a[(i, i)] -= 4.0;
        }
        let b = DMatrix::from_fn(n, n, |_, _| rng.gen::<f64>() - 0.5);
        let q = &b + b.transpose();
        let x = lyapunov_solve(&a, &q).unwrap();
        assert_relative_eq!((&x - x.transpose()).norm(), 0.0, epsilon = 1e-12);
    }
}
