//! Continuous-time algebraic Riccati solver and LQR gain synthesis.
//!
//! Solves `A'P + PA - PBR^{-1}B'P + Q = 0` for the stabilizing solution via
//! the matrix sign function of the Hamiltonian. Determinant scaling keeps the
//! Newton iteration for the sign function well conditioned, and the stable
//! invariant subspace is extracted with a column-pivoted QR factorization.

use nalgebra::DMatrix;

use super::CertifyError;

/// Relative convergence tolerance for the sign-function Newton iteration.
pub const SIGN_ITER_TOL: f64 = 1e-13;

/// Iteration cap for the sign-function Newton iteration. Convergence is
/// quadratic once the iterates are near the sign, so this is generous.
pub const SIGN_ITER_MAX: usize = 80;

/// Residual tolerance for accepting a Riccati solution, scaled by the data
/// magnitude. The sign iteration loses roughly half the digits of the
/// Hamiltonian's condition number, so this is deliberately loose.
pub const CARE_RESIDUAL_TOL: f64 = 1e-6;

/// Matrix sign function by scaled Newton iteration: `Z <- (cZ + (cZ)^{-1})/2`
/// with `c = |det Z|^{-1/dim}`. Fails if an iterate becomes singular, which
/// happens exactly when the argument has an eigenvalue on the imaginary axis.
fn matrix_sign(h: &DMatrix<f64>) -> Result<DMatrix<f64>, CertifyError> {
    let dim = h.nrows();
    let mut z = h.clone();
    for _ in 0..SIGN_ITER_MAX {
        let lu = z.clone().lu();
        // log|det| from the LU diagonal avoids overflow for larger systems.
        let mut log_det = 0.0;
        for i in 0..dim {
            let u_ii = lu.u()[(i, i)].abs();
            if u_ii == 0.0 {
                return Err(CertifyError::CareSingular);
            }
            log_det += u_ii.ln();
        }
        let scale = (-log_det / dim as f64).exp();
        let zinv = lu
            .try_inverse()
            .ok_or(CertifyError::CareSingular)?;
        let next = (&z * scale + zinv / scale) * 0.5;
        let diff = (&next - &z).norm();
        let denom = z.norm().max(1.0);
        z = next;
        if diff <= SIGN_ITER_TOL * denom {
            return Ok(z);
        }
    }
    Err(CertifyError::CareNoConvergence)
}

/// Stabilizing solution of `A'P + PA - P B R^{-1} B' P + Q = 0`.
///
/// Requires `(A, B)` stabilizable, `(A, Q)` detectable, and `R` symmetric
/// positive definite. The returned `P` is symmetric and the closed-loop
/// matrix `A - B R^{-1} B' P` is Hurwitz; both are checked via the residual.
pub fn solve_care(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<DMatrix<f64>, CertifyError> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n || q.nrows() != n || q.ncols() != n {
        return Err(CertifyError::Dimension {
            context: "solve_care state blocks",
        });
    }
    let nu = b.ncols();
    if r.nrows() != nu || r.ncols() != nu {
        return Err(CertifyError::Dimension {
            context: "solve_care input weight",
        });
    }
    let r_chol = r
        .clone()
        .cholesky()
        .ok_or(CertifyError::CareIndefiniteWeight)?;
    // S = B R^{-1} B'
    let rinv_bt = r_chol.solve(&b.transpose());
    let s = b * &rinv_bt;

    let mut ham = DMatrix::zeros(2 * n, 2 * n);
    ham.view_mut((0, 0), (n, n)).copy_from(a);
    ham.view_mut((0, n), (n, n)).copy_from(&(-&s));
    ham.view_mut((n, 0), (n, n)).copy_from(&(-q));
    ham.view_mut((n, n), (n, n)).copy_from(&(-a.transpose()));

    let sign = matrix_sign(&ham)?;
    // Projector onto the stable invariant subspace of the Hamiltonian.
    let proj = (DMatrix::identity(2 * n, 2 * n) - sign) * 0.5;
    let qr = proj.col_piv_qr();
    let basis = qr.q().columns(0, n).into_owned();

    let u1 = basis.rows(0, n).into_owned();
    let u2 = basis.rows(n, n).into_owned();
    let u1_lu = u1.transpose().lu();
    // P = U2 U1^{-1}, computed as U1' P' = U2' for numerical symmetry.
    let p_t = u1_lu
        .solve(&u2.transpose())
        .ok_or(CertifyError::CareSingular)?;
    let p = (&p_t + p_t.transpose()) * 0.5;

    let residual = a.transpose() * &p + &p * a - &p * &s * &p + q;
    let scale = q.norm().max(p.norm()).max(1.0);
    if residual.norm() > CARE_RESIDUAL_TOL * scale {
        return Err(CertifyError::CareResidual {
            residual: residual.norm(),
        });
    }
    Ok(p)
}

/// LQR state-feedback gain for `u = K x`: `K = -R^{-1} B' P` with `P` the
/// stabilizing Riccati solution.
pub fn lqr_gain(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<DMatrix<f64>, CertifyError> {
    let p = solve_care(a, b, q, r)?;
    let r_chol = r
        .clone()
        .cholesky()
        .ok_or(CertifyError::CareIndefiniteWeight)?;
    Ok(-r_chol.solve(&(b.transpose() * p)))
}

/// Real parts of the eigenvalues of a square matrix, sorted ascending.
pub fn eigenvalue_real_parts(m: &DMatrix<f64>) -> Vec<f64> {
    let schur = m.clone().schur();
    let complex = schur.complex_eigenvalues();
    let mut re: Vec<f64> = complex.iter().map(|c| c.re).collect();
    re.sort_by(|x, y| x.partial_cmp(y).unwrap());
    re
}

/// Spectral abscissa: the largest eigenvalue real part.
pub fn spectral_abscissa(m: &DMatrix<f64>) -> f64 {
    *eigenvalue_real_parts(m).last().expect("nonempty spectrum")
}

/// True when every eigenvalue of `m` has real part below `-margin`.
pub fn is_hurwitz(m: &DMatrix<f64>, margin: f64) -> bool {
    spectral_abscissa(m) < -margin
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn riccati_residual(
        a: &DMatrix<f64>,
        b: &DMatrix<f64>,
        q: &DMatrix<f64>,
        r: &DMatrix<f64>,
        p: &DMatrix<f64>,
    ) -> f64 {
        let rinv_bt = r.clone().cholesky().unwrap().solve(&b.transpose());
        let s = b * rinv_bt;
        (a.transpose() * p + p * a - p * &s * p + q).norm()
    }

    #[test]
    fn scalar_care_matches_closed_form() {
        // a=0, b=1, q=1, r=1: p^2 = 1 so p = 1, k = -1.
        let a = DMatrix::from_element(1, 1, 0.0);
        let b = DMatrix::from_element(1, 1, 1.0);
        let q = DMatrix::identity(1, 1);
        let r = DMatrix::identity(1, 1);
        let p = solve_care(&a, &b, &q, &r).unwrap();
        assert_relative_eq!(p[(0, 0)], 1.0, epsilon = 1e-12);
        let k = lqr_gain(&a, &b, &q, &r).unwrap();
        assert_relative_eq!(k[(0, 0)], -1.0, epsilon = 1e-12);
    }

    #[test]
    fn cart_pole_gain_matches_reference() {
        // Frozen output of an independent Riccati solver on the cart-pole
        // linearization with Q = 100 I, R = 1.
        let a = DMatrix::from_row_slice(
            4,
            4,
            &[
                0.0, 0.0, 1.0, 0.0, //
                0.0, 0.0, 0.0, 1.0, //
                0.0, 0.981, 0.0, 0.0, //
                0.0, 21.582, 0.0, 0.0,
            ],
        );
        let b = DMatrix::from_column_slice(4, 1, &[0.0, 0.0, 1.0, 2.0]);
        let q = 100.0 * DMatrix::identity(4, 4);
        let r = DMatrix::identity(1, 1);
        let k = lqr_gain(&a, &b, &q, &r).unwrap();
        let expect = [10.0, -91.7719537329, 16.2818544512, -22.6933137561];
        for (i, e) in expect.iter().enumerate() {
            assert_relative_eq!(k[(0, i)], *e, epsilon = 1e-7);
        }
        let acl = &a + &b * &k;
        assert!(is_hurwitz(&acl, 0.5));
    }

    #[test]
    fn acrobot_gain_matches_reference() {
        // Frozen output of an independent Riccati solver on the acrobot
        // linearization with Q = 100 I, R = 1.
        let a = DMatrix::from_row_slice(
            4,
            4,
            &[
                0.0, 0.0, 1.0, 0.0, //
                0.0, 0.0, 0.0, 1.0, //
                19.62, -39.24, 0.0, 0.0, //
                -19.62, 68.67, 0.0, 0.0,
            ],
        );
        let b = DMatrix::from_column_slice(4, 1, &[0.0, 0.0, -12.0, 19.0]);
        let q = 100.0 * DMatrix::identity(4, 4);
        let r = DMatrix::identity(1, 1);
        let k = lqr_gain(&a, &b, &q, &r).unwrap();
        let expect = [
            1476.3334266434,
            851.6756911965,
            548.8085644486,
            334.4344447849,
        ];
        for (i, e) in expect.iter().enumerate() {
            assert_relative_eq!(k[(0, i)], *e, epsilon = 1e-4, max_relative = 1e-8);
        }
        let acl = &a + &b * &k;
        assert!(is_hurwitz(&acl, 0.5));
    }

    #[test]
    fn random_systems_satisfy_riccati_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x11CA);
        for trial in 0..20 {
            let n = 2 + (trial % 4);
            let nu = 1 + (trial % 2);
            let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
            let b = DMatrix::from_fn(n, nu, |_, _| rng.gen_range(-1.0..1.0));
            // Q = C'C + I keeps the pair detectable.
            let c = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
            let q = c.transpose() * &c + DMatrix::identity(n, n);
            let r = DMatrix::identity(nu, nu);
            let p = solve_care(&a, &b, &q, &r).unwrap();
            assert!((&p - p.transpose()).norm() < 1e-10);
            // Stabilizing solution: P > 0 and closed loop Hurwitz.
            assert!(p.clone().cholesky().is_some(), "trial {trial}: P not PD");
            let res = riccati_residual(&a, &b, &q, &r, &p);
            assert!(res < 1e-8 * q.norm().max(p.norm()), "trial {trial}: residual {res}");
            let k = lqr_gain(&a, &b, &q, &r).unwrap();
            assert!(is_hurwitz(&(&a + &b * &k), 0.0), "trial {trial}: not Hurwitz");
        }
    }

    #[test]
    fn imaginary_axis_eigenvalues_are_rejected() {
        // Undamped oscillator with no control authority and no state cost:
        // the Hamiltonian has purely imaginary eigenvalues.
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let b = DMatrix::zeros(2, 1);
        let q = DMatrix::zeros(2, 2);
        let r = DMatrix::identity(1, 1);
        assert!(solve_care(&a, &b, &q, &r).is_err());
    }
}
