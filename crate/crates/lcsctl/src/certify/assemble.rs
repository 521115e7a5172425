//! Assembly of the certification LMIs.
//!
//! Both bound inequalities live on the basis `xi = [x; lam; 1]` and the
//! decrease inequality on `zeta = [x; lam; lamdot; 1; rho; mu]`, where
//! `rho = -d/dt(Ex + F lam + c)` and `mu = -lamdot` are slack coordinates for
//! the equalities that hold along differentiable stretches of a solution.
//! Every assembler returns the matrix that must be positive semidefinite.
//!
//! The same assemblers serve verification (Lyapunov parameters symbolic,
//! loop matrices numeric) and the gain-update step of synthesis (parameters
//! numeric, loop matrices affine in the gains); [`ExprMat`] keeps every
//! product affine by construction.

use nalgebra::{DMatrix, DVector};

use super::expr::{Aff, ExprMat, VarReg};
use super::Certificate;

/// Lyapunov parameters, reduced (`~W`) and composed forms.
pub(crate) struct VForm {
    pub p: ExprMat,
    pub q_tilde: ExprMat,
    pub r_tilde: ExprMat,
    pub p_vec: ExprMat,
    pub r_tilde_vec: ExprMat,
    pub z: Aff,
    pub w_map: DMatrix<f64>,
    /// `Q = Qt W`, `n x m`.
    pub q: ExprMat,
    /// `R = W' Rt W`, `m x m`.
    pub r: ExprMat,
    /// `r = W' rt`, `m x 1`.
    pub r_vec: ExprMat,
}

impl VForm {
    fn compose(
        p: ExprMat,
        q_tilde: ExprMat,
        r_tilde: ExprMat,
        p_vec: ExprMat,
        r_tilde_vec: ExprMat,
        z: Aff,
        w_map: &DMatrix<f64>,
    ) -> VForm {
        let q = q_tilde.right_mul(w_map);
        let r = r_tilde.congruence(w_map);
        let r_vec = r_tilde_vec.left_mul(&w_map.transpose());
        VForm {
            p,
            q_tilde,
            r_tilde,
            p_vec,
            r_tilde_vec,
            z,
            w_map: w_map.clone(),
            q,
            r,
            r_vec,
        }
    }

    /// Fresh symbolic parameters. With `affine` false the linear and constant
    /// parts are pinned to zero.
    pub fn symbolic(reg: &mut VarReg, n: usize, w_map: &DMatrix<f64>, affine: bool) -> VForm {
        let nw = w_map.nrows();
        let (p, _) = reg.symmetric(n);
        let q_tilde = reg.general(n, nw, |_, _| true);
        let (r_tilde, _) = reg.symmetric(nw);
        let (p_vec, r_tilde_vec, z) = if affine {
            (reg.vector(n), reg.vector(nw), Aff::var(reg.scalar()))
        } else {
            (ExprMat::zeros(n, 1), ExprMat::zeros(nw, 1), Aff::zero())
        };
        VForm::compose(p, q_tilde, r_tilde, p_vec, r_tilde_vec, z, w_map)
    }

    /// Numeric parameters from an existing certificate.
    pub fn numeric(cert: &Certificate) -> VForm {
        VForm::compose(
            ExprMat::from_numeric(&cert.p_mat),
            ExprMat::from_numeric(&cert.q_tilde),
            ExprMat::from_numeric(&cert.r_tilde),
            ExprMat::from_numeric(&DMatrix::from_column_slice(cert.p_vec.len(), 1, cert.p_vec.as_slice())),
            ExprMat::from_numeric(&DMatrix::from_column_slice(
                cert.r_tilde_vec.len(),
                1,
                cert.r_tilde_vec.as_slice(),
            )),
            Aff::constant(cert.z),
            &cert.w_map,
        )
    }

    /// Reads the parameter values at an SDP solution point.
    pub fn extract(
        &self,
        x: &DVector<f64>,
        gamma1: f64,
        gamma2: Option<f64>,
        gamma3: f64,
    ) -> Certificate {
        let pv = self.p_vec.eval(x);
        let rv = self.r_tilde_vec.eval(x);
        Certificate {
            w_map: self.w_map.clone(),
            p_mat: self.p.eval(x),
            q_tilde: self.q_tilde.eval(x),
            r_tilde: self.r_tilde.eval(x),
            p_vec: DVector::from_column_slice(pv.as_slice()),
            r_tilde_vec: DVector::from_column_slice(rv.as_slice()),
            z: self.z.eval(x),
            gamma1,
            gamma2,
            gamma3,
        }
    }

    /// Quadratic form of `V` on `[x; lam; 1]`.
    pub fn mv(&self) -> ExprMat {
        let n = self.p.nrows();
        let m = self.q.ncols();
        let nb = n + m + 1;
        let mut mv = ExprMat::zeros(nb, nb);
        mv.set_block(0, 0, &self.p);
        mv.set_block(0, n, &self.q);
        mv.set_block(n, 0, &self.q.transpose());
        mv.set_block(n, n, &self.r);
        mv.add_block(0, nb - 1, &self.p_vec, 0.5);
        mv.add_block(nb - 1, 0, &self.p_vec.transpose(), 0.5);
        mv.add_block(n, nb - 1, &self.r_vec, 0.5);
        mv.add_block(nb - 1, n, &self.r_vec.transpose(), 0.5);
        *mv.at_mut(nb - 1, nb - 1) = self.z.clone();
        mv
    }
}

/// `[E F c; 0 I 0; 0 0 1]`: stacks the nonnegative quantities of the
/// complementarity set over the bound basis.
pub(crate) fn s1_matrix(e: &DMatrix<f64>, f: &DMatrix<f64>, c: &DVector<f64>) -> DMatrix<f64> {
    let (m, n) = (e.nrows(), e.ncols());
    let nb = n + m + 1;
    let mut s1 = DMatrix::zeros(2 * m + 1, nb);
    s1.view_mut((0, 0), (m, n)).copy_from(e);
    s1.view_mut((0, n), (m, m)).copy_from(f);
    s1.view_mut((0, nb - 1), (m, 1)).copy_from(c);
    s1.view_mut((m, n), (m, m)).copy_from(&DMatrix::identity(m, m));
    s1[(2 * m, nb - 1)] = 1.0;
    s1
}

/// Same stack over the decrease basis (zeros on the `lamdot/rho/mu` columns).
pub(crate) fn s3_matrix(e: &DMatrix<f64>, f: &DMatrix<f64>, c: &DVector<f64>) -> DMatrix<f64> {
    let (m, n) = (e.nrows(), e.ncols());
    let nd = n + 4 * m + 1;
    let mut s3 = DMatrix::zeros(2 * m + 1, nd);
    s3.view_mut((0, 0), (m, n)).copy_from(e);
    s3.view_mut((0, n), (m, m)).copy_from(f);
    s3.view_mut((0, n + 2 * m), (m, 1)).copy_from(c);
    s3.view_mut((m, n), (m, m)).copy_from(&DMatrix::identity(m, m));
    s3[(2 * m, n + 2 * m)] = 1.0;
    s3
}

/// `[E F c]` rows over the bound basis, without the identity block.
fn gap_rows_bound(e: &DMatrix<f64>, f: &DMatrix<f64>, c: &DVector<f64>) -> DMatrix<f64> {
    let (m, n) = (e.nrows(), e.ncols());
    let mut g = DMatrix::zeros(m, n + m + 1);
    g.view_mut((0, 0), (m, n)).copy_from(e);
    g.view_mut((0, n), (m, m)).copy_from(f);
    g.view_mut((0, n + m), (m, 1)).copy_from(c);
    g
}

/// `[E F 0 c 0 0]` rows over the decrease basis.
fn gap_rows_decrease(e: &DMatrix<f64>, f: &DMatrix<f64>, c: &DVector<f64>) -> DMatrix<f64> {
    let (m, n) = (e.nrows(), e.ncols());
    let mut g = DMatrix::zeros(m, n + 4 * m + 1);
    g.view_mut((0, 0), (m, n)).copy_from(e);
    g.view_mut((0, n), (m, m)).copy_from(f);
    g.view_mut((0, n + 2 * m), (m, 1)).copy_from(c);
    g
}

/// Zero matrix of the given size with `block` placed at `(r0, c0)`.
fn embedded(total: usize, r0: usize, c0: usize, block: &ExprMat) -> ExprMat {
    let mut m = ExprMat::zeros(total, total);
    m.set_block(r0, c0, block);
    m
}

/// Lower bound LMI: `M_V - gamma1 I_x - S1' W1 S1 - sym(J1 rows) >= 0`.
pub(crate) fn lower_bound_psd(
    v: &VForm,
    e: &DMatrix<f64>,
    f: &DMatrix<f64>,
    c: &DVector<f64>,
    gamma1: f64,
    w1: &ExprMat,
    j1: &ExprMat,
) -> ExprMat {
    let (m, n) = (e.nrows(), e.ncols());
    let nb = n + m + 1;
    let mut out = v.mv();
    for i in 0..n {
        out.at_mut(i, i).constant -= gamma1;
    }
    let s1 = s1_matrix(e, f, c);
    out.add_scaled(&w1.congruence(&s1), -1.0);
    let rows = j1.right_mul(&gap_rows_bound(e, f, c));
    out.add_scaled(&embedded(nb, n, 0, &rows).sym_half(), -1.0);
    out
}

/// Upper bound LMI, negated to PSD form:
/// `gamma2 I_x - M_V - S1' W2 S1 - sym(J2 rows) >= 0`.
pub(crate) fn upper_bound_psd(
    v: &VForm,
    e: &DMatrix<f64>,
    f: &DMatrix<f64>,
    c: &DVector<f64>,
    gamma2: &Aff,
    w2: &ExprMat,
    j2: &ExprMat,
) -> ExprMat {
    let (m, n) = (e.nrows(), e.ncols());
    let nb = n + m + 1;
    let mut out = ExprMat::zeros(nb, nb);
    out.add_scaled(&v.mv(), -1.0);
    for i in 0..n {
        out.at_mut(i, i).add_scaled(gamma2, 1.0);
    }
    let s1 = s1_matrix(e, f, c);
    out.add_scaled(&w2.congruence(&s1), -1.0);
    let rows = j2.right_mul(&gap_rows_bound(e, f, c));
    out.add_scaled(&embedded(nb, n, 0, &rows).sym_half(), -1.0);
    out
}

/// Multipliers of the decrease inequality.
pub(crate) struct DecreaseMults {
    /// Copositive block on `[gap; lam; 1]`, entrywise nonnegative.
    pub w3: ExprMat,
    /// Free diagonal on `lam o gap = 0`.
    pub j3_lam: ExprMat,
    /// Free diagonal on `lamdot o gap = 0` (valid on differentiable stretches).
    pub j3_ld: ExprMat,
    /// Free vector on `E xdot + F lamdot + rho = 0`. Held numeric during the
    /// gain-update step, since it multiplies the loop matrices.
    pub j4: ExprMat,
    /// Free vector on `lamdot + mu = 0`.
    pub j5: ExprMat,
    /// Free diagonals on `lam o rho = 0`, `rho o mu = 0`, `gap o mu = 0`.
    pub th7: ExprMat,
    pub th8: ExprMat,
    pub th9: ExprMat,
}

impl DecreaseMults {
    /// Registers fresh multipliers; `j4` may be pinned to a numeric value.
    /// Returns the bundle plus the entry variables of `w3` (sign constrained
    /// by the caller).
    pub fn symbolic(reg: &mut VarReg, m: usize, j4: Option<&DVector<f64>>) -> (Self, Vec<usize>) {
        let (w3, w3_entries) = reg.symmetric(2 * m + 1);
        let j3_lam = reg.diagonal(m);
        let j3_ld = reg.diagonal(m);
        let j4 = match j4 {
            Some(val) => ExprMat::from_numeric(&DMatrix::from_column_slice(m, 1, val.as_slice())),
            None => reg.vector(m),
        };
        let j5 = reg.vector(m);
        let th7 = reg.vector(m);
        let th8 = reg.vector(m);
        let th9 = reg.vector(m);
        (
            DecreaseMults { w3, j3_lam, j3_ld, j4, j5, th7, th8, th9 },
            w3_entries,
        )
    }
}

/// Decrease LMI, negated to PSD form:
/// `-T3 - gamma3 I_x - S3' W3 S3 - sym(equality terms) >= 0`,
/// where `zeta' T3 zeta = dV/dt` along solutions.
pub(crate) fn decrease_psd(
    v: &VForm,
    a_cl: &ExprMat,
    d_cl: &ExprMat,
    a0: &DVector<f64>,
    e: &DMatrix<f64>,
    f: &DMatrix<f64>,
    c: &DVector<f64>,
    gamma3: f64,
    mults: &DecreaseMults,
) -> ExprMat {
    let (m, n) = (e.nrows(), e.ncols());
    let nd = n + 4 * m + 1;
    let (ox, ol, old, o1, orho, omu) = (0, n, n + m, n + 2 * m, n + 2 * m + 1, n + 3 * m + 1);
    let a0_col = ExprMat::from_numeric(&DMatrix::from_column_slice(n, 1, a0.as_slice()));

    // Asymmetric carrier of dV/dt: gradient-in-x times xdot plus
    // gradient-in-lam times lamdot, laid out block by block.
    let mut u = ExprMat::zeros(nd, nd);
    let two_p = {
        let mut t = v.p.clone();
        t.scale(2.0);
        t
    };
    let two_qt = {
        let mut t = v.q.transpose();
        t.scale(2.0);
        t
    };
    u.add_block(ox, ox, &two_p.mul(a_cl), 1.0);
    u.add_block(ox, ol, &two_p.mul(d_cl), 1.0);
    u.add_block(ox, o1, &two_p.mul(&a0_col), 1.0);
    u.add_block(ox, old, &v.q, 2.0);
    u.add_block(ol, ox, &two_qt.mul(a_cl), 1.0);
    u.add_block(ol, ol, &two_qt.mul(d_cl), 1.0);
    u.add_block(ol, o1, &two_qt.mul(&a0_col), 1.0);
    u.add_block(ol, old, &v.r, 2.0);
    let pv_t = v.p_vec.transpose();
    u.add_block(o1, ox, &pv_t.mul(a_cl), 1.0);
    u.add_block(o1, ol, &pv_t.mul(d_cl), 1.0);
    u.add_block(o1, o1, &pv_t.mul(&a0_col), 1.0);
    u.add_block(o1, old, &v.r_vec.transpose(), 1.0);

    let mut out = ExprMat::zeros(nd, nd);
    out.add_scaled(&u.sym_half(), -1.0);
    for i in 0..n {
        out.at_mut(i, i).constant -= gamma3;
    }

    let s3 = s3_matrix(e, f, c);
    out.add_scaled(&mults.w3.congruence(&s3), -1.0);

    let gap = gap_rows_decrease(e, f, c);
    out.add_scaled(&embedded(nd, ol, 0, &mults.j3_lam.right_mul(&gap)).sym_half(), -1.0);
    out.add_scaled(&embedded(nd, old, 0, &mults.j3_ld.right_mul(&gap)).sym_half(), -1.0);

    // j4' (E xdot + F lamdot + rho) with xdot = A x + D lam + a.
    let j4t = mults.j4.transpose();
    let mut row4 = ExprMat::zeros(1, nd);
    row4.set_block(0, ox, &j4t.mul(&a_cl.left_mul(e)));
    row4.set_block(0, ol, &j4t.mul(&d_cl.left_mul(e)));
    row4.set_block(0, old, &j4t.right_mul(f));
    row4.set_block(0, o1, &j4t.mul(&a0_col.left_mul(e)));
    row4.set_block(0, orho, &j4t);
    out.add_scaled(&embedded(nd, o1, 0, &row4).sym_half(), -1.0);

    // j5' (lamdot + mu).
    let j5t = mults.j5.transpose();
    let mut row5 = ExprMat::zeros(1, nd);
    row5.set_block(0, old, &j5t);
    row5.set_block(0, omu, &j5t);
    out.add_scaled(&embedded(nd, o1, 0, &row5).sym_half(), -1.0);

    out.add_scaled(&embedded(nd, ol, orho, &mults.th7.into_diag()).sym_half(), -1.0);
    out.add_scaled(&embedded(nd, orho, omu, &mults.th8.into_diag()).sym_half(), -1.0);
    out.add_scaled(&embedded(nd, omu, 0, &mults.th9.into_diag().mul(&ExprMat::from_numeric(&gap))).sym_half(), -1.0);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_vform(rng: &mut ChaCha8Rng, n: usize, m: usize) -> (VForm, Certificate) {
        let w_map = DMatrix::identity(m, m);
        let p_raw = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let cert = Certificate {
            w_map: w_map.clone(),
            p_mat: (&p_raw + p_raw.transpose()) * 0.5,
            q_tilde: DMatrix::from_fn(n, m, |_, _| rng.gen_range(-1.0..1.0)),
            r_tilde: {
                let r = DMatrix::from_fn(m, m, |_, _| rng.gen_range(-1.0..1.0));
                (&r + r.transpose()) * 0.5
            },
            p_vec: DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0)),
            r_tilde_vec: DVector::from_fn(m, |_, _| rng.gen_range(-1.0..1.0)),
            z: rng.gen_range(-1.0..1.0),
            gamma1: 0.0,
            gamma2: None,
            gamma3: 0.0,
        };
        (VForm::numeric(&cert), cert)
    }

    #[test]
    fn mv_quadratic_form_evaluates_v() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let (n, m) = (3, 2);
        let (vf, cert) = random_vform(&mut rng, n, m);
        let mv = vf.mv().eval(&DVector::zeros(0));
        for _ in 0..10 {
            let x = DVector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0));
            let lam = DVector::from_fn(m, |_, _| rng.gen_range(-2.0..2.0));
            let mut xi = DVector::zeros(n + m + 1);
            xi.rows_mut(0, n).copy_from(&x);
            xi.rows_mut(n, m).copy_from(&lam);
            xi[n + m] = 1.0;
            let quad = (xi.transpose() * &mv * &xi)[(0, 0)];
            let direct = cert.value(&x, &lam);
            assert!((quad - direct).abs() < 1e-12, "{quad} vs {direct}");
        }
    }

    #[test]
    fn decrease_carrier_matches_analytic_derivative() {
        // With all multipliers zero and gamma3 = 0 the assembled matrix is
        // exactly -T3, so zeta' out zeta must equal -dV/dt for any zeta whose
        // constant coordinate is one.
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let (n, m) = (3, 2);
        let (vf, cert) = random_vform(&mut rng, n, m);
        let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let d = DMatrix::from_fn(n, m, |_, _| rng.gen_range(-1.0..1.0));
        let a0 = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let e = DMatrix::from_fn(m, n, |_, _| rng.gen_range(-1.0..1.0));
        let f = DMatrix::from_fn(m, m, |_, _| rng.gen_range(-1.0..1.0));
        let c = DVector::from_fn(m, |_, _| rng.gen_range(-1.0..1.0));
        let zero_mults = DecreaseMults {
            w3: ExprMat::zeros(2 * m + 1, 2 * m + 1),
            j3_lam: ExprMat::zeros(m, m),
            j3_ld: ExprMat::zeros(m, m),
            j4: ExprMat::zeros(m, 1),
            j5: ExprMat::zeros(m, 1),
            th7: ExprMat::zeros(m, 1),
            th8: ExprMat::zeros(m, 1),
            th9: ExprMat::zeros(m, 1),
        };
        let out = decrease_psd(
            &vf,
            &ExprMat::from_numeric(&a),
            &ExprMat::from_numeric(&d),
            &a0,
            &e,
            &f,
            &c,
            0.0,
            &zero_mults,
        )
        .eval(&DVector::zeros(0));

        for _ in 0..10 {
            let x = DVector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0));
            let lam = DVector::from_fn(m, |_, _| rng.gen_range(-2.0..2.0));
            let ld = DVector::from_fn(m, |_, _| rng.gen_range(-2.0..2.0));
            let rho = DVector::from_fn(m, |_, _| rng.gen_range(-2.0..2.0));
            let mu = DVector::from_fn(m, |_, _| rng.gen_range(-2.0..2.0));
            let nd = n + 4 * m + 1;
            let mut zeta = DVector::zeros(nd);
            zeta.rows_mut(0, n).copy_from(&x);
            zeta.rows_mut(n, m).copy_from(&lam);
            zeta.rows_mut(n + m, m).copy_from(&ld);
            zeta[n + 2 * m] = 1.0;
            zeta.rows_mut(n + 2 * m + 1, m).copy_from(&rho);
            zeta.rows_mut(n + 3 * m + 1, m).copy_from(&mu);
            let quad = (zeta.transpose() * &out * &zeta)[(0, 0)];

            let xdot = &a * &x + &d * &lam + &a0;
            let grad_x = 2.0 * &cert.p_mat * &x + 2.0 * &cert.q_tilde * &lam + &cert.p_vec;
            let grad_l =
                2.0 * cert.q_tilde.transpose() * &x + 2.0 * &cert.r_tilde * &lam + &cert.r_tilde_vec;
            let dv = grad_x.dot(&xdot) + grad_l.dot(&ld);
            assert!((quad + dv).abs() < 1e-11, "{quad} vs {}", -dv);
        }
    }

    #[test]
    fn equality_terms_vanish_on_consistent_points() {
        // At points satisfying the multiplied equalities, the full assembled
        // form equals -dV/dt regardless of the multiplier values.
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let (n, m) = (2, 2);
        let (vf, cert) = random_vform(&mut rng, n, m);
        let a: DMatrix<f64> = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let d: DMatrix<f64> = DMatrix::from_fn(n, m, |_, _| rng.gen_range(-1.0..1.0));
        let a0 = DVector::zeros(n);
        let e: DMatrix<f64> = DMatrix::from_fn(m, n, |_, _| rng.gen_range(-1.0..1.0));
        let f: DMatrix<f64> = DMatrix::from_fn(m, m, |_, _| rng.gen_range(-1.0..1.0));

        let mut reg = VarReg::new();
        let (mults, _) = DecreaseMults::symbolic(&mut reg, m, None);
        // Random multiplier values; W3 zeroed so only equality terms remain.
        let mut point = DVector::from_fn(reg.len(), |_, _| rng.gen_range(-1.0..1.0));
        let w3_dim = (2 * m + 1) * (2 * m + 2) / 2;
        for i in 0..w3_dim {
            point[i] = 0.0;
        }

        // Consistent point: lam active on contact 0 only, gap_0 = 0.
        // Choose x with e_row0 . x = -c_0 given lam, then lamdot free on the
        // active contact, rho = -(E xdot + F lamdot), mu = -lamdot.
        let lam = DVector::from_vec(vec![rng.gen_range(0.1..1.0), 0.0]);
        let mut c = DVector::from_fn(m, |_, _| rng.gen_range(0.1..1.0));
        let x = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let gap0 = e.row(0).transpose().dot(&x) + f.row(0).transpose().dot(&lam);
        c[0] = -gap0;
        let xdot = &a * &x + &d * &lam;
        // Active contact 0: keep d/dt gap_0 = 0 so lam o rho vanishes;
        // inactive contact 1: lamdot_1 = 0 so gap o mu vanishes.
        let erow0_xdot = e.row(0).transpose().dot(&xdot);
        let f00 = f[(0, 0)];
        let mut ld = DVector::zeros(m);
        ld[0] = if f00.abs() > 1e-9 { -erow0_xdot / f00 } else { 0.0 };
        let rho = -(&e * &xdot + &f * &ld);
        let mu = -&ld;
        assert!(rho[0].abs() < 1e-9);

        let out = decrease_psd(
            &vf,
            &ExprMat::from_numeric(&a),
            &ExprMat::from_numeric(&d),
            &a0,
            &e,
            &f,
            &c,
            0.0,
            &mults,
        );
        let m_at_point = out.eval(&point);

        let nd = n + 4 * m + 1;
        let mut zeta = DVector::zeros(nd);
        zeta.rows_mut(0, n).copy_from(&x);
        zeta.rows_mut(n, m).copy_from(&lam);
        zeta.rows_mut(n + m, m).copy_from(&ld);
        zeta[n + 2 * m] = 1.0;
        zeta.rows_mut(n + 2 * m + 1, m).copy_from(&rho);
        zeta.rows_mut(n + 3 * m + 1, m).copy_from(&mu);
        let quad = (zeta.transpose() * &m_at_point * &zeta)[(0, 0)];

        let grad_x = 2.0 * &cert.p_mat * &x + 2.0 * &cert.q_tilde * &lam + &cert.p_vec;
        let grad_l =
            2.0 * cert.q_tilde.transpose() * &x + 2.0 * &cert.r_tilde * &lam + &cert.r_tilde_vec;
        let dv = grad_x.dot(&xdot) + grad_l.dot(&ld);
        assert!((quad + dv).abs() < 1e-9, "{quad} vs {}", -dv);
    }
}
