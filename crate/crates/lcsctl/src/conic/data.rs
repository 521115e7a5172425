//! Problem representations and their KKT reductions.
//!
//! [`DenseProgram`] holds a general dense `G` with optional equalities and
//! reduces the KKT system onto the scalar variables:
//! `[[G' (WW')^-1 G, A'], [A, 0]]`. Right for LMI-form problems where the
//! variable count is far below the cone dimension.
//!
//! [`StandardProgram`] holds `min c_u'u + c_x'x_c` over `A_u u + A_c x_c = b`,
//! `x_c in K`, i.e. `G = [0 -I]`, `h = 0`. Eliminating the cone block reduces
//! onto `[[0, A_u'], [A_u, -A_c WW' A_c']]`, sized by free variables plus
//! equality rows. Right for sum-of-squares problems where the cone dimension
//! dwarfs both.

use nalgebra::{DMatrix, DVector};

use super::cone::{ConeLayout, Scaling};
use super::hsde::{ConeProgram, ConicError};

/// Dense-`G` cone program (inequality form).
pub struct DenseProgram {
    pub layout: ConeLayout,
    pub c: DVector<f64>,
    pub g: DMatrix<f64>,
    pub h: DVector<f64>,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    ghat: DMatrix<f64>,
    lu: Option<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
}

impl DenseProgram {
    pub fn new(
        layout: ConeLayout,
        c: DVector<f64>,
        g: DMatrix<f64>,
        h: DVector<f64>,
        a: DMatrix<f64>,
        b: DVector<f64>,
    ) -> Result<Self, ConicError> {
        let n = c.len();
        if g.ncols() != n || g.nrows() != layout.dim() || h.len() != layout.dim() {
            return Err(ConicError::Dimension(format!(
                "G {}x{}, h {}, cone dim {}, n {}",
                g.nrows(),
                g.ncols(),
                h.len(),
                layout.dim(),
                n
            )));
        }
        if a.ncols() != n || a.nrows() != b.len() {
            return Err(ConicError::Dimension(format!(
                "A {}x{} vs b {}",
                a.nrows(),
                a.ncols(),
                b.len()
            )));
        }
        Ok(DenseProgram { layout, c, g, h, a, b, ghat: DMatrix::zeros(0, 0), lu: None })
    }
}

impl ConeProgram for DenseProgram {
    fn layout(&self) -> &ConeLayout {
        &self.layout
    }
    fn n(&self) -> usize {
        self.c.len()
    }
    fn p(&self) -> usize {
        self.b.len()
    }
    fn c(&self) -> &DVector<f64> {
        &self.c
    }
    fn b(&self) -> &DVector<f64> {
        &self.b
    }
    fn h(&self) -> &DVector<f64> {
        &self.h
    }
    fn g_mul(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.g * x
    }
    fn gt_mul(&self, z: &DVector<f64>) -> DVector<f64> {
        self.g.transpose() * z
    }
    fn a_mul(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.a * x
    }
    fn at_mul(&self, y: &DVector<f64>) -> DVector<f64> {
        self.a.transpose() * y
    }

    fn factor(&mut self, scaling: &Scaling) -> Result<(), ConicError> {
        let n = self.n();
        let p = self.p();
        let mut ghat = DMatrix::zeros(self.layout.dim(), n);
        for j in 0..n {
            let col = self.g.column(j).into_owned();
            ghat.set_column(j, &scaling.apply_winv(&col));
        }
        let nmat = ghat.transpose() * &ghat;
        let mut kkt = DMatrix::zeros(n + p, n + p);
        kkt.view_mut((0, 0), (n, n)).copy_from(&nmat);
        if p > 0 {
            kkt.view_mut((0, n), (n, p)).copy_from(&self.a.transpose());
            kkt.view_mut((n, 0), (p, n)).copy_from(&self.a);
        }
        // Tiny static regularization; the engine refines against exact blocks.
        let reg = 1e-13 * (1.0 + nmat.diagonal().amax());
        for i in 0..n {
            kkt[(i, i)] += reg;
        }
        for i in n..n + p {
            kkt[(i, i)] -= reg;
        }
        let lu = kkt.lu();
        self.ghat = ghat;
        self.lu = Some(lu);
        Ok(())
    }

    fn kkt_solve(
        &self,
        scaling: &Scaling,
        bx: &DVector<f64>,
        by: &DVector<f64>,
        bz: &DVector<f64>,
    ) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
        let n = self.n();
        let p = self.p();
        let wz = scaling.apply_winv(bz);
        let mut rhs = DVector::zeros(n + p);
        rhs.rows_mut(0, n).copy_from(&(bx + self.ghat.transpose() * &wz));
        if p > 0 {
            rhs.rows_mut(n, p).copy_from(by);
        }
        let sol = self.lu.as_ref().expect("factor before solve").solve(&rhs).expect("kkt solve");
        let dx = sol.rows(0, n).into_owned();
        let dy = sol.rows(n, p).into_owned();
        let dz = scaling.apply_wtinv(&(&self.ghat * &dx - wz));
        (dx, dy, dz)
    }
}

/// Sparse equality row over the cone coordinates.
pub type SparseRow = Vec<(usize, f64)>;

/// Standard-form cone program with identified cone slacks.
pub struct StandardProgram {
    pub layout: ConeLayout,
    pub n_free: usize,
    /// Full cost vector `(c_u, c_cone)`.
    c_full: DVector<f64>,
    pub a_u: DMatrix<f64>,
    pub a_cone: Vec<SparseRow>,
    pub b: DVector<f64>,
    h_zero: DVector<f64>,
    lu: Option<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
}

impl StandardProgram {
    pub fn new(
        layout: ConeLayout,
        c_u: DVector<f64>,
        c_cone: DVector<f64>,
        a_u: DMatrix<f64>,
        a_cone: Vec<SparseRow>,
        b: DVector<f64>,
    ) -> Result<Self, ConicError> {
        let cdim = layout.dim();
        if c_cone.len() != cdim {
            return Err(ConicError::Dimension(format!("c_cone {} vs cone {}", c_cone.len(), cdim)));
        }
        let p = b.len();
        if a_u.nrows() != p || a_cone.len() != p || a_u.ncols() != c_u.len() {
            return Err(ConicError::Dimension(format!(
                "A_u {}x{}, sparse rows {}, b {}",
                a_u.nrows(),
                a_u.ncols(),
                a_cone.len(),
                p
            )));
        }
        if let Some(&(idx, _)) = a_cone.iter().flatten().max_by_key(|(i, _)| *i) {
            if idx >= cdim {
                return Err(ConicError::Dimension(format!("cone index {idx} vs dim {cdim}")));
            }
        }
        let mut c_full = DVector::zeros(c_u.len() + cdim);
        c_full.rows_mut(0, c_u.len()).copy_from(&c_u);
        c_full.rows_mut(c_u.len(), cdim).copy_from(&c_cone);
        Ok(StandardProgram {
            layout,
            n_free: c_u.len(),
            c_full,
            a_u,
            a_cone,
            b,
            h_zero: DVector::zeros(cdim),
            lu: None,
        })
    }

    fn cone_row_dot(&self, i: usize, v: &DVector<f64>) -> f64 {
        self.a_cone[i].iter().map(|&(k, coef)| coef * v[k]).sum()
    }

    /// `A_c' y` as a dense cone vector.
    fn cone_rows_t_mul(&self, y: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.layout.dim());
        for (i, row) in self.a_cone.iter().enumerate() {
            let yi = y[i];
            if yi != 0.0 {
                for &(k, coef) in row {
                    out[k] += coef * yi;
                }
            }
        }
        out
    }
}

impl ConeProgram for StandardProgram {
    fn layout(&self) -> &ConeLayout {
        &self.layout
    }
    fn n(&self) -> usize {
        self.n_free + self.layout.dim()
    }
    fn p(&self) -> usize {
        self.b.len()
    }
    fn c(&self) -> &DVector<f64> {
        &self.c_full
    }
    fn b(&self) -> &DVector<f64> {
        &self.b
    }
    fn h(&self) -> &DVector<f64> {
        &self.h_zero
    }
    fn g_mul(&self, x: &DVector<f64>) -> DVector<f64> {
        -x.rows(self.n_free, self.layout.dim()).into_owned()
    }
    fn gt_mul(&self, z: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.n());
        out.rows_mut(self.n_free, self.layout.dim()).copy_from(&(-z));
        out
    }
    fn a_mul(&self, x: &DVector<f64>) -> DVector<f64> {
        let u = x.rows(0, self.n_free).into_owned();
        let xc = x.rows(self.n_free, self.layout.dim()).into_owned();
        let mut out = &self.a_u * u;
        for i in 0..self.p() {
            out[i] += self.cone_row_dot(i, &xc);
        }
        out
    }
    fn at_mul(&self, y: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.n());
        out.rows_mut(0, self.n_free).copy_from(&(self.a_u.transpose() * y));
        out.rows_mut(self.n_free, self.layout.dim()).copy_from(&self.cone_rows_t_mul(y));
        out
    }

    fn factor(&mut self, scaling: &Scaling) -> Result<(), ConicError> {
        let p = self.p();
        let nf = self.n_free;
        // Z = W W' A_c' column by column, then M = A_c Z.
        let mut zmat = DMatrix::zeros(self.layout.dim(), p);
        for i in 0..p {
            let mut col = DVector::zeros(self.layout.dim());
            for &(k, coef) in &self.a_cone[i] {
                col[k] = coef;
            }
            zmat.set_column(i, &scaling.apply_wwt(&col));
        }
        let mut mmat = DMatrix::zeros(p, p);
        for j in 0..p {
            for i in 0..=j {
                let mut acc = 0.0;
                for &(k, coef) in &self.a_cone[i] {
                    acc += coef * zmat[(k, j)];
                }
                mmat[(i, j)] = acc;
                mmat[(j, i)] = acc;
            }
        }
        let mut kkt = DMatrix::zeros(nf + p, nf + p);
        kkt.view_mut((0, nf), (nf, p)).copy_from(&self.a_u.transpose());
        kkt.view_mut((nf, 0), (p, nf)).copy_from(&self.a_u);
        kkt.view_mut((nf, nf), (p, p)).copy_from(&(-&mmat));
        let reg = 1e-13 * (1.0 + mmat.diagonal().amax());
        for i in 0..nf {
            kkt[(i, i)] += reg;
        }
        for i in nf..nf + p {
            kkt[(i, i)] -= reg;
        }
        self.lu = Some(kkt.lu());
        Ok(())
    }

    fn kkt_solve(
        &self,
        scaling: &Scaling,
        bx: &DVector<f64>,
        by: &DVector<f64>,
        bz: &DVector<f64>,
    ) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
        let nf = self.n_free;
        let cdim = self.layout.dim();
        let p = self.p();
        let bx_u = bx.rows(0, nf).into_owned();
        let bx_c = bx.rows(nf, cdim).into_owned();
        // r2 = by + A_c bz - A_c WW' bx_c.
        let wbx = scaling.apply_wwt(&bx_c);
        let mut r2 = by.clone();
        for i in 0..p {
            r2[i] += self.cone_row_dot(i, bz) - self.cone_row_dot(i, &wbx);
        }
        let mut rhs = DVector::zeros(nf + p);
        rhs.rows_mut(0, nf).copy_from(&bx_u);
        rhs.rows_mut(nf, p).copy_from(&r2);
        let sol = self.lu.as_ref().expect("factor before solve").solve(&rhs).expect("kkt solve");
        let du = sol.rows(0, nf).into_owned();
        let dy = sol.rows(nf, p).into_owned();
        let dz = self.cone_rows_t_mul(&dy) - &bx_c;
        let dxc = -bz - scaling.apply_wwt(&dz);
        let mut dx = DVector::zeros(nf + cdim);
        dx.rows_mut(0, nf).copy_from(&du);
        dx.rows_mut(nf, cdim).copy_from(&dxc);
        (dx, dy, dz)
    }
}
