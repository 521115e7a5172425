//! Cone layout, symmetric vectorization and Nesterov-Todd scalings.
//!
//! The cone is a product of one nonnegative orthant block and any number of
//! PSD blocks. PSD blocks are stored in svec form (upper triangle by columns,
//! off-diagonal entries scaled by sqrt(2)) so that the inner product of two
//! svecs equals the trace inner product of the matrices.

use nalgebra::{DMatrix, DVector};

use super::ConicError;

/// Product cone: `nonneg` orthant entries followed by PSD blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConeLayout {
    pub nonneg: usize,
    pub psd: Vec<usize>,
}

impl ConeLayout {
    /// Storage length: orthant entries plus svec lengths.
    pub fn dim(&self) -> usize {
        self.nonneg + self.psd.iter().map(|d| d * (d + 1) / 2).sum::<usize>()
    }

    /// Barrier degree: orthant entries plus PSD dimensions.
    pub fn degree(&self) -> usize {
        self.nonneg + self.psd.iter().sum::<usize>()
    }

    /// The identity element `e` (ones on the orthant, svec of I per block).
    pub fn identity(&self) -> DVector<f64> {
        let mut e = DVector::zeros(self.dim());
        for i in 0..self.nonneg {
            e[i] = 1.0;
        }
        let mut off = self.nonneg;
        for &d in &self.psd {
            for j in 0..d {
                e[off + j * (j + 1) / 2 + j] = 1.0;
            }
            off += d * (d + 1) / 2;
        }
        e
    }

    /// Offsets of each PSD block into the storage vector.
    pub fn psd_offsets(&self) -> Vec<usize> {
        let mut off = self.nonneg;
        let mut out = Vec::with_capacity(self.psd.len());
        for &d in &self.psd {
            out.push(off);
            off += d * (d + 1) / 2;
        }
        out
    }
}

pub const SQRT2: f64 = std::f64::consts::SQRT_2;

/// Index of entry (i, j), i <= j, within an svec block.
#[inline]
pub fn svec_index(i: usize, j: usize) -> usize {
    debug_assert!(i <= j);
    j * (j + 1) / 2 + i
}

/// Packs a symmetric matrix into svec form.
pub fn svec(m: &DMatrix<f64>) -> DVector<f64> {
    let d = m.nrows();
    let mut v = DVector::zeros(d * (d + 1) / 2);
    for j in 0..d {
        for i in 0..=j {
            v[svec_index(i, j)] = if i == j { m[(i, j)] } else { SQRT2 * 0.5 * (m[(i, j)] + m[(j, i)]) };
        }
    }
    v
}

/// Unpacks an svec block into a symmetric matrix.
pub fn smat(v: &[f64], d: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(d, d);
    for j in 0..d {
        for i in 0..=j {
            let val = v[svec_index(i, j)];
            if i == j {
                m[(i, j)] = val;
            } else {
                let x = val / SQRT2;
                m[(i, j)] = x;
                m[(j, i)] = x;
            }
        }
    }
    m
}

/// Nesterov-Todd scaling at a strictly feasible pair `(s, z)`.
///
/// Conventions, per block: `lambda = W^-1 s = W^T z`, so `s = W lambda` and
/// `z = W^-T lambda`. For the orthant `W = diag(w)`. For a PSD block the
/// operator is `W u = svec(R mat(u) R^T)`; `lambda` is diagonal there, which
/// makes Jordan products and steps cheap in scaled coordinates.
#[derive(Debug, Clone)]
pub struct Scaling {
    pub layout: ConeLayout,
    /// Orthant scaling factors `w`.
    pub orth_w: DVector<f64>,
    /// Per PSD block: `R`, `R^-1`, and `T = R R^T` with its inverse.
    pub psd_r: Vec<DMatrix<f64>>,
    pub psd_rinv: Vec<DMatrix<f64>>,
    pub psd_t: Vec<DMatrix<f64>>,
    pub psd_tinv: Vec<DMatrix<f64>>,
    /// Scaled point `lambda` in storage form.
    pub lambda: DVector<f64>,
}

impl Scaling {
    /// The identity scaling (used for initialization).
    pub fn identity(layout: &ConeLayout) -> Scaling {
        let psd_i: Vec<DMatrix<f64>> = layout.psd.iter().map(|&d| DMatrix::identity(d, d)).collect();
        Scaling {
            layout: layout.clone(),
            orth_w: DVector::from_element(layout.nonneg, 1.0),
            psd_r: psd_i.clone(),
            psd_rinv: psd_i.clone(),
            psd_t: psd_i.clone(),
            psd_tinv: psd_i,
            lambda: layout.identity(),
        }
    }

    /// Computes the NT scaling; fails when either point is not interior.
    pub fn compute(layout: &ConeLayout, s: &DVector<f64>, z: &DVector<f64>) -> Result<Scaling, ConicError> {
        let mut orth_w = DVector::zeros(layout.nonneg);
        let mut lambda = DVector::zeros(layout.dim());
        for i in 0..layout.nonneg {
            if s[i] <= 0.0 || z[i] <= 0.0 {
                return Err(ConicError::NotInterior);
            }
            orth_w[i] = (s[i] / z[i]).sqrt();
            lambda[i] = (s[i] * z[i]).sqrt();
        }
        let mut psd_r = Vec::new();
        let mut psd_rinv = Vec::new();
        let mut psd_t = Vec::new();
        let mut psd_tinv = Vec::new();
        let offsets = layout.psd_offsets();
        for (bi, &d) in layout.psd.iter().enumerate() {
            let off = offsets[bi];
            let len = d * (d + 1) / 2;
            let sm = smat(&s.as_slice()[off..off + len], d);
            let zm = smat(&z.as_slice()[off..off + len], d);
            let l1 = cholesky_or_err(&sm)?;
            let l2 = cholesky_or_err(&zm)?;
            // L2^T L1 = U Sigma V^T gives R = L1 V Sigma^-1/2,
            // R^-1 = Sigma^-1/2 U^T L2^T, S = R Sigma R^T, Z = R^-T Sigma R^-1.
            let m = l2.transpose() * &l1;
            let svd = m.svd(true, true);
            let u = svd.u.as_ref().expect("svd u");
            let vt = svd.v_t.as_ref().expect("svd v_t");
            let sig = &svd.singular_values;
            if sig.iter().any(|&v| v <= 0.0) {
                return Err(ConicError::NotInterior);
            }
            let mut v_sig = vt.transpose();
            let mut ut_l2t = u.transpose() * l2.transpose();
            for k in 0..d {
                let root = sig[k].sqrt();
                for r in 0..d {
                    v_sig[(r, k)] /= root;
                }
                for cidx in 0..d {
                    ut_l2t[(k, cidx)] /= root;
                }
            }
            let r = &l1 * v_sig;
            let rinv = ut_l2t;
            let t = &r * r.transpose();
            let tinv = rinv.transpose() * &rinv;
            for k in 0..d {
                lambda[off + svec_index(k, k)] = sig[k];
            }
            psd_r.push(r);
            psd_rinv.push(rinv);
            psd_t.push(t);
            psd_tinv.push(tinv);
        }
        Ok(Scaling {
            layout: layout.clone(),
            orth_w,
            psd_r,
            psd_rinv,
            psd_t,
            psd_tinv,
            lambda,
        })
    }

    fn map_psd(&self, v: &DVector<f64>, out: &mut DVector<f64>, f: impl Fn(usize, &DMatrix<f64>) -> DMatrix<f64>) {
        let offsets = self.layout.psd_offsets();
        for (bi, &d) in self.layout.psd.iter().enumerate() {
            let off = offsets[bi];
            let len = d * (d + 1) / 2;
            let m = smat(&v.as_slice()[off..off + len], d);
            let mapped = f(bi, &m);
            let sv = svec(&mapped);
            out.rows_mut(off, len).copy_from(&sv);
        }
    }

    /// `W u`: orthant `w .* u`; PSD `svec(R mat(u) R^T)`.
    pub fn apply_w(&self, u: &DVector<f64>) -> DVector<f64> {
        let mut out = u.clone();
        for i in 0..self.layout.nonneg {
            out[i] = self.orth_w[i] * u[i];
        }
        self.map_psd(u, &mut out, |bi, m| &self.psd_r[bi] * m * self.psd_r[bi].transpose());
        out
    }

    /// `W^T u`: orthant `w .* u`; PSD `svec(R^T mat(u) R)`.
    pub fn apply_wt(&self, u: &DVector<f64>) -> DVector<f64> {
        let mut out = u.clone();
        for i in 0..self.layout.nonneg {
            out[i] = self.orth_w[i] * u[i];
        }
        self.map_psd(u, &mut out, |bi, m| self.psd_r[bi].transpose() * m * &self.psd_r[bi]);
        out
    }

    /// `W^-1 u`.
    pub fn apply_winv(&self, u: &DVector<f64>) -> DVector<f64> {
        let mut out = u.clone();
        for i in 0..self.layout.nonneg {
            out[i] = u[i] / self.orth_w[i];
        }
        self.map_psd(u, &mut out, |bi, m| &self.psd_rinv[bi] * m * self.psd_rinv[bi].transpose());
        out
    }

    /// `W^-T u`.
    pub fn apply_wtinv(&self, u: &DVector<f64>) -> DVector<f64> {
        let mut out = u.clone();
        for i in 0..self.layout.nonneg {
            out[i] = u[i] / self.orth_w[i];
        }
        self.map_psd(u, &mut out, |bi, m| self.psd_rinv[bi].transpose() * m * &self.psd_rinv[bi]);
        out
    }

    /// `W W^T u`: orthant `w^2 .* u`; PSD `svec(T mat(u) T)`.
    pub fn apply_wwt(&self, u: &DVector<f64>) -> DVector<f64> {
        let mut out = u.clone();
        for i in 0..self.layout.nonneg {
            out[i] = self.orth_w[i] * self.orth_w[i] * u[i];
        }
        self.map_psd(u, &mut out, |bi, m| &self.psd_t[bi] * m * &self.psd_t[bi]);
        out
    }

    /// `(W W^T)^-1 u`.
    pub fn apply_wwt_inv(&self, u: &DVector<f64>) -> DVector<f64> {
        let mut out = u.clone();
        for i in 0..self.layout.nonneg {
            out[i] = u[i] / (self.orth_w[i] * self.orth_w[i]);
        }
        self.map_psd(u, &mut out, |bi, m| &self.psd_tinv[bi] * m * &self.psd_tinv[bi]);
        out
    }

    /// Jordan product `u o v` in scaled coordinates, where `lambda` is the
    /// orthant vector resp. a diagonal matrix per PSD block.
    pub fn jordan_lambda_sq(&self) -> DVector<f64> {
        // lambda o lambda: orthant entries squared; PSD diagonal squared.
        let mut out = DVector::zeros(self.layout.dim());
        for i in 0..self.layout.nonneg {
            out[i] = self.lambda[i] * self.lambda[i];
        }
        let offsets = self.layout.psd_offsets();
        for (bi, &d) in self.layout.psd.iter().enumerate() {
            let off = offsets[bi];
            for k in 0..d {
                let idx = off + svec_index(k, k);
                out[idx] = self.lambda[idx] * self.lambda[idx];
            }
        }
        out
    }

    /// Symmetrized product of two scaled directions: orthant `u .* v`;
    /// PSD `svec((U V + V U) / 2)`.
    pub fn jordan_product(&self, u: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.layout.dim());
        for i in 0..self.layout.nonneg {
            out[i] = u[i] * v[i];
        }
        let offsets = self.layout.psd_offsets();
        for (bi, &d) in self.layout.psd.iter().enumerate() {
            let off = offsets[bi];
            let len = d * (d + 1) / 2;
            let um = smat(&u.as_slice()[off..off + len], d);
            let vm = smat(&v.as_slice()[off..off + len], d);
            let prod = (&um * &vm + &vm * &um) * 0.5;
            out.rows_mut(off, len).copy_from(&svec(&prod));
        }
        out
    }

    /// Solves `lambda o x = rhs` in scaled coordinates.
    pub fn jordan_lambda_solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.layout.dim());
        for i in 0..self.layout.nonneg {
            out[i] = rhs[i] / self.lambda[i];
        }
        let offsets = self.layout.psd_offsets();
        for (bi, &d) in self.layout.psd.iter().enumerate() {
            let off = offsets[bi];
            // lambda block is diagonal: ((L X + X L)/2)_ij = (l_i + l_j)/2 x_ij.
            let mut diag = vec![0.0; d];
            for k in 0..d {
                diag[k] = self.lambda[off + svec_index(k, k)];
            }
            for j in 0..d {
                for i in 0..=j {
                    let idx = off + svec_index(i, j);
                    out[idx] = rhs[idx] / (0.5 * (diag[i] + diag[j]));
                }
            }
        }
        out
    }

    /// Largest `t >= 0` with `lambda + t dir` in the cone; `f64::INFINITY`
    /// when the ray never leaves.
    pub fn max_step(&self, dir: &DVector<f64>) -> f64 {
        let mut t = f64::INFINITY;
        for i in 0..self.layout.nonneg {
            if dir[i] < 0.0 {
                t = t.min(-self.lambda[i] / dir[i]);
            }
        }
        let offsets = self.layout.psd_offsets();
        for (bi, &d) in self.layout.psd.iter().enumerate() {
            let off = offsets[bi];
            let len = d * (d + 1) / 2;
            let dm = smat(&dir.as_slice()[off..off + len], d);
            // Generalized eigenvalue vs the diagonal lambda block.
            let mut scaled = dm;
            for i in 0..d {
                let li = self.lambda[off + svec_index(i, i)].sqrt();
                for j in 0..d {
                    scaled[(i, j)] /= li;
                }
            }
            for j in 0..d {
                let lj = self.lambda[off + svec_index(j, j)].sqrt();
                for i in 0..d {
                    scaled[(i, j)] /= lj;
                }
            }
            let eig = scaled.symmetric_eigenvalues();
            let min = eig.min();
            if min < 0.0 {
                t = t.min(-1.0 / min);
            }
        }
        t
    }

    /// Minimum eigenvalue (orthant entry resp. block eigenvalue) of an
    /// unscaled cone point; negative means outside the cone.
    pub fn min_eig(layout: &ConeLayout, v: &DVector<f64>) -> f64 {
        let mut m = f64::INFINITY;
        for i in 0..layout.nonneg {
            m = m.min(v[i]);
        }
        let offsets = layout.psd_offsets();
        for (bi, &d) in layout.psd.iter().enumerate() {
            let off = offsets[bi];
            let len = d * (d + 1) / 2;
            let mat = smat(&v.as_slice()[off..off + len], d);
            m = m.min(mat.symmetric_eigenvalues().min());
        }
        if m == f64::INFINITY {
            0.0
        } else {
            m
        }
    }
}

fn cholesky_or_err(m: &DMatrix<f64>) -> Result<DMatrix<f64>, ConicError> {
    match m.clone().cholesky() {
        Some(c) => Ok(c.l()),
        None => {
            // Tiny diagonal bump for points grazing the boundary.
            let bump = 1e-14 * (1.0 + m.diagonal().amax());
            let bumped = m + DMatrix::identity(m.nrows(), m.ncols()) * bump;
            bumped.cholesky().map(|c| c.l()).ok_or(ConicError::NotInterior)
        }
    }
}
