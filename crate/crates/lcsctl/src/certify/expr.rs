//! Affine matrix expressions over SDP decision variables.
//!
//! Certification LMIs are built from block matrices whose entries are affine
//! in the decision vector: products always pair a numeric matrix with an
//! affine one, so no bilinear terms can arise by construction. [`ExprMat`]
//! carries such a matrix, [`VarReg`] hands out variable indices, and
//! [`ExprMat::emit`] lowers a square expression to an [`AffineLmi`].

use nalgebra::{DMatrix, DVector};
use std::collections::BTreeMap;

use crate::conic::AffineLmi;

/// Scalar affine expression `constant + sum coef * x_var`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Aff {
    pub constant: f64,
    pub terms: Vec<(usize, f64)>,
}

impl Aff {
    pub fn zero() -> Self {
        Aff::default()
    }

    pub fn constant(v: f64) -> Self {
        Aff { constant: v, terms: Vec::new() }
    }

    pub fn var(idx: usize) -> Self {
        Aff { constant: 0.0, terms: vec![(idx, 1.0)] }
    }

    pub fn is_zero(&self) -> bool {
        self.constant == 0.0 && self.terms.is_empty()
    }

    /// Adds `scale * other` in place.
    pub fn add_scaled(&mut self, other: &Aff, scale: f64) {
        if scale == 0.0 {
            return;
        }
        self.constant += scale * other.constant;
        for &(var, coef) in &other.terms {
            self.terms.push((var, scale * coef));
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.constant *= s;
        for t in &mut self.terms {
            t.1 *= s;
        }
    }

    /// Value at a point.
    pub fn eval(&self, x: &DVector<f64>) -> f64 {
        self.constant + self.terms.iter().map(|&(v, c)| c * x[v]).sum::<f64>()
    }

    /// Product of two affine expressions. At most one side may carry variable
    /// terms; a variable-times-variable product is a construction bug in the
    /// calling assembler and panics.
    pub fn mul(&self, other: &Aff) -> Aff {
        assert!(
            self.terms.is_empty() || other.terms.is_empty(),
            "bilinear product of affine expressions"
        );
        let mut out = Aff::constant(self.constant * other.constant);
        for &(var, coef) in &self.terms {
            out.terms.push((var, coef * other.constant));
        }
        for &(var, coef) in &other.terms {
            out.terms.push((var, coef * self.constant));
        }
        out
    }
}

/// Issues fresh variable indices for one SDP.
#[derive(Debug, Default)]
pub struct VarReg {
    count: usize,
}

impl VarReg {
    pub fn new() -> Self {
        VarReg::default()
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn scalar(&mut self) -> usize {
        let idx = self.count;
        self.count += 1;
        idx
    }

    /// Fully general matrix variable. Entries where `mask` returns false are
    /// pinned to zero (no variable is created for them).
    pub fn general(&mut self, nrows: usize, ncols: usize, mask: impl Fn(usize, usize) -> bool) -> ExprMat {
        let mut m = ExprMat::zeros(nrows, ncols);
        for r in 0..nrows {
            for c in 0..ncols {
                if mask(r, c) {
                    *m.at_mut(r, c) = Aff::var(self.scalar());
                }
            }
        }
        m
    }

    /// Symmetric matrix variable; returns the expression and the list of
    /// upper-triangular entry variables (used e.g. for sign constraints).
    pub fn symmetric(&mut self, n: usize) -> (ExprMat, Vec<usize>) {
        let mut m = ExprMat::zeros(n, n);
        let mut idxs = Vec::with_capacity(n * (n + 1) / 2);
        for c in 0..n {
            for r in 0..=c {
                let idx = self.scalar();
                idxs.push(idx);
                *m.at_mut(r, c) = Aff::var(idx);
                if r != c {
                    *m.at_mut(c, r) = Aff::var(idx);
                }
            }
        }
        (m, idxs)
    }

    /// Diagonal matrix variable with free diagonal entries.
    pub fn diagonal(&mut self, n: usize) -> ExprMat {
        let mut m = ExprMat::zeros(n, n);
        for i in 0..n {
            *m.at_mut(i, i) = Aff::var(self.scalar());
        }
        m
    }

    /// Column-vector variable.
    pub fn vector(&mut self, n: usize) -> ExprMat {
        self.general(n, 1, |_, _| true)
    }
}

/// Dense matrix of affine expressions, row-major.
#[derive(Debug, Clone)]
pub struct ExprMat {
    nrows: usize,
    ncols: usize,
    data: Vec<Aff>,
}

impl ExprMat {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        ExprMat { nrows, ncols, data: vec![Aff::zero(); nrows * ncols] }
    }

    pub fn from_numeric(m: &DMatrix<f64>) -> Self {
        let mut out = ExprMat::zeros(m.nrows(), m.ncols());
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                out.data[r * m.ncols() + c].constant = m[(r, c)];
            }
        }
        out
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn at(&self, r: usize, c: usize) -> &Aff {
        &self.data[r * self.ncols + c]
    }

    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut Aff {
        &mut self.data[r * self.ncols + c]
    }

    /// Adds `scale * other` entrywise.
    pub fn add_scaled(&mut self, other: &ExprMat, scale: f64) {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols), "shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            a.add_scaled(b, scale);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for a in &mut self.data {
            a.scale(s);
        }
    }

    pub fn transpose(&self) -> ExprMat {
        let mut out = ExprMat::zeros(self.ncols, self.nrows);
        for r in 0..self.nrows {
            for c in 0..self.ncols {
                *out.at_mut(c, r) = self.at(r, c).clone();
            }
        }
        out
    }

    /// `num * self`.
    pub fn left_mul(&self, num: &DMatrix<f64>) -> ExprMat {
        assert_eq!(num.ncols(), self.nrows, "left_mul shape");
        let mut out = ExprMat::zeros(num.nrows(), self.ncols);
        for r in 0..num.nrows() {
            for k in 0..self.nrows {
                let w = num[(r, k)];
                if w == 0.0 {
                    continue;
                }
                for c in 0..self.ncols {
                    out.at_mut(r, c).add_scaled(self.at(k, c), w);
                }
            }
        }
        out
    }

    /// `self * num`.
    pub fn right_mul(&self, num: &DMatrix<f64>) -> ExprMat {
        assert_eq!(self.ncols, num.nrows(), "right_mul shape");
        let mut out = ExprMat::zeros(self.nrows, num.ncols());
        for r in 0..self.nrows {
            for k in 0..self.ncols {
                let e = self.at(r, k);
                if e.is_zero() {
                    continue;
                }
                for c in 0..num.ncols() {
                    let w = num[(k, c)];
                    if w != 0.0 {
                        out.at_mut(r, c).add_scaled(e, w);
                    }
                }
            }
        }
        out
    }

    /// Congruence `num' * self * num` for numeric `num`.
    pub fn congruence(&self, num: &DMatrix<f64>) -> ExprMat {
        self.left_mul(&num.transpose()).right_mul(num)
    }

    /// General product `self * other`. Each entry pair must have a constant
    /// factor on at least one side (see [`Aff::mul`]).
    pub fn mul(&self, other: &ExprMat) -> ExprMat {
        assert_eq!(self.ncols, other.nrows, "mul shape");
        let mut out = ExprMat::zeros(self.nrows, other.ncols);
        for r in 0..self.nrows {
            for k in 0..self.ncols {
                let a = self.at(r, k);
                if a.is_zero() {
                    continue;
                }
                for c in 0..other.ncols {
                    let b = other.at(k, c);
                    if !b.is_zero() {
                        let prod = a.mul(b);
                        out.at_mut(r, c).add_scaled(&prod, 1.0);
                    }
                }
            }
        }
        out
    }

    /// Diagonal matrix holding the entries of a column vector expression.
    pub fn into_diag(&self) -> ExprMat {
        assert_eq!(self.ncols, 1, "into_diag requires a column vector");
        let mut out = ExprMat::zeros(self.nrows, self.nrows);
        for i in 0..self.nrows {
            *out.at_mut(i, i) = self.at(i, 0).clone();
        }
        out
    }

    /// Copies `block` into this matrix with upper-left corner `(r0, c0)`.
    pub fn set_block(&mut self, r0: usize, c0: usize, block: &ExprMat) {
        assert!(r0 + block.nrows <= self.nrows && c0 + block.ncols <= self.ncols, "block overflow");
        for r in 0..block.nrows {
            for c in 0..block.ncols {
                *self.at_mut(r0 + r, c0 + c) = block.at(r, c).clone();
            }
        }
    }

    /// Adds `scale * block` into this matrix at `(r0, c0)`.
    pub fn add_block(&mut self, r0: usize, c0: usize, block: &ExprMat, scale: f64) {
        assert!(r0 + block.nrows <= self.nrows && c0 + block.ncols <= self.ncols, "block overflow");
        for r in 0..block.nrows {
            for c in 0..block.ncols {
                self.at_mut(r0 + r, c0 + c).add_scaled(block.at(r, c), scale);
            }
        }
    }

    /// Symmetric part `(self + self') / 2`; requires a square matrix.
    pub fn sym_half(&self) -> ExprMat {
        assert_eq!(self.nrows, self.ncols, "sym_half requires square");
        let mut out = self.clone();
        out.scale(0.5);
        out.add_scaled(&self.transpose(), 0.5);
        out
    }

    /// Numeric value at a point.
    pub fn eval(&self, x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(self.nrows, self.ncols, |r, c| self.at(r, c).eval(x))
    }

    /// Lowers a square symmetric expression to an [`AffineLmi`]. Duplicate
    /// variable terms are merged, and the symmetry of the assembled blocks is
    /// enforced by averaging with the transpose.
    pub fn emit(&self) -> AffineLmi {
        assert_eq!(self.nrows, self.ncols, "emit requires square");
        let dim = self.nrows;
        let mut constant = DMatrix::zeros(dim, dim);
        let mut coeffs: BTreeMap<usize, DMatrix<f64>> = BTreeMap::new();
        for r in 0..dim {
            for c in 0..dim {
                let e = self.at(r, c);
                constant[(r, c)] = e.constant;
                for &(var, coef) in &e.terms {
                    let m = coeffs.entry(var).or_insert_with(|| DMatrix::zeros(dim, dim));
                    m[(r, c)] += coef;
                }
            }
        }
        let constant = (&constant + constant.transpose()) * 0.5;
        let coeffs = coeffs
            .into_iter()
            .map(|(var, m)| {
                let sym = (&m + m.transpose()) * 0.5;
                (var, sym)
            })
            .filter(|(_, m)| m.iter().any(|v| *v != 0.0))
            .collect();
        AffineLmi { dim, constant, coeffs }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn products_and_emit_round_trip() {
        let mut reg = VarReg::new();
        let (p, _) = reg.symmetric(2);
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -2.0, 3.0]);
        // M = A' P + P A is affine in the entries of P.
        let mut m = p.left_mul(&a.transpose());
        m.add_scaled(&p.right_mul(&a), 1.0);
        let lmi = m.emit();
        // Check against a numeric evaluation at a random-ish point.
        let x = DVector::from_vec(vec![1.5, -0.25, 2.0]);
        let p_num = p.eval(&x);
        let want = a.transpose() * &p_num + &p_num * &a;
        let got = lmi.eval(&x);
        assert!((got - want).norm() < 1e-12);
    }

    #[test]
    fn congruence_matches_numeric() {
        let mut reg = VarReg::new();
        let w = reg.general(3, 3, |_, _| true);
        let s = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 0.0, -1.0, 3.0, 0.5]);
        let m = w.congruence(&s);
        let x = DVector::from_fn(reg.len(), |i, _| (i as f64 * 0.37).sin());
        let w_num = w.eval(&x);
        let want = s.transpose() * w_num * &s;
        assert!((m.eval(&x) - want).norm() < 1e-12);
    }

    #[test]
    fn masked_entries_stay_zero() {
        let mut reg = VarReg::new();
        let k = reg.general(2, 4, |_, c| c != 1);
        assert_eq!(reg.len(), 6);
        let x = DVector::from_element(6, 7.0);
        let k_num = k.eval(&x);
        assert_eq!(k_num[(0, 1)], 0.0);
        assert_eq!(k_num[(1, 1)], 0.0);
        assert_eq!(k_num[(0, 0)], 7.0);
    }

    #[test]
    fn sym_half_symmetrizes() {
        let mut reg = VarReg::new();
        let m = reg.general(3, 3, |_, _| true);
        let s = m.sym_half();
        let x = DVector::from_fn(reg.len(), |i, _| i as f64 - 4.0);
        let s_num = s.eval(&x);
        assert!((&s_num - s_num.transpose()).norm() < 1e-14);
    }
}
