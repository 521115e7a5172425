//! Sparse polynomials with affine coefficients.
//!
//! A [`Poly`] maps monomials in a fixed set of scalar indeterminates to
//! affine expressions ([`Aff`]) over the decision variables of a cone
//! program. Products follow the same discipline as the matrix expressions
//! in `certify`: every coefficient product pairs a numeric side with an
//! affine side, so no decision-by-decision terms can arise.

use nalgebra::DVector;
use std::collections::BTreeMap;

use crate::certify::Aff;

/// Monomial: indeterminate ids, sorted, with multiplicity. Empty means 1.
pub type Mono = Vec<u16>;

/// Product of two monomials (multiset merge).
pub fn mono_mul(a: &Mono, b: &Mono) -> Mono {
    let mut out = Vec::with_capacity(a.len() + b.len());
    out.extend_from_slice(a);
    out.extend_from_slice(b);
    out.sort_unstable();
    out
}

/// Merges duplicate variable entries of an affine expression and drops sums
/// below `tol` relative to the largest magnitude present.
pub fn canonical_terms(a: &Aff, tol: f64) -> (f64, Vec<(usize, f64)>) {
    let mut merged: BTreeMap<usize, f64> = BTreeMap::new();
    for &(var, coef) in &a.terms {
        *merged.entry(var).or_insert(0.0) += coef;
    }
    let scale = merged
        .values()
        .map(|c| c.abs())
        .fold(a.constant.abs(), f64::max)
        .max(1.0);
    let cutoff = tol * scale;
    let constant = if a.constant.abs() <= cutoff { 0.0 } else { a.constant };
    let terms = merged.into_iter().filter(|(_, c)| c.abs() > cutoff).collect();
    (constant, terms)
}

/// Polynomial with affine coefficients, stored sparsely by monomial.
#[derive(Debug, Clone, Default)]
pub struct Poly {
    pub terms: BTreeMap<Mono, Aff>,
}

impl Poly {
    pub fn zero() -> Self {
        Poly::default()
    }

    /// Degree-zero polynomial with coefficient `a`.
    pub fn from_aff(a: Aff) -> Self {
        let mut p = Poly::zero();
        p.add_term(Vec::new(), &a, 1.0);
        p
    }

    /// Single monomial with a numeric coefficient.
    pub fn monomial(m: Mono, coef: f64) -> Self {
        let mut p = Poly::zero();
        p.add_term(m, &Aff::constant(coef), 1.0);
        p
    }

    /// Adds `scale * aff` to the coefficient of `m`. The monomial is sorted
    /// on insertion so equal monomials always share one map key.
    pub fn add_term(&mut self, mut m: Mono, aff: &Aff, scale: f64) {
        m.sort_unstable();
        self.terms.entry(m).or_default().add_scaled(aff, scale);
    }

    /// Adds `scale * other` termwise.
    pub fn add_scaled(&mut self, other: &Poly, scale: f64) {
        for (m, a) in &other.terms {
            self.terms.entry(m.clone()).or_default().add_scaled(a, scale);
        }
    }

    /// Product. Each coefficient pair must have a numeric factor on at least
    /// one side (see [`Aff::mul`]).
    pub fn mul(&self, other: &Poly) -> Poly {
        let mut out = Poly::zero();
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                let prod = ca.mul(cb);
                out.add_term(mono_mul(ma, mb), &prod, 1.0);
            }
        }
        out
    }

    /// Total degree of the highest monomial whose canonical coefficient is
    /// nonzero.
    pub fn degree(&self) -> usize {
        self.terms
            .iter()
            .filter(|(_, a)| {
                let (c, t) = canonical_terms(a, 1e-12);
                c != 0.0 || !t.is_empty()
            })
            .map(|(m, _)| m.len())
            .max()
            .unwrap_or(0)
    }

    /// Value with decision variables at `decision` and indeterminates at
    /// `point`.
    pub fn eval(&self, decision: &DVector<f64>, point: &DVector<f64>) -> f64 {
        self.terms
            .iter()
            .map(|(m, a)| {
                a.eval(decision) * m.iter().map(|&id| point[id as usize]).product::<f64>()
            })
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_matches_pointwise_evaluation() {
        // p = 2 x0 x1 + x2^2, q = x0 - 3; coefficients numeric.
        let mut p = Poly::monomial(vec![0, 1], 2.0);
        p.add_scaled(&Poly::monomial(vec![2, 2], 1.0), 1.0);
        let mut q = Poly::monomial(vec![0], 1.0);
        q.add_term(Vec::new(), &Aff::constant(-3.0), 1.0);
        let prod = p.mul(&q);
        let decision = DVector::zeros(0);
        let pt = DVector::from_vec(vec![1.3, -0.7, 2.1]);
        let want = p.eval(&decision, &pt) * q.eval(&decision, &pt);
        assert!((prod.eval(&decision, &pt) - want).abs() < 1e-12);
        assert_eq!(prod.degree(), 3);
    }

    #[test]
    fn affine_coefficients_evaluate_against_decision_vector() {
        // p = (2 + v0) x0 + v1 x1^2.
        let mut p = Poly::zero();
        p.add_term(vec![0], &Aff { constant: 2.0, terms: vec![(0, 1.0)] }, 1.0);
        p.add_term(vec![1, 1], &Aff::var(1), 1.0);
        let decision = DVector::from_vec(vec![0.5, -2.0]);
        let pt = DVector::from_vec(vec![3.0, 2.0]);
        let want = (2.0 + 0.5) * 3.0 + (-2.0) * 4.0;
        assert!((p.eval(&decision, &pt) - want).abs() < 1e-12);
    }

    #[test]
    fn canonical_terms_merge_and_drop() {
        let a = Aff { constant: 1e-15, terms: vec![(3, 1.0), (3, -1.0), (1, 0.5)] };
        let (c, t) = canonical_terms(&a, 1e-12);
        assert_eq!(c, 0.0);
        assert_eq!(t, vec![(1, 0.5)]);
    }

    #[test]
    fn degree_ignores_cancelled_terms() {
        let mut p = Poly::monomial(vec![0], 1.0);
        p.add_term(vec![0, 0, 0, 0], &Aff::constant(1.0), 1.0);
        p.add_term(vec![0, 0, 0, 0], &Aff::constant(-1.0), 1.0);
        assert_eq!(p.degree(), 1);
    }

    #[test]
    fn mono_mul_keeps_multiplicity_sorted() {
        assert_eq!(mono_mul(&vec![2, 0], &vec![1, 0]), vec![0, 0, 1, 2]);
        assert_eq!(mono_mul(&Vec::new(), &vec![5]), vec![5]);
    }
}
