//! The paired polynomial nonnegativity constraints of one row-search step.
//!
//! For a contact matrix `F` and candidate row `w`, single-valuedness of
//! `w' lam` over the solution set of `LCP(q, F)` is certified through the
//! slack functions `g_i(lam) = q_i + F_i' lam` and the weight
//! `S = |lam1|^2 + |lam2|^2`: whenever `lam1` and `lam2` both solve the LCP,
//!
//! `(eta + w'(lam1 - lam2)) S >= 0`
//!
//! must hold (and again with `-w`), which squeezes `w'(lam1 - lam2)` into
//! `[-eta, eta]` on nonzero solution pairs. Membership is relaxed by a fixed
//! S-procedure over the generators `lam_k >= 0` and `g(lam_k) >= 0`, their
//! pairwise products, and the complementarity identities
//! `lam_ki g_i(lam_k) = 0`: each generator enters with a nonnegative (or
//! sum-of-squares) multiplier subtracted from the base product, each
//! identity with a free multiplier, and the remainder `phi` must be a sum of
//! squares.
//!
//! Structure exploited during assembly:
//!
//! - `phi` contains no monomial involving the offsets `q` on the Gram side,
//!   so matching forces the multiplier classes attached to `g` products and
//!   bare `g` factors to zero; they are kept as pinned variables so the
//!   compiled program documents the forcing.
//! - The same matching ties each complementarity multiplier to the negated
//!   diagonal product multiplier on `g_i(lam_other) lam_ki`. The tie is
//!   substituted symbolically, which cancels the offsets exactly and leaves
//!   the contribution `alpha_i(lam) lam_ki F_i'(lam1 - lam2)`; the
//!   `alpha_i` are sum-of-squares quadratics over `[1; lam1; lam2]`.
//! - The Gram basis for `phi` is pruned to the contact monomials of degree
//!   one and two: `phi` has no constant term and no `q` dependence, so the
//!   constant basis element and all offset monomials would generate
//!   structurally zero rows. Degree-two monomials whose contact pair indexes
//!   an all-zero submatrix of `F` are pruned as well; see
//!   [`Indets::phi_basis`].

use nalgebra::{DMatrix, DVector};

use crate::certify::Aff;

use super::poly::{Mono, Poly};
use super::program::{SosBuilder, SosSolution};
use super::SosError;

/// Indeterminate ids for a contact count `m`: the two solution candidates
/// occupy `0..m` and `m..2m`, the offsets `2m..3m`.
#[derive(Debug, Clone, Copy)]
pub(super) struct Indets {
    pub m: usize,
}

impl Indets {
    pub fn l1(&self, i: usize) -> u16 {
        i as u16
    }

    pub fn l2(&self, i: usize) -> u16 {
        (self.m + i) as u16
    }

    pub fn q(&self, i: usize) -> u16 {
        (2 * self.m + i) as u16
    }

    /// Gram basis for `phi`: degree-one and degree-two monomials in the
    /// contact indeterminates only.
    ///
    /// A degree-two monomial on contacts `{j, k}` is kept only when the
    /// submatrix `F[{j, k}, {j, k}]` has a nonzero entry: otherwise no
    /// multiplier product can reach its square, the matching rows force its
    /// diagonal Gram entry to zero, and positive semidefiniteness zeroes the
    /// whole row, leaving the solver without a strictly feasible point.
    pub fn phi_basis(&self, f: &DMatrix<f64>) -> Vec<Mono> {
        let n = 2 * self.m;
        let contact = |id: usize| id % self.m;
        let mut basis: Vec<Mono> = (0..n).map(|i| vec![i as u16]).collect();
        for i in 0..n {
            for j in i..n {
                let (a, b) = (contact(i), contact(j));
                let alive = f[(a, a)] != 0.0
                    || f[(a, b)] != 0.0
                    || f[(b, a)] != 0.0
                    || f[(b, b)] != 0.0;
                if alive {
                    basis.push(vec![i as u16, j as u16]);
                }
            }
        }
        basis
    }

    /// Basis `[1; lam1; lam2]` for the quadratic multiplier classes.
    pub fn quad_basis(&self) -> Vec<Mono> {
        let mut basis = vec![Vec::new()];
        basis.extend((0..2 * self.m).map(|i| vec![i as u16]));
        basis
    }
}

/// Reference to one multiplier: a nonnegative scalar or a Gram block.
#[derive(Debug, Clone, Copy)]
pub(super) enum MulRef {
    Scalar(usize),
    Gram(usize),
}

/// Variable references for the multiplier classes of one constraint, in the
/// order they multiply: bare candidates one and two, candidate-one products,
/// bare slacks one and two, slack cross products, and the two mixed
/// slack-candidate classes whose diagonals carry the tied complementarity
/// multipliers.
#[derive(Debug, Clone)]
pub(super) struct PhiHandles {
    pub p1: Vec<MulRef>,
    pub p2: Vec<MulRef>,
    /// Row-major `m * m`.
    pub p3: Vec<MulRef>,
    pub p4: Vec<MulRef>,
    pub p5: Vec<MulRef>,
    /// Row-major `m * m`.
    pub p6: Vec<MulRef>,
    /// Row-major `m * m`; diagonal entries are quadratic Gram blocks.
    pub p7: Vec<MulRef>,
    /// Row-major `m * m`; diagonal entries are quadratic Gram blocks.
    pub p8: Vec<MulRef>,
}

/// Multiplier values of one solved constraint, indexed as in
/// [`PhiHandles`]. Scalar multipliers appear as `1x1` matrices; quadratic
/// multipliers report their Gram over `[1; lam1; lam2]` (value at a point is
/// `z' G z` with `z = [1; lam1; lam2]`). The complementarity multipliers are
/// tied to the negated diagonals of `p7` and `p8` by coefficient matching
/// and are reported as those negated Grams.
#[derive(Debug, Clone)]
pub struct PhiMultipliers {
    pub p1: Vec<DMatrix<f64>>,
    pub p2: Vec<DMatrix<f64>>,
    pub p3: Vec<DMatrix<f64>>,
    pub p4: Vec<DMatrix<f64>>,
    pub p5: Vec<DMatrix<f64>>,
    pub p6: Vec<DMatrix<f64>>,
    pub p7: Vec<DMatrix<f64>>,
    pub p8: Vec<DMatrix<f64>>,
    pub s1: Vec<DMatrix<f64>>,
    pub s2: Vec<DMatrix<f64>>,
}

/// Registers a multiplier: a nonnegative scalar by default, a quadratic
/// sum-of-squares block when escalated.
fn multiplier(b: &mut SosBuilder, ind: &Indets, escalated: bool) -> (Poly, MulRef) {
    if escalated {
        let (p, block) = b.sos_poly(&ind.quad_basis());
        (p, MulRef::Gram(block))
    } else {
        let v = b.nonneg_var();
        (Poly::from_aff(Aff::var(v)), MulRef::Scalar(v))
    }
}

/// Slack polynomial `g_i(lam) = q_i + F_i' lam` with `lam` drawn through
/// `id`.
fn slack_poly(ind: &Indets, f: &DMatrix<f64>, i: usize, id: impl Fn(usize) -> u16) -> Poly {
    let mut g = Poly::monomial(vec![ind.q(i)], 1.0);
    for j in 0..ind.m {
        if f[(i, j)] != 0.0 {
            g.add_scaled(&Poly::monomial(vec![id(j)], f[(i, j)]), 1.0);
        }
    }
    g
}

/// Builds one constraint polynomial `phi` for the candidate row `w` (entries
/// affine in the decision variables) with base sign `sign` on `w`, installs
/// its multipliers on `b`, and returns the polynomial plus the multiplier
/// handles. The caller still owes the sum-of-squares requirement on the
/// result.
pub(super) fn build_phi(
    b: &mut SosBuilder,
    ind: &Indets,
    f: &DMatrix<f64>,
    w: &[Aff],
    eta: &Aff,
    sign: f64,
    escalated: bool,
) -> (Poly, PhiHandles) {
    let m = ind.m;

    // S = |lam1|^2 + |lam2|^2.
    let mut s = Poly::zero();
    for i in 0..m {
        s.add_scaled(&Poly::monomial(vec![ind.l1(i), ind.l1(i)], 1.0), 1.0);
        s.add_scaled(&Poly::monomial(vec![ind.l2(i), ind.l2(i)], 1.0), 1.0);
    }

    // Base: (eta + sign * w'(lam1 - lam2)) S.
    let mut head = Poly::from_aff(eta.clone());
    for i in 0..m {
        head.add_term(vec![ind.l1(i)], &w[i], sign);
        head.add_term(vec![ind.l2(i)], &w[i], -sign);
    }
    let mut phi = s.mul(&head);

    let mut handles = PhiHandles {
        p1: Vec::new(),
        p2: Vec::new(),
        p3: Vec::new(),
        p4: Vec::new(),
        p5: Vec::new(),
        p6: Vec::new(),
        p7: Vec::new(),
        p8: Vec::new(),
    };

    // Bare candidate generators lam_1i and lam_2i.
    for i in 0..m {
        let (p, h) = multiplier(b, ind, escalated);
        phi.add_scaled(&p.mul(&Poly::monomial(vec![ind.l1(i)], 1.0)), -1.0);
        handles.p1.push(h);
        let (p, h) = multiplier(b, ind, escalated);
        phi.add_scaled(&p.mul(&Poly::monomial(vec![ind.l2(i)], 1.0)), -1.0);
        handles.p2.push(h);
    }
    // Products of candidate-one entries.
    for i in 0..m {
        for j in 0..m {
            let (p, h) = multiplier(b, ind, escalated);
            phi.add_scaled(&p.mul(&Poly::monomial(vec![ind.l1(i), ind.l1(j)], 1.0)), -1.0);
            handles.p3.push(h);
        }
    }
    // Bare slack generators; pinned to zero by the offset rows.
    for i in 0..m {
        let v = b.nonneg_var();
        phi.add_scaled(&slack_poly(ind, f, i, |j| ind.l1(j)).mul(&Poly::from_aff(Aff::var(v))), -1.0);
        handles.p4.push(MulRef::Scalar(v));
        let v = b.nonneg_var();
        phi.add_scaled(&slack_poly(ind, f, i, |j| ind.l2(j)).mul(&Poly::from_aff(Aff::var(v))), -1.0);
        handles.p5.push(MulRef::Scalar(v));
    }
    // Slack cross products; pinned by the quadratic offset rows.
    for i in 0..m {
        let gi = slack_poly(ind, f, i, |j| ind.l1(j));
        for j in 0..m {
            let gj = slack_poly(ind, f, j, |j2| ind.l2(j2));
            let v = b.nonneg_var();
            phi.add_scaled(&gi.mul(&gj).mul(&Poly::from_aff(Aff::var(v))), -1.0);
            handles.p6.push(MulRef::Scalar(v));
        }
    }
    // Mixed classes. Off-diagonal entries are pinned scalars; the diagonal
    // carries the quadratic multiplier with its complementarity partner
    // substituted, leaving lam_ki F_i'(lam1 - lam2) times the quadratic.
    for i in 0..m {
        for j in 0..m {
            if i == j {
                let (alpha, block) = b.sos_poly(&ind.quad_basis());
                let mut fd = Poly::zero();
                for k in 0..m {
                    if f[(i, k)] != 0.0 {
                        fd.add_scaled(&Poly::monomial(vec![ind.l1(k)], f[(i, k)]), 1.0);
                        fd.add_scaled(&Poly::monomial(vec![ind.l2(k)], -f[(i, k)]), 1.0);
                    }
                }
                phi.add_scaled(&alpha.mul(&fd.mul(&Poly::monomial(vec![ind.l1(i)], 1.0))), 1.0);
                handles.p7.push(MulRef::Gram(block));
            } else {
                let v = b.nonneg_var();
                let term = slack_poly(ind, f, i, |k| ind.l2(k))
                    .mul(&Poly::monomial(vec![ind.l1(j)], 1.0));
                phi.add_scaled(&term.mul(&Poly::from_aff(Aff::var(v))), -1.0);
                handles.p7.push(MulRef::Scalar(v));
            }
        }
    }
    for i in 0..m {
        for j in 0..m {
            if i == j {
                let (alpha, block) = b.sos_poly(&ind.quad_basis());
                let mut fd = Poly::zero();
                for k in 0..m {
                    if f[(i, k)] != 0.0 {
                        fd.add_scaled(&Poly::monomial(vec![ind.l1(k)], f[(i, k)]), 1.0);
                        fd.add_scaled(&Poly::monomial(vec![ind.l2(k)], -f[(i, k)]), 1.0);
                    }
                }
                phi.add_scaled(&alpha.mul(&fd.mul(&Poly::monomial(vec![ind.l2(i)], 1.0))), -1.0);
                handles.p8.push(MulRef::Gram(block));
            } else {
                let v = b.nonneg_var();
                let term = slack_poly(ind, f, i, |k| ind.l1(k))
                    .mul(&Poly::monomial(vec![ind.l2(j)], 1.0));
                phi.add_scaled(&term.mul(&Poly::from_aff(Aff::var(v))), -1.0);
                handles.p8.push(MulRef::Scalar(v));
            }
        }
    }

    (phi, handles)
}

/// Installs both constraint polynomials (base signs `+w` and `-w`) and their
/// sum-of-squares requirements; returns the multiplier handles per
/// constraint.
pub(super) fn build_phi_constraints(
    b: &mut SosBuilder,
    f: &DMatrix<f64>,
    w: &[Aff],
    eta: &Aff,
    escalated: bool,
) -> Result<[PhiHandles; 2], SosError> {
    let m = f.nrows();
    if f.ncols() != m {
        return Err(SosError::Dimension(format!("contact matrix {}x{}", f.nrows(), f.ncols())));
    }
    if w.len() != m {
        return Err(SosError::Dimension(format!("row length {} vs contacts {m}", w.len())));
    }
    let ind = Indets { m };
    let basis = ind.phi_basis(f);
    let (phi1, h1) = build_phi(b, &ind, f, w, eta, 1.0, escalated);
    b.require_sos(phi1, &basis);
    let (phi2, h2) = build_phi(b, &ind, f, w, eta, -1.0, escalated);
    b.require_sos(phi2, &basis);
    Ok([h1, h2])
}

/// Reads the solved multiplier values referenced by `handles`.
pub(super) fn read_multipliers(handles: &PhiHandles, sol: &SosSolution) -> PhiMultipliers {
    let read = |refs: &[MulRef]| -> Vec<DMatrix<f64>> {
        refs.iter()
            .map(|r| match *r {
                MulRef::Scalar(v) => DMatrix::from_element(1, 1, sol.values[v]),
                MulRef::Gram(b) => sol.grams[b].clone(),
            })
            .collect()
    };
    let m = handles.p1.len();
    let diag_negated = |refs: &[MulRef]| -> Vec<DMatrix<f64>> {
        (0..m)
            .map(|i| match refs[i * m + i] {
                MulRef::Scalar(v) => DMatrix::from_element(1, 1, -sol.values[v]),
                MulRef::Gram(b) => -&sol.grams[b],
            })
            .collect()
    };
    PhiMultipliers {
        p1: read(&handles.p1),
        p2: read(&handles.p2),
        p3: read(&handles.p3),
        p4: read(&handles.p4),
        p5: read(&handles.p5),
        p6: read(&handles.p6),
        p7: read(&handles.p7),
        p8: read(&handles.p8),
        s1: diag_negated(&handles.p7),
        s2: diag_negated(&handles.p8),
    }
}
