//! Compilation of polynomial identities to a standard-form cone program.
//!
//! [`SosBuilder`] registers scalar decision variables (free, nonnegative, or
//! entries of a Gram matrix), accumulates polynomial identities that must
//! vanish coefficient-by-coefficient, and lowers the whole system to a
//! [`StandardProgram`]: one equality row per monomial, orthant slots for the
//! nonnegative scalars, and one PSD block per Gram matrix. An svec
//! coordinate of a PSD block stores `sqrt(2) G_ij` for `i < j`, so row
//! coefficients on off-diagonal entries are divided by `sqrt(2)` during
//! compilation and solution values multiplied back on readback.

use nalgebra::{DMatrix, DVector};
use std::collections::BTreeMap;

use crate::certify::Aff;
use crate::conic::{
    smat, solve_cone_program, svec_index, ConeLayout, ConeSettings, ConeStatus, SparseRow,
    StandardProgram, SQRT2,
};

use super::poly::{canonical_terms, mono_mul, Mono, Poly};
use super::SosError;

/// Relative cutoff below which an expanded coefficient is treated as
/// accumulated rounding from the symbolic expansion.
pub const COEF_TOL: f64 = 1e-12;

/// Relative cutoff for the row presolve: a row whose residual after
/// elimination against the kept rows falls below this times its original
/// norm is an exact linear consequence of them.
pub const PRESOLVE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy)]
enum VarKind {
    Free,
    Nonneg,
    Gram { block: usize, i: usize, j: usize },
}

/// Incremental description of one polynomial feasibility or optimization
/// problem.
#[derive(Default)]
pub struct SosBuilder {
    kinds: Vec<VarKind>,
    block_dims: Vec<usize>,
    identities: Vec<Poly>,
    lin_eq: Vec<(Vec<(usize, f64)>, f64)>,
    objective: Vec<(usize, f64)>,
}

/// Solved values of a builder's variables.
#[derive(Debug, Clone)]
pub struct SosSolution {
    pub status: ConeStatus,
    /// Per-variable values in registration order; off-diagonal Gram entries
    /// are reported as matrix entries, not svec coordinates. Populated for
    /// `Optimal` and for the stagnated statuses, which carry the engine's
    /// best iterate; zero for infeasibility certificates.
    pub values: DVector<f64>,
    /// Full symmetric Gram matrix per registered block.
    pub grams: Vec<DMatrix<f64>>,
    pub objective: f64,
    pub gap: f64,
    /// Normalized primal and dual residuals achieved at the read-back point.
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub iters: usize,
}

impl SosBuilder {
    pub fn new() -> Self {
        SosBuilder::default()
    }

    pub fn n_vars(&self) -> usize {
        self.kinds.len()
    }

    /// Registers a sign-unconstrained scalar.
    pub fn free_var(&mut self) -> usize {
        self.kinds.push(VarKind::Free);
        self.kinds.len() - 1
    }

    /// Registers a nonnegative scalar.
    pub fn nonneg_var(&mut self) -> usize {
        self.kinds.push(VarKind::Nonneg);
        self.kinds.len() - 1
    }

    /// Registers a Gram matrix over `basis` and returns its expansion
    /// `sum_{i<=j} (2 - [i==j]) G_ij b_i b_j` together with the block index.
    pub fn sos_poly(&mut self, basis: &[Mono]) -> (Poly, usize) {
        let d = basis.len();
        let block = self.block_dims.len();
        self.block_dims.push(d);
        let mut p = Poly::zero();
        for j in 0..d {
            for i in 0..=j {
                let var = self.kinds.len();
                self.kinds.push(VarKind::Gram { block, i, j });
                let coef = if i == j { 1.0 } else { 2.0 };
                p.add_term(mono_mul(&basis[i], &basis[j]), &Aff::var(var), coef);
            }
        }
        (p, block)
    }

    /// Requires `p == 0` as a polynomial identity.
    pub fn require_zero(&mut self, p: Poly) {
        self.identities.push(p);
    }

    /// Requires `p` to equal a sum of squares over `basis`; returns the Gram
    /// block index.
    pub fn require_sos(&mut self, p: Poly, basis: &[Mono]) -> usize {
        let (expansion, block) = self.sos_poly(basis);
        let mut diff = p;
        diff.add_scaled(&expansion, -1.0);
        self.require_zero(diff);
        block
    }

    /// Adds the scalar equality `sum coef * var = rhs`.
    pub fn linear_eq(&mut self, terms: Vec<(usize, f64)>, rhs: f64) {
        self.lin_eq.push((terms, rhs));
    }

    /// Gram matrix of `block` read from an arbitrary assignment of the
    /// builder's variables.
    pub fn gram_at(&self, block: usize, values: &DVector<f64>) -> DMatrix<f64> {
        let d = self.block_dims[block];
        let mut g = DMatrix::zeros(d, d);
        for (var, kind) in self.kinds.iter().enumerate() {
            if let VarKind::Gram { block: b, i, j } = *kind {
                if b == block {
                    g[(i, j)] = values[var];
                    g[(j, i)] = values[var];
                }
            }
        }
        g
    }

    pub fn n_blocks(&self) -> usize {
        self.block_dims.len()
    }

    /// Diagonal entry variables of every Gram block, for trace penalties.
    pub fn gram_diag_vars(&self) -> Vec<usize> {
        self.kinds
            .iter()
            .enumerate()
            .filter_map(|(var, kind)| match kind {
                VarKind::Gram { i, j, .. } if i == j => Some(var),
                _ => None,
            })
            .collect()
    }

    /// Minimizes `sum coef * var`; empty means a pure feasibility solve.
    pub fn set_objective(&mut self, terms: Vec<(usize, f64)>) {
        self.objective = terms;
    }

    /// Slot of each variable: free index, orthant index, or svec coordinate.
    fn slots(&self) -> (Vec<(bool, usize)>, usize, usize) {
        let mut n_free = 0;
        let mut n_orth = 0;
        for k in &self.kinds {
            match k {
                VarKind::Free => n_free += 1,
                VarKind::Nonneg => n_orth += 1,
                VarKind::Gram { .. } => {}
            }
        }
        let psd_offset: Vec<usize> = {
            let mut off = n_orth;
            self.block_dims
                .iter()
                .map(|&d| {
                    let here = off;
                    off += d * (d + 1) / 2;
                    here
                })
                .collect()
        };
        let mut slots = Vec::with_capacity(self.kinds.len());
        let (mut fi, mut oi) = (0, 0);
        for k in &self.kinds {
            match *k {
                VarKind::Free => {
                    slots.push((true, fi));
                    fi += 1;
                }
                VarKind::Nonneg => {
                    slots.push((false, oi));
                    oi += 1;
                }
                VarKind::Gram { block, i, j } => {
                    slots.push((false, psd_offset[block] + svec_index(i, j)));
                }
            }
        }
        (slots, n_free, n_orth)
    }

    /// Coefficient carried into the cone coordinate of a variable: svec
    /// stores `sqrt(2)` times the off-diagonal matrix entry.
    fn cone_scale(&self, var: usize) -> f64 {
        match self.kinds[var] {
            VarKind::Gram { i, j, .. } if i != j => 1.0 / SQRT2,
            _ => 1.0,
        }
    }

    /// Lowers the builder to standard form; returns the program together
    /// with the variable slot map and the free-variable count.
    fn lower(&self) -> Result<(StandardProgram, Vec<(bool, usize)>, usize), SosError> {
        let (slots, n_free, n_orth) = self.slots();
        let layout = ConeLayout { nonneg: n_orth, psd: self.block_dims.clone() };
        let cdim = layout.dim();

        let mut a_u_rows: Vec<Vec<(usize, f64)>> = Vec::new();
        let mut a_cone: Vec<SparseRow> = Vec::new();
        let mut b = Vec::new();
        let mut push_row = |u_row: Vec<(usize, f64)>, c_row: SparseRow, rhs: f64| {
            a_u_rows.push(u_row);
            a_cone.push(c_row);
            b.push(rhs);
        };

        for ident in &self.identities {
            for (mono, aff) in &ident.terms {
                let (constant, terms) = canonical_terms(aff, COEF_TOL);
                if terms.is_empty() {
                    if constant != 0.0 {
                        return Err(SosError::Structural { mono: mono.clone(), value: constant });
                    }
                    continue;
                }
                let mut u_row = Vec::new();
                let mut c_row: BTreeMap<usize, f64> = BTreeMap::new();
                for (var, coef) in terms {
                    let (is_free, slot) = slots[var];
                    if is_free {
                        u_row.push((slot, coef));
                    } else {
                        *c_row.entry(slot).or_insert(0.0) += coef * self.cone_scale(var);
                    }
                }
                push_row(u_row, c_row.into_iter().collect(), -constant);
            }
        }
        for (terms, rhs) in &self.lin_eq {
            let mut u_row = Vec::new();
            let mut c_row: BTreeMap<usize, f64> = BTreeMap::new();
            for &(var, coef) in terms {
                let (is_free, slot) = slots[var];
                if is_free {
                    u_row.push((slot, coef));
                } else {
                    *c_row.entry(slot).or_insert(0.0) += coef * self.cone_scale(var);
                }
            }
            push_row(u_row, c_row.into_iter().collect(), *rhs);
        }

        let keep = independent_rows(&a_u_rows, &a_cone, &b, n_free, cdim)?;
        if keep.len() < b.len() {
            let mut old_u = std::mem::take(&mut a_u_rows);
            a_u_rows = keep.iter().map(|&i| std::mem::take(&mut old_u[i])).collect();
            let mut old_c = std::mem::take(&mut a_cone);
            a_cone = keep.iter().map(|&i| std::mem::take(&mut old_c[i])).collect();
            b = keep.iter().map(|&i| b[i]).collect();
        }

        let p = b.len();
        let mut a_u = DMatrix::zeros(p, n_free);
        for (r, row) in a_u_rows.iter().enumerate() {
            for &(c, v) in row {
                a_u[(r, c)] += v;
            }
        }
        let mut c_u = DVector::zeros(n_free);
        let mut c_cone = DVector::zeros(cdim);
        for &(var, coef) in &self.objective {
            let (is_free, slot) = slots[var];
            if is_free {
                c_u[slot] += coef;
            } else {
                c_cone[slot] += coef * self.cone_scale(var);
            }
        }

        let prog = StandardProgram::new(
            layout,
            c_u,
            c_cone,
            a_u,
            a_cone,
            DVector::from_vec(b),
        )?;
        Ok((prog, slots, n_free))
    }

    /// Lowered standard form, for structural inspection in tests.
    #[cfg(test)]
    pub(super) fn lowered(&self) -> Result<StandardProgram, SosError> {
        Ok(self.lower()?.0)
    }

    /// Monomial label per lowered identity row, in row order, for structural
    /// inspection in tests. Linear equality rows follow these.
    #[cfg(test)]
    pub(super) fn identity_row_labels(&self) -> Vec<(usize, Mono)> {
        let mut labels = Vec::new();
        for (k, ident) in self.identities.iter().enumerate() {
            for (mono, aff) in &ident.terms {
                let (_, terms) = canonical_terms(aff, COEF_TOL);
                if !terms.is_empty() {
                    labels.push((k, mono.clone()));
                }
            }
        }
        labels
    }

    /// Lowers the builder and runs the interior-point engine.
    pub fn solve(&self, settings: &ConeSettings) -> Result<SosSolution, SosError> {
        let (mut prog, slots, n_free) = self.lower()?;
        let sol = solve_cone_program(&mut prog, settings);

        let mut values = DVector::zeros(self.kinds.len());
        let mut grams: Vec<DMatrix<f64>> =
            self.block_dims.iter().map(|&d| DMatrix::zeros(d, d)).collect();
        let has_point = matches!(
            sol.status,
            ConeStatus::Optimal | ConeStatus::MaxIters | ConeStatus::Numerical
        );
        if has_point {
            for (var, &(is_free, slot)) in slots.iter().enumerate() {
                let raw = if is_free { sol.x[slot] } else { sol.x[n_free + slot] };
                values[var] = raw * self.cone_scale(var);
            }
            let psd_offsets = prog.layout.psd_offsets();
            for (bidx, &d) in self.block_dims.iter().enumerate() {
                let start = n_free + psd_offsets[bidx];
                grams[bidx] = smat(&sol.x.as_slice()[start..start + d * (d + 1) / 2], d);
            }
        }
        let objective = self
            .objective
            .iter()
            .map(|&(var, coef)| coef * values[var])
            .sum::<f64>();
        Ok(SosSolution {
            status: sol.status,
            values,
            grams,
            objective,
            gap: sol.gap,
            primal_residual: sol.primal_residual,
            dual_residual: sol.dual_residual,
            iters: sol.iters,
        })
    }
}

/// Indices of a maximal independent subset of the equality rows, in order.
///
/// Matching rows over a pruned Gram basis are frequently exact linear
/// consequences of one another (several monomials can pin the same few
/// multiplier entries), and dependent equalities make the interior-point
/// normal equations singular. Each row is eliminated against the pivots of
/// the rows already kept: a vanishing residual marks it as dependent and it
/// is dropped after its right-hand side is checked for agreement, since a
/// dependent row with a conflicting right-hand side proves the identity
/// system contradictory.
fn independent_rows(
    a_u_rows: &[Vec<(usize, f64)>],
    a_cone: &[SparseRow],
    b: &[f64],
    n_free: usize,
    cdim: usize,
) -> Result<Vec<usize>, SosError> {
    let p = b.len();
    let n = n_free + cdim;
    let mut w = DMatrix::<f64>::zeros(p, n);
    for r in 0..p {
        for &(c, v) in &a_u_rows[r] {
            w[(r, c)] += v;
        }
        for &(c, v) in &a_cone[r] {
            w[(r, n_free + c)] += v;
        }
    }
    let mut rhs: Vec<f64> = b.to_vec();
    let mut keep: Vec<usize> = Vec::new();
    let mut pivots: Vec<(usize, usize)> = Vec::new();
    let mut kept_cols: Vec<Vec<usize>> = Vec::new();
    for i in 0..p {
        let scale = w.row(i).amax().max(rhs[i].abs());
        for (k, &(r, c)) in pivots.iter().enumerate() {
            let factor = w[(i, c)] / w[(r, c)];
            if factor == 0.0 {
                continue;
            }
            for &col in &kept_cols[k] {
                let v = w[(r, col)];
                w[(i, col)] -= factor * v;
            }
            w[(i, c)] = 0.0;
            rhs[i] -= factor * rhs[r];
        }
        let mut best = (0usize, 0.0f64);
        for col in 0..n {
            let v = w[(i, col)].abs();
            if v > best.1 {
                best = (col, v);
            }
        }
        if best.1 > PRESOLVE_TOL * scale {
            kept_cols.push((0..n).filter(|&c| w[(i, c)] != 0.0).collect());
            pivots.push((i, best.0));
            keep.push(i);
        } else if rhs[i].abs() > PRESOLVE_TOL * scale.max(1.0) {
            return Err(SosError::Inconsistent { value: rhs[i] });
        }
    }
    Ok(keep)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn settings() -> ConeSettings {
        ConeSettings::default()
    }

    #[test]
    fn perfect_square_is_sos() {
        // 1 + 2y + y^2 = (1 + y)^2 over basis {1, y}.
        let mut b = SosBuilder::new();
        let mut p = Poly::monomial(Vec::new(), 1.0);
        p.add_scaled(&Poly::monomial(vec![0], 2.0), 1.0);
        p.add_scaled(&Poly::monomial(vec![0, 0], 1.0), 1.0);
        let block = b.require_sos(p, &[Vec::new(), vec![0]]);
        let sol = b.solve(&settings()).unwrap();
        assert_eq!(sol.status, ConeStatus::Optimal);
        let g = &sol.grams[block];
        // The Gram of (1 + y)^2 is unique here: [[1, 1], [1, 1]].
        assert!((g[(0, 0)] - 1.0).abs() < 1e-6);
        assert!((g[(0, 1)] - 1.0).abs() < 1e-6);
        assert!((g[(1, 1)] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn odd_polynomial_is_not_sos() {
        // y alone cannot be a sum of squares.
        let mut b = SosBuilder::new();
        let p = Poly::monomial(vec![0], 1.0);
        b.require_sos(p, &[Vec::new(), vec![0]]);
        let sol = b.solve(&settings()).unwrap();
        assert_eq!(sol.status, ConeStatus::PrimalInfeasible);
    }

    #[test]
    fn missing_basis_monomial_is_structural() {
        // y^4 cannot appear with basis {1, y}: no Gram product reaches it.
        let mut b = SosBuilder::new();
        let p = Poly::monomial(vec![0, 0, 0, 0], 1.0);
        b.require_sos(p, &[Vec::new(), vec![0]]);
        match b.solve(&settings()) {
            Err(SosError::Structural { mono, .. }) => assert_eq!(mono, vec![0, 0, 0, 0]),
            other => panic!("expected structural error, got {other:?}"),
        }
    }

    #[test]
    fn gram_readback_matches_identity() {
        // x^2 + 4xy + 5y^2 is SOS; the recovered Gram must reproduce the
        // coefficients, including the sqrt(2) svec scaling on off-diagonals.
        let mut b = SosBuilder::new();
        let mut p = Poly::monomial(vec![0, 0], 1.0);
        p.add_scaled(&Poly::monomial(vec![0, 1], 4.0), 1.0);
        p.add_scaled(&Poly::monomial(vec![1, 1], 5.0), 1.0);
        let block = b.require_sos(p, &[vec![0], vec![1]]);
        let sol = b.solve(&settings()).unwrap();
        assert_eq!(sol.status, ConeStatus::Optimal);
        let g = &sol.grams[block];
        assert!((g[(0, 0)] - 1.0).abs() < 1e-6);
        assert!((2.0 * g[(0, 1)] - 4.0).abs() < 1e-6);
        assert!((g[(1, 1)] - 5.0).abs() < 1e-6);
        // Entry values agree with the Gram matrix readback.
        assert!((sol.values[0] - g[(0, 0)]).abs() < 1e-12);
        assert!((sol.values[1] - g[(0, 1)]).abs() < 1e-12);
        assert!((sol.values[2] - g[(1, 1)]).abs() < 1e-12);
    }

    #[test]
    fn linear_program_over_mixed_variables() {
        // min f subject to f - n = 3, n >= 0 has optimum f = 3, n = 0.
        let mut b = SosBuilder::new();
        let f = b.free_var();
        let n = b.nonneg_var();
        b.linear_eq(vec![(f, 1.0), (n, -1.0)], 3.0);
        b.set_objective(vec![(f, 1.0)]);
        let sol = b.solve(&settings()).unwrap();
        assert_eq!(sol.status, ConeStatus::Optimal);
        assert!((sol.values[f] - 3.0).abs() < 1e-6);
        assert!(sol.values[n].abs() < 1e-6);
        assert!((sol.objective - 3.0).abs() < 1e-6);
    }

    #[test]
    fn shifted_square_needs_both_signs() {
        // (y - 2)^2 = y^2 - 4y + 4: feasible, Gram [[4, -2], [-2, 1]].
        let mut b = SosBuilder::new();
        let mut p = Poly::monomial(vec![0, 0], 1.0);
        p.add_scaled(&Poly::monomial(vec![0], -4.0), 1.0);
        p.add_scaled(&Poly::monomial(Vec::new(), 4.0), 1.0);
        let block = b.require_sos(p, &[Vec::new(), vec![0]]);
        let sol = b.solve(&settings()).unwrap();
        assert_eq!(sol.status, ConeStatus::Optimal);
        let g = &sol.grams[block];
        assert!((g[(0, 1)] + 2.0).abs() < 1e-6);
    }
}
