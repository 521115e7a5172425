//! Linear complementarity problems: Lemke pivoting and active-set enumeration.
//!
//! `LCP(q, F)` asks for `lam` with
//!
//! ```text
//!     0 <= lam  perp  q + F lam >= 0
//! ```
//!
//! [`lemke`] is the production solver (used inside every simulation step).
//! [`enumerate_solutions`] is an independent oracle that visits all `2^m`
//! active sets and reports every solution, including degenerate families with
//! their directions; it exists to cross-check both the pivoting solver and any
//! claimed uniqueness map `W`, so the two must never share code paths.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Pivot threshold below which a tableau entry is treated as zero.
pub const PIVOT_TOL: f64 = 1e-9;

/// Relative singular value cutoff for rank decisions inside enumeration.
pub const RANK_TOL: f64 = 1e-10;

/// Errors from the LCP routines.
#[derive(Debug, Error)]
pub enum LcpError {
    #[error("F must be square and match q: F is {0}x{1}, q has {2}")]
    Dimension(usize, usize, usize),
    #[error("secondary ray after {pivots} pivots; no solution found on this path")]
    RayTermination { pivots: usize },
    #[error("pivot limit {0} reached")]
    PivotLimit(usize),
    #[error("enumeration supports at most {max} contacts, got {got}")]
    TooLarge { max: usize, got: usize },
}

/// Options for [`lemke`].
#[derive(Debug, Clone, Copy)]
pub struct LemkeOptions {
    /// Entries with |value| below this are not eligible pivots.
    pub pivot_tol: f64,
    /// Hard cap on pivot count; 0 selects `max(1000, 32 m^2)`.
    pub max_pivots: usize,
}

impl Default for LemkeOptions {
    fn default() -> Self {
        LemkeOptions { pivot_tol: PIVOT_TOL, max_pivots: 0 }
    }
}

/// A solution returned by the pivoting solver.
#[derive(Debug, Clone)]
pub struct LemkeSolution {
    pub lam: DVector<f64>,
    /// Pivots performed, including the covering pivot.
    pub pivots: usize,
    /// `max(0, -min_i lam_i, -min_i (q + F lam)_i, |lam . (q + F lam)| / (1 + |q|))`.
    pub residual: f64,
}

/// Solves `LCP(q, F)` by Lemke's complementary pivoting with a covering ray
/// and lexicographic tie-breaking (anti-cycling).
///
/// Returns the solution found on the primary ray path. `RayTermination` means
/// the path escaped along a secondary ray; for copositive-plus or P-matrix
/// `F` this certifies infeasibility, in general it only means failure.
pub fn lemke(f: &DMatrix<f64>, q: &DVector<f64>, opts: LemkeOptions) -> Result<LemkeSolution, LcpError> {
    let m = q.len();
    if f.nrows() != m || f.ncols() != m {
        return Err(LcpError::Dimension(f.nrows(), f.ncols(), m));
    }
    if m == 0 {
        return Ok(LemkeSolution { lam: DVector::zeros(0), pivots: 0, residual: 0.0 });
    }
    // Trivial solution: q >= 0.
    if q.iter().all(|&v| v >= 0.0) {
        return Ok(LemkeSolution { lam: DVector::zeros(m), pivots: 0, residual: 0.0 });
    }
    let max_pivots = if opts.max_pivots == 0 { (32 * m * m).max(1000) } else { opts.max_pivots };
    let tol = opts.pivot_tol;

    // Augmented system: w - F z - e z0 = q. Variable indices: w_i = i,
    // z_i = m + i, z0 = 2m. We keep the inverse basis explicitly: each row i
    // stores (qbar_i, binv_i) with qbar = B^-1 q, binv = B^-1; the lexicographic
    // rule compares rows of [qbar binv], which mimics perturbing q by
    // (eps, eps^2, ..., eps^m).
    let mut binv = DMatrix::<f64>::identity(m, m);
    let mut qbar = q.clone();
    let mut basis: Vec<usize> = (0..m).collect();

    // Covering pivot: z0 enters, the row with most negative q leaves. Under the
    // eps-perturbation ties resolve to the largest row index.
    let mut r = 0;
    for i in 1..m {
        if qbar[i] <= qbar[r] {
            r = i;
        }
    }
    // Column of z0 is -e; pivot element is -(-1) after sign bookkeeping below.
    let mut entering = 2 * m;
    let mut pivots = 0usize;

    loop {
        // Original column of the entering variable.
        let col: DVector<f64> = if entering < m {
            DVector::from_fn(m, |i, _| if i == entering { 1.0 } else { 0.0 })
        } else if entering < 2 * m {
            -f.column(entering - m).into_owned()
        } else {
            DVector::from_element(m, -1.0)
        };
        let d = &binv * &col;

        let row = if pivots == 0 {
            // Covering step: the precomputed most-negative-q row. d[r] = -1 there.
            r
        } else {
            match lexico_min_ratio_row(&qbar, &binv, &d, tol) {
                Some(row) => row,
                None => return Err(LcpError::RayTermination { pivots }),
            }
        };

        // Pivot: divide row by d[row], eliminate elsewhere.
        let piv = d[row];
        if piv.abs() <= tol {
            return Err(LcpError::RayTermination { pivots });
        }
        let inv = 1.0 / piv;
        qbar[row] *= inv;
        for j in 0..m {
            binv[(row, j)] *= inv;
        }
        for i in 0..m {
            if i != row && d[i] != 0.0 {
                let factor = d[i];
                qbar[i] -= factor * qbar[row];
                for j in 0..m {
                    binv[(i, j)] -= factor * binv[(row, j)];
                }
            }
        }
        let leaving = basis[row];
        basis[row] = entering;
        pivots += 1;
        if pivots >= max_pivots {
            return Err(LcpError::PivotLimit(max_pivots));
        }

        if leaving == 2 * m {
            break;
        }
        // Complementary rule: the complement of the leaving variable enters.
        entering = if leaving < m { leaving + m } else { leaving - m };
    }

    let mut lam = DVector::zeros(m);
    for (row, &var) in basis.iter().enumerate() {
        if (m..2 * m).contains(&var) {
            lam[var - m] = qbar[row].max(0.0);
        }
    }
    let residual = lcp_residual(f, q, &lam);
    Ok(LemkeSolution { lam, pivots, residual })
}

/// Lexicographic minimum ratio test over rows with `d > tol`.
fn lexico_min_ratio_row(
    qbar: &DVector<f64>,
    binv: &DMatrix<f64>,
    d: &DVector<f64>,
    tol: f64,
) -> Option<usize> {
    let m = qbar.len();
    let mut best: Option<usize> = None;
    for i in 0..m {
        if d[i] <= tol {
            continue;
        }
        best = Some(match best {
            None => i,
            Some(b) => {
                // Compare (qbar, binv) rows scaled by 1/d lexicographically.
                let mut choice = b;
                let first = qbar[i] / d[i] - qbar[b] / d[b];
                if first < 0.0 {
                    choice = i;
                } else if first == 0.0 {
                    for j in 0..m {
                        let diff = binv[(i, j)] / d[i] - binv[(b, j)] / d[b];
                        if diff < 0.0 {
                            choice = i;
                            break;
                        } else if diff > 0.0 {
                            break;
                        }
                    }
                }
                choice
            }
        });
    }
    best
}

/// Max violation of feasibility and complementarity, scaled by `1 + |q|_inf`.
pub fn lcp_residual(f: &DMatrix<f64>, q: &DVector<f64>, lam: &DVector<f64>) -> f64 {
    let s = q + f * lam;
    let scale = 1.0 + q.amax().max(lam.amax());
    let mut r: f64 = 0.0;
    for i in 0..q.len() {
        r = r.max(-lam[i]).max(-s[i]).max((lam[i] * s[i]).abs() / scale);
    }
    r / scale
}

/// One member of the solution set found by enumeration.
#[derive(Debug, Clone)]
pub struct EnumeratedSolution {
    /// Minimum-norm representative for its active set.
    pub lam: DVector<f64>,
    /// Indices allowed to be positive in this branch.
    pub active: Vec<usize>,
    /// True when the active-set system was rank deficient but consistent:
    /// the representative extends to a family `lam + span(directions)`.
    pub degenerate: bool,
    /// Nullspace directions of the active-set system, embedded in R^m.
    pub directions: Vec<DVector<f64>>,
}

/// All solutions of an LCP found by exhaustive active-set enumeration.
#[derive(Debug, Clone)]
pub struct SolutionSet {
    pub solutions: Vec<EnumeratedSolution>,
    pub m: usize,
}

impl SolutionSet {
    /// No solution at all: the LCP is infeasible.
    pub fn is_empty(&self) -> bool {
        self.solutions.is_empty()
    }

    /// True when all members agree on `lam` within `tol` and none is a family.
    pub fn is_singleton(&self, tol: f64) -> bool {
        if self.solutions.is_empty() {
            return false;
        }
        if self.solutions.iter().any(|s| s.degenerate) {
            return false;
        }
        let first = &self.solutions[0].lam;
        self.solutions.iter().all(|s| (&s.lam - first).amax() <= tol)
    }
}

/// Largest contact count accepted by [`enumerate_solutions`] (2^m branches).
pub const ENUM_MAX_CONTACTS: usize = 16;

/// Enumerates every solution of `LCP(q, F)` by trying all `2^m` active sets.
///
/// For each active set `alpha` the equality system `F[alpha, alpha] x = -q[alpha]`
/// is solved by SVD. Consistent rank-deficient systems yield a flagged
/// degenerate family: the minimum-norm representative plus the nullspace
/// directions. Members are kept per active set; identical `lam` values can
/// therefore appear under several active sets (for boundary solutions), which
/// is harmless for set-valued checks.
///
/// `tol` scales the feasibility screen; violations up to `tol * (1 + |q|_inf)`
/// are accepted.
pub fn enumerate_solutions(
    f: &DMatrix<f64>,
    q: &DVector<f64>,
    tol: f64,
) -> Result<SolutionSet, LcpError> {
    let m = q.len();
    if f.nrows() != m || f.ncols() != m {
        return Err(LcpError::Dimension(f.nrows(), f.ncols(), m));
    }
    if m > ENUM_MAX_CONTACTS {
        return Err(LcpError::TooLarge { max: ENUM_MAX_CONTACTS, got: m });
    }
    let feas = tol * (1.0 + q.amax());
    let mut solutions = Vec::new();

    for mask in 0u32..(1u32 << m) {
        let active: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
        let k = active.len();

        let (rep, dirs, consistent) = if k == 0 {
            (DVector::zeros(0), Vec::new(), true)
        } else {
            let faa = DMatrix::from_fn(k, k, |i, j| f[(active[i], active[j])]);
            let qa = DVector::from_fn(k, |i, _| q[active[i]]);
            solve_min_norm(&faa, &(-qa), feas)
        };
        if !consistent {
            continue;
        }

        let mut lam = DVector::zeros(m);
        for (i, &idx) in active.iter().enumerate() {
            lam[idx] = rep[i];
        }
        // Representative must be sign-feasible and all gaps nonnegative.
        if lam.iter().any(|&v| v < -feas) {
            continue;
        }
        let s = q + f * &lam;
        if s.iter().any(|&v| v < -feas) {
            continue;
        }
        let directions: Vec<DVector<f64>> = dirs
            .into_iter()
            .map(|d| {
                let mut full = DVector::zeros(m);
                for (i, &idx) in active.iter().enumerate() {
                    full[idx] = d[i];
                }
                full
            })
            .collect();
        solutions.push(EnumeratedSolution {
            lam,
            active,
            degenerate: !directions.is_empty(),
            directions,
        });
    }
    Ok(SolutionSet { solutions, m })
}

/// Minimum-norm solution of `a x = b` by SVD.
///
/// Returns `(x, nullspace basis, consistent)`; `consistent` is false when the
/// residual of the least squares solution exceeds `feas * (1 + |b|_inf)`.
fn solve_min_norm(a: &DMatrix<f64>, b: &DVector<f64>, feas: f64) -> (DVector<f64>, Vec<DVector<f64>>, bool) {
    let k = a.nrows();
    let svd = a.clone().svd(true, true);
    let u = svd.u.as_ref().expect("svd requested u");
    let vt = svd.v_t.as_ref().expect("svd requested v_t");
    let smax = svd.singular_values.max();
    let cut = RANK_TOL * smax.max(1e-300);
    let mut x = DVector::zeros(k);
    let mut dirs = Vec::new();
    for i in 0..k {
        let sv = svd.singular_values[i];
        if sv > cut {
            let coef = u.column(i).dot(b) / sv;
            x += coef * vt.row(i).transpose();
        } else {
            dirs.push(vt.row(i).transpose().into_owned());
        }
    }
    let residual = (a * &x - b).amax();
    let consistent = residual <= feas * (1.0 + b.amax());
    (x, dirs, consistent)
}

/// Tests whether all principal minors of `f` exceed `tol` (P-matrix check).
///
/// P-matrices have a unique LCP solution for every `q`. Cost is `2^m`
/// determinants; guarded by [`ENUM_MAX_CONTACTS`].
pub fn is_p_matrix(f: &DMatrix<f64>, tol: f64) -> Result<bool, LcpError> {
    let m = f.nrows();
    if f.ncols() != m {
        return Err(LcpError::Dimension(f.nrows(), f.ncols(), m));
    }
    if m > ENUM_MAX_CONTACTS {
        return Err(LcpError::TooLarge { max: ENUM_MAX_CONTACTS, got: m });
    }
    for mask in 1u32..(1u32 << m) {
        let idx: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
        let sub = DMatrix::from_fn(idx.len(), idx.len(), |i, j| f[(idx[i], idx[j])]);
        if sub.determinant() <= tol {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn solve(f: &DMatrix<f64>, q: &DVector<f64>) -> LemkeSolution {
        lemke(f, q, LemkeOptions::default()).expect("solvable")
    }

    #[test]
    fn scalar_contact_closed_form() {
        // F = [1]: lam = max(0, -q).
        let f = DMatrix::from_row_slice(1, 1, &[1.0]);
        for q0 in [-2.5, -0.1, 0.0, 0.3] {
            let sol = solve(&f, &DVector::from_vec(vec![q0]));
            assert_abs_diff_eq!(sol.lam[0], (-q0).max(0.0), epsilon = 1e-12);
        }
    }

    #[test]
    fn two_contact_hand_case() {
        // Wall pair from the cart-pole benchmark: F = 0.1 I, gaps can only be
        // negative one at a time.
        let f = DMatrix::from_row_slice(2, 2, &[0.1, 0.0, 0.0, 0.1]);
        let q = DVector::from_vec(vec![-0.04, 0.24]);
        let sol = solve(&f, &q);
        assert_abs_diff_eq!(sol.lam[0], 0.4, epsilon = 1e-12);
        assert_abs_diff_eq!(sol.lam[1], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn infeasible_lcp_reports_ray() {
        // q + F lam = -1 + 0 lam < 0 always.
        let f = DMatrix::from_row_slice(1, 1, &[0.0]);
        let q = DVector::from_vec(vec![-1.0]);
        match lemke(&f, &q, LemkeOptions::default()) {
            Err(LcpError::RayTermination { .. }) => {}
            other => panic!("expected ray termination, got {other:?}"),
        }
    }

    #[test]
    fn degenerate_q_zero_terminates() {
        let f = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        let q = DVector::from_vec(vec![0.0, -1.0]);
        // Skew F is not copositive-plus-friendly; we only require termination
        // without cycling, with either outcome.
        let _ = lemke(&f, &q, LemkeOptions::default());
    }

    fn random_p_matrix(rng: &mut ChaCha8Rng, m: usize) -> DMatrix<f64> {
        match rng.gen_range(0..3) {
            0 => {
                // SPD: R^T R + delta I.
                let r = DMatrix::from_fn(m, m, |_, _| rng.gen_range(-1.0..1.0));
                r.transpose() * &r + DMatrix::identity(m, m) * 0.1
            }
            1 => {
                // Triangular with positive diagonal.
                DMatrix::from_fn(m, m, |i, j| {
                    if i == j {
                        rng.gen_range(0.2..2.0)
                    } else if i < j {
                        rng.gen_range(-1.0..1.0)
                    } else {
                        0.0
                    }
                })
            }
            _ => {
                // Diagonally dominant perturbation of I.
                DMatrix::from_fn(m, m, |i, j| {
                    if i == j { 1.0 } else { rng.gen_range(-0.9..0.9) / m as f64 }
                })
            }
        }
    }

    #[test]
    fn lemke_agrees_with_enumeration_on_p_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let m = rng.gen_range(1..=5);
            let f = random_p_matrix(&mut rng, m);
            assert!(is_p_matrix(&f, 0.0).unwrap());
            let q = DVector::from_fn(m, |_, _| rng.gen_range(-2.0..2.0));
            let sol = solve(&f, &q);
            assert!(sol.residual < 1e-10, "residual {}", sol.residual);
            let set = enumerate_solutions(&f, &q, 1e-9).unwrap();
            assert!(!set.is_empty());
            for member in &set.solutions {
                assert_abs_diff_eq!((&member.lam - &sol.lam).amax(), 0.0, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn enumeration_flags_degenerate_family() {
        // F = 0, q = 0: lam arbitrary >= 0 on the active branch.
        let f = DMatrix::from_row_slice(1, 1, &[0.0]);
        let q = DVector::from_vec(vec![0.0]);
        let set = enumerate_solutions(&f, &q, 1e-9).unwrap();
        assert!(set.solutions.iter().any(|s| s.degenerate && !s.directions.is_empty()));
        assert!(!set.is_singleton(1e-9));
    }

    #[test]
    fn enumeration_finds_multiple_isolated_solutions() {
        // F = [[1, 2], [2, 1]] is not P; q = (-1, -1) has solutions
        // (1, 0), (0, 1) and (1/3, 1/3).
        let f = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let q = DVector::from_vec(vec![-1.0, -1.0]);
        let set = enumerate_solutions(&f, &q, 1e-9).unwrap();
        let mut found = [false; 3];
        for s in &set.solutions {
            if (s.lam[0] - 1.0).abs() < 1e-9 && s.lam[1].abs() < 1e-9 {
                found[0] = true;
            }
            if s.lam[0].abs() < 1e-9 && (s.lam[1] - 1.0).abs() < 1e-9 {
                found[1] = true;
            }
            if (s.lam[0] - 1.0 / 3.0).abs() < 1e-9 && (s.lam[1] - 1.0 / 3.0).abs() < 1e-9 {
                found[2] = true;
            }
        }
        assert_eq!(found, [true, true, true]);
    }

    #[test]
    fn p_matrix_check_rejects_indefinite() {
        let f = DMatrix::from_row_slice(2, 2, &[1.0, 3.0, 3.0, 1.0]);
        assert!(!is_p_matrix(&f, 0.0).unwrap());
    }
}
