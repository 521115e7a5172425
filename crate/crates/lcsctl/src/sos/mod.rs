//! Search for a contact projection that is single-valued on LCP solutions.
//!
//! Some designs feed the controller a function of the contact forces even
//! though the forces themselves are set-valued: for a fixed contact matrix
//! `F`, the solution set of `LCP(q, F)` may contain many `lam` at some
//! offsets `q`. This module computes a maximal-rank matrix `W` such that
//! `W lam` takes a single value on the whole solution set at every `q`, so
//! feedback through `W lam` stays well defined.
//!
//! Each candidate row `w` is certified by the fixed-degree sum-of-squares
//! relaxation in [`phi`]: validity of the certificate implies
//! `|w'(lam1 - lam2)| <= eta` for all solution pairs with unit norm, and by
//! homogeneity of the solution map (solutions scale with `q`), for all pairs
//! outright. [`find_w`] repeats the row step with random objective
//! directions drawn in the nullspace of the accepted rows: a strictly
//! negative optimum exposes a new independent row almost surely, and the
//! search stops once no profitable direction remains. Accepted rows are
//! additionally vetted against the exhaustive enumeration oracle of the
//! `lcp` module, guarding against relaxation-gap false positives.

mod phi;
mod poly;
mod program;

pub use phi::PhiMultipliers;
pub use poly::{canonical_terms, mono_mul, Mono, Poly};
pub use program::{SosBuilder, SosSolution, COEF_TOL};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::certify::Aff;
use crate::conic::{nullspace_basis, ConeSettings, ConeStatus, ConicError};
use crate::lcp::{enumerate_solutions, LcpError};

use phi::{build_phi_constraints, read_multipliers};

/// Cap on the contact count for the polynomial programs; the Gram blocks
/// grow quadratically and the monomial rows quartically with `m`.
pub const SOS_MAX_CONTACTS: usize = 8;

/// Probability that an oracle offset coordinate is pinned to exactly zero.
pub const ORACLE_ZERO_PIN_PROB: f64 = 0.25;

/// Largest componentwise deviation, after scaling the row to unit maximum
/// entry, at which an accepted row is snapped to a nearby simple direction.
pub const SNAP_TOL: f64 = 1e-3;

/// Residual bound for accepting a stagnated deep solve. Certifiable rows
/// often fill a set with empty interior, so the polynomial programs have no
/// strictly complementary optimum and the embedding can stall short of the
/// cone tolerances with an essentially converged iterate; the best iterate
/// is accepted when its normalized residuals stay below this bound.
pub const STALL_FEAS_TOL: f64 = 1e-7;

/// Gap bound accompanying [`STALL_FEAS_TOL`] for stagnated solves.
pub const STALL_GAP_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum SosError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("{got} contacts exceeds the cap of {max}")]
    TooLarge { max: usize, got: usize },
    #[error("polynomial identity cannot hold: monomial {mono:?} carries fixed coefficient {value:.3e}")]
    Structural { mono: Vec<u16>, value: f64 },
    #[error("polynomial identities contradict each other: dependent matching row keeps residual {value:.3e}")]
    Inconsistent { value: f64 },
    #[error("cone solve ended with status {status:?}")]
    Solver { status: ConeStatus },
    #[error(transparent)]
    Conic(#[from] ConicError),
    #[error(transparent)]
    Lcp(#[from] LcpError),
}

/// Knobs of the row search.
#[derive(Debug, Clone)]
pub struct FindWSettings {
    /// Upper bound on the slack `eta`. The slack absorbs solver rounding in
    /// the certificates; its optimal value is reported per step.
    pub eta_cap: f64,
    /// A step objective at or above `-obj_tol` ends the search: no
    /// profitable independent row remains at the relaxation degree.
    pub obj_tol: f64,
    /// Cap on accepted rows; `None` allows up to the contact count.
    pub max_rows: Option<usize>,
    /// Upgrades the scalar multipliers on the bare candidate generators and
    /// the candidate products to quadratic sum-of-squares multipliers, the
    /// only classes where the extra degree is not structurally pinned to
    /// zero.
    pub escalated: bool,
    /// Random offsets drawn per enumeration-oracle check.
    pub oracle_samples: usize,
    /// Agreement tolerance of the oracle check.
    pub oracle_tol: f64,
    /// Weight of a trace penalty on every Gram block. Certificates are never
    /// unique (they can be inflated along feasible rays), so without the
    /// penalty the optimal face is unbounded and the interior-point solve
    /// stalls precisely at the stopping condition, where the row objective is
    /// flat. The penalty selects the minimal certificate; it is kept well
    /// below the row objective scale so bound-attaining rows stay optimal.
    pub gram_trace_weight: f64,
    pub cone: ConeSettings,
}

impl Default for FindWSettings {
    fn default() -> Self {
        FindWSettings {
            eta_cap: 1.0,
            obj_tol: 1e-6,
            max_rows: None,
            escalated: false,
            oracle_samples: 100,
            oracle_tol: 1e-6,
            gram_trace_weight: 1e-6,
            cone: ConeSettings::default(),
        }
    }
}

/// One solved row subproblem.
#[derive(Debug, Clone)]
pub struct FindWStep {
    /// Contact matrix the step was solved against.
    pub f: DMatrix<f64>,
    /// Rows fixed before this step.
    pub w_d: DMatrix<f64>,
    /// Orthonormal nullspace basis of `w_d` used by the objective.
    pub n: DMatrix<f64>,
    /// Random objective direction, entries uniform on `[0, 1)`.
    pub r: DVector<f64>,
    /// Optimal row, snapped to a nearby grid direction when the snapped row
    /// certifies on its own.
    pub w: DVector<f64>,
    /// Optimal value of `(N r)' w` at the reported row.
    pub objective: f64,
    /// Optimal slack.
    pub eta: f64,
    /// Multiplier values of the two constraints; the second entry plays the
    /// mirrored roles (base sign `-w`).
    pub multipliers: [PhiMultipliers; 2],
    /// Interior-point iterations spent.
    pub iters: usize,
}

/// Result of the full row search.
#[derive(Debug, Clone)]
pub struct FindWOutcome {
    /// Accepted rows, possibly none.
    pub w: DMatrix<f64>,
    /// Every solved step, including the final non-profitable or rejected
    /// one.
    pub steps: Vec<FindWStep>,
    /// True when the row cap stopped the search while the last step was
    /// still profitable.
    pub truncated: bool,
    /// Oracle report for the returned rows; `None` when no row was
    /// accepted.
    pub oracle: Option<OracleReport>,
}

/// Empirical agreement of `W lam` across enumerated solution sets.
#[derive(Debug, Clone)]
pub struct OracleReport {
    pub samples: usize,
    /// Offsets whose solution set had more than one member.
    pub multi_solution_samples: usize,
    /// Offsets with a degenerate (ray-carrying) solution family.
    pub degenerate_samples: usize,
    /// Offsets with an empty solution set (skipped).
    pub infeasible_samples: usize,
    /// Largest componentwise spread of `W lam` across members of one set.
    pub max_spread: f64,
    /// Largest component of `W d` over degenerate directions `d`.
    pub max_direction_leak: f64,
    pub passed: bool,
}

fn guard_contacts(f: &DMatrix<f64>) -> Result<usize, SosError> {
    let m = f.nrows();
    if f.ncols() != m {
        return Err(SosError::Dimension(format!("contact matrix {}x{}", f.nrows(), f.ncols())));
    }
    if m > SOS_MAX_CONTACTS {
        return Err(SosError::TooLarge { max: SOS_MAX_CONTACTS, got: m });
    }
    Ok(m)
}

/// Installs the shared slack variable with its cap; returns the slack id.
fn install_eta(b: &mut SosBuilder, cap: f64) -> usize {
    let eta = b.nonneg_var();
    let slack = b.nonneg_var();
    b.linear_eq(vec![(eta, 1.0), (slack, 1.0)], cap);
    eta
}

/// Gram trace penalty terms, weighted per diagonal entry.
fn trace_terms(b: &SosBuilder, weight: f64) -> Vec<(usize, f64)> {
    b.gram_diag_vars().into_iter().map(|v| (v, weight)).collect()
}

/// Whether the solution is usable as an optimum: either the engine
/// terminated cleanly or it stagnated within the documented thresholds.
fn usable_optimum(sol: &SosSolution) -> bool {
    match sol.status {
        ConeStatus::Optimal => true,
        ConeStatus::MaxIters | ConeStatus::Numerical => {
            sol.primal_residual <= STALL_FEAS_TOL
                && sol.dual_residual <= STALL_FEAS_TOL
                && sol.gap <= STALL_GAP_TOL
        }
        _ => false,
    }
}

/// Whether the fixed row `w` admits a certificate at the relaxation degree.
///
/// `Ok(false)` reports a certified infeasibility of the polynomial program;
/// solver stalls surface as [`SosError::Solver`].
pub fn check_w(
    f: &DMatrix<f64>,
    w: &DVector<f64>,
    settings: &FindWSettings,
) -> Result<bool, SosError> {
    let m = guard_contacts(f)?;
    if w.len() != m {
        return Err(SosError::Dimension(format!("row length {} vs contacts {m}", w.len())));
    }
    let mut b = SosBuilder::new();
    let eta = install_eta(&mut b, settings.eta_cap);
    let w_aff: Vec<Aff> = w.iter().map(|&v| Aff::constant(v)).collect();
    build_phi_constraints(&mut b, f, &w_aff, &Aff::var(eta), settings.escalated)?;
    b.set_objective(trace_terms(&b, settings.gram_trace_weight));
    match b.solve(&settings.cone) {
        // A matching row with no variables left and a nonzero coefficient,
        // or a dependent row with a conflicting right-hand side, proves that
        // the identity cannot hold for this fixed row.
        Err(SosError::Structural { .. } | SosError::Inconsistent { .. }) => Ok(false),
        Err(e) => Err(e),
        Ok(sol) if usable_optimum(&sol) => Ok(true),
        Ok(sol) => match sol.status {
            ConeStatus::PrimalInfeasible => Ok(false),
            status => Err(SosError::Solver { status }),
        },
    }
}

/// Solves one row subproblem: minimize `(N r)' w` over certifiable rows with
/// `|w_i| <= 1`, where `N` spans the nullspace of `w_d`.
///
/// `r` must have one entry per nullspace direction. With no direction left
/// the returned step is degenerate: zero row, zero objective.
pub fn solve_find_w_step(
    f: &DMatrix<f64>,
    w_d: &DMatrix<f64>,
    r: &DVector<f64>,
    settings: &FindWSettings,
) -> Result<FindWStep, SosError> {
    let m = guard_contacts(f)?;
    if w_d.ncols() != m && w_d.nrows() > 0 {
        return Err(SosError::Dimension(format!("{} fixed columns vs contacts {m}", w_d.ncols())));
    }
    let n = nullspace_basis(w_d, None);
    if r.len() != n.ncols() {
        return Err(SosError::Dimension(format!(
            "objective length {} vs nullspace dimension {}",
            r.len(),
            n.ncols()
        )));
    }
    if n.ncols() == 0 {
        return Ok(FindWStep {
            f: f.clone(),
            w_d: w_d.clone(),
            n,
            r: r.clone(),
            w: DVector::zeros(m),
            objective: 0.0,
            eta: 0.0,
            multipliers: [empty_multipliers(m), empty_multipliers(m)],
            iters: 0,
        });
    }

    let mut b = SosBuilder::new();
    let w_vars: Vec<usize> = (0..m).map(|_| b.free_var()).collect();
    for &wv in &w_vars {
        let hi = b.nonneg_var();
        b.linear_eq(vec![(wv, 1.0), (hi, 1.0)], 1.0);
        let lo = b.nonneg_var();
        b.linear_eq(vec![(wv, -1.0), (lo, 1.0)], 1.0);
    }
    let eta = install_eta(&mut b, settings.eta_cap);
    let w_aff: Vec<Aff> = w_vars.iter().map(|&v| Aff::var(v)).collect();
    let handles = build_phi_constraints(&mut b, f, &w_aff, &Aff::var(eta), settings.escalated)?;

    let d = &n * r;
    let mut objective: Vec<(usize, f64)> =
        w_vars.iter().zip(d.iter()).map(|(&v, &c)| (v, c)).collect();
    objective.extend(trace_terms(&b, settings.gram_trace_weight));
    b.set_objective(objective);
    // The row drifts off thin certifiable sets by an amount that shrinks
    // with the final barrier parameter, and the stall decision of the row
    // search compares the objective against `obj_tol`, so the step runs the
    // iteration to exhaustion instead of stopping at the gap tolerances and
    // takes the engine's best iterate. Infeasibility detection keeps the
    // configured feasibility tolerance.
    let mut deep = settings.cone;
    deep.abstol = 0.0;
    deep.reltol = 0.0;
    let sol = b.solve(&deep)?;
    if !usable_optimum(&sol) {
        return Err(SosError::Solver { status: sol.status });
    }
    let raw = DVector::from_fn(m, |i, _| sol.values[w_vars[i]]);
    // Certificate-level slop amplifies into row drift along thin feasible
    // directions, far past the solver tolerances. A nearby grid direction
    // replaces the raw optimizer when that direction certifies on its own;
    // on flat objective stretches this lands the reported objective exactly
    // on the face value, which keeps the stall test of the row search sharp.
    let w = match snap_direction(&raw) {
        Some(snapped) if snapped != raw && matches!(check_w(f, &snapped, settings), Ok(true)) => {
            snapped
        }
        _ => raw,
    };
    Ok(FindWStep {
        f: f.clone(),
        w_d: w_d.clone(),
        n,
        r: r.clone(),
        objective: d.dot(&w),
        eta: sol.values[eta],
        multipliers: [
            read_multipliers(&handles[0], &sol),
            read_multipliers(&handles[1], &sol),
        ],
        iters: sol.iters,
        w,
    })
}

fn empty_multipliers(m: usize) -> PhiMultipliers {
    let scalar = |k: usize| vec![DMatrix::zeros(1, 1); k];
    PhiMultipliers {
        p1: scalar(m),
        p2: scalar(m),
        p3: scalar(m * m),
        p4: scalar(m),
        p5: scalar(m),
        p6: scalar(m * m),
        p7: scalar(m * m),
        p8: scalar(m * m),
        s1: scalar(m),
        s2: scalar(m),
    }
}

/// Nearest direction with entries on a coarse rational grid, or `None` when
/// no grid direction lies within [`SNAP_TOL`] of the row.
///
/// The row is scaled to unit maximum entry and each candidate denominator is
/// tried in increasing order, so the simplest nearby direction wins. Grid
/// spacing stays three orders of magnitude above the tolerance; a snap never
/// jumps between distinct grid directions.
fn snap_direction(w: &DVector<f64>) -> Option<DVector<f64>> {
    let scale = w.amax();
    if scale == 0.0 {
        return None;
    }
    let unit = w / scale;
    for den in [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 8.0, 10.0, 12.0] {
        let cand = unit.map(|v| (v * den).round() / den);
        if (&cand - &unit).amax() <= SNAP_TOL {
            return Some(cand);
        }
    }
    None
}

/// Rank of a stacked row matrix by singular values.
fn rank_of(m: &DMatrix<f64>) -> usize {
    if m.nrows() == 0 {
        return 0;
    }
    let svd = m.clone().svd(false, false);
    let smax = svd.singular_values.max();
    if smax == 0.0 {
        return 0;
    }
    let tol = 1e-10 * m.nrows().max(m.ncols()) as f64 * smax;
    svd.singular_values.iter().filter(|&&s| s > tol).count()
}

/// Runs the full row search for `f`.
///
/// Each round draws a fresh objective direction from the seeded stream,
/// solves the row subproblem, and accepts the optimizer only when the
/// objective is profitable (below `-obj_tol`), the stacked rows gain rank,
/// and the enumeration oracle confirms agreement; any failure ends the
/// search. The result is deterministic in `seed`.
pub fn find_w(
    f: &DMatrix<f64>,
    seed: u64,
    settings: &FindWSettings,
) -> Result<FindWOutcome, SosError> {
    let m = guard_contacts(f)?;
    let cap = settings.max_rows.unwrap_or(m).min(m);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = DMatrix::<f64>::zeros(0, m);
    let mut steps = Vec::new();
    let mut oracle = None;
    let mut truncated = false;

    loop {
        if w.nrows() >= cap {
            truncated = w.nrows() < m;
            break;
        }
        let n = nullspace_basis(&w, None);
        if n.ncols() == 0 {
            break;
        }
        let r = DVector::from_fn(n.ncols(), |_, _| rng.gen_range(0.0..1.0));
        let oracle_seed: u64 = rng.gen();
        let step = solve_find_w_step(f, &w, &r, settings)?;
        let profitable = step.objective < -settings.obj_tol;
        let row = step.w.clone();
        steps.push(step);
        if !profitable {
            break;
        }
        let mut candidate = DMatrix::zeros(w.nrows() + 1, m);
        candidate.view_mut((0, 0), (w.nrows(), m)).copy_from(&w);
        candidate.row_mut(w.nrows()).copy_from(&row.transpose());
        if rank_of(&candidate) <= w.nrows() {
            break;
        }
        let report = check_w_against_enumeration(
            f,
            &candidate,
            settings.oracle_samples,
            settings.oracle_tol,
            oracle_seed,
        )?;
        let passed = report.passed;
        if passed {
            oracle = Some(report);
            w = candidate;
        } else {
            break;
        }
    }
    Ok(FindWOutcome { w, steps, truncated, oracle })
}

/// Checks `W lam` agreement across exhaustively enumerated solution sets at
/// `samples` random offsets.
///
/// Offsets are drawn uniformly from `[-1, 1]^m`, with each coordinate
/// independently pinned to exactly zero with probability
/// [`ORACLE_ZERO_PIN_PROB`]. Multi-valued solution sets live on
/// lower-dimensional subsets of offset space, so plain uniform draws almost
/// surely see singletons only; pinning coordinates lands on the degenerate
/// strata that contain them (a contact exactly at its margin).
///
/// Empty solution sets are skipped. For degenerate families the ray
/// directions must lie in the nullspace of `W`, otherwise `W lam` varies
/// along the ray.
pub fn check_w_against_enumeration(
    f: &DMatrix<f64>,
    w: &DMatrix<f64>,
    samples: usize,
    tol: f64,
    seed: u64,
) -> Result<OracleReport, SosError> {
    let m = f.nrows();
    if f.ncols() != m || (w.ncols() != m && w.nrows() > 0) {
        return Err(SosError::Dimension(format!(
            "contact matrix {}x{} vs projection {}x{}",
            f.nrows(),
            f.ncols(),
            w.nrows(),
            w.ncols()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = OracleReport {
        samples,
        multi_solution_samples: 0,
        degenerate_samples: 0,
        infeasible_samples: 0,
        max_spread: 0.0,
        max_direction_leak: 0.0,
        passed: true,
    };
    for _ in 0..samples {
        let q = DVector::from_fn(m, |_, _| {
            if rng.gen_range(0.0..1.0) < ORACLE_ZERO_PIN_PROB {
                0.0
            } else {
                rng.gen_range(-1.0..1.0)
            }
        });
        let set = enumerate_solutions(f, &q, 1e-9)?;
        if set.is_empty() {
            report.infeasible_samples += 1;
            continue;
        }
        if set.solutions.len() > 1 {
            report.multi_solution_samples += 1;
        }
        if set.solutions.iter().any(|s| s.degenerate) {
            report.degenerate_samples += 1;
        }
        let images: Vec<DVector<f64>> = set.solutions.iter().map(|s| w * &s.lam).collect();
        for k in 0..w.nrows() {
            let vals = images.iter().map(|v| v[k]);
            let hi = vals.clone().fold(f64::NEG_INFINITY, f64::max);
            let lo = vals.fold(f64::INFINITY, f64::min);
            report.max_spread = report.max_spread.max(hi - lo);
        }
        for sol in &set.solutions {
            for dir in &sol.directions {
                let leak = (w * dir).amax();
                report.max_direction_leak = report.max_direction_leak.max(leak);
            }
        }
    }
    report.passed = report.max_spread <= tol && report.max_direction_leak <= tol;
    Ok(report)
}
