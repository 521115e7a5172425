//! High-level semidefinite programming interface (LMI form).
//!
//! A problem collects affine linear matrix inequalities `T_k(x) >= 0` (PSD),
//! scalar inequalities `g'x + g0 >= 0`, and an optional linear objective.
//! Feasibility questions are answered in margin form: maximize `t` subject to
//! `T_k(x) - t I >= 0`, capped above. The base problem is strictly feasible
//! exactly when the optimal margin is positive, and the returned point then
//! satisfies every LMI with that eigenvalue margin, re-checked here by a
//! symmetric eigendecomposition rather than trusted from the solver.

use nalgebra::{DMatrix, DVector};

use super::cone::{svec, ConeLayout};
use super::data::DenseProgram;
use super::hsde::{solve_cone_program, ConeSettings, ConeStatus, ConicError};

/// Affine LMI `constant + sum_i x_i coeff_i >= 0` (all matrices symmetric).
#[derive(Debug, Clone)]
pub struct AffineLmi {
    pub dim: usize,
    pub constant: DMatrix<f64>,
    pub coeffs: Vec<(usize, DMatrix<f64>)>,
}

impl AffineLmi {
    /// Evaluates the LMI at `x`.
    pub fn eval(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut m = self.constant.clone();
        for (var, coef) in &self.coeffs {
            m += coef * x[*var];
        }
        m
    }
}

/// An SDP in LMI form.
#[derive(Debug, Clone, Default)]
pub struct SdProblem {
    pub n_vars: usize,
    pub lmis: Vec<AffineLmi>,
    /// Rows `g'x + g0 >= 0` as (sparse coefficients, offset).
    pub lin_ineq: Vec<(Vec<(usize, f64)>, f64)>,
    /// Sparse objective to minimize; `None` means pure feasibility.
    pub objective: Option<Vec<(usize, f64)>>,
}

/// Solver outcome at the SDP level.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    Inaccurate,
}

/// Result of an SDP solve.
#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub status: SdpStatus,
    pub x: DVector<f64>,
    pub objective: f64,
    /// Margin variable value for margin-form solves.
    pub margin: Option<f64>,
    /// Smallest eigenvalue of each LMI at `x`, from an eigendecomposition.
    pub lmi_margins: Vec<f64>,
    /// Smallest slack of the scalar inequalities at `x`.
    pub lin_margin: f64,
    pub gap: f64,
    pub iters: usize,
}

/// Settings for the SDP layer.
#[derive(Debug, Clone, Copy)]
pub struct SdpSettings {
    pub cone: ConeSettings,
    /// Upper cap on the feasibility margin variable.
    pub margin_cap: f64,
}

impl Default for SdpSettings {
    fn default() -> Self {
        SdpSettings { cone: ConeSettings::default(), margin_cap: 1.0 }
    }
}

fn encode(
    p: &SdProblem,
    margin_var: Option<usize>,
    cap: f64,
    scales: Option<&[f64]>,
) -> Result<DenseProgram, ConicError> {
    let n = p.n_vars + usize::from(margin_var.is_some());
    let mut lin = p.lin_ineq.clone();
    if let Some(t) = margin_var {
        lin.push((vec![(t, -1.0)], cap));
    }
    let layout = ConeLayout { nonneg: lin.len(), psd: p.lmis.iter().map(|l| l.dim).collect() };
    let cdim = layout.dim();
    let mut g = DMatrix::zeros(cdim, n);
    let mut h = DVector::zeros(cdim);
    for (r, (coefs, g0)) in lin.iter().enumerate() {
        h[r] = *g0;
        for &(var, v) in coefs {
            g[(r, var)] -= v;
        }
    }
    let mut off = lin.len();
    for (idx, lmi) in p.lmis.iter().enumerate() {
        let len = lmi.dim * (lmi.dim + 1) / 2;
        h.rows_mut(off, len).copy_from(&svec(&lmi.constant));
        for (var, coef) in &lmi.coeffs {
            let sv = svec(coef);
            for k in 0..len {
                g[(off + k, *var)] -= sv[k];
            }
        }
        if let Some(t) = margin_var {
            // T(x) - s t I >= 0 with per-LMI scale s (default 1).
            let scale = scales.map_or(1.0, |s| s[idx]);
            let sv = svec(&(scale * DMatrix::<f64>::identity(lmi.dim, lmi.dim)));
            for k in 0..len {
                g[(off + k, t)] += sv[k];
            }
        }
        off += len;
    }
    let mut c = DVector::zeros(n);
    if let Some(obj) = &p.objective {
        for &(var, v) in obj {
            c[var] += v;
        }
    }
    if let Some(t) = margin_var {
        c[t] = -1.0;
    }
    DenseProgram::new(layout, c, g, h, DMatrix::zeros(0, n), DVector::zeros(0))
}

fn finish(p: &SdProblem, status: SdpStatus, x: DVector<f64>, margin: Option<f64>, gap: f64, iters: usize) -> SdpSolution {
    let lmi_margins = lmi_eigen_margins(p, &x);
    let lin_margin = p
        .lin_ineq
        .iter()
        .map(|(coefs, g0)| coefs.iter().map(|&(var, v)| v * x[var]).sum::<f64>() + g0)
        .fold(f64::INFINITY, f64::min);
    let objective = p
        .objective
        .as_ref()
        .map(|obj| obj.iter().map(|&(var, v)| v * x[var]).sum::<f64>())
        .unwrap_or(0.0);
    SdpSolution { status, x, objective, margin, lmi_margins, lin_margin, gap, iters }
}

/// Smallest eigenvalue of each LMI at `x`.
pub fn lmi_eigen_margins(p: &SdProblem, x: &DVector<f64>) -> Vec<f64> {
    p.lmis
        .iter()
        .map(|lmi| {
            if lmi.dim == 0 {
                return 0.0;
            }
            lmi.eval(x).symmetric_eigenvalues().min()
        })
        .collect()
}

/// Minimizes the objective subject to the LMIs and scalar inequalities.
pub fn solve_sdp(p: &SdProblem, settings: &SdpSettings) -> Result<SdpSolution, ConicError> {
    let mut prog = encode(p, None, 0.0, None)?;
    let sol = solve_cone_program(&mut prog, &settings.cone);
    let status = match sol.status {
        ConeStatus::Optimal => SdpStatus::Optimal,
        ConeStatus::PrimalInfeasible => SdpStatus::Infeasible,
        ConeStatus::DualInfeasible => SdpStatus::Unbounded,
        ConeStatus::MaxIters | ConeStatus::Numerical => SdpStatus::Inaccurate,
    };
    let x = sol.x.rows(0, p.n_vars).into_owned();
    Ok(finish(p, status, x, None, sol.gap, sol.iters))
}

/// Maximizes the common eigenvalue margin `t` of all LMIs, capped at
/// `settings.margin_cap`. The base problem is strictly feasible iff the
/// reported margin is positive.
pub fn solve_sdp_margin(p: &SdProblem, settings: &SdpSettings) -> Result<SdpSolution, ConicError> {
    solve_sdp_margin_scaled(p, settings, None)
}

/// Margin maximization with a per-LMI scale on the margin variable: LMI `k`
/// becomes `T_k(x) - s_k t I >= 0`. A scale above 1 discounts that LMI's
/// violation when `t` is negative, steering infeasible-side optima toward
/// points that satisfy the unit-scale LMIs exactly.
pub fn solve_sdp_margin_scaled(
    p: &SdProblem,
    settings: &SdpSettings,
    scales: Option<&[f64]>,
) -> Result<SdpSolution, ConicError> {
    if p.objective.is_some() {
        return Err(ConicError::Dimension("margin mode requires no objective".into()));
    }
    if let Some(s) = scales {
        if s.len() != p.lmis.len() {
            return Err(ConicError::Dimension("margin scale count mismatch".into()));
        }
    }
    let t = p.n_vars;
    let mut prog = encode(p, Some(t), settings.margin_cap, scales)?;
    let sol = solve_cone_program(&mut prog, &settings.cone);
    let status = match sol.status {
        ConeStatus::Optimal => SdpStatus::Optimal,
        // The margin formulation is feasible for any LMI data; infeasibility
        // can only come from the scalar rows.
        ConeStatus::PrimalInfeasible => SdpStatus::Infeasible,
        ConeStatus::DualInfeasible => SdpStatus::Unbounded,
        ConeStatus::MaxIters | ConeStatus::Numerical => SdpStatus::Inaccurate,
    };
    let x = sol.x.rows(0, p.n_vars).into_owned();
    let margin = sol.x.get(t).copied();
    Ok(finish(p, status, x, margin, sol.gap, sol.iters))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn largest_eigenvalue_via_lmi() {
        // min t s.t. t I - M >= 0 gives t = lambda_max(M).
        let m = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 1.0, 3.0, 0.5, 0.0, 0.5, 1.0]);
        let lambda_max = m.clone().symmetric_eigenvalues().max();
        let p = SdProblem {
            n_vars: 1,
            lmis: vec![AffineLmi {
                dim: 3,
                constant: -m.clone(),
                coeffs: vec![(0, DMatrix::identity(3, 3))],
            }],
            lin_ineq: vec![],
            objective: Some(vec![(0, 1.0)]),
        };
        let sol = solve_sdp(&p, &SdpSettings::default()).unwrap();
        assert_eq!(sol.status, SdpStatus::Optimal);
        assert_abs_diff_eq!(sol.x[0], lambda_max, epsilon = 1e-6);
        assert!(sol.lmi_margins[0] > -1e-7);
    }

    #[test]
    fn margin_mode_reports_interior_point() {
        // x [[1,0],[0,1]] + [[0,1],[1,0]] >= 0 is feasible with margin up to 1
        // at x = 2 (eigenvalues x -+ 1).
        let p = SdProblem {
            n_vars: 1,
            lmis: vec![AffineLmi {
                dim: 2,
                constant: DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]),
                coeffs: vec![(0, DMatrix::identity(2, 2))],
            }],
            lin_ineq: vec![(vec![(0, -1.0)], 3.0)], // x <= 3
            objective: None,
        };
        let sol = solve_sdp_margin(&p, &SdpSettings::default()).unwrap();
        assert_eq!(sol.status, SdpStatus::Optimal);
        let t = sol.margin.unwrap();
        assert_abs_diff_eq!(t, 1.0, epsilon = 1e-6);
        assert!(sol.lmi_margins[0] >= t - 1e-6);
    }

    #[test]
    fn infeasible_lmi_yields_negative_margin() {
        // -I + x*0 >= 0 is infeasible; margin optimum is -1.
        let p = SdProblem {
            n_vars: 1,
            lmis: vec![AffineLmi {
                dim: 2,
                constant: -DMatrix::identity(2, 2),
                coeffs: vec![(0, DMatrix::zeros(2, 2))],
            }],
            lin_ineq: vec![(vec![(0, 1.0)], 1.0), (vec![(0, -1.0)], 1.0)],
            objective: None,
        };
        let sol = solve_sdp_margin(&p, &SdpSettings::default()).unwrap();
        assert_eq!(sol.status, SdpStatus::Optimal);
        assert!(sol.margin.unwrap() < -0.5);
    }
}
