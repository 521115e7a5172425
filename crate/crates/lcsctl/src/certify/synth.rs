//! Gain synthesis by alternating semidefinite programs.
//!
//! The joint search over gains and certificate is bilinear, so it is split
//! into two linear subproblems solved in alternation:
//!
//! * verification step: gains fixed, solve for the Lyapunov parameters and
//!   all multipliers while maximizing the common LMI margin;
//! * update step: Lyapunov parameters and the dynamics-equality multiplier
//!   fixed, solve for new gains together with the multipliers that do not
//!   touch the loop matrices, first maximizing the margin and then shrinking
//!   the gains (minimum l1 norm) at a slightly backed-off margin level.
//!
//! The bound inequalities do not involve the gains, so the update step only
//! carries the decrease inequality. Alternation stops as soon as a
//! verification step accepts; otherwise the best iterate is returned with
//! `converged = false`.

use nalgebra::{DMatrix, DVector};

use crate::conic::{lmi_eigen_margins, solve_sdp, solve_sdp_margin, SdProblem, SdpStatus};
use crate::model::{Controller, LcsModel};

use super::assemble::{decrease_psd, DecreaseMults, VForm};
use super::expr::ExprMat;
use super::verify::{verify_fixed_gains, VerifyReport};
use super::{CertifyConfig, CertifyError, VarReg};

/// Structural choices for synthesis.
#[derive(Debug, Clone)]
pub struct SynthSpec {
    /// Columns of `K` pinned to zero (partial state feedback).
    pub k_zero_cols: Vec<usize>,
    /// Maximum verify/update rounds before giving up.
    pub max_alternations: usize,
    /// Box bound on gain entries during the update step.
    pub gain_bound: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec { k_zero_cols: Vec::new(), max_alternations: 50, gain_bound: 1e4 }
    }
}

/// One alternation round, for diagnostics.
#[derive(Debug, Clone, Copy)]
pub struct SynthRound {
    /// Worst eigenvalue-checked margin of the verification step.
    pub verify_margin: f64,
    /// Margin achieved by the gain-update step, when one ran.
    pub update_margin: Option<f64>,
}

/// Synthesis result: the best controller found and its verification report.
#[derive(Debug, Clone)]
pub struct SynthOutcome {
    pub controller: Controller,
    pub report: VerifyReport,
    /// True when the final verification accepted.
    pub converged: bool,
    pub rounds: Vec<SynthRound>,
}

/// Gain-update step: freezes the certificate (and `j4`) from a verification
/// report and re-optimizes the gains against the decrease inequality.
fn update_gains(
    model: &LcsModel,
    ctrl: &Controller,
    report: &VerifyReport,
    spec: &SynthSpec,
    cfg: &CertifyConfig,
) -> Result<(Controller, f64), CertifyError> {
    let n_plant = model.n();
    let nu = model.n_inputs();
    let nw = ctrl.w.nrows();
    let m = model.n_contacts();

    let mut reg = VarReg::new();
    let k_expr = reg.general(nu, n_plant, |_, c| !spec.k_zero_cols.contains(&c));
    let l_expr = reg.general(nu, nw, |_, _| true);
    let gain_vars = reg.len();

    // Loop matrices affine in the gains, laid out exactly as close_loop does.
    let lw = l_expr.right_mul(&ctrl.w);
    let (a_cl, d_cl, a0, e, f) = match ctrl.kappa {
        None => {
            let mut a_cl = ExprMat::from_numeric(&model.a_bar);
            a_cl.add_scaled(&k_expr.left_mul(&model.b), 1.0);
            let mut d_cl = ExprMat::from_numeric(&model.d_bar);
            d_cl.add_scaled(&lw.left_mul(&model.b), 1.0);
            (a_cl, d_cl, model.a.clone(), model.e_bar.clone(), model.f_bar.clone())
        }
        Some(kappa) => {
            let n = n_plant + nu;
            let mut a_cl = ExprMat::zeros(n, n);
            a_cl.set_block(0, 0, &ExprMat::from_numeric(&model.a_bar));
            a_cl.set_block(0, n_plant, &ExprMat::from_numeric(&model.b));
            a_cl.add_block(n_plant, 0, &k_expr, kappa);
            a_cl.set_block(
                n_plant,
                n_plant,
                &ExprMat::from_numeric(&(-kappa * DMatrix::<f64>::identity(nu, nu))),
            );
            let mut d_cl = ExprMat::zeros(n, m);
            d_cl.set_block(0, 0, &ExprMat::from_numeric(&model.d_bar));
            d_cl.add_block(n_plant, 0, &lw, kappa);
            let mut a0 = DVector::zeros(n);
            a0.rows_mut(0, n_plant).copy_from(&model.a);
            let mut e = DMatrix::zeros(m, n);
            e.view_mut((0, 0), (m, n_plant)).copy_from(&model.e_bar);
            e.view_mut((0, n_plant), (m, nu)).copy_from(&model.h);
            (a_cl, d_cl, a0, e, model.f_bar.clone())
        }
    };

    let v_num = VForm::numeric(&report.certificate);
    let (mults, w3_idx) = DecreaseMults::symbolic(&mut reg, m, Some(&report.j4));
    let lmi = decrease_psd(
        &v_num,
        &a_cl,
        &d_cl,
        &a0,
        &e,
        &f,
        &model.c,
        cfg.gamma3,
        &mults,
    )
    .emit();

    let mut lin_ineq: Vec<(Vec<(usize, f64)>, f64)> = Vec::new();
    for &i in &w3_idx {
        lin_ineq.push((vec![(i, 1.0)], 0.0));
    }
    for i in 0..reg.len() {
        let bound = if i < gain_vars { spec.gain_bound } else { cfg.var_bound };
        lin_ineq.push((vec![(i, 1.0)], bound));
        lin_ineq.push((vec![(i, -1.0)], bound));
    }

    let prob = SdProblem { n_vars: reg.len(), lmis: vec![lmi], lin_ineq, objective: None };
    let sol = solve_sdp_margin(&prob, &cfg.sdp)?;
    if matches!(sol.status, SdpStatus::Infeasible | SdpStatus::Unbounded) {
        return Err(CertifyError::Sdp { status: sol.status });
    }
    let mut margin = sol.lmi_margins.iter().copied().fold(f64::INFINITY, f64::min);
    let mut x = sol.x;

    // Margin maximization alone leaves the gains free to drift anywhere in
    // the feasible box, so a second solve backs the margin off slightly and
    // minimizes the l1 norm of the gains at that level. The phase-one point
    // stays as fallback if the re-solve slips below the target.
    if gain_vars > 0 {
        let backoff = (0.05 * margin.abs()).max(1e-9);
        let t_tgt = margin - backoff;
        let mut shifted = prob.lmis[0].clone();
        for i in 0..shifted.dim {
            shifted.constant[(i, i)] -= t_tgt;
        }
        let n_base = reg.len();
        let mut lin2 = prob.lin_ineq.clone();
        let mut obj = Vec::with_capacity(gain_vars);
        for g in 0..gain_vars {
            let s = n_base + g;
            lin2.push((vec![(s, 1.0), (g, -1.0)], 0.0));
            lin2.push((vec![(s, 1.0), (g, 1.0)], 0.0));
            obj.push((s, 1.0));
        }
        let prob2 = SdProblem {
            n_vars: n_base + gain_vars,
            lmis: vec![shifted],
            lin_ineq: lin2,
            objective: Some(obj),
        };
        if let Ok(sol2) = solve_sdp(&prob2, &cfg.sdp) {
            if !matches!(sol2.status, SdpStatus::Infeasible | SdpStatus::Unbounded) {
                let x2 = DVector::from_column_slice(&sol2.x.as_slice()[..n_base]);
                let m2 = lmi_eigen_margins(&prob, &x2)[0];
                if m2 >= t_tgt - backoff {
                    margin = m2;
                    x = x2;
                }
            }
        }
    }

    let new_ctrl = Controller {
        k: k_expr.eval(&x),
        l_tilde: l_expr.eval(&x),
        w: ctrl.w.clone(),
        kappa: ctrl.kappa,
    };
    Ok((new_ctrl, margin))
}

/// Alternates verification and gain updates from the given initial gains.
pub fn synthesize(
    model: &LcsModel,
    init: &Controller,
    spec: &SynthSpec,
    cfg: &CertifyConfig,
) -> Result<SynthOutcome, CertifyError> {
    let mut ctrl = init.clone();
    let mut rounds = Vec::new();
    let mut best: Option<(f64, Controller, VerifyReport)> = None;

    for _ in 0..spec.max_alternations.max(1) {
        let report = verify_fixed_gains(model, &ctrl, cfg)?;
        let margin = report.min_margin();
        let improved = best.as_ref().map_or(true, |(b, _, _)| margin > *b);
        if improved {
            best = Some((margin, ctrl.clone(), report.clone()));
        }
        if report.accepted {
            rounds.push(SynthRound { verify_margin: margin, update_margin: None });
            return Ok(SynthOutcome {
                controller: ctrl,
                report,
                converged: true,
                rounds,
            });
        }
        let (next, update_margin) = update_gains(model, &ctrl, &report, spec, cfg)?;
        rounds.push(SynthRound { verify_margin: margin, update_margin: Some(update_margin) });
        ctrl = next;
    }

    let (_, controller, report) = best.expect("at least one round ran");
    Ok(SynthOutcome { controller, report, converged: false, rounds })
}

/// Runs `synthesize` over a sequence of initial gains, returning the first
/// converged outcome, or the best nonconverged one after `tries` attempts.
pub fn synthesize_retrying(
    model: &LcsModel,
    mut make_init: impl FnMut(usize) -> Controller,
    tries: usize,
    spec: &SynthSpec,
    cfg: &CertifyConfig,
) -> Result<SynthOutcome, CertifyError> {
    let mut best: Option<SynthOutcome> = None;
    for attempt in 0..tries.max(1) {
        let init = make_init(attempt);
        let outcome = synthesize(model, &init, spec, cfg)?;
        if outcome.converged {
            return Ok(outcome);
        }
        let better = best
            .as_ref()
            .map_or(true, |b| outcome.report.min_margin() > b.report.min_margin());
        if better {
            best = Some(outcome);
        }
    }
    Ok(best.expect("at least one attempt ran"))
}
