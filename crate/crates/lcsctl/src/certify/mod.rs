//! Stability certification and gain synthesis for closed-loop LCS models.
//!
//! A certificate is a piecewise-quadratic Lyapunov function
//!
//! ```text
//! V(x, lam) = x'Px + 2 x' Qt (W lam) + (W lam)' Rt (W lam) + p'x + rt'(W lam) + z
//! ```
//!
//! that depends on the contact force only through `W lam`. When `W` is chosen
//! so that `W lam` is constant across the solution set of the LCP at each
//! state, `V` is a well-defined, continuous function of the state even where
//! the force itself jumps. Certification poses three matrix inequalities over
//! the complementarity set, relaxed with copositive multipliers on the
//! nonnegative quantities `(Ex + F lam + c, lam, 1)` and free multipliers on
//! the complementarity and dynamics equalities:
//!
//! * a lower bound `V >= gamma1 |x|^2`,
//! * optionally an upper bound `V <= gamma2 |x|^2` (only needed when `c` has
//!   negative entries; otherwise the affine part of `V` is dropped and the
//!   bound holds automatically),
//! * a decrease condition `dV/dt <= -gamma3 |x|^2` along solutions.
//!
//! [`verify_fixed_gains`] checks a fixed controller by solving one SDP in
//! margin form and re-checks the result with an eigendecomposition.
//! [`synthesize`] alternates between that verification step and a gain
//! update step in which the Lyapunov parameters are frozen, which keeps both
//! subproblems linear. [`care`] provides the Riccati-based LQR gains used to
//! initialize synthesis.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::conic::{ConicError, SdpSettings, SdpStatus};
use crate::model::ModelError;

pub mod care;
mod expr;

mod assemble;
mod monitor;
mod synth;
mod verify;

pub use expr::{Aff, ExprMat, VarReg};
pub use monitor::{check_decrease, check_envelope, values_along, DecreaseCheck};
pub use synth::{synthesize, SynthOutcome, SynthSpec};
pub use verify::{verify_closed_loop, verify_fixed_gains, VerifyReport};

/// Errors from certification, synthesis, and the Riccati solver.
#[derive(Debug, Error)]
pub enum CertifyError {
    #[error("dimension mismatch in {context}")]
    Dimension { context: &'static str },
    #[error("matrix sign iteration hit a singular iterate")]
    CareSingular,
    #[error("matrix sign iteration did not converge")]
    CareNoConvergence,
    #[error("input weight is not positive definite")]
    CareIndefiniteWeight,
    #[error("Riccati residual {residual:.3e} exceeds tolerance")]
    CareResidual { residual: f64 },
    #[error("conic solve failed: {0}")]
    Conic(#[from] ConicError),
    #[error("SDP finished with status {status:?}")]
    Sdp { status: SdpStatus },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("synthesis stalled after {alternations} alternations (best margin {best_margin:.3e})")]
    SynthStalled { alternations: usize, best_margin: f64 },
}

/// Which bound inequalities to impose.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BoundMode {
    /// Quadratic-only `V` when every entry of `c` is nonnegative, otherwise
    /// the full affine form with both bounds.
    #[default]
    Auto,
    /// Force the quadratic-only form (no affine part, no upper bound LMI).
    QuadraticOnly,
    /// Force the affine form with the upper bound LMI.
    FullAffine,
}

/// Tuning for certification SDPs.
#[derive(Debug, Clone)]
pub struct CertifyConfig {
    /// Lower-bound coefficient: `V >= gamma1 |x|^2`.
    pub gamma1: f64,
    /// Decrease coefficient: `dV/dt <= -gamma3 |x|^2`. Zero asks only for a
    /// nonincreasing `V`, which is the right target for systems with
    /// friction-induced equilibrium sets.
    pub gamma3: f64,
    pub mode: BoundMode,
    /// Tolerance for the eigenvalue re-check: a certificate is accepted when
    /// every LMI's smallest eigenvalue is at least `-margin_tol`. The decrease
    /// inequality is tight along its slack coordinates for every certificate,
    /// so its re-checked margin sits at zero up to rounding; infeasible loops
    /// land strictly negative.
    pub margin_tol: f64,
    /// Box bound applied to every decision variable. Certificates are scale
    /// constrained only from below (through `gamma1`), so this keeps the
    /// feasible set compact without excluding realistic magnitudes.
    pub var_bound: f64,
    /// Margin scale on the decrease LMI relative to the bound LMIs. For an
    /// uncertifiable loop the margin optimum would otherwise collapse the
    /// certificate toward zero, trading a bound violation of `gamma1` against
    /// the decrease violation; discounting the decrease LMI by this factor
    /// keeps the bounds satisfied exactly, so the reported certificate stays
    /// nondegenerate and the gain update step retains leverage.
    pub decrease_margin_scale: f64,
    pub sdp: SdpSettings,
}

impl Default for CertifyConfig {
    fn default() -> Self {
        CertifyConfig {
            gamma1: 1e-3,
            gamma3: 0.0,
            mode: BoundMode::Auto,
            margin_tol: 1e-8,
            var_bound: 1e5,
            decrease_margin_scale: 1e4,
            sdp: SdpSettings::default(),
        }
    }
}

/// A piecewise-quadratic certificate in reduced coordinates `w = W lam`.
#[derive(Debug, Clone)]
pub struct Certificate {
    /// Force-combination map, `nw x m`.
    pub w_map: DMatrix<f64>,
    /// Quadratic state block `P` (`n x n`, symmetric).
    pub p_mat: DMatrix<f64>,
    /// Cross block in reduced coordinates (`n x nw`).
    pub q_tilde: DMatrix<f64>,
    /// Force block in reduced coordinates (`nw x nw`, symmetric).
    pub r_tilde: DMatrix<f64>,
    /// Linear state coefficient (zero in quadratic-only mode).
    pub p_vec: DVector<f64>,
    /// Linear force coefficient in reduced coordinates.
    pub r_tilde_vec: DVector<f64>,
    /// Constant offset.
    pub z: f64,
    pub gamma1: f64,
    /// Verified upper-bound coefficient, when the upper bound was imposed.
    pub gamma2: Option<f64>,
    pub gamma3: f64,
}

impl Certificate {
    /// Evaluates `V(x, lam)`.
    pub fn value(&self, x: &DVector<f64>, lam: &DVector<f64>) -> f64 {
        let w = &self.w_map * lam;
        let quad = (x.transpose() * &self.p_mat * x)[(0, 0)]
            + 2.0 * (x.transpose() * &self.q_tilde * &w)[(0, 0)]
            + (w.transpose() * &self.r_tilde * &w)[(0, 0)];
        quad + self.p_vec.dot(x) + self.r_tilde_vec.dot(&w) + self.z
    }

    /// Number of states the certificate covers.
    pub fn n(&self) -> usize {
        self.p_mat.nrows()
    }

    /// Number of contacts.
    pub fn m(&self) -> usize {
        self.w_map.ncols()
    }
}
