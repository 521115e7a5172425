//! Homogeneous self-dual interior-point engine for cone programs.
//!
//! Solves the primal-dual pair
//!
//! ```text
//!     (P) min c'x   s.t. G x + s = h, s in K,  A x = b
//!     (D) max -h'z - b'y   s.t. G'z + A'y + c = 0, z in K
//! ```
//!
//! through the self-dual embedding in `(x, y, z, s, tau, kappa)`, Nesterov-Todd
//! scaling and a Mehrotra predictor-corrector. Either a solution or an
//! infeasibility certificate is produced:
//!
//! * primal infeasible: `(y, z)` with `G'z + A'y = 0`, `z in K`,
//!   `h'z + b'y = -1`;
//! * dual infeasible (unbounded primal): `x` with `A x = 0`, `G x + s = 0` for
//!   some `s in K`, `c'x = -1`.
//!
//! The KKT subproblem
//!
//! ```text
//!     [ 0   A'   G'    ] [dx]   [bx]
//!     [ A   0    0     ] [dy] = [by]
//!     [ G   0  -W W'   ] [dz]   [bz]
//! ```
//!
//! is delegated to the problem representation, which picks a reduction sized
//! to its structure; the engine wraps every solve in one round of iterative
//! refinement against the exact blocks.

use nalgebra::DVector;
use thiserror::Error;

use super::cone::{ConeLayout, Scaling};

/// Errors surfaced by the conic layer.
#[derive(Debug, Error)]
pub enum ConicError {
    #[error("iterate left the cone interior")]
    NotInterior,
    #[error("KKT factorization failed: {0}")]
    Factorization(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// Solver tolerances and limits.
#[derive(Debug, Clone, Copy)]
pub struct ConeSettings {
    /// Relative primal/dual residual target.
    pub feastol: f64,
    /// Absolute duality gap target.
    pub abstol: f64,
    /// Relative duality gap target.
    pub reltol: f64,
    pub max_iters: usize,
    /// Fraction of the distance to the cone boundary taken per step.
    pub step: f64,
}

impl Default for ConeSettings {
    fn default() -> Self {
        ConeSettings { feastol: 1e-8, abstol: 1e-8, reltol: 1e-8, max_iters: 100, step: 0.99 }
    }
}

/// Termination status of the engine.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConeStatus {
    Optimal,
    PrimalInfeasible,
    DualInfeasible,
    MaxIters,
    Numerical,
}

/// Engine result. For `Optimal` the fields hold the unscaled primal-dual
/// solution; for infeasible statuses they hold the normalized certificate.
/// For `MaxIters` and `Numerical` they hold the best iterate visited, ranked
/// by the worst of the normalized residuals and the relative gap, so callers
/// may still accept a stagnated solve against their own thresholds.
#[derive(Debug, Clone)]
pub struct ConeSolution {
    pub status: ConeStatus,
    pub x: DVector<f64>,
    pub s: DVector<f64>,
    pub z: DVector<f64>,
    pub y: DVector<f64>,
    pub primal_cost: f64,
    pub dual_cost: f64,
    pub gap: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub iters: usize,
}

/// Problem data plus a KKT reduction strategy.
pub trait ConeProgram {
    fn layout(&self) -> &ConeLayout;
    fn n(&self) -> usize;
    fn p(&self) -> usize;
    fn c(&self) -> &DVector<f64>;
    fn b(&self) -> &DVector<f64>;
    fn h(&self) -> &DVector<f64>;
    fn g_mul(&self, x: &DVector<f64>) -> DVector<f64>;
    fn gt_mul(&self, z: &DVector<f64>) -> DVector<f64>;
    fn a_mul(&self, x: &DVector<f64>) -> DVector<f64>;
    fn at_mul(&self, y: &DVector<f64>) -> DVector<f64>;
    /// Factors the KKT system for the given scaling.
    fn factor(&mut self, scaling: &Scaling) -> Result<(), ConicError>;
    /// Solves the factored KKT system.
    fn kkt_solve(
        &self,
        scaling: &Scaling,
        bx: &DVector<f64>,
        by: &DVector<f64>,
        bz: &DVector<f64>,
    ) -> (DVector<f64>, DVector<f64>, DVector<f64>);
}

struct Iterate {
    x: DVector<f64>,
    y: DVector<f64>,
    z: DVector<f64>,
    s: DVector<f64>,
    tau: f64,
    kappa: f64,
}

/// Runs the interior-point iteration on `prog`.
pub fn solve_cone_program(prog: &mut dyn ConeProgram, settings: &ConeSettings) -> ConeSolution {
    let layout = prog.layout().clone();
    let cdim = layout.dim();
    let deg = layout.degree().max(1) as f64;
    let (n, p) = (prog.n(), prog.p());
    let norm_b = 1.0f64.max(prog.b().norm());
    let norm_h = 1.0f64.max(prog.h().norm());
    let norm_c = 1.0f64.max(prog.c().norm());

    // Initialization: least-norm primal and dual points from two KKT solves
    // with the identity scaling, then shifted into the interior.
    let id = Scaling::identity(&layout);
    let mut it = match prog.factor(&id) {
        Ok(()) => {
            let zero = DVector::zeros(n);
            let (x0, _, z0) = kkt_refined(prog, &id, &zero, &prog.b().clone(), &prog.h().clone());
            let s_raw = -&z0;
            let (_, y0, z_raw) =
                kkt_refined(prog, &id, &(-prog.c().clone()), &DVector::zeros(p), &DVector::zeros(cdim));
            let e = layout.identity();
            let s = shift_interior(&layout, s_raw, &e);
            let z = shift_interior(&layout, z_raw, &e);
            Iterate { x: x0, y: y0, z, s, tau: 1.0, kappa: 1.0 }
        }
        Err(_) => {
            return failure_solution(ConeStatus::Numerical, n, p, cdim, 0);
        }
    };

    let mut best_pres = f64::INFINITY;
    let mut best: Option<(f64, ConeSolution)> = None;

    for iter in 0..settings.max_iters {
        // Residuals of the embedding.
        let r1 = prog.at_mul(&it.y) + prog.gt_mul(&it.z) + prog.c() * it.tau;
        let r2 = prog.a_mul(&it.x) - prog.b() * it.tau;
        let r3 = prog.g_mul(&it.x) + &it.s - prog.h() * it.tau;
        let r4 = prog.c().dot(&it.x) + prog.b().dot(&it.y) + prog.h().dot(&it.z) + it.kappa;

        let pcost = prog.c().dot(&it.x) / it.tau;
        let dcost = -(prog.b().dot(&it.y) + prog.h().dot(&it.z)) / it.tau;
        // Complementarity of the scaled-back point and the cost difference
        // are equal in exact arithmetic once the residuals vanish. Near a
        // weakly complementary optimum `tau` drifts toward zero and
        // `s.z / tau^2` saturates at the rounding floor of `s.z` inflated by
        // `1 / tau^2`, while the cost difference stays accurate, so the
        // smaller estimate drives termination.
        let gap = (it.s.dot(&it.z) / (it.tau * it.tau)).min((pcost - dcost).abs());
        let relgap = gap / 1.0f64.max(pcost.abs().max(dcost.abs()));
        let pres = (r2.norm() / norm_b).max(r3.norm() / norm_h) / it.tau;
        let dres = r1.norm() / norm_c / it.tau;
        best_pres = best_pres.min(pres);

        let score = pres.max(dres).max(relgap);
        if best.as_ref().map_or(true, |(s, _)| score < *s) {
            best = Some((
                score,
                ConeSolution {
                    status: ConeStatus::Numerical,
                    x: &it.x / it.tau,
                    s: &it.s / it.tau,
                    z: &it.z / it.tau,
                    y: &it.y / it.tau,
                    primal_cost: pcost,
                    dual_cost: dcost,
                    gap,
                    primal_residual: pres,
                    dual_residual: dres,
                    iters: iter,
                },
            ));
        }

        if pres <= settings.feastol && dres <= settings.feastol && (gap <= settings.abstol || relgap <= settings.reltol)
        {
            return ConeSolution {
                status: ConeStatus::Optimal,
                x: &it.x / it.tau,
                s: &it.s / it.tau,
                z: &it.z / it.tau,
                y: &it.y / it.tau,
                primal_cost: pcost,
                dual_cost: dcost,
                gap,
                primal_residual: pres,
                dual_residual: dres,
                iters: iter,
            };
        }

        // Infeasibility certificates.
        let hz_by = prog.h().dot(&it.z) + prog.b().dot(&it.y);
        if hz_by < 0.0 {
            let cert_res = r1_cert_norm(prog, &it) / norm_c / (-hz_by);
            if cert_res <= settings.feastol {
                let scale = -1.0 / hz_by;
                return ConeSolution {
                    status: ConeStatus::PrimalInfeasible,
                    x: DVector::zeros(n),
                    s: DVector::zeros(cdim),
                    z: &it.z * scale,
                    y: &it.y * scale,
                    primal_cost: f64::NAN,
                    dual_cost: f64::NAN,
                    gap,
                    primal_residual: pres,
                    dual_residual: cert_res,
                    iters: iter,
                };
            }
        }
        let cx = prog.c().dot(&it.x);
        if cx < 0.0 {
            let ax = prog.a_mul(&it.x).norm() / norm_b;
            let gxs = (prog.g_mul(&it.x) + &it.s).norm() / norm_h;
            let cert_res = ax.max(gxs) / (-cx);
            if cert_res <= settings.feastol {
                let scale = -1.0 / cx;
                return ConeSolution {
                    status: ConeStatus::DualInfeasible,
                    x: &it.x * scale,
                    s: &it.s * scale,
                    z: DVector::zeros(cdim),
                    y: DVector::zeros(p),
                    primal_cost: f64::NAN,
                    dual_cost: f64::NAN,
                    gap,
                    primal_residual: cert_res,
                    dual_residual: dres,
                    iters: iter,
                };
            }
        }

        // Scaling and factorization at the current iterate.
        let scaling = match Scaling::compute(&layout, &it.s, &it.z) {
            Ok(s) => s,
            Err(_) => return best_or_current(best, prog, &it, ConeStatus::Numerical, iter),
        };
        let mu = (scaling.lambda.dot(&scaling.lambda) + it.tau * it.kappa) / (deg + 1.0);
        if prog.factor(&scaling).is_err() {
            return best_or_current(best, prog, &it, ConeStatus::Numerical, iter);
        }

        // Direction shared by both solves: M3^-1 (-c, b, h).
        let (wx, wy, wz) = kkt_refined(prog, &scaling, &(-prog.c().clone()), &prog.b().clone(), &prog.h().clone());
        let den = prog.c().dot(&wx) + prog.b().dot(&wy) + prog.h().dot(&wz) - it.kappa / it.tau;

        let solve_direction = |prog: &dyn ConeProgram,
                               v: &DVector<f64>,
                               v_tau_kappa: f64|
         -> (DVector<f64>, DVector<f64>, DVector<f64>, DVector<f64>, f64, f64) {
            // Rows: M3 (dx,dy,dz) = r + dtau (-c, b, h), plus the scalar row.
            let bx = -&r1;
            let by = -&r2;
            let bz = -&r3 - scaling.apply_w(v);
            let (ux, uy, uz) = kkt_refined_ref(prog, &scaling, &bx, &by, &bz);
            let r4p = -r4 - v_tau_kappa / it.tau;
            let num = r4p - (prog.c().dot(&ux) + prog.b().dot(&uy) + prog.h().dot(&uz));
            let dtau = num / den;
            let dx = &ux + &wx * dtau;
            let dy = &uy + &wy * dtau;
            let dz = &uz + &wz * dtau;
            let ds = scaling.apply_w(v) - scaling.apply_wwt(&dz);
            let dkappa = (v_tau_kappa - it.kappa * dtau) / it.tau;
            (dx, dy, dz, ds, dtau, dkappa)
        };

        // Affine (predictor) direction: v = -lambda, v_tk = -tau kappa.
        let v_aff = -scaling.lambda.clone();
        let (_axd, _ayd, azd, asd, atau, akappa) = solve_direction(prog, &v_aff, -it.tau * it.kappa);

        let dls_a = scaling.apply_winv(&asd);
        let dlz_a = scaling.apply_wt(&azd);
        let alpha_aff = step_length(&scaling, &dls_a, &dlz_a, it.tau, it.kappa, atau, akappa).min(1.0);
        let sigma = (1.0 - alpha_aff).powi(3).clamp(0.0, 1.0);

        // Combined direction with Mehrotra correction in scaled space.
        let mut rhs = scaling.jordan_lambda_sq() * -1.0;
        rhs += -scaling.jordan_product(&dls_a, &dlz_a);
        let e = layout.identity();
        rhs += e * (sigma * mu);
        let v = scaling.jordan_lambda_solve(&rhs);
        let v_tk = sigma * mu - it.tau * it.kappa - atau * akappa;
        let (dx, dy, dz, ds, dtau, dkappa) = solve_direction(prog, &v, v_tk);

        let dls = scaling.apply_winv(&ds);
        let dlz = scaling.apply_wt(&dz);
        let alpha_max = step_length(&scaling, &dls, &dlz, it.tau, it.kappa, dtau, dkappa);
        let alpha = (settings.step * alpha_max).min(1.0);
        if !alpha.is_finite() || alpha < 1e-13 {
            return best_or_current(best, prog, &it, ConeStatus::Numerical, iter);
        }

        it.x += &dx * alpha;
        it.y += &dy * alpha;
        it.z += &dz * alpha;
        it.s += &ds * alpha;
        it.tau += alpha * dtau;
        it.kappa += alpha * dkappa;
        if it.tau <= 0.0 || it.kappa < 0.0 {
            return best_or_current(best, prog, &it, ConeStatus::Numerical, iter);
        }
    }

    best_or_current(best, prog, &it, ConeStatus::MaxIters, settings.max_iters)
}

fn r1_cert_norm(prog: &dyn ConeProgram, it: &Iterate) -> f64 {
    (prog.at_mul(&it.y) + prog.gt_mul(&it.z)).norm()
}

fn shift_interior(layout: &ConeLayout, v: DVector<f64>, e: &DVector<f64>) -> DVector<f64> {
    let min_eig = Scaling::min_eig(layout, &v);
    if min_eig > 1e-8 * 1.0f64.max(v.norm()) {
        v
    } else {
        v + e * (1.0 - min_eig)
    }
}

/// Max step keeping `(lambda + a*dls, lambda + a*dlz, tau + a*dtau, kappa + a*dkappa)`
/// in the cone product.
fn step_length(
    scaling: &Scaling,
    dls: &DVector<f64>,
    dlz: &DVector<f64>,
    tau: f64,
    kappa: f64,
    dtau: f64,
    dkappa: f64,
) -> f64 {
    let mut t = scaling.max_step(dls).min(scaling.max_step(dlz));
    if dtau < 0.0 {
        t = t.min(-tau / dtau);
    }
    if dkappa < 0.0 {
        t = t.min(-kappa / dkappa);
    }
    t
}

fn kkt_refined(
    prog: &dyn ConeProgram,
    scaling: &Scaling,
    bx: &DVector<f64>,
    by: &DVector<f64>,
    bz: &DVector<f64>,
) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
    kkt_refined_ref(prog, scaling, bx, by, bz)
}

fn kkt_refined_ref(
    prog: &dyn ConeProgram,
    scaling: &Scaling,
    bx: &DVector<f64>,
    by: &DVector<f64>,
    bz: &DVector<f64>,
) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
    let (mut dx, mut dy, mut dz) = prog.kkt_solve(scaling, bx, by, bz);
    // One round of iterative refinement against the exact blocks.
    let res_x = bx - (prog.at_mul(&dy) + prog.gt_mul(&dz));
    let res_y = by - prog.a_mul(&dx);
    let res_z = bz - (prog.g_mul(&dx) - scaling.apply_wwt(&dz));
    let (ex, ey, ez) = prog.kkt_solve(scaling, &res_x, &res_y, &res_z);
    dx += ex;
    dy += ey;
    dz += ez;
    (dx, dy, dz)
}

fn failure_solution(status: ConeStatus, n: usize, p: usize, cdim: usize, iters: usize) -> ConeSolution {
    ConeSolution {
        status,
        x: DVector::zeros(n),
        s: DVector::zeros(cdim),
        z: DVector::zeros(cdim),
        y: DVector::zeros(p),
        primal_cost: f64::NAN,
        dual_cost: f64::NAN,
        gap: f64::NAN,
        primal_residual: f64::NAN,
        dual_residual: f64::NAN,
        iters,
    }
}

fn best_or_current(
    best: Option<(f64, ConeSolution)>,
    prog: &dyn ConeProgram,
    it: &Iterate,
    status: ConeStatus,
    iters: usize,
) -> ConeSolution {
    match best {
        Some((_, mut sol)) => {
            sol.status = status;
            sol
        }
        None => current_as_failure(prog, it, status, iters),
    }
}

fn current_as_failure(prog: &dyn ConeProgram, it: &Iterate, status: ConeStatus, iters: usize) -> ConeSolution {
    let tau = it.tau.max(1e-300);
    ConeSolution {
        status,
        x: &it.x / tau,
        s: &it.s / tau,
        z: &it.z / tau,
        y: &it.y / tau,
        primal_cost: prog.c().dot(&it.x) / tau,
        dual_cost: -(prog.b().dot(&it.y) + prog.h().dot(&it.z)) / tau,
        gap: it.s.dot(&it.z) / (tau * tau),
        primal_residual: f64::NAN,
        dual_residual: f64::NAN,
        iters,
    }
}
