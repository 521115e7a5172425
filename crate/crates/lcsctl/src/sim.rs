//! Time stepping for closed-loop LCS plants and the nonlinear cart-pole.
//!
//! The LCS integrator is explicit Euler with the contact force resolved by
//! Lemke's method at the start of each step (left-continuous force):
//!
//! ```text
//!     lam_k  solves  LCP(E x_k + c(t_k), F)
//!     x_{k+1} = x_k + dt (A x_k + D lam_k + affine)
//! ```
//!
//! The nonlinear cart-pole uses semi-implicit Euler on the full manipulator
//! dynamics; its contact treatment mirrors the linear benchmark model (wall
//! gaps on the tip position, force injected as pole angular acceleration), so
//! its exact linearization about the origin reproduces the linear plant.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::lcp::{lemke, LcpError, LemkeOptions};
use crate::model::{ClosedLoop, Feedback};

/// Simulation failure modes; both count as failed trials in benchmarks.
#[derive(Debug, Error)]
pub enum SimError {
    #[error("LCP unsolvable at step {step} (t = {time:.6}): {source}")]
    LcpFailure {
        step: usize,
        time: f64,
        #[source]
        source: LcpError,
    },
    #[error("state diverged at step {step} (t = {time:.6}), |x| = {norm:.3e}")]
    Diverged { step: usize, time: f64, norm: f64 },
    #[error("x0 has {got} entries, plant has {want} states")]
    Dimension { got: usize, want: usize },
}

/// Integration parameters.
#[derive(Debug, Clone, Copy)]
pub struct SimConfig {
    pub dt: f64,
    pub t_final: f64,
    /// Keep every `record_stride`-th step in the trajectory (plus the last).
    pub record_stride: usize,
    /// Abort when |x| exceeds this.
    pub divergence_limit: f64,
    pub lcp: LemkeOptions,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt: 1e-4,
            t_final: 10.0,
            record_stride: 1,
            divergence_limit: 1e6,
            lcp: LemkeOptions::default(),
        }
    }
}

/// Recorded trajectory. `lam` and `u` at index k belong to the step taken
/// from `x[k]` (left-continuous selections).
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub x: Vec<DVector<f64>>,
    pub lam: Vec<DVector<f64>>,
    pub u: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn last_x(&self) -> &DVector<f64> {
        self.x.last().expect("nonempty trajectory")
    }
}

/// Piecewise-constant replacement schedule for the gap offset `c(t)`.
///
/// Segment `i` is active on `[times[i], times[i+1])`; the last one extends to
/// infinity. `times[0]` must be `0`.
#[derive(Debug, Clone)]
pub struct CSchedule {
    pub times: Vec<f64>,
    pub values: Vec<DVector<f64>>,
}

impl CSchedule {
    pub fn at(&self, t: f64) -> &DVector<f64> {
        let mut idx = 0;
        while idx + 1 < self.times.len() && t >= self.times[idx + 1] {
            idx += 1;
        }
        &self.values[idx]
    }
}

/// Simulates the closed loop from `x0`.
pub fn simulate_lcs(cl: &ClosedLoop, x0: &DVector<f64>, cfg: &SimConfig) -> Result<Trajectory, SimError> {
    simulate_lcs_scheduled(cl, x0, cfg, None)
}

/// Simulates with an optional time-varying gap offset.
pub fn simulate_lcs_scheduled(
    cl: &ClosedLoop,
    x0: &DVector<f64>,
    cfg: &SimConfig,
    schedule: Option<&CSchedule>,
) -> Result<Trajectory, SimError> {
    if x0.len() != cl.n() {
        return Err(SimError::Dimension { got: x0.len(), want: cl.n() });
    }
    let steps = (cfg.t_final / cfg.dt).round() as usize;
    let stride = cfg.record_stride.max(1);
    let mut traj = Trajectory {
        t: Vec::with_capacity(steps / stride + 2),
        x: Vec::with_capacity(steps / stride + 2),
        lam: Vec::with_capacity(steps / stride + 2),
        u: Vec::with_capacity(steps / stride + 2),
    };
    let mut x = x0.clone();
    for step in 0..=steps {
        let t = step as f64 * cfg.dt;
        let c = schedule.map_or(&cl.c, |s| s.at(t));
        let q = &cl.e * &x + c;
        let lam = lemke(&cl.f, &q, cfg.lcp)
            .map_err(|source| SimError::LcpFailure { step, time: t, source })?
            .lam;
        if step % stride == 0 || step == steps {
            traj.t.push(t);
            traj.x.push(x.clone());
            traj.u.push(cl.input(&x, &lam));
            traj.lam.push(lam.clone());
        }
        if step == steps {
            break;
        }
        x += (&cl.a * &x + &cl.d * &lam + &cl.affine) * cfg.dt;
        let norm = x.norm();
        if !norm.is_finite() || norm > cfg.divergence_limit {
            return Err(SimError::Diverged { step: step + 1, time: t + cfg.dt, norm });
        }
    }
    Ok(traj)
}

/// Cart-pole physical parameters (pole as a point mass at the tip, walls at
/// `+-wall_distance` with stiffness `wall_stiffness`).
#[derive(Debug, Clone, Copy)]
pub struct CartPoleParams {
    pub cart_mass: f64,
    pub pole_mass: f64,
    pub pole_length: f64,
    pub gravity: f64,
    pub wall_stiffness: f64,
    pub wall_distance: f64,
}

impl Default for CartPoleParams {
    fn default() -> Self {
        CartPoleParams {
            cart_mass: 1.0,
            pole_mass: 0.1,
            pole_length: 0.5,
            gravity: 9.81,
            wall_stiffness: 10.0,
            wall_distance: 0.1,
        }
    }
}

/// Simulates the nonlinear cart-pole with the feedback `u = K x + L lam`.
///
/// State `(x_cart, psi, xdot, psidot)` with the tip at
/// `(x - l sin psi, l cos psi)`; upright is `psi = 0`. Wall gaps (with the
/// compliance term `lam / k`) are the exact nonlinear versions of the linear
/// plant's; the contact force acts as a pure pole torque, matching the linear
/// benchmark's force-to-state map.
pub fn simulate_cartpole_nonlinear(
    params: &CartPoleParams,
    k_gain: &DMatrix<f64>,
    l_gain: &DMatrix<f64>,
    x0: &DVector<f64>,
    cfg: &SimConfig,
) -> Result<Trajectory, SimError> {
    if x0.len() != 4 {
        return Err(SimError::Dimension { got: x0.len(), want: 4 });
    }
    let (mc, mp, l, g) = (params.cart_mass, params.pole_mass, params.pole_length, params.gravity);
    let (kw, d) = (params.wall_stiffness, params.wall_distance);
    let f = DMatrix::from_diagonal(&DVector::from_element(2, 1.0 / kw));
    let steps = (cfg.t_final / cfg.dt).round() as usize;
    let stride = cfg.record_stride.max(1);
    let mut traj = Trajectory {
        t: Vec::with_capacity(steps / stride + 2),
        x: Vec::with_capacity(steps / stride + 2),
        lam: Vec::with_capacity(steps / stride + 2),
        u: Vec::with_capacity(steps / stride + 2),
    };
    let mut x = x0.clone();
    for step in 0..=steps {
        let t = step as f64 * cfg.dt;
        let (pos, psi, vel, omega) = (x[0], x[1], x[2], x[3]);
        let (s_psi, c_psi) = psi.sin_cos();
        let tip = pos - l * s_psi;
        // Nonlinear wall gaps; linearize to the plant's E rows at psi = 0.
        let q = DVector::from_vec(vec![d - tip, d + tip]);
        let lam = lemke(&f, &q, cfg.lcp)
            .map_err(|source| SimError::LcpFailure { step, time: t, source })?
            .lam;
        let u = (k_gain * &x + l_gain * &lam)[0];
        if step % stride == 0 || step == steps {
            traj.t.push(t);
            traj.x.push(x.clone());
            traj.lam.push(lam.clone());
            traj.u.push(DVector::from_vec(vec![u]));
        }
        if step == steps {
            break;
        }
        // M(psi) qddot = rhs, with M = [[mc+mp, -mp l c], [-mp l c, mp l^2]].
        let m11 = mc + mp;
        let m12 = -mp * l * c_psi;
        let m22 = mp * l * l;
        let det = m11 * m22 - m12 * m12;
        // rhs: cart force u minus the centrifugal term; pole gravity torque.
        let rhs1 = u - mp * l * s_psi * omega * omega;
        let rhs2 = mp * g * l * s_psi;
        let acc_pos = (m22 * rhs1 - m12 * rhs2) / det;
        let mut acc_psi = (-m12 * rhs1 + m11 * rhs2) / det;
        // Contact torque injected on the pole coordinate only.
        acc_psi += c_psi * (lam[0] - lam[1]) / (mp * l);
        // Semi-implicit Euler: velocities first, then positions.
        let vel_new = vel + cfg.dt * acc_pos;
        let omega_new = omega + cfg.dt * acc_psi;
        x[0] = pos + cfg.dt * vel_new;
        x[1] = psi + cfg.dt * omega_new;
        x[2] = vel_new;
        x[3] = omega_new;
        let norm = x.norm();
        if !norm.is_finite() || norm > cfg.divergence_limit {
            return Err(SimError::Diverged { step: step + 1, time: t + cfg.dt, norm });
        }
    }
    Ok(traj)
}

/// Success criterion: `x' x <= radius_sq` at every recorded sample in the
/// trailing `window` seconds.
pub fn evaluate_success(traj: &Trajectory, radius_sq: f64, window: f64) -> bool {
    let t_end = *traj.t.last().expect("nonempty trajectory");
    let start = t_end - window;
    let mut seen = false;
    for (i, &t) in traj.t.iter().enumerate() {
        if t >= start {
            seen = true;
            if traj.x[i].dot(&traj.x[i]) > radius_sq {
                return false;
            }
        }
    }
    seen
}

/// Writes `t, x1..xn, lam1..lamm, u1..unu` rows with 17 significant digits.
pub fn write_trajectory_csv<W: std::io::Write>(traj: &Trajectory, mut out: W) -> std::io::Result<()> {
    let n = traj.x.first().map_or(0, |v| v.len());
    let m = traj.lam.first().map_or(0, |v| v.len());
    let nu = traj.u.first().map_or(0, |v| v.len());
    let mut header = String::from("t");
    for i in 1..=n {
        header.push_str(&format!(",x{i}"));
    }
    for i in 1..=m {
        header.push_str(&format!(",lam{i}"));
    }
    for i in 1..=nu {
        header.push_str(&format!(",u{i}"));
    }
    writeln!(out, "{header}")?;
    for k in 0..traj.t.len() {
        let mut line = format!("{:.16e}", traj.t[k]);
        for v in traj.x[k].iter().chain(traj.lam[k].iter()).chain(traj.u[k].iter()) {
            line.push_str(&format!(",{v:.16e}"));
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}
