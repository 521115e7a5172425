//! Runtime checks of a certificate along simulated trajectories.
//!
//! These checks are independent of the SDP: they evaluate `V` sample by
//! sample and flag increases beyond a relative tolerance. With the force
//! entering `V` only through `W lam`, the value is well defined even at
//! samples where the complementarity solver picked a different member of the
//! solution set than a neighboring step.

use nalgebra::DVector;

use crate::sim::Trajectory;

use super::Certificate;

/// `V` evaluated at every recorded sample.
pub fn values_along(cert: &Certificate, traj: &Trajectory) -> Vec<f64> {
    traj.x
        .iter()
        .zip(&traj.lam)
        .map(|(x, lam)| cert.value(x, lam))
        .collect()
}

/// Outcome of a decrease check.
#[derive(Debug, Clone)]
pub struct DecreaseCheck {
    /// Number of sample-to-sample increases beyond the tolerance.
    pub violations: usize,
    /// Largest increase observed between consecutive samples.
    pub max_increase: f64,
    /// Largest `|V|` along the trajectory.
    pub v_max_abs: f64,
    /// Absolute tolerance that was applied.
    pub tol: f64,
    /// First violating sample index, if any.
    pub first_violation: Option<usize>,
}

impl DecreaseCheck {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Flags increases `V_{k+1} - V_k > tol_frac * max|V|` between consecutive
/// samples. Explicit integration introduces O(dt) wiggle, so `tol_frac` is a
/// relative slack rather than machine precision.
pub fn check_decrease(cert: &Certificate, traj: &Trajectory, tol_frac: f64) -> DecreaseCheck {
    let vals = values_along(cert, traj);
    let v_max_abs = vals.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let tol = tol_frac * v_max_abs.max(f64::EPSILON);
    let mut violations = 0;
    let mut max_increase = f64::NEG_INFINITY;
    let mut first_violation = None;
    for k in 1..vals.len() {
        let inc = vals[k] - vals[k - 1];
        max_increase = max_increase.max(inc);
        if inc > tol {
            violations += 1;
            if first_violation.is_none() {
                first_violation = Some(k);
            }
        }
    }
    if !max_increase.is_finite() {
        max_increase = 0.0;
    }
    DecreaseCheck { violations, max_increase, v_max_abs, tol, first_violation }
}

/// Checks the exponential envelope implied by a two-sided certificate:
/// `|x(t)|^2 <= (gamma2/gamma1) |x(0)|^2 exp(-(gamma3/gamma2) t)`, within a
/// relative slack. Requires `gamma2`; returns `None` when the certificate has
/// no upper bound.
pub fn check_envelope(cert: &Certificate, traj: &Trajectory, slack: f64) -> Option<bool> {
    let gamma2 = cert.gamma2?;
    let x0 = traj.x.first()?;
    let x0_sq = x0.dot(x0);
    let rate = cert.gamma3 / gamma2;
    let scale = gamma2 / cert.gamma1;
    let ok = traj.t.iter().zip(&traj.x).all(|(t, x)| {
        let bound = scale * x0_sq * (-rate * t).exp();
        x.dot(x) <= bound * (1.0 + slack) + slack
    });
    Some(ok)
}

/// Largest spread of `V` over distinct members of a force solution set at a
/// single state: all members must give the same value when `W` collapses the
/// solution set.
pub fn value_spread(cert: &Certificate, x: &DVector<f64>, members: &[DVector<f64>]) -> f64 {
    let vals: Vec<f64> = members.iter().map(|lam| cert.value(x, lam)).collect();
    let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if vals.is_empty() {
        0.0
    } else {
        hi - lo
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn diag_cert(n: usize) -> Certificate {
        Certificate {
            w_map: DMatrix::identity(1, 1),
            p_mat: DMatrix::identity(n, n),
            q_tilde: DMatrix::zeros(n, 1),
            r_tilde: DMatrix::zeros(1, 1),
            p_vec: DVector::zeros(n),
            r_tilde_vec: DVector::zeros(1),
            z: 0.0,
            gamma1: 1e-3,
            gamma2: Some(2.0),
            gamma3: 1e-3,
        }
    }

    fn traj_from_scalars(vals: &[f64]) -> Trajectory {
        Trajectory {
            t: (0..vals.len()).map(|k| k as f64).collect(),
            x: vals.iter().map(|&v| DVector::from_element(1, v)).collect(),
            lam: vals.iter().map(|_| DVector::zeros(1)).collect(),
            u: vals.iter().map(|_| DVector::zeros(0)).collect(),
        }
    }

    #[test]
    fn monotone_decay_passes() {
        let cert = diag_cert(1);
        let traj = traj_from_scalars(&[1.0, 0.8, 0.5, 0.2, 0.1]);
        let check = check_decrease(&cert, &traj, 1e-6);
        assert!(check.passed());
        assert!(check.max_increase <= 0.0);
    }

    #[test]
    fn increase_beyond_tolerance_is_flagged() {
        let cert = diag_cert(1);
        let traj = traj_from_scalars(&[1.0, 0.5, 0.9, 0.2]);
        let check = check_decrease(&cert, &traj, 1e-6);
        assert_eq!(check.violations, 1);
        assert_eq!(check.first_violation, Some(2));
        // V = x^2: the jump is 0.81 - 0.25.
        assert!((check.max_increase - 0.56).abs() < 1e-12);
    }

    #[test]
    fn tiny_wiggle_within_tolerance_passes() {
        let cert = diag_cert(1);
        let base = 1.0;
        let traj = traj_from_scalars(&[base, base * (1.0 + 1e-9), base * 0.5]);
        let check = check_decrease(&cert, &traj, 1e-6);
        assert!(check.passed());
    }

    #[test]
    fn spread_is_zero_for_collapsed_solution_sets() {
        let cert = Certificate {
            w_map: DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            p_mat: DMatrix::identity(1, 1),
            q_tilde: DMatrix::from_element(1, 1, 0.3),
            r_tilde: DMatrix::from_element(1, 1, 0.7),
            p_vec: DVector::zeros(1),
            r_tilde_vec: DVector::zeros(1),
            z: 0.0,
            gamma1: 1e-3,
            gamma2: None,
            gamma3: 0.0,
        };
        let x = DVector::from_element(1, -1.5);
        let members = vec![
            DVector::from_vec(vec![1.5, 0.0]),
            DVector::from_vec(vec![0.0, 1.5]),
            DVector::from_vec(vec![0.75, 0.75]),
        ];
        assert!(value_spread(&cert, &x, &members) < 1e-14);
    }
}
