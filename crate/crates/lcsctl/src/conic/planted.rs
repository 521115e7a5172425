//! Random LMI instances with known feasibility status.
//!
//! Feasible instances are built around a planted strictly feasible point;
//! infeasible ones around a planted Farkas certificate `W > 0` with
//! `<W, F_i> = 0` for all coefficient matrices and `<W, F_0> < 0`, which rules
//! out any PSD value of the pencil. Both constructions leave a comfortable
//! margin so that status decisions are not borderline.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::sdp::{AffineLmi, SdProblem};

/// An instance with its ground-truth feasibility.
#[derive(Debug, Clone)]
pub struct PlantedInstance {
    pub problem: SdProblem,
    pub feasible: bool,
    /// The planted strictly feasible point, when feasible.
    pub x0: Option<DVector<f64>>,
}

fn random_sym(rng: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
    let m = DMatrix::from_fn(d, d, |_, _| rng.gen_range(-1.0..1.0));
    (&m + m.transpose()) * 0.5
}

fn random_spd(rng: &mut ChaCha8Rng, d: usize, floor: f64) -> DMatrix<f64> {
    let r = DMatrix::from_fn(d, d, |_, _| rng.gen_range(-1.0..1.0));
    r.transpose() * &r + DMatrix::identity(d, d) * floor
}

/// Builds a random instance with `n_vars` variables and one `dim` x `dim` LMI.
pub fn planted_instance(seed: u64, dim: usize, n_vars: usize, feasible: bool) -> PlantedInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coeffs: Vec<DMatrix<f64>> = (0..n_vars).map(|_| random_sym(&mut rng, dim)).collect();
    if feasible {
        let x0 = DVector::from_fn(n_vars, |_, _| rng.gen_range(-1.0..1.0));
        // F_0 = S - sum x0_i F_i with S strictly PSD: margin >= 0.1 at x0.
        let s = random_spd(&mut rng, dim, 0.1);
        let mut constant = s;
        for (i, f) in coeffs.iter().enumerate() {
            constant -= f * x0[i];
        }
        PlantedInstance {
            problem: SdProblem {
                n_vars,
                lmis: vec![AffineLmi {
                    dim,
                    constant,
                    coeffs: coeffs.into_iter().enumerate().collect(),
                }],
                lin_ineq: vec![],
                objective: None,
            },
            feasible: true,
            x0: Some(x0),
        }
    } else {
        // Orthogonalize the pencil against a strictly positive W, then tilt
        // the constant so that <W, F_0> = -0.5 <W, W>^(1/2).
        let w = random_spd(&mut rng, dim, 0.2);
        let ww = (&w * &w).trace();
        let coeffs: Vec<DMatrix<f64>> = coeffs
            .into_iter()
            .map(|f| {
                let proj = (&w * &f).trace() / ww;
                f - &w * proj
            })
            .collect();
        let f0_raw = random_sym(&mut rng, dim);
        let target = -0.5 * ww.sqrt();
        let proj = (&w * &f0_raw).trace();
        let constant = f0_raw - &w * ((proj - target) / ww);
        PlantedInstance {
            problem: SdProblem {
                n_vars,
                lmis: vec![AffineLmi { dim, constant, coeffs: coeffs.into_iter().enumerate().collect() }],
                lin_ineq: vec![],
                objective: None,
            },
            feasible: false,
            x0: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feasible_instance_has_planted_margin() {
        let inst = planted_instance(11, 6, 4, true);
        let x0 = inst.x0.unwrap();
        let margin = inst.problem.lmis[0].eval(&x0).symmetric_eigenvalues().min();
        assert!(margin >= 0.1 - 1e-9, "margin {margin}");
    }

    #[test]
    fn infeasible_instance_certificate_holds() {
        let inst = planted_instance(12, 6, 4, false);
        // Reconstruct: for every x, <W, F(x)> is the constant term only; it
        // must be negative. Spot-check a few random x.
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..20 {
            let x = DVector::from_fn(4, |_, _| rng.gen_range(-10.0..10.0));
            let m = inst.problem.lmis[0].eval(&x);
            let min_eig = m.symmetric_eigenvalues().min();
            assert!(min_eig < 0.0, "claimed infeasible but found PSD point");
        }
    }
}
