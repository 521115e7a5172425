//! Integration checks of the conic layer: constructed optima, both problem
//! representations, infeasibility certificates and planted batches.

use approx::assert_abs_diff_eq;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use lcsctl::conic::{
    planted_instance, smat, solve_cone_program, solve_sdp, solve_sdp_margin, svec, AffineLmi,
    ConeLayout, ConeSettings, ConeStatus, DenseProgram, SdProblem, SdpSettings, SdpStatus,
    StandardProgram,
};

/// LP with a constructed primal-dual optimal pair.
///
/// min c'x s.t. Ax = b, x >= 0 encoded as G = -I, h = 0. The pair is planted
/// with complementary supports, so the optimal cost is known exactly.
#[test]
fn lp_with_planted_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for trial in 0..10 {
        let n = 8;
        let p = 3;
        let a = DMatrix::from_fn(p, n, |_, _| rng.gen_range(-1.0..1.0));
        // Primal optimal x*: support on first half; dual slack z*: support on rest.
        let mut xstar = DVector::zeros(n);
        for i in 0..n / 2 {
            xstar[i] = rng.gen_range(0.5..2.0);
        }
        let b = &a * &xstar;
        let y = DVector::from_fn(p, |_, _| rng.gen_range(-1.0..1.0));
        let mut zstar = DVector::zeros(n);
        for i in n / 2..n {
            zstar[i] = rng.gen_range(0.5..2.0);
        }
        // c = A'y + z*  makes (x*, y, z*) a KKT point.
        let c = a.transpose() * &y + &zstar;
        let opt = c.dot(&xstar);

        let layout = ConeLayout { nonneg: n, psd: vec![] };
        let g = -DMatrix::<f64>::identity(n, n);
        let h = DVector::zeros(n);
        let mut prog = DenseProgram::new(layout, c, g, h, a, b).unwrap();
        let sol = solve_cone_program(&mut prog, &ConeSettings::default());
        assert_eq!(sol.status, ConeStatus::Optimal, "trial {trial}");
        assert_abs_diff_eq!(sol.primal_cost, opt, epsilon = 1e-6 * (1.0 + opt.abs()));
    }
}

#[test]
fn standard_form_matches_dense_on_eigenvalue_problem() {
    // min t s.t. t I - M = X, X >= 0: optimum is lambda_max(M).
    let m = DMatrix::from_row_slice(4, 4, &[
        1.0, 0.3, 0.0, 0.2,
        0.3, 2.0, -0.4, 0.0,
        0.0, -0.4, 1.5, 0.1,
        0.2, 0.0, 0.1, 0.7,
    ]);
    let lambda_max = m.clone().symmetric_eigenvalues().max();
    let layout = ConeLayout { nonneg: 0, psd: vec![4] };
    let svec_len = 10;
    let id = svec(&DMatrix::<f64>::identity(4, 4));
    let msv = svec(&m);
    // Rows: t * svec(I)_k - X_k = svec(M)_k.
    let mut a_u = DMatrix::zeros(svec_len, 1);
    let mut a_cone = Vec::new();
    let mut b = DVector::zeros(svec_len);
    for k in 0..svec_len {
        a_u[(k, 0)] = id[k];
        a_cone.push(vec![(k, -1.0)]);
        b[k] = msv[k];
    }
    let mut prog = StandardProgram::new(
        layout,
        DVector::from_vec(vec![1.0]),
        DVector::zeros(svec_len),
        a_u,
        a_cone,
        b,
    )
    .unwrap();
    let sol = solve_cone_program(&mut prog, &ConeSettings::default());
    assert_eq!(sol.status, ConeStatus::Optimal);
    assert_abs_diff_eq!(sol.primal_cost, lambda_max, epsilon = 1e-6);
    // The cone block of x reconstructs t I - M.
    let x_cone = sol.x.rows(1, svec_len).into_owned();
    let xm = smat(x_cone.as_slice(), 4);
    let expect = DMatrix::identity(4, 4) * sol.x[0] - &m;
    assert_abs_diff_eq!((xm - expect).amax(), 0.0, epsilon = 1e-5);
}

#[test]
fn standard_form_detects_primal_infeasibility() {
    // x1 + x2 = -1 with x in orthant.
    let layout = ConeLayout { nonneg: 2, psd: vec![] };
    let mut prog = StandardProgram::new(
        layout,
        DVector::zeros(0),
        DVector::from_vec(vec![0.0, 0.0]),
        DMatrix::zeros(1, 0),
        vec![vec![(0, 1.0), (1, 1.0)]],
        DVector::from_vec(vec![-1.0]),
    )
    .unwrap();
    let sol = solve_cone_program(&mut prog, &ConeSettings::default());
    assert_eq!(sol.status, ConeStatus::PrimalInfeasible);
    // Certificate: A'y in the dual cone direction, b'y = -1.
    assert_abs_diff_eq!(sol.y[0] * -1.0, -1.0, epsilon = 1e-6);
}

#[test]
fn dense_form_detects_unbounded_objective() {
    // min -x s.t. x >= 0: dual infeasible (primal unbounded).
    let layout = ConeLayout { nonneg: 1, psd: vec![] };
    let mut prog = DenseProgram::new(
        layout,
        DVector::from_vec(vec![-1.0]),
        DMatrix::from_row_slice(1, 1, &[-1.0]),
        DVector::zeros(1),
        DMatrix::zeros(0, 1),
        DVector::zeros(0),
    )
    .unwrap();
    let sol = solve_cone_program(&mut prog, &ConeSettings::default());
    assert_eq!(sol.status, ConeStatus::DualInfeasible);
    assert!(sol.x[0] > 0.0);
}

#[test]
fn mixed_cone_problem() {
    // min x1 + x2 s.t. [[x1, 1], [1, x2]] >= 0, x1 <= 4, x2 <= 4.
    // Optimum at x1 = x2 = 1 (cost 2) by AM-GM on x1 x2 >= 1.
    let p = SdProblem {
        n_vars: 2,
        lmis: vec![AffineLmi {
            dim: 2,
            constant: DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]),
            coeffs: vec![
                (0, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0])),
                (1, DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0])),
            ],
        }],
        lin_ineq: vec![(vec![(0, -1.0)], 4.0), (vec![(1, -1.0)], 4.0)],
        objective: Some(vec![(0, 1.0), (1, 1.0)]),
    };
    let sol = solve_sdp(&p, &SdpSettings::default()).unwrap();
    assert_eq!(sol.status, SdpStatus::Optimal);
    assert_abs_diff_eq!(sol.objective, 2.0, epsilon = 1e-6);
}

#[test]
fn planted_batch_statuses_and_margins() {
    let settings = SdpSettings::default();
    for k in 0..20 {
        let dim = 3 + (k % 8);
        let nv = 2 + (k % 5);
        let feasible = k % 2 == 0;
        let inst = planted_instance(1000 + k as u64, dim, nv, feasible);
        let sol = solve_sdp_margin(&inst.problem, &settings).unwrap();
        assert_eq!(sol.status, SdpStatus::Optimal, "instance {k}");
        let margin = sol.margin.unwrap();
        if feasible {
            assert!(margin > 0.0, "instance {k}: margin {margin}");
            assert!(sol.lmi_margins[0] >= -1e-7, "instance {k}: eig {}", sol.lmi_margins[0]);
        } else {
            assert!(margin < 0.0, "instance {k}: margin {margin}");
        }
    }
}
