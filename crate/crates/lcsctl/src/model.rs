//! LCS plant and controller types, loop closing and file formats.
//!
//! The open-loop plant is
//!
//! ```text
//!     xdot = A_bar x + B u + D_bar lam + a
//!     0 <= lam  perp  E_bar x + F_bar lam + H u + c >= 0
//! ```
//!
//! and controllers are contact-aware static feedbacks `u = K x + L lam` with
//! `L = L_tilde W`, where `W` is a map under which `W lam` is unique across all
//! LCP solutions. With `H = 0` the loop closes by substitution. With `H != 0`
//! the substitution would put `u` on both sides of the complementarity
//! constraint, so the loop closes through a first-order input filter
//! `taudot = kappa (u - tau)` driven by the commanded feedback; the filter
//! state `tau` is what enters the plant and the contact gap.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors for model construction, loop closing and file I/O.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("loop closing requires H = 0; use a filtered loop for H != 0")]
    AlgebraicLoop,
    #[error("filtered loop requires kappa > 0, got {0}")]
    BadKappa(f64),
    #[error("L does not factor through W: residual {residual:.3e} exceeds {tol:.3e}")]
    LOutsideRowspace { residual: f64, tol: f64 },
    #[error("file field {0} is missing")]
    MissingField(&'static str),
    #[error("ragged matrix rows in field {0}")]
    Ragged(&'static str),
    #[error("toml: {0}")]
    Toml(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Open-loop LCS plant.
#[derive(Debug, Clone, PartialEq)]
pub struct LcsModel {
    pub name: String,
    pub notes: String,
    /// State matrix `A_bar`, n x n.
    pub a_bar: DMatrix<f64>,
    /// Input matrix `B`, n x nu.
    pub b: DMatrix<f64>,
    /// Contact force matrix `D_bar`, n x m.
    pub d_bar: DMatrix<f64>,
    /// Constant drift `a`, length n.
    pub a: DVector<f64>,
    /// Gap state matrix `E_bar`, m x n.
    pub e_bar: DMatrix<f64>,
    /// Gap force matrix `F_bar`, m x m.
    pub f_bar: DMatrix<f64>,
    /// Gap input matrix `H`, m x nu.
    pub h: DMatrix<f64>,
    /// Gap offset `c`, length m.
    pub c: DVector<f64>,
}

impl LcsModel {
    /// Number of states.
    pub fn n(&self) -> usize {
        self.a_bar.nrows()
    }

    /// Number of inputs.
    pub fn n_inputs(&self) -> usize {
        self.b.ncols()
    }

    /// Number of contact forces.
    pub fn n_contacts(&self) -> usize {
        self.f_bar.nrows()
    }

    /// Checks that all matrix dimensions are mutually consistent.
    pub fn validate(&self) -> Result<(), ModelError> {
        let (n, nu, m) = (self.n(), self.n_inputs(), self.n_contacts());
        let checks = [
            ("A_bar", self.a_bar.shape(), (n, n)),
            ("B", self.b.shape(), (n, nu)),
            ("D_bar", self.d_bar.shape(), (n, m)),
            ("E_bar", self.e_bar.shape(), (m, n)),
            ("F_bar", self.f_bar.shape(), (m, m)),
            ("H", self.h.shape(), (m, nu)),
            ("a", (self.a.len(), 1), (n, 1)),
            ("c", (self.c.len(), 1), (m, 1)),
        ];
        for (name, got, want) in checks {
            if got != want {
                return Err(ModelError::Dimension(format!(
                    "{name}: got {}x{}, want {}x{}",
                    got.0, got.1, want.0, want.1
                )));
            }
        }
        Ok(())
    }

    /// True when the gap has no direct input feedthrough.
    pub fn h_is_zero(&self) -> bool {
        self.h.iter().all(|v| *v == 0.0)
    }
}

/// Contact-aware static feedback `u = K x + L_tilde W lam`.
///
/// `kappa` selects the filtered loop closing; it is required when the plant
/// has `H != 0` and optional otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct Controller {
    /// State gain `K`, nu x n.
    pub k: DMatrix<f64>,
    /// Contact gain `L_tilde` on the mapped force `W lam`, nu x rows(W).
    pub l_tilde: DMatrix<f64>,
    /// Uniqueness map `W`, rows(W) x m.
    pub w: DMatrix<f64>,
    /// Filter bandwidth for the algebraic-loop-free realization.
    pub kappa: Option<f64>,
}

impl Controller {
    /// Raw contact gain `L = L_tilde W`, nu x m.
    pub fn l(&self) -> DMatrix<f64> {
        &self.l_tilde * &self.w
    }

    /// A state-only controller (`L = 0`) with the same W bookkeeping.
    pub fn state_feedback(k: DMatrix<f64>, w: DMatrix<f64>) -> Self {
        let nu = k.nrows();
        let nw = w.nrows();
        Controller { k, l_tilde: DMatrix::zeros(nu, nw), w, kappa: None }
    }

    /// Builds a controller from a raw `L` by factoring `L = L_tilde W`.
    ///
    /// Fails when some row of `L` lies outside the rowspace of `W` (relative
    /// residual above `tol`), since then `L lam` would be ambiguous across LCP
    /// solutions.
    pub fn from_raw_l(
        k: DMatrix<f64>,
        l: DMatrix<f64>,
        w: DMatrix<f64>,
        kappa: Option<f64>,
        tol: f64,
    ) -> Result<Self, ModelError> {
        // Solve L_tilde W = L by least squares on W W^T (rows(W) is small).
        let wwt = &w * w.transpose();
        let rhs = &l * w.transpose();
        let chol = wwt
            .clone()
            .cholesky()
            .ok_or_else(|| ModelError::Dimension("W has dependent rows".into()))?;
        let l_tilde = chol.solve(&rhs.transpose()).transpose();
        let residual = (&l_tilde * &w - &l).norm();
        let scale = 1.0 + l.norm();
        if residual > tol * scale {
            return Err(ModelError::LOutsideRowspace { residual: residual / scale, tol });
        }
        Ok(Controller { k, l_tilde, w, kappa })
    }
}

/// How the closed loop realizes the feedback.
#[derive(Debug, Clone, PartialEq)]
pub enum Feedback {
    /// `u = K x + L lam` substituted directly (requires `H = 0`).
    Direct { k: DMatrix<f64>, l: DMatrix<f64> },
    /// `u = tau`, `taudot = kappa (K xp + L lam - tau)`; the closed-loop state
    /// is `x = (xp, tau)` with `xp` the plant state.
    Filtered { kappa: f64, n_plant: usize, n_inputs: usize },
}

/// Autonomous closed-loop LCS
/// `xdot = A x + D lam + affine`, `0 <= lam perp E x + F lam + c >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoop {
    pub a: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub affine: DVector<f64>,
    pub e: DMatrix<f64>,
    pub f: DMatrix<f64>,
    pub c: DVector<f64>,
    pub feedback: Feedback,
}

impl ClosedLoop {
    /// Number of closed-loop states (plant plus any filter states).
    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    /// Number of contact forces.
    pub fn m(&self) -> usize {
        self.f.nrows()
    }

    /// Recovers the plant input at a closed-loop state.
    pub fn input(&self, x: &DVector<f64>, lam: &DVector<f64>) -> DVector<f64> {
        match &self.feedback {
            Feedback::Direct { k, l } => k * x + l * lam,
            Feedback::Filtered { n_plant, n_inputs, .. } => {
                x.rows(*n_plant, *n_inputs).into_owned()
            }
        }
    }

    /// Right-hand side `A x + D lam + affine`.
    pub fn xdot(&self, x: &DVector<f64>, lam: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.d * lam + &self.affine
    }
}

/// Closes the loop by direct substitution; the plant must have `H = 0`.
pub fn close_loop_direct(model: &LcsModel, ctrl: &Controller) -> Result<ClosedLoop, ModelError> {
    model.validate()?;
    if !model.h_is_zero() {
        return Err(ModelError::AlgebraicLoop);
    }
    let l = ctrl.l();
    check_gain_dims(model, ctrl, &l)?;
    Ok(ClosedLoop {
        a: &model.a_bar + &model.b * &ctrl.k,
        d: &model.d_bar + &model.b * &l,
        affine: model.a.clone(),
        e: model.e_bar.clone(),
        f: model.f_bar.clone(),
        c: model.c.clone(),
        feedback: Feedback::Direct { k: ctrl.k.clone(), l },
    })
}

/// Closes the loop through the input filter `taudot = kappa (u - tau)`.
///
/// Works for any `H`; the augmented state is `x = (xp, tau)` and the gap reads
/// `[E_bar H] x + F_bar lam + c`.
pub fn close_loop_filtered(
    model: &LcsModel,
    ctrl: &Controller,
    kappa: f64,
) -> Result<ClosedLoop, ModelError> {
    model.validate()?;
    if !(kappa > 0.0) {
        return Err(ModelError::BadKappa(kappa));
    }
    let l = ctrl.l();
    check_gain_dims(model, ctrl, &l)?;
    let (n, nu, m) = (model.n(), model.n_inputs(), model.n_contacts());

    let mut a = DMatrix::zeros(n + nu, n + nu);
    a.view_mut((0, 0), (n, n)).copy_from(&model.a_bar);
    a.view_mut((0, n), (n, nu)).copy_from(&model.b);
    a.view_mut((n, 0), (nu, n)).copy_from(&(kappa * &ctrl.k));
    a.view_mut((n, n), (nu, nu)).copy_from(&(-kappa * DMatrix::<f64>::identity(nu, nu)));

    let mut d = DMatrix::zeros(n + nu, m);
    d.view_mut((0, 0), (n, m)).copy_from(&model.d_bar);
    d.view_mut((n, 0), (nu, m)).copy_from(&(kappa * &l));

    let mut e = DMatrix::zeros(m, n + nu);
    e.view_mut((0, 0), (m, n)).copy_from(&model.e_bar);
    e.view_mut((0, n), (m, nu)).copy_from(&model.h);

    let mut affine = DVector::zeros(n + nu);
    affine.rows_mut(0, n).copy_from(&model.a);

    Ok(ClosedLoop {
        a,
        d,
        affine,
        e,
        f: model.f_bar.clone(),
        c: model.c.clone(),
        feedback: Feedback::Filtered { kappa, n_plant: n, n_inputs: nu },
    })
}

/// Closes the loop, choosing the realization from the controller:
/// filtered when `kappa` is set, direct otherwise.
pub fn close_loop(model: &LcsModel, ctrl: &Controller) -> Result<ClosedLoop, ModelError> {
    match ctrl.kappa {
        Some(kappa) => close_loop_filtered(model, ctrl, kappa),
        None => close_loop_direct(model, ctrl),
    }
}

fn check_gain_dims(model: &LcsModel, ctrl: &Controller, l: &DMatrix<f64>) -> Result<(), ModelError> {
    let (n, nu, m) = (model.n(), model.n_inputs(), model.n_contacts());
    if ctrl.k.shape() != (nu, n) {
        return Err(ModelError::Dimension(format!(
            "K: got {}x{}, want {nu}x{n}",
            ctrl.k.nrows(),
            ctrl.k.ncols()
        )));
    }
    if ctrl.w.ncols() != m || l.shape() != (nu, m) {
        return Err(ModelError::Dimension(format!(
            "W: got {}x{}, want cols {m}",
            ctrl.w.nrows(),
            ctrl.w.ncols()
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// File formats. Matrices are rows of numbers; TOML floats round-trip exactly
// (shortest-representation printing).
// ---------------------------------------------------------------------------

/// On-disk plant description.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub name: String,
    #[serde(default)]
    pub notes: String,
    #[serde(rename = "A_bar")]
    pub a_bar: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    #[serde(rename = "D_bar")]
    pub d_bar: Vec<Vec<f64>>,
    pub a: Vec<f64>,
    #[serde(rename = "E_bar")]
    pub e_bar: Vec<Vec<f64>>,
    #[serde(rename = "F_bar")]
    pub f_bar: Vec<Vec<f64>>,
    #[serde(rename = "H")]
    pub h: Vec<Vec<f64>>,
    pub c: Vec<f64>,
}

/// On-disk controller description. Either `L_tilde` or a raw `L` must be
/// present; a raw `L` is factored through `W` on load.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainsFile {
    pub name: String,
    #[serde(default)]
    pub notes: String,
    #[serde(rename = "K")]
    pub k: Vec<Vec<f64>>,
    #[serde(rename = "L_tilde", skip_serializing_if = "Option::is_none")]
    pub l_tilde: Option<Vec<Vec<f64>>>,
    #[serde(rename = "L", skip_serializing_if = "Option::is_none")]
    pub l: Option<Vec<Vec<f64>>>,
    #[serde(rename = "W")]
    pub w: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
}

/// Relative tolerance for factoring a raw `L` through `W` on load.
pub const L_FACTOR_TOL: f64 = 1e-9;

pub(crate) fn rows_to_mat(rows: &[Vec<f64>], field: &'static str) -> Result<DMatrix<f64>, ModelError> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(ModelError::Ragged(field));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub(crate) fn mat_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

impl ModelFile {
    pub fn from_model(m: &LcsModel) -> Self {
        ModelFile {
            name: m.name.clone(),
            notes: m.notes.clone(),
            a_bar: mat_to_rows(&m.a_bar),
            b: mat_to_rows(&m.b),
            d_bar: mat_to_rows(&m.d_bar),
            a: m.a.iter().copied().collect(),
            e_bar: mat_to_rows(&m.e_bar),
            f_bar: mat_to_rows(&m.f_bar),
            h: mat_to_rows(&m.h),
            c: m.c.iter().copied().collect(),
        }
    }

    pub fn into_model(self) -> Result<LcsModel, ModelError> {
        let model = LcsModel {
            name: self.name,
            notes: self.notes,
            a_bar: rows_to_mat(&self.a_bar, "A_bar")?,
            b: rows_to_mat(&self.b, "B")?,
            d_bar: rows_to_mat(&self.d_bar, "D_bar")?,
            a: DVector::from_vec(self.a),
            e_bar: rows_to_mat(&self.e_bar, "E_bar")?,
            f_bar: rows_to_mat(&self.f_bar, "F_bar")?,
            h: rows_to_mat(&self.h, "H")?,
            c: DVector::from_vec(self.c),
        };
        model.validate()?;
        Ok(model)
    }
}

impl GainsFile {
    pub fn from_controller(name: &str, ctrl: &Controller) -> Self {
        GainsFile {
            name: name.to_string(),
            notes: String::new(),
            k: mat_to_rows(&ctrl.k),
            l_tilde: Some(mat_to_rows(&ctrl.l_tilde)),
            l: None,
            w: mat_to_rows(&ctrl.w),
            kappa: ctrl.kappa,
        }
    }

    pub fn into_controller(self) -> Result<Controller, ModelError> {
        let k = rows_to_mat(&self.k, "K")?;
        let w = rows_to_mat(&self.w, "W")?;
        if let Some(lt) = self.l_tilde {
            let l_tilde = rows_to_mat(&lt, "L_tilde")?;
            Ok(Controller { k, l_tilde, w, kappa: self.kappa })
        } else if let Some(l) = self.l {
            let l = rows_to_mat(&l, "L")?;
            Controller::from_raw_l(k, l, w, self.kappa, L_FACTOR_TOL)
        } else {
            Err(ModelError::MissingField("L_tilde or L"))
        }
    }
}

/// Serializes a model to TOML text.
pub fn model_to_toml(m: &LcsModel) -> Result<String, ModelError> {
    toml::to_string_pretty(&ModelFile::from_model(m)).map_err(|e| ModelError::Toml(e.to_string()))
}

/// Parses a model from TOML text.
pub fn model_from_toml(text: &str) -> Result<LcsModel, ModelError> {
    let file: ModelFile = toml::from_str(text).map_err(|e| ModelError::Toml(e.to_string()))?;
    file.into_model()
}

/// Serializes a controller to TOML text.
pub fn gains_to_toml(name: &str, ctrl: &Controller) -> Result<String, ModelError> {
    toml::to_string_pretty(&GainsFile::from_controller(name, ctrl))
        .map_err(|e| ModelError::Toml(e.to_string()))
}

/// Parses a controller from TOML text.
pub fn gains_from_toml(text: &str) -> Result<Controller, ModelError> {
    let file: GainsFile = toml::from_str(text).map_err(|e| ModelError::Toml(e.to_string()))?;
    file.into_controller()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn toy_model(h_zero: bool) -> LcsModel {
        LcsModel {
            name: "toy".into(),
            notes: String::new(),
            a_bar: DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -2.0, -0.3]),
            b: DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            d_bar: DMatrix::from_row_slice(2, 2, &[0.5, -0.5, 1.0, -1.0]),
            a: DVector::from_vec(vec![0.0, 0.25]),
            e_bar: DMatrix::from_row_slice(2, 2, &[1.0, 0.0, -1.0, 0.0]),
            f_bar: DMatrix::from_row_slice(2, 2, &[0.1, 0.0, 0.0, 0.1]),
            h: if h_zero {
                DMatrix::zeros(2, 1)
            } else {
                DMatrix::from_row_slice(2, 1, &[1.0, -1.0])
            },
            c: DVector::from_vec(vec![0.1, 0.1]),
        }
    }

    fn toy_controller() -> Controller {
        Controller {
            k: DMatrix::from_row_slice(1, 2, &[-3.0, -1.0]),
            l_tilde: DMatrix::from_row_slice(1, 1, &[0.7]),
            w: DMatrix::from_row_slice(1, 2, &[1.0, -1.0]),
            kappa: None,
        }
    }

    #[test]
    fn direct_loop_matches_hand_substitution() {
        let model = toy_model(true);
        let ctrl = toy_controller();
        let cl = close_loop_direct(&model, &ctrl).unwrap();
        // A = A_bar + B K, D = D_bar + B L with L = 0.7 * [1, -1].
        assert_abs_diff_eq!(cl.a[(1, 0)], -2.0 + -3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(cl.a[(1, 1)], -0.3 + -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(cl.d[(1, 0)], 1.0 + 0.7, epsilon = 1e-15);
        assert_abs_diff_eq!(cl.d[(1, 1)], -1.0 - 0.7, epsilon = 1e-15);
        assert_eq!(cl.e, model.e_bar);
        let x = DVector::from_vec(vec![0.2, -0.1]);
        let lam = DVector::from_vec(vec![0.3, 0.0]);
        let u = cl.input(&x, &lam);
        assert_abs_diff_eq!(u[0], -3.0 * 0.2 + -1.0 * -0.1 + 0.7 * 0.3, epsilon = 1e-15);
    }

    #[test]
    fn direct_loop_rejects_feedthrough() {
        let model = toy_model(false);
        assert!(matches!(
            close_loop_direct(&model, &toy_controller()),
            Err(ModelError::AlgebraicLoop)
        ));
    }

    #[test]
    fn filtered_loop_block_structure() {
        let model = toy_model(false);
        let ctrl = toy_controller();
        let kappa = 50.0;
        let cl = close_loop_filtered(&model, &ctrl, kappa).unwrap();
        assert_eq!(cl.n(), 3);
        // Filter row: taudot = kappa (K xp - tau) + kappa L lam.
        assert_abs_diff_eq!(cl.a[(2, 0)], kappa * -3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(cl.a[(2, 2)], -kappa, epsilon = 1e-12);
        assert_abs_diff_eq!(cl.d[(2, 0)], kappa * 0.7, epsilon = 1e-12);
        // Gap sees H in the tau column.
        assert_abs_diff_eq!(cl.e[(0, 2)], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(cl.e[(1, 2)], -1.0, epsilon = 1e-15);
        // Input recovery returns tau.
        let x = DVector::from_vec(vec![0.0, 0.0, 0.42]);
        let lam = DVector::zeros(2);
        assert_abs_diff_eq!(cl.input(&x, &lam)[0], 0.42, epsilon = 1e-15);
    }

    #[test]
    fn raw_l_factors_through_w() {
        let k = DMatrix::from_row_slice(1, 2, &[1.0, 2.0]);
        let w = DMatrix::from_row_slice(1, 2, &[0.0, 1.0]);
        let l = DMatrix::from_row_slice(1, 2, &[0.0, 3.5]);
        let ctrl = Controller::from_raw_l(k.clone(), l, w.clone(), None, 1e-9).unwrap();
        assert_abs_diff_eq!(ctrl.l_tilde[(0, 0)], 3.5, epsilon = 1e-12);

        let bad = DMatrix::from_row_slice(1, 2, &[1.0, 3.5]);
        assert!(matches!(
            Controller::from_raw_l(k, bad, w, None, 1e-9),
            Err(ModelError::LOutsideRowspace { .. })
        ));
    }

    #[test]
    fn model_toml_round_trip_is_exact() {
        let mut model = toy_model(false);
        // Awkward values that expose lossy float printing.
        model.a_bar[(0, 0)] = 0.1 + 0.2;
        model.c[0] = 1.0 / 3.0;
        model.a[1] = -1.2345678901234567e-8;
        let text = model_to_toml(&model).unwrap();
        let back = model_from_toml(&text).unwrap();
        assert_eq!(model, back);
    }

    #[test]
    fn gains_toml_round_trip_is_exact() {
        let mut ctrl = toy_controller();
        ctrl.k[(0, 0)] = -91.77000000000001;
        ctrl.kappa = Some(100.0);
        let text = gains_to_toml("toy", &ctrl).unwrap();
        let back = gains_from_toml(&text).unwrap();
        assert_eq!(ctrl, back);
    }

    #[test]
    fn unknown_fields_rejected() {
        let text = "name = \"x\"\nK = [[1.0]]\nW = [[1.0]]\nL_tilde = [[1.0]]\nbogus = 1\n";
        assert!(gains_from_toml(text).is_err());
    }
}
