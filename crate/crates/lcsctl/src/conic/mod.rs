//! Conic optimization: interior-point SDP solver and rank helpers.
//!
//! The solver core ([`solve_cone_program`]) is a homogeneous self-dual
//! interior-point method over products of orthant and PSD cones with
//! Nesterov-Todd scaling. Two problem representations feed it, each with a
//! KKT reduction sized to its structure ([`DenseProgram`], [`StandardProgram`]).
//! [`SdProblem`] is the LMI-form entry point used by certification;
//! [`StandardProgram`] is used directly by the sum-of-squares layer.

mod cone;
mod data;
mod hsde;
mod planted;
mod sdp;

pub use cone::{smat, svec, svec_index, ConeLayout, Scaling, SQRT2};
pub use data::{DenseProgram, SparseRow, StandardProgram};
pub use hsde::{solve_cone_program, ConeProgram, ConeSettings, ConeSolution, ConeStatus, ConicError};
pub use planted::{planted_instance, PlantedInstance};
pub use sdp::{
    lmi_eigen_margins, solve_sdp, solve_sdp_margin, solve_sdp_margin_scaled, AffineLmi, SdProblem,
    SdpSettings, SdpSolution, SdpStatus,
};

use nalgebra::DMatrix;

/// Default rank tolerance factor for [`nullspace_basis`]: multiplied by the
/// larger matrix dimension, then by the largest singular value.
pub const NULLSPACE_RANK_TOL: f64 = 1e-10;

/// Orthonormal basis (columns) of the nullspace of `m`.
///
/// Singular directions are those with singular value at most
/// `rank_tol * max_dim * sigma_max`; `rank_tol` defaults to
/// [`NULLSPACE_RANK_TOL`]. An empty matrix (zero rows) yields the identity.
pub fn nullspace_basis(m: &DMatrix<f64>, rank_tol: Option<f64>) -> DMatrix<f64> {
    let ncols = m.ncols();
    if m.nrows() == 0 || m.iter().all(|&v| v == 0.0) {
        return DMatrix::identity(ncols, ncols);
    }
    // Pad wide matrices square so the thin SVD carries a full V factor.
    let work = if m.nrows() < ncols {
        let mut w = DMatrix::zeros(ncols, ncols);
        w.view_mut((0, 0), (m.nrows(), ncols)).copy_from(m);
        w
    } else {
        m.clone()
    };
    let svd = work.svd(false, true);
    let vt = svd.v_t.as_ref().expect("svd v_t");
    let smax = svd.singular_values.max();
    let tol = rank_tol.unwrap_or(NULLSPACE_RANK_TOL) * m.nrows().max(ncols) as f64 * smax;
    let mut cols: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] <= tol)
        .collect();
    // Thin SVD of a tall matrix still spans all of R^ncols in V.
    cols.sort_unstable();
    let mut out = DMatrix::zeros(ncols, cols.len());
    for (k, &i) in cols.iter().enumerate() {
        out.set_column(k, &vt.row(i).transpose());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::DVector;

    #[test]
    fn nullspace_of_wide_matrix() {
        // Row [1, 1, -1]: nullspace has dimension 2, orthogonal to the row.
        let m = DMatrix::from_row_slice(1, 3, &[1.0, 1.0, -1.0]);
        let n = nullspace_basis(&m, None);
        assert_eq!(n.shape(), (3, 2));
        let prod = &m * &n;
        assert_abs_diff_eq!(prod.amax(), 0.0, epsilon = 1e-12);
        // Orthonormal columns.
        let gram = n.transpose() * &n;
        assert_abs_diff_eq!((gram - DMatrix::identity(2, 2)).amax(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn nullspace_of_full_rank_matrix_is_empty() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 2.0]);
        let n = nullspace_basis(&m, None);
        assert_eq!(n.ncols(), 0);
    }

    #[test]
    fn nullspace_of_zero_matrix_is_identity() {
        let m = DMatrix::zeros(2, 3);
        let n = nullspace_basis(&m, None);
        assert_eq!(n, DMatrix::identity(3, 3));
    }

    #[test]
    fn nullspace_rank_tol_scales_with_norm() {
        // A nearly rank-1 matrix: second singular value 1e-14 relative.
        let u = DVector::from_vec(vec![1.0, 2.0]).normalize();
        let v = DVector::from_vec(vec![3.0, -1.0]).normalize();
        let m = 5.0 * &u * v.transpose() + 5e-14 * DMatrix::identity(2, 2);
        let n = nullspace_basis(&m, None);
        assert_eq!(n.ncols(), 1);
        assert_abs_diff_eq!((&m * &n).amax() / 5.0, 0.0, epsilon = 1e-12);
    }
}
