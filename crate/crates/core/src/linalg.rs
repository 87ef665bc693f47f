//! Small dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

pub const SYMMETRY_TOL: f64 = 1e-12;

pub fn max_asymmetry(m: &Matrix) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

/// Cholesky factor of a symmetric positive-definite matrix, with the
/// symmetry check applied first.
pub fn cholesky_spd(m: &Matrix) -> Result<Cholesky<f64, Dyn>> {
    if !m.is_square() {
        return Err(Error::NotPositiveDefinite(format!(
            "matrix is {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let asym = max_asymmetry(m);
    if asym > SYMMETRY_TOL {
        return Err(Error::NotPositiveDefinite(format!(
            "asymmetry {asym:e} exceeds {SYMMETRY_TOL:e}"
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotPositiveDefinite("non-finite entry".into()));
    }
    let chol =
        Cholesky::new(symmetrize(m)).ok_or_else(|| Error::NotPositiveDefinite("non-positive Cholesky pivot".into()))?;
    if chol.l_dirty().diagonal().iter().any(|&p| p <= 0.0) {
        return Err(Error::NotPositiveDefinite("non-positive Cholesky pivot".into()));
    }
    Ok(chol)
}

pub fn log_det_chol(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>()
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn sym_eigenvalues(m: &Matrix) -> Vec<f64> {
    let mut ev: Vec<f64> = symmetrize(m).symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn lambda_min(m: &Matrix) -> f64 {
    sym_eigenvalues(m)[0]
}

pub fn lambda_max(m: &Matrix) -> f64 {
    *sym_eigenvalues(m).last().expect("non-empty matrix")
}

/// Operator 2-norm (largest singular value).
pub fn spectral_norm(m: &Matrix) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    m.singular_values().max()
}

pub fn vector_from(values: &[f64]) -> Vector {
    DVector::from_column_slice(values)
}

pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<Matrix> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != m) {
        return Err(Error::InvalidParameter("ragged matrix rows".into()));
    }
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

pub fn matrix_to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}
