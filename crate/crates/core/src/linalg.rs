//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

pub fn spectral_radius(m: &Matrix) -> f64 {
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

pub fn is_symmetric(m: &Matrix, tol: f64) -> bool {
    m.is_square() && (m - m.transpose()).amax() <= tol
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_sym_eigenvalue(m: &Matrix) -> f64 {
    sym_part(m)
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Largest eigenvalue of the symmetric part of `m`.
pub fn max_sym_eigenvalue(m: &Matrix) -> f64 {
    sym_part(m)
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Symmetric part `(m + mᵀ)/2`.
pub fn sym_part(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

/// Row-major vectorization: rows of `m` are concatenated.
pub fn vec_rows(m: &Matrix) -> Vector {
    Vector::from_iterator(
        m.nrows() * m.ncols(),
        (0..m.nrows()).flat_map(|i| (0..m.ncols()).map(move |j| m[(i, j)])),
    )
}

/// Inverse of [`vec_rows`].
pub fn unvec_rows(v: &Vector, nrows: usize, ncols: usize) -> Matrix {
    Matrix::from_row_slice(nrows, ncols, v.as_slice())
}

/// Solves the discrete Lyapunov equation `X = M X Mᵀ + W` through the
/// Kronecker form `(I - M⊗M) vec(X) = vec(W)`. Intended for small `n`.
pub fn solve_discrete_lyapunov(m: &Matrix, w: &Matrix) -> Result<Matrix> {
    let n = m.nrows();
    let kron = m.kronecker(m);
    let lhs = Matrix::identity(n * n, n * n) - kron;
    let rhs = vec_rows(w);
    let sol = lhs
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Degenerate("singular Lyapunov system".into()))?;
    let x = unvec_rows(&sol, n, n);
    Ok(sym_part(&x))
}

/// Solves `a x = b` with LU; singular systems are reported as degenerate.
pub fn solve(a: &Matrix, b: &Vector, what: &str) -> Result<Vector> {
    a.clone()
        .lu()
        .solve(b)
        .ok_or_else(|| Error::Degenerate(format!("singular matrix in {what}")))
}
