//! Small dense complex-matrix helpers built on nalgebra.
//!
//! Everything here operates on `DMatrix<Complex64>` at the tiny dimensions
//! this crate needs (at most 64x64 for attack-channel validation). Hermitian
//! spectra are computed through the real embedding
//! `H -> [[Re H, -Im H], [Im H, Re H]]`, which is symmetric whenever `H` is
//! Hermitian and carries every eigenvalue of `H` twice.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

/// Zero matrix of the given square dimension.
pub fn zeros(dim: usize) -> DMatrix<C64> {
    DMatrix::from_element(dim, dim, C64::new(0.0, 0.0))
}

/// Identity matrix of the given dimension.
pub fn identity(dim: usize) -> DMatrix<C64> {
    DMatrix::from_diagonal_element(dim, dim, C64::new(1.0, 0.0))
}

/// Largest entry magnitude of a matrix.
pub fn max_abs_entry(m: &DMatrix<C64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Real symmetric embedding of a Hermitian matrix.
fn real_embedding(h: &DMatrix<C64>) -> DMatrix<f64> {
    let d = h.nrows();
    let mut out = DMatrix::zeros(2 * d, 2 * d);
    for r in 0..d {
        for c in 0..d {
            let z = h[(r, c)];
            out[(r, c)] = z.re;
            out[(r, c + d)] = -z.im;
            out[(r + d, c)] = z.im;
            out[(r + d, c + d)] = z.re;
        }
    }
    out
}

/// Eigenvalues of a Hermitian matrix, each returned twice (embedding
/// multiplicity). Order is unspecified.
pub fn hermitian_eigenvalues_doubled(h: &DMatrix<C64>) -> Vec<f64> {
    real_embedding(h).symmetric_eigen().eigenvalues.iter().copied().collect()
}

/// Trace norm (sum of singular values) of a Hermitian matrix.
pub fn trace_norm_hermitian(h: &DMatrix<C64>) -> f64 {
    // Each eigenvalue of `h` appears twice in the embedding spectrum.
    hermitian_eigenvalues_doubled(h).iter().map(|l| l.abs()).sum::<f64>() / 2.0
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_eigenvalue_hermitian(h: &DMatrix<C64>) -> f64 {
    hermitian_eigenvalues_doubled(h)
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Hermiticity defect: largest entry magnitude of `m - m†`.
pub fn hermiticity_defect(m: &DMatrix<C64>) -> f64 {
    max_abs_entry(&(m - m.adjoint()))
}
