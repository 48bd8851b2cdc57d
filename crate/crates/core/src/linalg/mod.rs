//! Dense real-matrix kernels used throughout the crate.
//!
//! Everything here operates on [`RealMatrix`] (a `nalgebra::DMatrix<f64>`) and
//! is a pure function of its inputs.

mod care;
mod expm;
mod genperm;
mod logm;
mod lyapunov;
pub mod rows;
mod schur;

pub use care::{care_residual, solve_care, solve_care_with};
pub use expm::matrix_exp;
pub use genperm::genperm_pinv;
pub use logm::matrix_log_principal;
pub use lyapunov::{lyapunov_residual, solve_lyapunov};
pub use schur::{damping_ratio, eigenvalues, real_schur, real_schur_by_key, SchurBlock, SchurForm, SchurOrdering};

use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

/// Dense real matrix, the carrier type for every state-space quantity.
pub type RealMatrix = DMatrix<f64>;

/// Dense complex matrix (admittances, complex Schur factors).
pub type ComplexMatrix = DMatrix<Complex64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("expected a square matrix, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension mismatch in {op}: {detail}")]
    DimensionMismatch { op: &'static str, detail: String },
    #[error("matrix contains non-finite entries")]
    NonFinite,
    #[error("matrix is singular ({context})")]
    Singular { context: &'static str },
    #[error("eigenvalue {re:.4e}{im:+.4e}i lies on the closed negative real axis; principal logarithm undefined")]
    NegativeRealEigenvalue { re: f64, im: f64 },
    #[error("Schur iteration did not converge")]
    SchurNoConvergence,
    #[error("Schur block swap rejected at position {position} (eigenvalues too close)")]
    SwapRejected { position: usize },
    #[error("matrix is not Hurwitz (spectral abscissa {abscissa:.4e})")]
    NotHurwitz { abscissa: f64 },
    #[error("no stabilizing Riccati solution: {reason}")]
    NoStabilizingSolution { reason: String },
    #[error("input is not a generalized permutation matrix: {reason}")]
    NotGeneralizedPermutation { reason: String },
    #[error("{what} is not symmetric (asymmetry {asym:.3e})")]
    NotSymmetric { what: &'static str, asym: f64 },
    #[error("{what} is not positive definite")]
    NotPositiveDefinite { what: &'static str },
}

pub type Result<T, E = LinalgError> = std::result::Result<T, E>;

/// Default numerical tolerances; callers that need different thresholds pass
/// their own.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub reconstruction: f64,
    pub residual: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { reconstruction: 1e-9, residual: 1e-8 }
    }
}

pub(crate) fn ensure_square(a: &RealMatrix) -> Result<usize> {
    if a.nrows() != a.ncols() {
        return Err(LinalgError::NotSquare { rows: a.nrows(), cols: a.ncols() });
    }
    Ok(a.nrows())
}

pub(crate) fn ensure_finite(a: &RealMatrix) -> Result<()> {
    if a.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(LinalgError::NonFinite)
    }
}

/// Largest real part over the spectrum.
pub fn spectral_abscissa(a: &RealMatrix) -> Result<f64> {
    Ok(eigenvalues(a)?.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max))
}

pub fn is_hurwitz(a: &RealMatrix) -> Result<bool> {
    Ok(spectral_abscissa(a)? < 0.0)
}

/// `‖A − B‖_F / ‖B‖_F`, falling back to the absolute norm when `B` is zero.
pub fn relative_frobenius_error(estimate: &RealMatrix, truth: &RealMatrix) -> f64 {
    let diff = (estimate - truth).norm();
    let scale = truth.norm();
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

pub(crate) fn to_complex(a: &RealMatrix) -> ComplexMatrix {
    a.map(|x| Complex64::new(x, 0.0))
}

/// 1-norm (max column sum).
pub(crate) fn norm1(a: &RealMatrix) -> f64 {
    a.column_iter().map(|c| c.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// `(A + Aᵀ)/2`.
pub fn symmetrize(a: &RealMatrix) -> RealMatrix {
    (a + a.transpose()) * 0.5
}
