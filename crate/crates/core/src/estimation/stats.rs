use serde::{Deserialize, Serialize};

use super::{EstimationError, Result};
use crate::dynamics::PmuWindow;
use crate::linalg::{eigenvalues, matrix_log_principal, symmetrize, RealMatrix};

/// Zero-lag covariance and τ-lag correlation of one PMU window, both with
/// `1/N` normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleStatistics {
    #[serde(with = "crate::linalg::rows")]
    pub c_hat: RealMatrix,
    #[serde(with = "crate::linalg::rows")]
    pub r_hat: RealMatrix,
    pub tau_s: f64,
    pub lag: usize,
    pub n: usize,
    pub rate_hz: f64,
}

/// Integer lag for `τ` at `rate_hz`, or an error if `τ·rate` is not whole.
pub fn lag_count(tau_s: f64, rate_hz: f64) -> Result<usize> {
    let raw = tau_s * rate_hz;
    let lag = raw.round();
    if !(tau_s >= 0.0) || !(rate_hz > 0.0) || (raw - lag).abs() > 1e-9 * raw.max(1.0) {
        return Err(EstimationError::LagNotInteger { tau_s, rate_hz });
    }
    Ok(lag as usize)
}

/// `Ĉ = (1/N) Σ x_k x_kᵀ` (symmetrized) and
/// `R̂(τ) = (1/N) Σ_{k<N−l} x_{k+l} x_kᵀ` over mean-removed samples.
pub fn sample_stats(w: &PmuWindow, tau_s: f64) -> Result<SampleStatistics> {
    let lag = lag_count(tau_s, w.rate_hz)?;
    let n = w.len();
    if n <= lag || n < 2 {
        return Err(EstimationError::WindowTooShort { samples: n, lag });
    }
    let mut x = w.samples.clone();
    for mut col in x.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
    let inv_n = 1.0 / n as f64;
    let c_hat = symmetrize(&(x.transpose() * &x * inv_n));
    let head = x.rows(0, n - lag);
    let tail = x.rows(lag, n - lag);
    let r_hat = tail.transpose() * head * inv_n;
    Ok(SampleStatistics { c_hat, r_hat, tau_s, lag, n, rate_hz: w.rate_hz })
}

/// Side information from one `A_c` estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcDiagnostics {
    /// 2-norm condition number of `Ĉ` after flooring.
    pub covariance_condition: f64,
    /// Eigenvalues of `Ĉ` raised to the floor.
    pub floored_eigenvalues: usize,
    /// `π − max |arg λ(R̂Ĉ⁻¹)|`; small values mean τ is close to the
    /// fastest resolvable oscillation.
    pub log_branch_margin: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcEstimate {
    pub ac: RealMatrix,
    pub diagnostics: AcDiagnostics,
}

/// `Ĉ` with eigenvalues below `1e-10·trace/n` raised to that floor. A
/// covariance with no eigenvalue below the floor is returned unchanged.
pub fn floor_covariance(c: &RealMatrix) -> Result<(RealMatrix, usize, f64)> {
    let n = c.nrows();
    let trace = c.trace();
    if !(trace > 0.0) || !trace.is_finite() {
        return Err(EstimationError::InsufficientExcitation);
    }
    let floor = 1e-10 * trace / n as f64;
    let eig = c.clone().symmetric_eigen();
    let count = eig.eigenvalues.iter().filter(|&&l| l < floor).count();
    let clamped = eig.eigenvalues.map(|l| l.max(floor));
    let cond = clamped.max() / clamped.min();
    if count == 0 {
        return Ok((c.clone(), 0, cond));
    }
    let rebuilt = &eig.eigenvectors * RealMatrix::from_diagonal(&clamped) * eig.eigenvectors.transpose();
    Ok((symmetrize(&rebuilt), count, cond))
}

/// `A_c = (1/τ)·log(R̂ Ĉ⁻¹)`.
pub fn estimate_ac(s: &SampleStatistics) -> Result<AcEstimate> {
    if !(s.tau_s > 0.0) {
        return Err(EstimationError::LagNotInteger { tau_s: s.tau_s, rate_hz: s.rate_hz });
    }
    let (c, floored, cond) = floor_covariance(&s.c_hat)?;
    // R Ĉ⁻¹ = (Ĉ⁻¹ Rᵀ)ᵀ since Ĉ is symmetric.
    let chol = c.clone().cholesky().ok_or(EstimationError::InsufficientExcitation)?;
    let phi = chol.solve(&s.r_hat.transpose()).transpose();
    let margin = eigenvalues(&phi)?
        .iter()
        .map(|l| std::f64::consts::PI - l.arg().abs())
        .fold(f64::INFINITY, f64::min);
    let log = matrix_log_principal(&phi).map_err(|e| EstimationError::LogBranch(e.to_string()))?;
    Ok(AcEstimate {
        ac: log / s.tau_s,
        diagnostics: AcDiagnostics { covariance_condition: cond, floored_eigenvalues: floored, log_branch_margin: margin },
    })
}
