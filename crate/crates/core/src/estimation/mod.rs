//! Closed-loop state-matrix estimation from ambient PMU windows and the
//! gain-perturbation protocol that splits it into `A` and `B`.

mod protocol;
mod separation;
mod stats;

pub use protocol::{
    accuracy, check_stationarity, dominant_entries, run_identification, window_seed, AccuracyReport, EntryError,
    Identification, IdentificationConfig, LinearOuSource, NonlinearSource, RecordedSource, WindowSource,
};
pub use separation::{make_perturbation, separate_ab, EstimatedModel, EstimationDiagnostics, PerturbationPlan, Provenance};
pub use stats::{estimate_ac, floor_covariance, lag_count, sample_stats, AcDiagnostics, AcEstimate, SampleStatistics};

use thiserror::Error;

use crate::dynamics::DynamicsError;
use crate::linalg::LinalgError;

#[derive(Debug, Error)]
pub enum EstimationError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("lag τ = {tau_s} s is not a positive whole number of samples at {rate_hz} Hz")]
    LagNotInteger { tau_s: f64, rate_hz: f64 },
    #[error("window of {samples} samples is too short for a lag of {lag}")]
    WindowTooShort { samples: usize, lag: usize },
    #[error("sample covariance is singular; the window carries insufficient excitation")]
    InsufficientExcitation,
    #[error("matrix logarithm failed ({0}); τ may be too large for the fastest mode")]
    LogBranch(String),
    #[error("VSC row {row} of K1 is zero and no fallback perturbation is configured")]
    ZeroGainRow { row: usize },
    #[error("perturbation is zero; the two windows cannot separate A from B")]
    DegeneratePerturbation,
    #[error("window {window} is not stationary: ω channel {channel} half-means differ by {shift:.3e} (limit {threshold:.3e})")]
    NotStationary { window: usize, channel: usize, shift: f64, threshold: f64 },
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub type Result<T, E = EstimationError> = std::result::Result<T, E>;
