//! Modal analysis and modal-LQR design of the VSC damping gain.

mod mlqr;
mod modes;

pub use mlqr::{
    deploy_gain, design_wadc, evaluate_gain, mlqr_gain, modal_transform, modal_transform_targeting, untargeted_shift, Deployment, GainEvaluation,
    DesignOptions, MlqrDesign, ModalTransform, ModeSelection,
};
pub use modes::{eigenvector, mac, modes, spectrum_shift, track_modes, Mode, ModeClass, ModeReport};

use thiserror::Error;

use crate::linalg::LinalgError;

#[derive(Debug, Error)]
pub enum ControlError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("Riccati solve failed, a weighted mode is not controllable from the VSCs: {0}")]
    Uncontrollable(String),
    #[error("target damping not reached within the iteration cap; best damping per targeted mode: {}", fmt_achieved(.achieved))]
    TargetNotReached { achieved: Vec<(f64, f64)>, design: Box<MlqrDesign> },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

fn fmt_achieved(a: &[(f64, f64)]) -> String {
    a.iter().map(|(f, z)| format!("{f:.3} Hz at {:.2}%", 100.0 * z)).collect::<Vec<_>>().join(", ")
}

pub type Result<T, E = ControlError> = std::result::Result<T, E>;
