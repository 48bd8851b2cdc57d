use thiserror::Error;
use wadc_core::control::ControlError;
use wadc_core::dynamics::DynamicsError;
use wadc_core::estimation::EstimationError;
use wadc_core::grid::GridError;
use wadc_core::linalg::LinalgError;

/// Failure of a subcommand, grouped by exit status.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{stage}: {message}")]
    Numerical { stage: &'static str, message: String },
    #[error("{stage}: {message}")]
    Protocol { stage: &'static str, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical { .. } => 3,
            CliError::Protocol { .. } => 4,
        }
    }

    pub fn numerical(stage: &'static str, e: impl std::fmt::Display) -> Self {
        CliError::Numerical { stage, message: e.to_string() }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

impl From<GridError> for CliError {
    fn from(e: GridError) -> Self {
        match e {
            GridError::Parse(_) | GridError::Invalid(_) | GridError::IslandWithoutGenerator { .. } => {
                CliError::Config(format!("case: {e}"))
            }
            other => CliError::numerical("grid", other),
        }
    }
}

/// Attach a stage label to lower-level errors.
pub trait Staged<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> Staged<T> for std::result::Result<T, EstimationError> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| match e {
            EstimationError::Protocol(_)
            | EstimationError::NotStationary { .. }
            | EstimationError::ZeroGainRow { .. }
            | EstimationError::DegeneratePerturbation => CliError::Protocol { stage, message: e.to_string() },
            EstimationError::LagNotInteger { .. } | EstimationError::WindowTooShort { .. } => {
                CliError::Config(format!("{stage}: {e}"))
            }
            EstimationError::Dynamics(d) => dynamics_error(stage, d),
            other => CliError::numerical(stage, other),
        })
    }
}

fn dynamics_error(stage: &'static str, e: DynamicsError) -> CliError {
    match e {
        DynamicsError::Io(_) | DynamicsError::NonUniformSampling { .. } | DynamicsError::Event { .. } => {
            CliError::Config(format!("{stage}: {e}"))
        }
        DynamicsError::Grid(g) => match CliError::from(g) {
            CliError::Numerical { message, .. } => CliError::Numerical { stage, message },
            other => other,
        },
        other => CliError::numerical(stage, other),
    }
}

impl<T> Staged<T> for std::result::Result<T, DynamicsError> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| dynamics_error(stage, e))
    }
}

impl<T> Staged<T> for std::result::Result<T, ControlError> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| CliError::numerical(stage, e))
    }
}

impl<T> Staged<T> for std::result::Result<T, LinalgError> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| CliError::numerical(stage, e))
    }
}

impl<T> Staged<T> for std::result::Result<T, GridError> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| match CliError::from(e) {
            CliError::Numerical { message, .. } => CliError::Numerical { stage, message },
            other => other,
        })
    }
}

impl<T> Staged<T> for std::io::Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| CliError::Config(format!("{stage}: {e}")))
    }
}
