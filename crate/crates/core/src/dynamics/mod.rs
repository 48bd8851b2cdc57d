//! Linear stochastic state-space model, OU and nonlinear simulation, PMU
//! emulation.

mod nonlinear;
mod ou;
mod pmu;
mod state_space;

pub use nonlinear::{simulate_nonlinear, EventKind, NonlinearOptions, NonlinearTrajectory, ScenarioEvent, FAULT_CONDUCTANCE};
pub use ou::{discretize_ou, simulate_linear_ou, OuDiscretization, OuStart};
pub use pmu::{
    emulate_pmu, read_pmu_csv, read_trajectory_csv, write_pmu_csv, write_trajectory_csv, PmuWindow, StateTrajectory,
};
pub use state_space::{assemble_state_space, closed_loop, Linearization, MachineData, StateSpaceModel};

use thiserror::Error;

use crate::grid::GridError;
use crate::linalg::LinalgError;

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("closed loop is not Hurwitz; no stationary law to start from")]
    NotStationary,
    #[error("trajectory step {dt} s cannot be decimated to {rate_hz} Hz by an integer factor")]
    RateMismatch { dt: f64, rate_hz: f64 },
    #[error("non-uniform sampling at row {row}")]
    NonUniformSampling { row: usize },
    #[error("algebraic network solve diverged at t = {time:.4} s")]
    AlgebraicDivergence { time: f64 },
    #[error("voltage collapse at VSC bus {bus} at t = {time:.4} s (|V| = {voltage:.4})")]
    VoltageCollapse { time: f64, bus: usize, voltage: f64 },
    #[error("event {index}: {reason}")]
    Event { index: usize, reason: String },
    #[error("i/o: {0}")]
    Io(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub type Result<T, E = DynamicsError> = std::result::Result<T, E>;
