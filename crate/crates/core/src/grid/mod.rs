//! Network description, Kron reduction, injection equations and their
//! linearization about the operating point.

mod case;
mod jacobian;
mod network;
mod reduced;

pub use case::{Branch, Bus, BusKind, GeneratorParams, Load, NetworkCase, VscTerminal};
pub use jacobian::{eliminate_vsc, jacobian_blocks, jacobian_blocks_at, JacobianBlocks, ReducedDynamicsComponents};
pub use network::{build_admittance, kron_reduce, network_admittance, AugmentedAdmittance};
pub use reduced::{
    bus_powers, injections, power_partials, solve_equilibrium, solve_operating_point, AdmittanceBlocks, Dispatch,
    Equilibrium, Injections, PowerPartials, ReducedModel, ReducedNetwork,
};

use thiserror::Error;

use crate::linalg::LinalgError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("case parse error: {0}")]
    Parse(String),
    #[error("invalid case: {0}")]
    Invalid(String),
    #[error("island of buses {buses:?} contains no generator")]
    IslandWithoutGenerator { buses: Vec<usize> },
    #[error("eliminated admittance block is singular")]
    SingularReduction,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("equilibrium Newton solve diverged after {iterations} iterations (residual {residual:.3e})")]
    EquilibriumDiverged { iterations: usize, residual: f64 },
    #[error("power-flow Jacobian at the solution is ill-conditioned (condition {condition:.3e})")]
    IllConditioned { condition: f64 },
    #[error("VSC elimination failed: {which} is singular")]
    SingularElimination { which: &'static str },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub type Result<T, E = GridError> = std::result::Result<T, E>;
