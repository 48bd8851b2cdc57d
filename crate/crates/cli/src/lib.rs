//! Batch front end for the ambient identification and damping design
//! pipeline: configuration, stage orchestration and on-disk artifacts.

pub mod artifacts;
pub mod config;
pub mod error;
pub mod stages;

pub use config::{Plant, RunConfig, ScenarioConfig};
pub use error::{CliError, Result};
pub use stages::{PipelineReport, Session, Timings};
