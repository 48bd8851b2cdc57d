//! Run configuration, its on-disk form and its content hash.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use wadc_core::control::DesignOptions;
use wadc_core::dynamics::{EventKind, ScenarioEvent};
use wadc_core::estimation::IdentificationConfig;
use wadc_core::grid::NetworkCase;

use crate::error::{CliError, Result};

/// Which simulator stands in for the field when ambient data is generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Plant {
    /// Exact discretization of the linearized stochastic model.
    Linear,
    /// Full network simulation with stochastic load torques.
    Nonlinear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub duration_s: f64,
    /// Load-noise intensity during the scenario run.
    pub sigma: f64,
    pub events: Vec<ScenarioEvent>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            duration_s: 20.0,
            sigma: 0.0,
            events: vec![ScenarioEvent { time_s: 1.0, kind: EventKind::ThreePhaseFault { bus: 10, clearing_s: 0.0833 } }],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Bundled case name or path to a case TOML file.
    pub case: String,
    pub plant: Plant,
    /// Load-noise intensity, the same for every generator.
    pub sigma: f64,
    pub window_s: f64,
    pub rate_hz: f64,
    pub tau_ms: f64,
    pub alpha_pct: f64,
    /// `ΔK1` entry used for VSCs whose gain row is zero.
    pub fallback_perturbation: f64,
    pub target_zeta: f64,
    pub band_hz: (f64, f64),
    pub max_iterations: usize,
    pub seed: u64,
    pub scenario: ScenarioConfig,
    /// Branch removed, unannounced, to exercise re-identification.
    pub outage_branch: Option<usize>,
    /// Output directory. Not part of the hash.
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let id = IdentificationConfig::default();
        let design = DesignOptions::default();
        Self {
            case: "two-area".into(),
            plant: Plant::Linear,
            sigma: 0.05,
            window_s: 300.0,
            rate_hz: 50.0,
            tau_ms: 100.0,
            alpha_pct: 5.0,
            fallback_perturbation: id.fallback_perturbation,
            target_zeta: design.target_zeta,
            band_hz: design.band_hz,
            max_iterations: design.max_iterations,
            seed: 0,
            scenario: ScenarioConfig::default(),
            outage_branch: None,
            out: PathBuf::from("wadc-out"),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 over every field except `out`, as lowercase hex.
    pub fn hash(&self) -> String {
        let mut semantic = self.clone();
        semantic.out = PathBuf::new();
        let bytes = serde_json::to_vec(&semantic).expect("config serializes");
        let digest = Sha256::digest(&bytes);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("sigma", self.sigma >= 0.0),
            ("window-s", self.window_s > 0.0),
            ("rate-hz", self.rate_hz > 0.0),
            ("tau-ms", self.tau_ms > 0.0),
            ("alpha-pct", self.alpha_pct > 0.0),
            ("target-zeta", self.target_zeta > 0.0 && self.target_zeta < 1.0),
            ("band-hz", self.band_hz.0 >= 0.0 && self.band_hz.0 < self.band_hz.1),
            ("max-iterations", self.max_iterations > 0),
            ("scenario.duration_s", self.scenario.duration_s > 0.0),
            ("scenario.sigma", self.scenario.sigma >= 0.0),
        ];
        for (name, ok) in positive {
            if !ok {
                return Err(CliError::Config(format!("{name} is out of range")));
            }
        }
        let lag = self.tau_ms * 1e-3 * self.rate_hz;
        if (lag - lag.round()).abs() > 1e-9 || lag.round() < 1.0 {
            return Err(CliError::Config(format!(
                "tau {} ms is not a whole number of samples at {} Hz",
                self.tau_ms, self.rate_hz
            )));
        }
        Ok(())
    }

    pub fn load_case(&self) -> Result<NetworkCase> {
        match wadc_core::cases::bundled(&self.case) {
            Some(case) => Ok(case?),
            None => Ok(NetworkCase::from_path(Path::new(&self.case))?),
        }
    }

    pub fn identification(&self) -> IdentificationConfig {
        IdentificationConfig {
            tau_s: self.tau_ms * 1e-3,
            window_s: self.window_s,
            alpha_pct: self.alpha_pct,
            fallback_perturbation: self.fallback_perturbation,
            ..Default::default()
        }
    }

    pub fn design(&self) -> DesignOptions {
        DesignOptions {
            target_zeta: self.target_zeta,
            band_hz: self.band_hz,
            max_iterations: self.max_iterations,
            ..Default::default()
        }
    }
}
