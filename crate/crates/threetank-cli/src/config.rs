//! Scenario configuration: TOML schema, validation, and the mapping onto
//! the simulation and supervision building blocks.

use std::path::Path;

use serde::{Deserialize, Serialize};

use threetank::control::TrajectorySpec;
use threetank::differentiator::DifferentiatorConfig;
use threetank::fault::{FaultSpec, NoiseConfig};
use threetank::fdi::ResidueEngine;
use threetank::plant::PlantParams;

use crate::commands::CliError;

/// Which flat-output residue set a scenario evaluates.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum,
)]
#[serde(rename_all = "lowercase")]
pub enum FlatChoice {
    Z1,
    Z2,
    #[default]
    Both,
}

/// Windows and evaluation offsets for the four differentiator profiles of
/// the residue engine, in seconds. Defaults reproduce the standard engine.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileSettings {
    /// Window for the level residues (R_S2 of Z1, R_S1 of Z2).
    pub level_window: f64,
    /// Mid-window evaluation offset for the level residues.
    pub level_offset: f64,
    /// Endpoint window for the input residues (R_A1 of Z1, R_A2 of Z2).
    pub input_window: f64,
    /// Endpoint window for the acceleration-bearing R_A2 of Z1.
    pub accel_window: f64,
    /// Window for the acceleration-bearing R_A1 of Z2.
    pub slow_accel_window: f64,
    /// Mid-window evaluation offset for R_A1 of Z2.
    pub slow_accel_offset: f64,
}

impl Default for ProfileSettings {
    fn default() -> Self {
        Self {
            level_window: 300.0,
            level_offset: 150.0,
            input_window: 60.0,
            accel_window: 300.0,
            slow_accel_window: 450.0,
            slow_accel_offset: 150.0,
        }
    }
}

impl ProfileSettings {
    /// Builds the residue engine these settings describe.
    pub fn engine(&self) -> Result<ResidueEngine, CliError> {
        let profile = |window_t: f64, eval_offset: f64| DifferentiatorConfig {
            window_t,
            sample_ts: 1.0,
            taylor_order: 2,
            extra_nu: 0,
            max_derivative: 2,
            eval_offset,
        };
        ResidueEngine::with_profiles([
            profile(self.level_window, self.level_offset),
            profile(self.input_window, 0.0),
            profile(self.accel_window, 0.0),
            profile(self.slow_accel_window, self.slow_accel_offset),
        ])
        .map_err(|e| CliError::Config(format!("differentiator settings: {e}")))
    }
}

/// One simulation scenario: plant, trajectory, noise, optional fault, and
/// the residue channels to evaluate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Scenario name, used to derive output file names.
    pub name: String,
    /// Simulated time span [s]; samples run from t = 0 to t = duration.
    pub duration: f64,
    /// Noise generator seed.
    #[serde(default)]
    pub seed: u64,
    /// Residue channels to evaluate and export.
    #[serde(default)]
    pub flat_output: FlatChoice,
    /// Output directory; overridden by --out and the environment variable.
    #[serde(default)]
    pub out_dir: Option<String>,
    /// Path to a calibrated threshold file; without it alarm flags stay low.
    #[serde(default)]
    pub thresholds: Option<String>,
    #[serde(default)]
    pub plant: PlantParams,
    pub trajectory: TrajectorySpec,
    #[serde(default)]
    pub noise: NoiseConfig,
    /// At most one fault per scenario.
    #[serde(default, rename = "fault")]
    pub faults: Vec<FaultSpec>,
    #[serde(default)]
    pub differentiator: Option<ProfileSettings>,
}

impl ScenarioConfig {
    /// Loads and validates a scenario from a TOML file.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let config: ScenarioConfig = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("cannot parse {}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    /// Checks the single-fault rule, trajectory feasibility, and parameter
    /// sanity.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) || self.name.contains("..") {
            return Err(CliError::Config(format!(
                "scenario name {:?} is empty or not usable in file names",
                self.name
            )));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(CliError::Config(format!(
                "duration must be a positive time span, got {}",
                self.duration
            )));
        }
        self.plant
            .validate()
            .map_err(|e| CliError::Config(format!("plant: {e}")))?;
        self.trajectory
            .validate(&self.plant)
            .map_err(|e| CliError::Config(format!("trajectory: {e}")))?;
        for sigma in [
            self.noise.sigma_y1,
            self.noise.sigma_y2,
            self.noise.sigma_y3,
        ] {
            if !(sigma >= 0.0 && sigma.is_finite()) {
                return Err(CliError::Config(format!(
                    "noise levels must be non-negative, got {sigma}"
                )));
            }
        }
        if self.faults.len() > 1 {
            return Err(CliError::Config(format!(
                "at most one fault per scenario, got {}",
                self.faults.len()
            )));
        }
        if let Some(fault) = self.faults.first() {
            fault
                .validate()
                .map_err(|e| CliError::Config(format!("fault: {e}")))?;
        }
        if let Some(settings) = &self.differentiator {
            settings.engine()?;
        }
        Ok(())
    }

    /// The single configured fault, if any.
    pub fn fault(&self) -> Option<&FaultSpec> {
        self.faults.first()
    }

    /// Builds the residue engine for this scenario.
    pub fn engine(&self) -> Result<ResidueEngine, CliError> {
        self.differentiator.unwrap_or_default().engine()
    }
}
