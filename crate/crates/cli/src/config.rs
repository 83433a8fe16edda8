//! Fit options shared by several commands and the TOML run configurations.

use std::path::Path;

use clap::{Args, ValueEnum};
use episodic::{FitConfig, HazardFamily, ModelParams, OffspringFamily, Truncation};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::io::read_text;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HazardKind {
    Sinusoidal,
    Bspline,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OffspringKind {
    Exponential,
    Weibull,
}

impl From<OffspringKind> for OffspringFamily {
    fn from(k: OffspringKind) -> Self {
        match k {
            OffspringKind::Exponential => OffspringFamily::Exponential,
            OffspringKind::Weibull => OffspringFamily::Weibull,
        }
    }
}

/// Model family and estimation settings.
#[derive(Clone, Debug, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitOptions {
    /// Sub-window length in days.
    #[arg(long = "s", default_value_t = 7.0)]
    pub s: f64,
    #[arg(long, value_enum, default_value_t = HazardKind::Bspline)]
    pub hazard: HazardKind,
    /// Frequency pairs of the sinusoidal hazard.
    #[arg(long, default_value_t = 1)]
    pub harmonics: usize,
    /// Equally spaced knots of the B-spline hazard, endpoints included.
    #[arg(long, default_value_t = 7)]
    pub knots: usize,
    #[arg(long, value_enum, default_value_t = OffspringKind::Exponential)]
    pub offspring: OffspringKind,
    #[arg(long, default_value_t = 5)]
    pub starts: usize,
    #[arg(long, default_value_t = 500)]
    pub max_iterations: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            s: 7.0,
            hazard: HazardKind::Bspline,
            harmonics: 1,
            knots: 7,
            offspring: OffspringKind::Exponential,
            starts: 5,
            max_iterations: 500,
        }
    }
}

impl FitOptions {
    pub fn fit_config(&self, seed: u64) -> Result<FitConfig> {
        if !(self.s.is_finite() && self.s > 0.0) {
            return Err(CliError::data(format!("--s must be positive, got {}", self.s)));
        }
        if self.starts == 0 {
            return Err(CliError::data("--starts must be at least 1"));
        }
        let hazard = match self.hazard {
            HazardKind::Sinusoidal if self.harmonics == 0 => {
                return Err(CliError::data("--harmonics must be at least 1"));
            }
            HazardKind::Sinusoidal => HazardFamily::Sinusoidal { harmonics: self.harmonics },
            HazardKind::Bspline if self.knots < 5 => {
                return Err(CliError::data(format!("--knots must be at least 5, got {}", self.knots)));
            }
            HazardKind::Bspline => HazardFamily::bspline_with_knots(self.knots),
        };
        Ok(FitConfig {
            sub_window_length: self.s,
            max_iterations: self.max_iterations,
            starts: self.starts,
            seed,
            offspring: self.offspring.into(),
            hazard,
            ..FitConfig::default()
        })
    }
}

/// `episodic simulate` configuration.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(default)]
    pub truncation: Truncation,
    pub seed: Option<u64>,
    pub params: ModelParams,
}

fn default_horizon() -> f64 {
    100.0
}

fn default_replicates() -> usize {
    20
}

/// `episodic benchmark` configuration.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkConfig {
    #[serde(rename = "T", default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub truncation: Truncation,
    pub params: ModelParams,
    #[serde(default)]
    pub fit: FitOptions,
    #[serde(default)]
    pub direct: DirectOptions,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DirectOptions {
    pub enabled: bool,
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for DirectOptions {
    fn default() -> Self {
        DirectOptions {
            enabled: true,
            max_iterations: 2000,
            tolerance: 1e-8,
        }
    }
}

/// Parse a TOML file; syntax and type errors carry line and column.
pub fn load_toml<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = read_text(path)?;
    toml::from_str(&text).map_err(|e| CliError::data(format!("{}: {}", path.display(), e.to_string().trim_end())))
}
