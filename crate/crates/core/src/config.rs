//! Simulation configuration, read from TOML.
//!
//! The shipped defaults are illustrative values, not estimates of any real
//! population; every field can be overridden in the config file.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diagnostics::{SummaryOptions, Thresholds, VarianceKind};
use crate::error::{Error, Result};
use crate::estimator::OptimizerSettings;
use crate::model::{
    ModelShape, PopulationParams, CONSTRUCTS, INTERCEPT_B, INTERCEPT_H, SLOPE_B, SLOPE_H,
};
use crate::orchestration::{ConditionSpec, DataCondition};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

/// The default configuration file, shipped with the crate.
pub const DEFAULT_CONFIG_TOML: &str = include_str!("../configs/default.toml");

/// Replication-count presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    Ci,
    Local,
    Full,
}

impl Profile {
    pub fn replications(self) -> usize {
        match self {
            Self::Ci => 200,
            Self::Local => 1000,
            Self::Full => 5000,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Ci => "ci",
            Self::Local => "local",
            Self::Full => "full",
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ci" => Ok(Self::Ci),
            "local" => Ok(Self::Local),
            "full" => Ok(Self::Full),
            other => Err(Error::Config(format!(
                "unknown profile {other:?} (expected ci, local or full)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub time_scores: Vec<f64>,
    pub indicators_per_wave: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            time_scores: vec![0.0, 1.0, 2.0, 3.0, 4.0],
            indicators_per_wave: 3,
        }
    }
}

/// Population values shared by both constructs. The slope-slope
/// correlation comes from the design grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PopulationConfig {
    pub growth_means: [f64; 4],
    pub intercept_variance: f64,
    pub slope_variance: f64,
    pub intercept_slope_covariance: f64,
    /// Covariance between the two constructs' intercepts.
    pub intercept_covariance: f64,
    pub loadings: Vec<f64>,
    pub measurement_intercepts: Vec<f64>,
    pub disturbance_variance: f64,
    pub residual_variance: f64,
}

impl Default for PopulationConfig {
    fn default() -> Self {
        Self {
            growth_means: [0.0, 0.5, 0.0, 0.5],
            intercept_variance: 1.0,
            slope_variance: 0.25,
            intercept_slope_covariance: 0.0,
            intercept_covariance: 0.3,
            loadings: vec![1.0, 0.9, 0.8],
            measurement_intercepts: vec![0.0, 0.1, -0.1],
            disturbance_variance: 0.25,
            residual_variance: 0.36,
        }
    }
}

impl PopulationConfig {
    /// Population parameters with a zero slope-slope covariance.
    pub fn to_params(&self, shape: &ModelShape) -> Result<PopulationParams> {
        let k = shape.indicators_per_wave();
        if self.loadings.len() != k || self.measurement_intercepts.len() != k {
            return Err(Error::Config(format!(
                "population needs {k} loadings and {k} measurement intercepts"
            )));
        }
        let mut cov = Matrix4::zeros();
        for (i, s) in [(INTERCEPT_B, SLOPE_B), (INTERCEPT_H, SLOPE_H)] {
            cov[(i, i)] = self.intercept_variance;
            cov[(s, s)] = self.slope_variance;
            cov[(i, s)] = self.intercept_slope_covariance;
            cov[(s, i)] = self.intercept_slope_covariance;
        }
        cov[(INTERCEPT_B, INTERCEPT_H)] = self.intercept_covariance;
        cov[(INTERCEPT_H, INTERCEPT_B)] = self.intercept_covariance;
        let params = PopulationParams {
            growth_means: Vector4::from(self.growth_means),
            growth_cov: cov,
            disturbance_vars: vec![
                if shape.has_disturbances() { self.disturbance_variance } else { 0.0 };
                shape.n_first_order()
            ],
            loadings: std::array::from_fn::<_, CONSTRUCTS, _>(|_| self.loadings.clone()),
            measurement_intercepts: std::array::from_fn::<_, CONSTRUCTS, _>(|_| {
                self.measurement_intercepts.clone()
            }),
            residual_vars: vec![
                if shape.has_residuals() { self.residual_variance } else { 0.0 };
                shape.n_observed()
            ],
        };
        params.validate(shape)?;
        Ok(params)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignConfig {
    pub rhos: Vec<f64>,
    pub n_per_group: Vec<usize>,
    pub data_conditions: Vec<DataCondition>,
    /// Used when no profile is given.
    pub replications: usize,
}

impl Default for DesignConfig {
    fn default() -> Self {
        Self {
            rhos: vec![0.1, 0.3, 0.55],
            n_per_group: vec![40, 60, 80, 100, 300, 500, 800, 1000],
            data_conditions: vec![DataCondition::Complete, DataCondition::Swmd6Fiml],
            replications: Profile::Ci.replications(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsConfig {
    pub variance_kind: VarianceKind,
    pub thresholds: Thresholds,
}

impl DiagnosticsConfig {
    pub fn summary_options(&self) -> SummaryOptions {
        SummaryOptions {
            variance_kind: self.variance_kind,
            thresholds: self.thresholds,
            zero_guard: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub population: PopulationConfig,
    #[serde(default)]
    pub design: DesignConfig,
    #[serde(default)]
    pub optimizer: OptimizerSettings,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            schema_version: CONFIG_SCHEMA_VERSION,
            model: ModelConfig::default(),
            population: PopulationConfig::default(),
            design: DesignConfig::default(),
            optimizer: OptimizerSettings::default(),
            diagnostics: DiagnosticsConfig::default(),
        }
    }
}

impl SimulationConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {} (expected {CONFIG_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let shape = self.shape()?;
        self.population.to_params(&shape)?;
        let d = &self.design;
        if d.rhos.is_empty() || d.n_per_group.is_empty() || d.data_conditions.is_empty() {
            return Err(Error::Config("design grid has an empty dimension".into()));
        }
        if let Some(r) = d.rhos.iter().find(|r| !(-1.0 < **r && **r < 1.0)) {
            return Err(Error::Config(format!("rho {r} must lie strictly inside (-1, 1)")));
        }
        if d.n_per_group.contains(&0) {
            return Err(Error::Config("n_per_group entries must be positive".into()));
        }
        for (name, dup) in [
            ("rhos", has_duplicates(&d.rhos.iter().map(|r| r.to_bits()).collect::<Vec<_>>())),
            ("n_per_group", has_duplicates(&d.n_per_group)),
            ("data_conditions", has_duplicates(&d.data_conditions)),
        ] {
            if dup {
                return Err(Error::Config(format!("design.{name} contains duplicates")));
            }
        }
        if d.data_conditions.contains(&DataCondition::Swmd6Fiml) && shape.waves() != 5 {
            return Err(Error::Config(
                "the six-group wave-missing design needs exactly 5 waves".into(),
            ));
        }
        Ok(())
    }

    pub fn shape(&self) -> Result<ModelShape> {
        ModelShape::new(
            self.model.time_scores.clone(),
            self.model.indicators_per_wave,
            true,
        )
        .map_err(|e| Error::Config(e.to_string()))
    }

    /// Every grid cell, in a fixed order: ρ, then n, then data condition.
    /// Cells sharing (ρ, n) share a seed index, so their complete datasets
    /// are identical.
    pub fn conditions(&self, replications: usize) -> Result<Vec<ConditionSpec>> {
        let shape = self.shape()?;
        let population = self.population.to_params(&shape)?;
        let d = &self.design;
        let mut out = Vec::new();
        for (ri, &rho) in d.rhos.iter().enumerate() {
            for (ni, &n) in d.n_per_group.iter().enumerate() {
                let seed_index = u32::try_from(ri * d.n_per_group.len() + ni)
                    .map_err(|_| Error::Config("design grid is too large".into()))?;
                for &dc in &d.data_conditions {
                    out.push(ConditionSpec {
                        rho,
                        n_per_group: n,
                        data_condition: dc,
                        replications,
                        seed_index,
                        shape: shape.clone(),
                        population: population.clone(),
                        optimizer: self.optimizer,
                    });
                }
            }
        }
        Ok(out)
    }

    /// SHA-256 of the canonical JSON form, as lowercase hex.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&json);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn has_duplicates<T: PartialEq>(items: &[T]) -> bool {
    items
        .iter()
        .enumerate()
        .any(|(i, a)| items[..i].iter().any(|b| a == b))
}
