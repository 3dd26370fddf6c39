//! Run configuration: one JSON document per run.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::econometrics::ModelSpec;
use crate::indices::CoggFormula;
use crate::intensity::{IndicatorSpec, WeightMethod};
use crate::panel::Schema;
use crate::spatial::DEFAULT_PERMUTATIONS;

use super::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Inputs {
    pub panel: Option<String>,
    #[serde(default)]
    pub schema: Schema,
    #[serde(default)]
    pub adjacency: Option<String>,
    /// Employment panel supplying the reference shares for location
    /// quotients; defaults to the study panel itself.
    #[serde(default)]
    pub reference_panel: Option<String>,
    #[serde(default = "default_true")]
    pub standardize: bool,
    #[serde(default)]
    pub interpolate: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sectors {
    pub manufacturing: Vec<String>,
    pub producer_services: Vec<String>,
    #[serde(default)]
    pub other: Vec<String>,
}

impl Sectors {
    pub fn all(&self) -> Vec<String> {
        self.manufacturing
            .iter()
            .chain(&self.producer_services)
            .chain(&self.other)
            .cloned()
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct IntensityConfig {
    #[serde(default)]
    pub method: WeightMethod,
}

fn default_permutations() -> usize {
    DEFAULT_PERMUTATIONS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MoranConfig {
    #[serde(default = "default_permutations")]
    pub permutations: usize,
    #[serde(default)]
    pub variable: Option<String>,
    #[serde(default)]
    pub year: Option<i32>,
}

impl Default for MoranConfig {
    fn default() -> Self {
        MoranConfig {
            permutations: DEFAULT_PERMUTATIONS,
            variable: None,
            year: None,
        }
    }
}

fn default_output() -> String {
    "output".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub inputs: Inputs,
    pub sectors: Sectors,
    #[serde(default)]
    pub indicators: Vec<IndicatorSpec>,
    #[serde(default)]
    pub cogg: CoggFormula,
    #[serde(default)]
    pub intensity: IntensityConfig,
    #[serde(default)]
    pub models: Vec<ModelSpec>,
    #[serde(default)]
    pub moran: MoranConfig,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_output")]
    pub output: String,
}

/// A parsed configuration together with the directory its relative paths
/// are resolved against.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub base: PathBuf,
}

impl LoadedConfig {
    pub fn load(path: &Path) -> Result<LoadedConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config("ConfigNotFound", format!("{}: {e}", path.display())))?;
        let config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::config("MalformedConfig", format!("{}: {e}", path.display())))?;
        config.validate()?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(LoadedConfig { config, base })
    }

    pub fn resolve(&self, relative: &str) -> PathBuf {
        let p = Path::new(relative);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    /// Resolves a configured input path and checks that it exists.
    pub fn input(&self, field: &str, value: Option<&String>) -> Result<PathBuf, CliError> {
        let value = value.ok_or_else(|| CliError::config("MissingInput", format!("inputs.{field} is not set")))?;
        let path = self.resolve(value);
        if !path.is_file() {
            return Err(CliError::config(
                "MissingInput",
                format!("inputs.{field}: {} does not exist", path.display()),
            ));
        }
        Ok(path)
    }

    pub fn output_root(&self) -> PathBuf {
        self.resolve(&self.config.output)
    }

    pub fn seed(&self) -> Result<u64, CliError> {
        self.config
            .seed
            .ok_or_else(|| CliError::config("MissingSeed", "a seed is required for stochastic steps".into()))
    }

    pub fn model(&self, name: &str) -> Result<&ModelSpec, CliError> {
        self.config
            .models
            .iter()
            .find(|m| m.name == name)
            .ok_or_else(|| CliError::config("UnknownModelSpec", format!("no model spec named {name:?}")))
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        let s = &self.sectors;
        if s.manufacturing.is_empty() {
            return Err(CliError::config("EmptySectorSet", "sectors.manufacturing is empty".into()));
        }
        if s.producer_services.is_empty() {
            return Err(CliError::config("EmptySectorSet", "sectors.producer_services is empty".into()));
        }
        let mut seen = BTreeSet::new();
        for sector in s.all() {
            if !seen.insert(sector.clone()) {
                return Err(CliError::config(
                    "OverlappingSectors",
                    format!("sector {sector:?} is listed more than once"),
                ));
            }
        }
        let mut names = BTreeSet::new();
        for ind in &self.indicators {
            if seen.contains(&ind.name) {
                return Err(CliError::config(
                    "OverlappingSectors",
                    format!("indicator {:?} is also a sector", ind.name),
                ));
            }
            if !names.insert(ind.name.clone()) {
                return Err(CliError::config(
                    "DuplicateIndicator",
                    format!("indicator {:?} listed more than once", ind.name),
                ));
            }
        }
        let mut models = BTreeSet::new();
        for m in &self.models {
            if !models.insert(m.name.clone()) {
                return Err(CliError::config(
                    "DuplicateModelSpec",
                    format!("model spec {:?} listed more than once", m.name),
                ));
            }
        }
        Ok(())
    }
}
