//! On-disk configuration: the full parameter set plus generator inputs as TOML.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{default_params, GeneratorConfig, ModelParams, ParamsError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("config serialize error: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error(transparent)]
    Invalid(#[from] ParamsError),
}

/// Complete run configuration: model parameters and exogenous-path generator
/// inputs, serializable as one TOML document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelConfig {
    pub model: ModelParams,
    pub generator: GeneratorConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig { model: default_params(), generator: GeneratorConfig::default() }
    }
}

impl ModelConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: ModelConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String, ConfigError> {
        Ok(toml::to_string_pretty(self)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), ConfigError> {
        fs::write(path, self.to_toml_string()?)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.model.validate()?;
        self.generator.validate()?;
        // The generator is only coherent if it describes the model's regions.
        if self.generator.regions.len() != self.model.regions.len() {
            return Err(ParamsError::Invariant(format!(
                "generator covers {} regions, model has {}",
                self.generator.regions.len(),
                self.model.regions.len()
            ))
            .into());
        }
        for (g, m) in self.generator.regions.iter().zip(&self.model.regions) {
            if g.name != m.name {
                return Err(ParamsError::Invariant(format!(
                    "generator region {} does not match model region {}",
                    g.name, m.name
                ))
                .into());
            }
        }
        Ok(())
    }

    /// Truncated copy keeping only the first `k` regions of both sections.
    pub fn with_first_regions(&self, k: usize) -> ModelConfig {
        ModelConfig {
            model: self.model.with_first_regions(k),
            generator: self.generator.with_first_regions(k),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip_preserves_values() {
        let cfg = ModelConfig::default();
        let text = cfg.to_toml_string().unwrap();
        let back = ModelConfig::from_toml_str(&text).unwrap();
        assert_eq!(back.model.geophys.phi, cfg.model.geophys.phi);
        assert_eq!(back.model.geophys.xi1, cfg.model.geophys.xi1);
        assert_eq!(back.model.regions.len(), 12);
        for (a, b) in back.model.regions.iter().zip(&cfg.model.regions) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.pb, b.pb);
            assert_eq!(a.c, b.c);
        }
        assert_eq!(back.model.initial.k, cfg.model.initial.k);
        assert_eq!(back.generator.f_ex_ramp, cfg.generator.f_ex_ramp);
    }

    #[test]
    fn save_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("config.toml");
        let cfg = ModelConfig::default().with_first_regions(3);
        cfg.save(&path).unwrap();
        let back = ModelConfig::load(&path).unwrap();
        assert_eq!(back.model.regions.len(), 3);
        assert_eq!(back.generator.regions.len(), 3);
    }

    #[test]
    fn mismatched_generator_regions_rejected() {
        let mut cfg = ModelConfig::default();
        cfg.generator.regions.truncate(5);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn invalid_model_values_rejected_on_parse() {
        let mut cfg = ModelConfig::default();
        cfg.model.regions[0].gamma = 1.5;
        let text = cfg.to_toml_string().unwrap();
        assert!(ModelConfig::from_toml_str(&text).is_err());
    }
}
