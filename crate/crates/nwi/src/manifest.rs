//! Run manifests: what a command did, with enough detail to redo it.

use std::fs;
use std::path::Path;

use nwi_core::inversion::{ClampCounts, IterationRecord, StopReason};
use nwi_core::Property;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{NwiError, Result};

pub const FILE_NAME: &str = "manifest.toml";

/// Defaults that are choices of this implementation rather than measured
/// or published values.
pub const FLAGGED_DEFAULTS: &[&str] = &[
    "learning rates, regularization weights, phase split, mask threshold and inner step count are implementation defaults",
    "fat and liver property values are a preset, not reference data",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    /// Per-emission noise seeds, hex, in emission order.
    #[serde(default)]
    pub emission_seeds: Vec<String>,
    /// Files written, relative to the manifest.
    #[serde(default)]
    pub files: Vec<String>,
    #[serde(default)]
    pub flagged_defaults: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inversion: Option<InversionSummary>,
    pub config: RunConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InversionSummary {
    pub engine: String,
    pub workers: usize,
    pub stop_reason: String,
    pub iterations: usize,
    /// Mean first local loss of each outer round.
    pub round_losses: Vec<f64>,
    pub final_loss: f64,
    /// Cells clamped to a floor, summed over workers, per property.
    pub clamp_sos: usize,
    pub clamp_density: usize,
    pub clamp_attenuation: usize,
    pub clamp_nonlinearity: usize,
}

impl InversionSummary {
    pub fn new(
        engine: &str,
        workers: usize,
        stop_reason: StopReason,
        histories: &[Vec<IterationRecord>],
        round_losses: Vec<f64>,
        final_loss: f64,
    ) -> Self {
        let mut clamps = ClampCounts::default();
        for r in histories.iter().flatten() {
            clamps.add(&r.clamps);
        }
        Self {
            engine: engine.into(),
            workers,
            stop_reason: stop_reason.name().into(),
            iterations: histories.iter().map(Vec::len).max().unwrap_or(0),
            round_losses,
            final_loss,
            clamp_sos: clamps.get(Property::Sos),
            clamp_density: clamps.get(Property::Density),
            clamp_attenuation: clamps.get(Property::Attenuation),
            clamp_nonlinearity: clamps.get(Property::Nonlinearity),
        }
    }
}

impl Manifest {
    pub fn new(command: &str, config: &RunConfig) -> Self {
        Self {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            emission_seeds: Vec::new(),
            files: Vec::new(),
            flagged_defaults: FLAGGED_DEFAULTS.iter().map(|s| s.to_string()).collect(),
            inversion: None,
            config: config.clone(),
        }
    }

    pub fn with_seeds(mut self, seeds: impl IntoIterator<Item = u64>) -> Self {
        self.emission_seeds = seeds.into_iter().map(|s| format!("{s:#018x}")).collect();
        self
    }

    pub fn with_files(mut self, dir: &Path, files: &[std::path::PathBuf]) -> Self {
        self.files = files
            .iter()
            .map(|f| f.strip_prefix(dir).unwrap_or(f).display().to_string())
            .collect();
        self
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|source| NwiError::Serialize { what: "manifest", source })
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(FILE_NAME);
        fs::write(&path, self.to_toml()?).map_err(|e| NwiError::io(&path, e))
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(FILE_NAME);
        if !path.exists() {
            return Err(NwiError::format(dir, format!("no {FILE_NAME} in directory")));
        }
        let text = fs::read_to_string(&path).map_err(|e| NwiError::io(&path, e))?;
        let m: Manifest = toml::from_str(&text).map_err(|e| NwiError::ConfigSyntax {
            path: path.clone(),
            source: Box::new(e),
        })?;
        m.config.validate()?;
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let m = Manifest::new("simulate", &RunConfig::default()).with_seeds([1, u64::MAX]);
        assert_eq!(m.emission_seeds[1], "0xffffffffffffffff");
        let back: Manifest = toml::from_str(&m.to_toml().unwrap()).unwrap();
        assert_eq!(back, m);
    }
}
