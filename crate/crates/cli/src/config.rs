//! Run configuration file: one TOML document with a table per stage.

use std::path::Path;

use miri_core::{CsvOptions, GaussianMixture, MaskSpec, MiriConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Which optional metrics are reported.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricToggles {
    pub mmd: bool,
    pub mi: bool,
}

impl Default for MetricToggles {
    fn default() -> Self {
        MetricToggles { mmd: true, mi: true }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Base seed; the data, mask and imputer streams are derived from it.
    pub seed: u64,
    pub synth: GaussianMixture,
    pub mask: MaskSpec,
    pub miri: MiriConfig,
    pub data: CsvOptions,
    pub metrics: MetricToggles,
}

impl RunConfig {
    /// Reads `path`, or returns the defaults when no path is given.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", p.display())))?;
                Self::parse(&text).map_err(|e| match e {
                    CliError::Usage(m) => CliError::Usage(format!("{}: {m}", p.display())),
                    other => other,
                })
            }
        }
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let value: toml::Table = text.parse().map_err(|e: toml::de::Error| CliError::Usage(one_line(e.message())))?;
        for section in ["mask", "miri"] {
            if value.get(section).and_then(|t| t.get("seed")).is_some() {
                return Err(CliError::Usage(format!(
                    "`{section}.seed` is derived from the top-level `seed`; set that instead"
                )));
            }
        }
        let cfg: RunConfig = value.try_into().map_err(|e: toml::de::Error| CliError::Usage(one_line(e.message())))?;
        cfg.synth.validate()?;
        cfg.mask.validate()?;
        cfg.miri.validate()?;
        Ok(cfg)
    }

    /// First 16 hex digits of the SHA-256 of the canonical TOML rendering, seed excluded.
    pub fn hash(&self) -> String {
        let canonical = RunConfig {
            seed: 0,
            ..self.clone()
        };
        let text = toml::to_string(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))[..16].to_string()
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}
