//! Stage directories, manifests and hash-stamped CSV files.

use std::path::{Path, PathBuf};

use ngrc_core::datasets::{parse_csv, series_to_csv};
use ngrc_core::TimeSeries;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};

pub const HASH_PREFIX: &str = "# config_hash=";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Data,
    Cv,
    Model,
    Forecast,
    Eval,
}

impl Stage {
    pub fn dir_name(self) -> &'static str {
        match self {
            Stage::Data => "data",
            Stage::Cv => "cv",
            Stage::Model => "model",
            Stage::Forecast => "forecast",
            Stage::Eval => "eval",
        }
    }

    fn producer(self) -> &'static str {
        match self {
            Stage::Data => "simulate",
            Stage::Cv => "cv",
            Stage::Model => "fit",
            Stage::Forecast => "forecast",
            Stage::Eval => "eval",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: Stage,
    pub config_hash: String,
    pub seed: u64,
    pub tool_version: String,
    pub config: ExperimentConfig,
    pub files: Vec<String>,
    #[serde(default)]
    pub details: serde_json::Value,
}

/// The output tree of one experiment, tied to one config.
pub struct Run<'a> {
    pub root: PathBuf,
    pub config: &'a ExperimentConfig,
    pub hash: String,
}

impl<'a> Run<'a> {
    pub fn new(root: impl Into<PathBuf>, config: &'a ExperimentConfig) -> Self {
        Self {
            root: root.into(),
            config,
            hash: config.hash(),
        }
    }

    pub fn stage_dir(&self, stage: Stage) -> PathBuf {
        self.root.join(stage.dir_name())
    }

    pub fn create(&self, stage: Stage) -> Result<PathBuf> {
        let dir = self.stage_dir(stage);
        std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        Ok(dir)
    }

    pub fn write_text(&self, stage: Stage, name: &str, text: &str) -> Result<PathBuf> {
        let path = self.stage_dir(stage).join(name);
        std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }

    /// Writes CSV text with the config hash as its first line.
    pub fn write_csv(&self, stage: Stage, name: &str, body: &str) -> Result<PathBuf> {
        self.write_text(stage, name, &format!("{HASH_PREFIX}{}\n{body}", self.hash))
    }

    pub fn write_series(&self, stage: Stage, name: &str, series: &TimeSeries) -> Result<PathBuf> {
        self.write_csv(stage, name, &series_to_csv(series))
    }

    pub fn write_manifest(&self, stage: Stage, files: &[&str], details: serde_json::Value) -> Result<()> {
        let manifest = Manifest {
            stage,
            config_hash: self.hash.clone(),
            seed: self.config.seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config: self.config.clone(),
            files: files.iter().map(|s| s.to_string()).collect(),
            details,
        };
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        self.write_text(stage, "manifest.json", &(text + "\n"))?;
        Ok(())
    }

    /// The manifest of an upstream stage, which must exist and match this config.
    pub fn require(&self, stage: Stage) -> Result<Manifest> {
        let path = self.stage_dir(stage).join("manifest.json");
        let text = std::fs::read_to_string(&path).map_err(|_| {
            CliError::Dependency(format!(
                "{} is missing; run `{}` first with the same config and --out",
                path.display(),
                stage.producer()
            ))
        })?;
        let manifest: Manifest = serde_json::from_str(&text)
            .map_err(|e| CliError::Dependency(format!("{}: {e}", path.display())))?;
        if manifest.config_hash != self.hash {
            return Err(CliError::Dependency(format!(
                "{} was produced by config {} but this config hashes to {}",
                path.display(),
                manifest.config_hash,
                self.hash
            )));
        }
        Ok(manifest)
    }

    pub fn read_series(&self, stage: Stage, name: &str) -> Result<TimeSeries> {
        read_stamped_series(&self.stage_dir(stage).join(name), Some(&self.hash))
    }

    pub fn read_json<T: serde::de::DeserializeOwned>(&self, stage: Stage, name: &str) -> Result<T> {
        let path = self.stage_dir(stage).join(name);
        let text = std::fs::read_to_string(&path)
            .map_err(|_| CliError::Dependency(format!("{} is missing", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Dependency(format!("{}: {e}", path.display())))
    }
}

/// The hash recorded in a CSV file, if any.
pub fn stamped_hash(text: &str) -> Option<&str> {
    text.lines()
        .take_while(|l| l.starts_with('#'))
        .find_map(|l| l.strip_prefix(HASH_PREFIX))
        .map(str::trim)
}

/// Loads a series CSV; with `expected`, its stamped hash must match.
pub fn read_stamped_series(path: &Path, expected: Option<&str>) -> Result<TimeSeries> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    if let Some(expected) = expected {
        match stamped_hash(&text) {
            Some(h) if h == expected => {}
            Some(h) => {
                return Err(CliError::Dependency(format!(
                    "{} carries config hash {h}, expected {expected}",
                    path.display()
                )))
            }
            None => {
                return Err(CliError::Dependency(format!("{} has no config hash", path.display())))
            }
        }
    }
    parse_csv(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}
