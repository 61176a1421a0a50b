//! Experiment configuration: one JSON document per run.

use std::path::{Path, PathBuf};

use ngrc_core::cv::Grid;
use ngrc_core::datasets::{BekkParams, LORENZ_INITIAL, MG_DT_FINE, MG_LENGTH, MG_SPLICE};
use ngrc_core::estimator::EstimatorSpec;
use ngrc_core::forecast::{ForecastMode, LORENZ_LYAPUNOV, MACKEY_GLASS_LYAPUNOV, VALID_TIME_THRESHOLD};
use ngrc_core::metrics::MetricSettings;
use ngrc_core::preprocess::TransformKind;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub dataset: DatasetConfig,
    pub estimator: EstimatorBlock,
    #[serde(default)]
    pub cv: Option<CvConfig>,
    #[serde(default)]
    pub task: TaskConfig,
    #[serde(default)]
    pub metrics: MetricsConfig,
    /// Output directory; `--out` overrides it.
    #[serde(default)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DatasetConfig {
    Lorenz {
        #[serde(default = "lorenz_points")]
        n_points: usize,
        #[serde(default = "lorenz_dt")]
        dt: f64,
        #[serde(default = "lorenz_initial")]
        initial: [f64; 3],
        #[serde(default = "lorenz_train")]
        n_train: usize,
    },
    MackeyGlass {
        #[serde(default = "mg_length")]
        length: usize,
        #[serde(default = "mg_dt_fine")]
        dt_fine: f64,
        #[serde(default = "mg_delay")]
        delay: f64,
        #[serde(default = "mg_splice")]
        splice: usize,
        #[serde(default = "mg_train")]
        n_train: usize,
    },
    /// Simulated diagonal BEKK; parameters default to a fixed stationary set
    /// seeded by the master seed.
    Bekk {
        #[serde(default = "bekk_dim")]
        d: usize,
        #[serde(default = "bekk_n")]
        n: usize,
        #[serde(default = "bekk_train")]
        n_train: usize,
        #[serde(default)]
        params: Option<BekkParams>,
    },
    /// A series from disk. With `targets`, the task is input/output
    /// forecasting; without, path continuation of `inputs`.
    Csv {
        inputs: PathBuf,
        #[serde(default)]
        targets: Option<PathBuf>,
        n_train: usize,
        #[serde(default)]
        target_transforms: Vec<TransformKind>,
    },
}

fn lorenz_points() -> usize {
    15001
}
fn lorenz_dt() -> f64 {
    0.005
}
fn lorenz_initial() -> [f64; 3] {
    LORENZ_INITIAL
}
fn lorenz_train() -> usize {
    5000
}
fn mg_length() -> usize {
    MG_LENGTH
}
fn mg_dt_fine() -> f64 {
    MG_DT_FINE
}
fn mg_delay() -> f64 {
    17.0
}
fn mg_splice() -> usize {
    MG_SPLICE
}
fn mg_train() -> usize {
    3000
}
fn bekk_dim() -> usize {
    5
}
fn bekk_n() -> usize {
    3760
}
fn bekk_train() -> usize {
    3007
}

impl DatasetConfig {
    pub fn n_train(&self) -> usize {
        match self {
            DatasetConfig::Lorenz { n_train, .. }
            | DatasetConfig::MackeyGlass { n_train, .. }
            | DatasetConfig::Bekk { n_train, .. }
            | DatasetConfig::Csv { n_train, .. } => *n_train,
        }
    }

    pub fn is_path_continuation(&self) -> bool {
        match self {
            DatasetConfig::Lorenz { .. } | DatasetConfig::MackeyGlass { .. } => true,
            DatasetConfig::Bekk { .. } => false,
            DatasetConfig::Csv { targets, .. } => targets.is_none(),
        }
    }

    pub fn mode(&self) -> ForecastMode {
        if self.is_path_continuation() {
            ForecastMode::PathContinuation
        } else {
            ForecastMode::OpenLoop
        }
    }

    pub fn default_lyapunov(&self) -> Option<f64> {
        match self {
            DatasetConfig::Lorenz { .. } => Some(LORENZ_LYAPUNOV),
            DatasetConfig::MackeyGlass { .. } => Some(MACKEY_GLASS_LYAPUNOV),
            _ => None,
        }
    }
}

/// A fixed estimator, a grid to search, or both (the grid wins in `cv`,
/// `spec` is used by `fit` when no search result exists).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorBlock {
    #[serde(default)]
    pub spec: Option<EstimatorSpec>,
    #[serde(default)]
    pub grid: Option<Grid>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CvConfig {
    pub folds: FoldConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FoldConfig {
    Overlapping {
        fold_len: usize,
        val_len: usize,
        stride: usize,
    },
    Expanding {
        k: usize,
    },
}

/// Rows entering the pointwise metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PointwiseWindow {
    Full,
    /// Up to the ceiling of this run's own valid time.
    ValidTime,
    /// Up to the ceiling of a fixed number of Lyapunov times.
    LyapunovTimes { value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    /// Must agree with the dataset when given.
    #[serde(default)]
    pub mode: Option<ForecastMode>,
    /// Forecast steps; the whole test set when absent.
    #[serde(default)]
    pub horizon: Option<usize>,
    /// Top Lyapunov exponent; dataset default when absent.
    #[serde(default)]
    pub lyapunov_exponent: Option<f64>,
    #[serde(default = "threshold")]
    pub threshold: f64,
}

fn threshold() -> f64 {
    VALID_TIME_THRESHOLD
}

impl Default for TaskConfig {
    fn default() -> Self {
        Self {
            mode: None,
            horizon: None,
            lyapunov_exponent: None,
            threshold: VALID_TIME_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsConfig {
    #[serde(default)]
    pub settings: MetricSettings,
    #[serde(default = "window")]
    pub pointwise: PointwiseWindow,
}

fn window() -> PointwiseWindow {
    PointwiseWindow::ValidTime
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            settings: MetricSettings::default(),
            pointwise: PointwiseWindow::ValidTime,
        }
    }
}

impl ExperimentConfig {
    /// Reads a config file, or an embedded preset given as `preset:<name>`.
    pub fn load(source: &str) -> Result<Self, CliError> {
        let text = match source.strip_prefix("preset:") {
            Some(name) => preset(name)
                .ok_or_else(|| CliError::Config(format!("unknown preset `{name}`; known: {}", PRESET_NAMES.join(", "))))?
                .to_string(),
            None => std::fs::read_to_string(source)
                .map_err(|e| CliError::Config(format!("cannot read config {source}: {e}")))?,
        };
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let config: Self = serde_json::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    /// Checks that don't need any artifact.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |field: &str, msg: String| Err(CliError::Config(format!("{field}: {msg}")));
        if self.version != SCHEMA_VERSION {
            return bad("version", format!("expected {SCHEMA_VERSION}, got {}", self.version));
        }
        let (len, n_train) = match &self.dataset {
            DatasetConfig::Lorenz { n_points, dt, n_train, .. } => {
                if !(*dt > 0.0) {
                    return bad("dataset.dt", format!("must be positive, got {dt}"));
                }
                (Some(*n_points), *n_train)
            }
            DatasetConfig::MackeyGlass { length, splice, n_train, .. } => {
                if *splice == 0 {
                    return bad("dataset.splice", "must be at least 1".into());
                }
                (Some(*length), *n_train)
            }
            DatasetConfig::Bekk { d, n, n_train, params } => {
                if *d == 0 {
                    return bad("dataset.d", "must be at least 1".into());
                }
                if let Some(p) = params {
                    if p.dim() != *d {
                        return bad("dataset.params", format!("dimension {} but d = {d}", p.dim()));
                    }
                    p.validate().map_err(|e| CliError::Config(format!("dataset.params: {e}")))?;
                }
                (Some(*n), *n_train)
            }
            DatasetConfig::Csv { inputs, targets, n_train, .. } => {
                for path in std::iter::once(inputs).chain(targets) {
                    if !path.exists() {
                        return bad("dataset", format!("file {} does not exist", path.display()));
                    }
                }
                (None, *n_train)
            }
        };
        if len == Some(0) {
            return bad("dataset", "zero-length series requested".into());
        }
        if n_train == 0 || len.is_some_and(|n| n_train >= n) {
            return bad("dataset.n_train", format!("must lie in 1..{}", len.unwrap_or(usize::MAX)));
        }
        if self.estimator.spec.is_none() && self.estimator.grid.is_none() {
            return bad("estimator", "needs `spec`, `grid` or both".into());
        }
        if let Some(spec) = &self.estimator.spec {
            if !(spec.lambda_reg() > 0.0) {
                return bad("estimator.spec.lambda_reg", "must be positive".into());
            }
            if spec.kernel().is_err() {
                return bad("estimator.spec", format!("{} violates its parameter constraints", spec.label()));
            }
        }
        if self.estimator.grid.is_some() && self.cv.is_none() {
            return bad("cv", "a grid needs a fold plan".into());
        }
        if let Some(mode) = self.task.mode {
            if mode != self.dataset.mode() {
                return bad("task.mode", format!("{mode:?} does not fit this dataset, which implies {:?}", self.dataset.mode()));
            }
        }
        if self.task.horizon == Some(0) {
            return bad("task.horizon", "must be positive".into());
        }
        if let Some(l) = self.task.lyapunov_exponent {
            if !(l > 0.0) {
                return bad("task.lyapunov_exponent", format!("must be positive, got {l}"));
            }
        }
        Ok(())
    }

    pub fn lyapunov_exponent(&self) -> Option<f64> {
        self.task.lyapunov_exponent.or_else(|| self.dataset.default_lyapunov())
    }

    /// SHA-256 of the serialized config, hex encoded.
    pub fn hash(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("config serializes"))
    }

    pub fn output_dir(&self, flag: Option<&Path>) -> PathBuf {
        flag.map(Path::to_path_buf)
            .or_else(|| self.output.clone())
            .unwrap_or_else(|| PathBuf::from("runs").join(if self.name.is_empty() { "run" } else { &self.name }))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub const PRESET_NAMES: [&str; 9] = [
    "lorenz-ngrc",
    "lorenz-polynomial",
    "lorenz-volterra",
    "mackey-glass-ngrc",
    "mackey-glass-polynomial",
    "mackey-glass-volterra",
    "bekk-ngrc",
    "bekk-polynomial",
    "bekk-volterra",
];

/// Embedded copy of `presets/<name>.json`.
pub fn preset(name: &str) -> Option<&'static str> {
    Some(match name {
        "lorenz-ngrc" => include_str!("../presets/lorenz-ngrc.json"),
        "lorenz-polynomial" => include_str!("../presets/lorenz-polynomial.json"),
        "lorenz-volterra" => include_str!("../presets/lorenz-volterra.json"),
        "mackey-glass-ngrc" => include_str!("../presets/mackey-glass-ngrc.json"),
        "mackey-glass-polynomial" => include_str!("../presets/mackey-glass-polynomial.json"),
        "mackey-glass-volterra" => include_str!("../presets/mackey-glass-volterra.json"),
        "bekk-ngrc" => include_str!("../presets/bekk-ngrc.json"),
        "bekk-polynomial" => include_str!("../presets/bekk-polynomial.json"),
        "bekk-volterra" => include_str!("../presets/bekk-volterra.json"),
        _ => return None,
    })
}
