//! In-memory stages of an experiment. The commands wrap these with file I/O.

use ngrc_core::cv::{expanding_folds, grid_search, overlapping_folds, CvTask, FoldPlan, SearchResult};
use ngrc_core::datasets::{
    load_csv, simulate_bekk, simulate_lorenz, simulate_mackey_glass, split_train_test, BekkParams,
};
use ngrc_core::estimator::{fit_estimator, EstimatorSpec, FittedEstimator, TargetTransform};
use ngrc_core::forecast::{lyapunov_horizon, valid_time, ForecastMode, ForecastRun, ValidTime};
use ngrc_core::metrics::MetricReport;
use ngrc_core::preprocess::bekk_output_transforms;
use ngrc_core::{DenseMatrix, TimeSeries};

use crate::config::{DatasetConfig, ExperimentConfig, FoldConfig, PointwiseWindow};
use crate::error::{CliError, Result};

/// Train/test data of one experiment.
#[derive(Debug, Clone, PartialEq)]
pub enum Data {
    PathContinuation {
        train: TimeSeries,
        test: TimeSeries,
    },
    OpenLoop {
        train_inputs: TimeSeries,
        train_targets: TimeSeries,
        test_inputs: TimeSeries,
        test_targets: TimeSeries,
        /// Simulated returns, kept for reference only.
        returns: Option<TimeSeries>,
    },
}

impl Data {
    pub fn mode(&self) -> ForecastMode {
        match self {
            Data::PathContinuation { .. } => ForecastMode::PathContinuation,
            Data::OpenLoop { .. } => ForecastMode::OpenLoop,
        }
    }

    pub fn dt(&self) -> f64 {
        match self {
            Data::PathContinuation { train, .. } => train.dt(),
            Data::OpenLoop { train_targets, .. } => train_targets.dt(),
        }
    }

    pub fn test_len(&self) -> usize {
        match self {
            Data::PathContinuation { test, .. } => test.len(),
            Data::OpenLoop { test_targets, .. } => test_targets.len(),
        }
    }

    /// Named series in the order they are written to disk.
    pub fn files(&self) -> Vec<(&'static str, &TimeSeries)> {
        match self {
            Data::PathContinuation { train, test } => vec![("train.csv", train), ("test.csv", test)],
            Data::OpenLoop {
                train_inputs,
                train_targets,
                test_inputs,
                test_targets,
                returns,
            } => {
                let mut v = vec![
                    ("train_inputs.csv", train_inputs),
                    ("train_targets.csv", train_targets),
                    ("test_inputs.csv", test_inputs),
                    ("test_targets.csv", test_targets),
                ];
                if let Some(r) = returns {
                    v.push(("returns.csv", r));
                }
                v
            }
        }
    }
}

/// Simulates or loads the dataset and splits it.
pub fn prepare_data(config: &ExperimentConfig) -> Result<Data> {
    let n_train = config.dataset.n_train();
    match &config.dataset {
        DatasetConfig::Lorenz { n_points, dt, initial, .. } => {
            let s = simulate_lorenz(*initial, *dt, *n_points)?;
            let (train, test) = split_train_test(&s, n_train)?;
            Ok(Data::PathContinuation { train, test })
        }
        DatasetConfig::MackeyGlass { length, dt_fine, delay, splice, .. } => {
            let s = simulate_mackey_glass(*dt_fine, *delay, length * splice, *splice)?;
            let (train, test) = split_train_test(&s, n_train)?;
            Ok(Data::PathContinuation { train, test })
        }
        DatasetConfig::Bekk { d, n, params, .. } => {
            let mut params = params.clone().unwrap_or_else(|| BekkParams::desk_default(*d, config.seed));
            params.seed = config.seed;
            let sample = simulate_bekk(&params, *n)?;
            let (train_inputs, test_inputs) = split_train_test(&sample.inputs, n_train)?;
            let (train_targets, test_targets) = split_train_test(&sample.outputs, n_train)?;
            Ok(Data::OpenLoop {
                train_inputs,
                train_targets,
                test_inputs,
                test_targets,
                returns: Some(sample.returns),
            })
        }
        DatasetConfig::Csv { inputs, targets, .. } => {
            let load = |p: &std::path::Path| {
                load_csv(p).map_err(|e| CliError::Config(format!("dataset {}: {e}", p.display())))
            };
            let x = load(inputs)?;
            match targets {
                None => {
                    let (train, test) = split_train_test(&x, n_train)?;
                    Ok(Data::PathContinuation { train, test })
                }
                Some(t) => {
                    let y = load(t)?;
                    if y.len() != x.len() {
                        return Err(CliError::Config(format!(
                            "dataset: {} input rows but {} target rows",
                            x.len(),
                            y.len()
                        )));
                    }
                    let (train_inputs, test_inputs) = split_train_test(&x, n_train)?;
                    let (train_targets, test_targets) = split_train_test(&y, n_train)?;
                    Ok(Data::OpenLoop {
                        train_inputs,
                        train_targets,
                        test_inputs,
                        test_targets,
                        returns: None,
                    })
                }
            }
        }
    }
}

pub fn target_transform(config: &ExperimentConfig) -> TargetTransform {
    match &config.dataset {
        DatasetConfig::Bekk { .. } => TargetTransform::Own {
            transforms: bekk_output_transforms(),
        },
        DatasetConfig::Csv {
            targets: Some(_),
            target_transforms,
            ..
        } => TargetTransform::Own {
            transforms: target_transforms.clone(),
        },
        _ => TargetTransform::SameAsInputs,
    }
}

fn fold_plan(config: &ExperimentConfig, n: usize) -> Result<FoldPlan> {
    let cv = config
        .cv
        .as_ref()
        .ok_or_else(|| CliError::Config("cv: no fold plan configured".into()))?;
    let plan = match cv.folds {
        FoldConfig::Overlapping { fold_len, val_len, stride } => overlapping_folds(n, fold_len, val_len, stride),
        FoldConfig::Expanding { k } => expanding_folds(n, k),
    };
    plan.map_err(|e| CliError::Config(format!("cv.folds: {e}")))
}

/// Grid search over the training portion only.
pub fn cross_validate(config: &ExperimentConfig, data: &Data) -> Result<SearchResult> {
    let grid = config
        .estimator
        .grid
        .as_ref()
        .ok_or_else(|| CliError::Config("estimator.grid: required by cv".into()))?;
    let tt = target_transform(config);
    let (task, n) = match data {
        Data::PathContinuation { train, .. } => (CvTask::PathContinuation { series: train }, train.len()),
        Data::OpenLoop {
            train_inputs,
            train_targets,
            ..
        } => (
            CvTask::OpenLoop {
                inputs: train_inputs,
                targets: train_targets,
                target_transform: &tt,
            },
            train_inputs.len(),
        ),
    };
    let folds = fold_plan(config, n)?;
    Ok(grid_search(grid, &folds, task)?)
}

/// Fits on the whole training portion. Path continuation pairs each training
/// value with its successor.
pub fn fit(config: &ExperimentConfig, spec: &EstimatorSpec, data: &Data) -> Result<FittedEstimator> {
    let fitted = match data {
        Data::PathContinuation { train, .. } => {
            let n = train.len();
            if n < 2 {
                return Err(CliError::Config("dataset.n_train: path continuation needs 2 rows".into()));
            }
            fit_estimator(
                spec,
                &train.slice(0, n - 1)?,
                &train.slice(1, n)?,
                &TargetTransform::SameAsInputs,
            )?
        }
        Data::OpenLoop {
            train_inputs,
            train_targets,
            ..
        } => fit_estimator(spec, train_inputs, train_targets, &target_transform(config))?,
    };
    Ok(fitted)
}

pub fn forecast(config: &ExperimentConfig, fitted: &FittedEstimator, data: &Data) -> Result<ForecastRun> {
    let h = config.task.horizon.unwrap_or(usize::MAX).min(data.test_len());
    let run = match data {
        Data::PathContinuation { train, test } => ForecastRun::path_continuation(
            fitted,
            train.row(train.len() - 1),
            &test.values().slice_rows(0, h),
            train.dt(),
        )?,
        Data::OpenLoop {
            test_inputs,
            test_targets,
            ..
        } => ForecastRun::open_loop(
            fitted,
            &test_inputs.values().slice_rows(0, h),
            &test_targets.values().slice_rows(0, h),
            test_targets.dt(),
        )?,
    };
    Ok(run)
}

/// Valid time of a rollout. A rollout cut short by a numerical failure that
/// never crossed the threshold is charged the failing step.
pub fn rollout_valid_time(
    reference: &DenseMatrix,
    predicted: &DenseMatrix,
    threshold: f64,
    lyapunov_exponent: f64,
    dt: f64,
    truncated: bool,
) -> Result<ValidTime> {
    if predicted.rows() == 0 {
        return Ok(ValidTime {
            lyapunov_times: dt * lyapunov_exponent,
            steps: 1,
            censored: false,
        });
    }
    let mut vt = valid_time(reference, predicted, threshold, lyapunov_exponent, dt)?;
    if vt.censored && truncated {
        vt.steps = predicted.rows() + 1;
        vt.censored = false;
        vt.lyapunov_times = vt.steps as f64 * dt * lyapunov_exponent;
    }
    Ok(vt)
}

/// Metrics of one forecast. The valid time is reported whenever a Lyapunov
/// exponent is known.
pub fn evaluate(
    config: &ExperimentConfig,
    label: &str,
    reference: &DenseMatrix,
    predicted: &DenseMatrix,
    dt: f64,
    truncated: bool,
) -> Result<MetricReport> {
    if predicted.rows() == 0 {
        return Err(ngrc_core::Error::Conditioning("forecast failed at its first step".into()).into());
    }
    let h = predicted.rows();
    let lyapunov = config.lyapunov_exponent();
    let vt = match lyapunov {
        Some(l) => Some(rollout_valid_time(reference, predicted, config.task.threshold, l, dt, truncated)?),
        None => None,
    };
    let steps = match (config.metrics.pointwise, vt, lyapunov) {
        (PointwiseWindow::Full, _, _) | (PointwiseWindow::ValidTime, None, _) => h,
        (PointwiseWindow::ValidTime, Some(vt), Some(l)) => lyapunov_horizon(vt.lyapunov_times, dt, l, h),
        (PointwiseWindow::LyapunovTimes { value }, _, Some(l)) => lyapunov_horizon(value, dt, l, h),
        (PointwiseWindow::LyapunovTimes { .. }, _, None) | (PointwiseWindow::ValidTime, Some(_), None) => {
            return Err(CliError::Config(
                "metrics.pointwise: a Lyapunov window needs task.lyapunov_exponent".into(),
            ))
        }
    };
    let mut report = MetricReport::compute(label, reference, predicted, steps, 1.0 / dt, &config.metrics.settings)?;
    if let Some(vt) = vt {
        report.t_valid = Some(vt.lyapunov_times);
        report.t_valid_censored = Some(vt.censored);
    }
    report.config = serde_json::json!({ "config_hash": config.hash(), "seed": config.seed });
    Ok(report)
}

/// Every stage in order with a fixed estimator.
pub struct Outcome {
    pub data: Data,
    pub fitted: FittedEstimator,
    pub forecast: ForecastRun,
    pub report: MetricReport,
}

pub fn run_spec(config: &ExperimentConfig, spec: &EstimatorSpec) -> Result<Outcome> {
    let data = prepare_data(config)?;
    let fitted = fit(config, spec, &data)?;
    let forecast = forecast(config, &fitted, &data)?;
    let report = evaluate(
        config,
        &spec.label(),
        &forecast.reference,
        &forecast.predicted,
        forecast.dt,
        forecast.truncated.is_some(),
    )?;
    Ok(Outcome {
        data,
        fitted,
        forecast,
        report,
    })
}
