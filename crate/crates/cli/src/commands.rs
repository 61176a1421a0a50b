//! One function per subcommand. Each reads its upstream stages from the run
//! directory and writes its own stage with a manifest.

use std::path::Path;

use ngrc_core::cv::SearchResult;
use ngrc_core::estimator::{EstimatorSpec, FittedEstimator};
use ngrc_core::forecast::{ForecastMode, Truncation};
use ngrc_core::metrics::MetricReport;
use ngrc_core::TimeSeries;
use serde_json::json;

use crate::artifacts::{read_stamped_series, stamped_hash, Run, Stage};
use crate::bench::{self, BenchConfig};
use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::pipeline::{self, Data};

pub fn simulate(run: &Run) -> Result<Data> {
    let data = pipeline::prepare_data(run.config)?;
    run.create(Stage::Data)?;
    let files = data.files();
    for (name, series) in &files {
        run.write_series(Stage::Data, name, series)?;
    }
    let names: Vec<&str> = files.iter().map(|(n, _)| *n).collect();
    let rows: serde_json::Map<_, _> = files.iter().map(|(n, s)| (n.to_string(), json!(s.len()))).collect();
    run.write_manifest(
        Stage::Data,
        &names,
        json!({ "mode": data.mode(), "dt": data.dt(), "rows": rows }),
    )?;
    Ok(data)
}

pub fn load_data(run: &Run) -> Result<Data> {
    run.require(Stage::Data)?;
    let read = |name| run.read_series(Stage::Data, name);
    Ok(match run.config.dataset.mode() {
        ForecastMode::PathContinuation => Data::PathContinuation {
            train: read("train.csv")?,
            test: read("test.csv")?,
        },
        ForecastMode::OpenLoop => Data::OpenLoop {
            train_inputs: read("train_inputs.csv")?,
            train_targets: read("train_targets.csv")?,
            test_inputs: read("test_inputs.csv")?,
            test_targets: read("test_targets.csv")?,
            returns: if run.stage_dir(Stage::Data).join("returns.csv").exists() {
                Some(read("returns.csv")?)
            } else {
                None
            },
        },
    })
}

pub fn cv(run: &Run) -> Result<SearchResult> {
    let data = load_data(run)?;
    let result = pipeline::cross_validate(run.config, &data)?;
    run.create(Stage::Cv)?;
    run.write_csv(Stage::Cv, "leaderboard.csv", &result.leaderboard_csv())?;
    let text = serde_json::to_string_pretty(&result).map_err(ngrc_core::Error::from)?;
    run.write_text(Stage::Cv, "result.json", &(text + "\n"))?;
    run.write_manifest(
        Stage::Cv,
        &["leaderboard.csv", "result.json"],
        json!({
            "best": result.best.label(),
            "best_mse": result.best_mse,
            "candidates": result.leaderboard.len(),
            "pruned": result.pruned.len(),
        }),
    )?;
    Ok(result)
}

/// The estimator `fit` uses: the search winner when a grid is configured and
/// searched, otherwise the fixed spec.
pub fn chosen_spec(run: &Run) -> Result<EstimatorSpec> {
    let block = &run.config.estimator;
    if block.grid.is_some() {
        match run.require(Stage::Cv) {
            Ok(_) => return Ok(run.read_json::<SearchResult>(Stage::Cv, "result.json")?.best),
            Err(e) if block.spec.is_none() => return Err(e),
            Err(_) => log::info!("no search result; fitting the fixed spec"),
        }
    }
    block
        .spec
        .ok_or_else(|| CliError::Config("estimator: needs `spec` or a grid searched by `cv`".into()))
}

pub fn fit(run: &Run) -> Result<FittedEstimator> {
    let data = load_data(run)?;
    let spec = chosen_spec(run)?;
    let fitted = pipeline::fit(run.config, &spec, &data)?;
    run.create(Stage::Model)?;
    let text = serde_json::to_string(&fitted).map_err(ngrc_core::Error::from)?;
    run.write_text(Stage::Model, "model.json", &(text + "\n"))?;
    run.write_manifest(
        Stage::Model,
        &["model.json"],
        json!({ "estimator": spec.label(), "conditioning": fitted.conditioning }),
    )?;
    Ok(fitted)
}

pub fn forecast(run: &Run) -> Result<ngrc_core::forecast::ForecastRun> {
    let data = load_data(run)?;
    run.require(Stage::Model)?;
    let fitted: FittedEstimator = run.read_json(Stage::Model, "model.json")?;
    let result = pipeline::forecast(run.config, &fitted, &data)?;
    run.create(Stage::Forecast)?;
    run.write_csv(Stage::Forecast, "forecast.csv", &result.to_csv())?;
    let dt = result.dt;
    run.write_series(
        Stage::Forecast,
        "predicted.csv",
        &TimeSeries::new(result.predicted.clone(), dt, "predicted")?,
    )?;
    run.write_series(
        Stage::Forecast,
        "reference.csv",
        &TimeSeries::new(result.reference.clone(), dt, "reference")?,
    )?;
    run.write_manifest(
        Stage::Forecast,
        &["forecast.csv", "predicted.csv", "reference.csv"],
        json!({
            "mode": result.mode,
            "estimator": result.estimator,
            "horizon": result.horizon(),
            "truncated": result.truncated,
        }),
    )?;
    Ok(result)
}

/// Evaluates the forecast stage, or two user-supplied CSV files.
pub fn eval(run: &Run, reference: Option<&Path>, prediction: Option<&Path>) -> Result<MetricReport> {
    let (label, reference, predicted, truncated) = match (reference, prediction) {
        (Some(r), Some(p)) => {
            let load = |path: &Path| -> Result<TimeSeries> {
                let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
                // foreign files may be unstamped; stamped ones must match
                read_stamped_series(path, stamped_hash(&text).map(|_| run.hash.as_str()))
            };
            let (r, p) = (load(r)?, load(p)?);
            ("external".to_string(), r, p, false)
        }
        (None, None) => {
            let manifest = run.require(Stage::Forecast)?;
            let truncated: Option<Truncation> =
                serde_json::from_value(manifest.details["truncated"].clone()).unwrap_or(None);
            let label = manifest.details["estimator"].as_str().unwrap_or("forecast").to_string();
            (
                label,
                run.read_series(Stage::Forecast, "reference.csv")?,
                run.read_series(Stage::Forecast, "predicted.csv")?,
                truncated.is_some(),
            )
        }
        _ => {
            return Err(CliError::Config(
                "--reference and --prediction must be given together".into(),
            ))
        }
    };
    if reference.dim() != predicted.dim() || reference.len() != predicted.len() {
        return Err(CliError::Config(format!(
            "reference is {}x{}, prediction {}x{}",
            reference.len(),
            reference.dim(),
            predicted.len(),
            predicted.dim()
        )));
    }
    let report = pipeline::evaluate(
        run.config,
        &label,
        reference.values(),
        predicted.values(),
        reference.dt(),
        truncated,
    )?;
    run.create(Stage::Eval)?;
    run.write_text(Stage::Eval, "report.json", &(report.to_json()? + "\n"))?;
    run.write_csv(
        Stage::Eval,
        "report.csv",
        &format!("{}\n{}\n", MetricReport::csv_header(), report.csv_row()),
    )?;
    run.write_manifest(
        Stage::Eval,
        &["report.json", "report.csv"],
        json!({ "t_valid": report.t_valid, "nmse": report.nmse }),
    )?;
    Ok(report)
}

pub fn bench(config: &BenchConfig, out: &Path) -> Result<Vec<bench::BenchRow>> {
    let rows = bench::run(config)?;
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let text = serde_json::to_string(config).expect("bench config serializes");
    let hash = crate::config::sha256_hex(text.as_bytes());
    let path = out.join("bench.csv");
    std::fs::write(&path, format!("{}{hash}\n{}", crate::artifacts::HASH_PREFIX, bench::to_csv(&rows)))
        .map_err(|e| CliError::io(&path, e))?;
    let path = out.join("bench_config.json");
    std::fs::write(&path, serde_json::to_string_pretty(config).expect("bench config serializes") + "\n")
        .map_err(|e| CliError::io(&path, e))?;
    Ok(rows)
}

pub fn load_bench_config(source: Option<&str>, seed: Option<u64>) -> Result<BenchConfig> {
    let mut config = match source {
        None => BenchConfig::default(),
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read bench config {path}: {e}")))?;
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("bench config: {e}")))?
        }
    };
    if let Some(seed) = seed {
        config.seed = seed;
    }
    config.validate()?;
    Ok(config)
}

pub fn load_config(source: &str, seed: Option<u64>) -> Result<ExperimentConfig> {
    let mut config = ExperimentConfig::load(source)?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    Ok(config)
}
