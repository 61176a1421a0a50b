//! Wall-clock timings of training, Gram construction and one-step prediction.

use std::fmt::Write as _;
use std::time::Instant;

use ngrc_core::datasets::format_value;
use ngrc_core::estimator::{fit_estimator, EstimatorSpec, FittedEstimator, TargetTransform};
use ngrc_core::kernels::{kernel_gram, volterra_gram_into, KernelSpec, PolyKernelParams, VolterraParams};
use ngrc_core::ngrc::{feature_dim, fit_ngrc};
use ngrc_core::rng::SeededRng;
use ngrc_core::{DenseMatrix, TimeSeries};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchCase {
    pub n: usize,
    pub tau: usize,
    pub d: usize,
    pub p: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    pub version: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "repeats")]
    pub repeats: usize,
    #[serde(default = "warmup")]
    pub warmup: usize,
    #[serde(default = "lambda_reg")]
    pub lambda_reg: f64,
    #[serde(default = "volterra_lambda")]
    pub volterra_lambda: f64,
    #[serde(default = "volterra_theta")]
    pub volterra_theta: f64,
    /// Steps timed per prediction measurement.
    #[serde(default = "predict_steps")]
    pub predict_steps: usize,
    pub cases: Vec<BenchCase>,
}

fn repeats() -> usize {
    5
}
fn warmup() -> usize {
    1
}
fn lambda_reg() -> f64 {
    1e-6
}
fn volterra_lambda() -> f64 {
    0.5
}
fn volterra_theta() -> f64 {
    0.5
}
fn predict_steps() -> usize {
    50
}

impl Default for BenchConfig {
    /// The degree sweep at `n = 2000`, `τd = 8`, and a doubled `n`.
    fn default() -> Self {
        let mut cases: Vec<BenchCase> = (2..=5).map(|p| BenchCase { n: 2000, tau: 8, d: 1, p }).collect();
        cases.push(BenchCase { n: 4000, tau: 8, d: 1, p: 2 });
        Self {
            version: 1,
            seed: 0,
            repeats: repeats(),
            warmup: warmup(),
            lambda_reg: lambda_reg(),
            volterra_lambda: volterra_lambda(),
            volterra_theta: volterra_theta(),
            predict_steps: predict_steps(),
            cases,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.repeats < 5 {
            return Err(CliError::Config(format!("repeats: at least 5 needed, got {}", self.repeats)));
        }
        if self.cases.is_empty() {
            return Err(CliError::Config("cases: empty".into()));
        }
        for (i, c) in self.cases.iter().enumerate() {
            if c.n == 0 || c.tau == 0 || c.d == 0 || c.p == 0 {
                return Err(CliError::Config(format!("cases[{i}]: n, tau, d and p must be positive")));
            }
        }
        VolterraParams::new(self.volterra_lambda, self.volterra_theta)
            .map_err(|e| CliError::Config(format!("volterra: {e}")))?;
        Ok(())
    }
}

/// Medians in seconds, plus the operation counts of the asymptotic costs
/// `nN² + N³`, `n²τd`, `n²d`, `N`, `nτd` and `nd`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub case: BenchCase,
    pub feature_dim: usize,
    pub ngrc_train: f64,
    pub poly_gram: f64,
    pub volterra_gram: f64,
    pub ngrc_step: f64,
    pub poly_step: f64,
    pub volterra_step: f64,
}

impl BenchRow {
    pub fn csv_header() -> &'static str {
        "n,tau,d,p,feature_dim,ngrc_train_s,poly_gram_s,volterra_gram_s,ngrc_step_s,poly_step_s,volterra_step_s,\
         ngrc_train_cost,poly_gram_cost,volterra_gram_cost,ngrc_step_cost,poly_step_cost,volterra_step_cost"
    }

    pub fn csv_row(&self) -> String {
        let BenchCase { n, tau, d, p } = self.case;
        let (n_f, big_n, td) = (n as f64, self.feature_dim as f64, (tau * d) as f64);
        let costs = [
            n_f * big_n * big_n + big_n.powi(3),
            n_f * n_f * td,
            n_f * n_f * d as f64,
            big_n,
            n_f * td,
            n_f * d as f64,
        ];
        let mut s = format!("{n},{tau},{d},{p},{}", self.feature_dim);
        for v in [
            self.ngrc_train,
            self.poly_gram,
            self.volterra_gram,
            self.ngrc_step,
            self.poly_step,
            self.volterra_step,
        ]
        .into_iter()
        .chain(costs)
        {
            write!(s, ",{}", format_value(v)).unwrap();
        }
        s
    }
}

pub fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[m]
    } else {
        0.5 * (xs[m - 1] + xs[m])
    }
}

/// Wall-clock seconds of one call.
fn time_once<T>(f: impl FnOnce() -> Result<T>) -> Result<f64> {
    let start = Instant::now();
    std::hint::black_box(f()?);
    Ok(start.elapsed().as_secs_f64())
}

/// Uniform inputs on `[-1, 1]^d` scaled into the unit ball.
fn bench_inputs(n: usize, d: usize, seed: u64) -> Result<TimeSeries> {
    let mut rng = SeededRng::new(seed);
    let scale = 1.0 / (d as f64).sqrt();
    let data = (0..n * d).map(|_| scale * rng.uniform_range(-1.0, 1.0)).collect();
    Ok(TimeSeries::new(DenseMatrix::new(n, d, data)?, 1.0, "bench")?)
}

/// Inputs and fitted models of one case, ready to be timed.
struct Prepared {
    case: BenchCase,
    x: TimeSeries,
    y: TimeSeries,
    poly: KernelSpec,
    volterra: VolterraParams,
    fitted: [Option<FittedEstimator>; 3],
    /// Reused by every Volterra Gram timing, so fresh-page faults stay out
    /// of the measurement.
    gram: DenseMatrix,
}

const QUANTITIES: usize = 6;

impl Prepared {
    fn new(config: &BenchConfig, case: BenchCase) -> Result<Self> {
        let BenchCase { n, tau, d, p } = case;
        let series = bench_inputs(n + 1, d, config.seed)?;
        let x = series.slice(0, n)?;
        let y = series.slice(1, n + 1)?;
        let tt = TargetTransform::SameAsInputs;
        let lagged = n > tau;
        let fit = |spec: EstimatorSpec| fit_estimator(&spec, &x, &y, &tt);
        let mut vspec = EstimatorSpec::volterra(config.volterra_lambda, config.volterra_theta, config.lambda_reg);
        if let EstimatorSpec::Volterra { washout, .. } = &mut vspec {
            *washout = 0;
        }
        let fitted = [
            lagged.then(|| fit(EstimatorSpec::ngrc(tau, p, config.lambda_reg))).transpose()?,
            lagged.then(|| fit(EstimatorSpec::polynomial(tau, p, config.lambda_reg))).transpose()?,
            Some(fit(vspec)?),
        ];
        Ok(Self {
            case,
            poly: KernelSpec::Polynomial(PolyKernelParams::new(tau, p, 1.0)?),
            volterra: VolterraParams::new(config.volterra_lambda, config.volterra_theta)?,
            x,
            y,
            fitted,
            gram: DenseMatrix::zeros(n, n),
        })
    }

    /// One timing of quantity `q`, in the column order of [`BenchRow`];
    /// `NaN` where the series is shorter than the delay.
    fn measure(&mut self, config: &BenchConfig, q: usize) -> Result<f64> {
        let BenchCase { n, tau, p, .. } = self.case;
        let x = self.x.values();
        match q {
            0 if n >= tau => time_once(|| Ok(fit_ngrc(&self.x, &self.y, tau, p, config.lambda_reg)?)),
            1 if n >= tau => time_once(|| Ok(kernel_gram(&self.poly, x, 0)?)),
            2 => time_once(|| Ok(volterra_gram_into(x, &self.volterra, &mut self.gram)?)),
            3..=5 => match &self.fitted[q - 3] {
                Some(fitted) => {
                    let steps = config.predict_steps.max(1);
                    let total = time_once(|| {
                        let mut session = fitted.session();
                        for k in 0..steps {
                            session.push(self.x.row(k % self.x.len()))?;
                        }
                        Ok(())
                    })?;
                    Ok(total / steps as f64)
                }
                None => Ok(f64::NAN),
            },
            _ => Ok(f64::NAN),
        }
    }
}

/// Times every case. Repeats run round-robin over the cases so that slow
/// spells of the machine hit all cases alike.
pub fn run(config: &BenchConfig) -> Result<Vec<BenchRow>> {
    config.validate()?;
    let mut prepared: Vec<Prepared> = config
        .cases
        .iter()
        .map(|&case| {
            log::info!("bench n={} tau={} d={} p={}", case.n, case.tau, case.d, case.p);
            Prepared::new(config, case)
        })
        .collect::<Result<_>>()?;
    let mut samples = vec![vec![Vec::with_capacity(config.repeats); QUANTITIES]; prepared.len()];
    for round in 0..config.warmup + config.repeats {
        for (case, per_case) in prepared.iter_mut().zip(&mut samples) {
            for (q, s) in per_case.iter_mut().enumerate() {
                let t = case.measure(config, q)?;
                if round >= config.warmup {
                    s.push(t);
                }
            }
        }
    }
    prepared
        .iter()
        .zip(samples)
        .map(|(case, per_case)| {
            let m: Vec<f64> = per_case.into_iter().map(median).collect();
            let BenchCase { tau, d, p, .. } = case.case;
            Ok(BenchRow {
                case: case.case,
                feature_dim: feature_dim(tau, d, p)?,
                ngrc_train: m[0],
                poly_gram: m[1],
                volterra_gram: m[2],
                ngrc_step: m[3],
                poly_step: m[4],
                volterra_step: m[5],
            })
        })
        .collect()
}

pub fn to_csv(rows: &[BenchRow]) -> String {
    let mut s = String::from(BenchRow::csv_header());
    s.push('\n');
    for r in rows {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point_bench_completes() {
        let config = BenchConfig {
            cases: vec![BenchCase { n: 1, tau: 1, d: 1, p: 2 }],
            predict_steps: 2,
            ..BenchConfig::default()
        };
        let rows = run(&config).unwrap();
        assert_eq!(rows.len(), 1);
        assert!(rows[0].volterra_gram.is_finite());
        assert_eq!(to_csv(&rows).lines().count(), 2);
    }

    #[test]
    fn median_of_even_and_odd_lengths() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
