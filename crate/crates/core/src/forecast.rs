//! Path continuation, open-loop forecasting and valid prediction time.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::datasets::format_value;
use crate::error::{Error, Result};
use crate::estimator::FittedEstimator;
use crate::linsolve::DenseMatrix;

pub const VALID_TIME_THRESHOLD: f64 = 0.2;
pub const LORENZ_LYAPUNOV: f64 = 0.9056;
pub const MACKEY_GLASS_LYAPUNOV: f64 = 0.006;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ForecastMode {
    PathContinuation,
    OpenLoop,
}

/// Where and why a rollout stopped early.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truncation {
    pub step: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRun {
    pub mode: ForecastMode,
    pub estimator: String,
    pub predicted: DenseMatrix,
    pub reference: DenseMatrix,
    pub dt: f64,
    pub truncated: Option<Truncation>,
}

/// Rollout of `h` steps: `seed` is the first unseen input, and every
/// prediction becomes the next input. Numerical failures end the rollout and
/// are reported with the step at which they happened.
pub fn path_continue(
    fitted: &FittedEstimator,
    seed: &[f64],
    h: usize,
) -> Result<(DenseMatrix, Option<Truncation>)> {
    if fitted.input_dim() != fitted.output_dim() {
        return Err(Error::invalid(format!(
            "path continuation needs output dimension {} to equal input dimension {}",
            fitted.output_dim(),
            fitted.input_dim()
        )));
    }
    let d = fitted.output_dim();
    let mut session = fitted.session();
    let mut data = Vec::with_capacity(h * d);
    let mut input = seed.to_vec();
    for step in 0..h {
        match session.push(&input) {
            Ok(y) => {
                data.extend_from_slice(&y);
                input = y;
            }
            Err(e) if e.is_numerical() => {
                log::warn!("rollout stopped at step {step}: {e}");
                let rows = data.len() / d;
                return Ok((
                    DenseMatrix::new(rows, d, data)?,
                    Some(Truncation {
                        step,
                        reason: e.to_string(),
                    }),
                ));
            }
            Err(e) => return Err(e),
        }
    }
    Ok((DenseMatrix::new(h, d, data)?, None))
}

/// One prediction per test input, the inputs continuing the training sequence.
pub fn open_loop(fitted: &FittedEstimator, test_inputs: &DenseMatrix) -> Result<DenseMatrix> {
    let mut session = fitted.session();
    let mut out = DenseMatrix::zeros(test_inputs.rows(), fitted.output_dim());
    for t in 0..test_inputs.rows() {
        let y = session.push(test_inputs.row(t))?;
        out.row_mut(t).copy_from_slice(&y);
    }
    Ok(out)
}

impl ForecastRun {
    /// Path continuation compared against `reference`, the values following
    /// `seed`.
    pub fn path_continuation(
        fitted: &FittedEstimator,
        seed: &[f64],
        reference: &DenseMatrix,
        dt: f64,
    ) -> Result<Self> {
        let (predicted, truncated) = path_continue(fitted, seed, reference.rows())?;
        let reference = reference.slice_rows(0, predicted.rows());
        Ok(Self {
            mode: ForecastMode::PathContinuation,
            estimator: fitted.spec.label(),
            predicted,
            reference,
            dt,
            truncated,
        })
    }

    pub fn open_loop(
        fitted: &FittedEstimator,
        test_inputs: &DenseMatrix,
        reference: &DenseMatrix,
        dt: f64,
    ) -> Result<Self> {
        if test_inputs.rows() != reference.rows() {
            return Err(Error::invalid(format!(
                "{} test inputs but {} reference outputs",
                test_inputs.rows(),
                reference.rows()
            )));
        }
        Ok(Self {
            mode: ForecastMode::OpenLoop,
            estimator: fitted.spec.label(),
            predicted: open_loop(fitted, test_inputs)?,
            reference: reference.clone(),
            dt,
            truncated: None,
        })
    }

    pub fn horizon(&self) -> usize {
        self.predicted.rows()
    }

    /// `step,t,ref_c*,pred_c*,error` with the Euclidean error per step.
    pub fn to_csv(&self) -> String {
        let d = self.predicted.cols();
        let mut s = String::new();
        writeln!(s, "# mode={:?} estimator={}", self.mode, self.estimator).unwrap();
        if let Some(t) = &self.truncated {
            writeln!(s, "# truncated at step {}: {}", t.step, t.reason).unwrap();
        }
        s.push_str("step,t");
        for j in 0..d {
            write!(s, ",ref_c{j}").unwrap();
        }
        for j in 0..d {
            write!(s, ",pred_c{j}").unwrap();
        }
        s.push_str(",error\n");
        for k in 0..self.horizon() {
            let r = self.reference.row(k);
            let p = self.predicted.row(k);
            let err = r.iter().zip(p).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            write!(s, "{},{}", k + 1, format_value((k + 1) as f64 * self.dt)).unwrap();
            for v in r.iter().chain(p) {
                write!(s, ",{}", format_value(*v)).unwrap();
            }
            writeln!(s, ",{}", format_value(err)).unwrap();
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidTime {
    /// Valid time in Lyapunov times.
    pub lyapunov_times: f64,
    /// Steps ahead at the first threshold crossing, or the horizon if censored.
    pub steps: usize,
    /// True if the error never crossed the threshold.
    pub censored: bool,
}

/// Normalized error `e(k) = ‖ŷ_k - y_k‖ / sqrt(mean_k ‖y_k - ȳ‖²)` per step.
pub fn normalized_errors(reference: &DenseMatrix, predicted: &DenseMatrix) -> Result<Vec<f64>> {
    if reference.shape() != predicted.shape() {
        return Err(Error::invalid(format!(
            "reference is {:?}, prediction {:?}",
            reference.shape(),
            predicted.shape()
        )));
    }
    let (h, d) = reference.shape();
    if h == 0 {
        return Err(Error::invalid("empty forecast"));
    }
    let mut mean = vec![0.0; d];
    for row in reference.row_iter() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= h as f64);
    let spread = reference
        .row_iter()
        .map(|r| r.iter().zip(&mean).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
        .sum::<f64>()
        / h as f64;
    let scale = spread.sqrt();
    if !(scale > 0.0) {
        return Err(Error::invalid("reference has no spread; normalized error undefined"));
    }
    Ok(reference
        .row_iter()
        .zip(predicted.row_iter())
        .map(|(r, p)| r.iter().zip(p).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() / scale)
        .collect())
}

/// `T_valid = k*·dt·λ_top`, `k*` the number of steps ahead at which `e`
/// first exceeds `threshold`.
pub fn valid_time(
    reference: &DenseMatrix,
    predicted: &DenseMatrix,
    threshold: f64,
    lyapunov_exponent: f64,
    dt: f64,
) -> Result<ValidTime> {
    if !(lyapunov_exponent > 0.0) {
        return Err(Error::invalid(format!(
            "Lyapunov exponent must be positive, got {lyapunov_exponent}"
        )));
    }
    if !(dt > 0.0) {
        return Err(Error::invalid(format!("dt must be positive, got {dt}")));
    }
    let e = normalized_errors(reference, predicted)?;
    let (steps, censored) = match e.iter().position(|&v| !(v <= threshold)) {
        Some(k) => (k + 1, false),
        None => (e.len(), true),
    };
    Ok(ValidTime {
        lyapunov_times: steps as f64 * dt * lyapunov_exponent,
        steps,
        censored,
    })
}

/// Steps covering `⌈lyapunov_times⌉` Lyapunov times, capped at `horizon`.
pub fn lyapunov_horizon(lyapunov_times: f64, dt: f64, lyapunov_exponent: f64, horizon: usize) -> usize {
    let units = lyapunov_times.ceil().max(1.0);
    let steps = (units / (dt * lyapunov_exponent)).round() as usize;
    steps.clamp(1, horizon.max(1))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn circle(h: usize) -> DenseMatrix {
        let rows: Vec<[f64; 2]> = (0..h)
            .map(|k| {
                let a = k as f64 * 0.1;
                [a.cos(), a.sin()]
            })
            .collect();
        DenseMatrix::from_rows(&rows).unwrap()
    }

    #[test]
    fn identical_series_are_censored() {
        let y = circle(300);
        let v = valid_time(&y, &y, 0.2, LORENZ_LYAPUNOV, 0.005).unwrap();
        assert!(v.censored);
        assert_eq!(v.steps, 300);
        assert!((v.lyapunov_times - 300.0 * 0.005 * LORENZ_LYAPUNOV).abs() < 1e-12);
    }

    #[test]
    fn constant_offset_fails_at_first_step() {
        let y = circle(200);
        let e = normalized_errors(&y, &y).unwrap();
        assert!(e.iter().all(|&v| v == 0.0));
        let mut p = y.clone();
        // RMS spread of a unit circle is 1
        for k in 0..p.rows() {
            p[(k, 0)] += 0.3;
        }
        let v = valid_time(&y, &p, 0.2, LORENZ_LYAPUNOV, 0.005).unwrap();
        assert_eq!(v.steps, 1);
        assert!((v.lyapunov_times - 0.005 * LORENZ_LYAPUNOV).abs() < 1e-15);
    }

    #[test]
    fn crossing_at_step_100() {
        let y = circle(400);
        let mut p = y.clone();
        for k in 99..400 {
            p[(k, 1)] += 0.5;
        }
        let v = valid_time(&y, &p, 0.2, 0.9056, 0.005).unwrap();
        assert_eq!(v.steps, 100);
        assert!((v.lyapunov_times - 0.45280).abs() < 1e-12);
        assert!(!v.censored);
    }

    #[test]
    fn horizon_in_steps() {
        assert_eq!(lyapunov_horizon(7.2, 0.005, 0.9056, 10_000), (8.0_f64 / (0.005 * 0.9056)).round() as usize);
        assert_eq!(lyapunov_horizon(50.0, 0.005, 0.9056, 100), 100);
    }
}
