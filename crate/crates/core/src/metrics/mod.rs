//! Pointwise errors, Welch PSD error and Wasserstein-1 distances.

mod pointwise;
mod wasserstein;
mod welch;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::datasets::format_value;
use crate::error::{Error, Result};
use crate::linsolve::DenseMatrix;

pub use pointwise::{mae, mape, mdae, nmse, nmse_with_flags, MAPE_EPSILON};
pub use wasserstein::{
    min_cost_assignment, w1_1d, w1_nd, w1_nd_sampled, W1Estimate, W1_ASSIGNMENT_CAP,
};
pub use welch::{psde, welch_psd, Periodogram, Psde};

pub const DEFAULT_NPERSEG: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricSettings {
    /// Welch segment length; clamped to the series length.
    pub nperseg: usize,
    pub overlap: f64,
    /// Highest frequency entering the PSD error; `None` keeps the full grid.
    pub f_cut: Option<f64>,
    pub mape_epsilon: f64,
    pub w1_cap: usize,
    pub w1_seed: u64,
}

impl Default for MetricSettings {
    fn default() -> Self {
        Self {
            nperseg: DEFAULT_NPERSEG,
            overlap: 0.5,
            f_cut: None,
            mape_epsilon: MAPE_EPSILON,
            w1_cap: W1_ASSIGNMENT_CAP,
            w1_seed: 0,
        }
    }
}

/// One row of an error table. Pointwise metrics cover the first
/// `pointwise_steps` rows; PSDE and W1 cover the whole horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub label: String,
    pub pointwise_steps: usize,
    pub nmse: f64,
    pub mae: f64,
    pub mdae: f64,
    pub mape: f64,
    pub psde: f64,
    pub w1: f64,
    pub t_valid: Option<f64>,
    pub t_valid_censored: Option<bool>,
    pub psde_skipped_bins: usize,
    pub w1_subsampled_to: Option<usize>,
    /// Human-readable notes on flagged quantities.
    pub degenerate: Vec<String>,
    pub config: serde_json::Value,
}

impl MetricReport {
    pub fn compute(
        label: impl Into<String>,
        reference: &DenseMatrix,
        predicted: &DenseMatrix,
        pointwise_steps: usize,
        sampling_rate: f64,
        settings: &MetricSettings,
    ) -> Result<Self> {
        pointwise::check_shapes(reference, predicted)?;
        if pointwise_steps == 0 || pointwise_steps > reference.rows() {
            return Err(Error::invalid(format!(
                "pointwise window {pointwise_steps} outside 1..={}",
                reference.rows()
            )));
        }
        let y = reference.slice_rows(0, pointwise_steps);
        let y_hat = predicted.slice_rows(0, pointwise_steps);
        let mut degenerate = Vec::new();
        let (nmse, flat) = match nmse_with_flags(&y, &y_hat) {
            Ok(v) => v,
            Err(_) => (f64::NAN, (0..y.cols()).collect()),
        };
        if !flat.is_empty() {
            degenerate.push(format!("nmse: constant reference in dimensions {flat:?}"));
        }

        let nperseg = settings.nperseg.min(reference.rows());
        let (psde_value, skipped) = if nperseg >= 2 {
            let p = welch_psd(reference, nperseg, settings.overlap, sampling_rate)?;
            let q = welch_psd(predicted, nperseg, settings.overlap, sampling_rate)?;
            let r = psde(&p, &q, settings.f_cut)?;
            (r.value, r.skipped_bins)
        } else {
            degenerate.push("psde: horizon too short for a periodogram".into());
            (f64::NAN, 0)
        };
        if skipped > 0 {
            degenerate.push(format!("psde: {skipped} bins with zero true power skipped"));
        }

        let (w1, subsampled) = if reference.cols() == 1 {
            (w1_1d(reference.as_slice(), predicted.as_slice())?, None)
        } else {
            let e = w1_nd_sampled(reference, predicted, settings.w1_cap, settings.w1_seed)?;
            (e.value, e.subsampled_to)
        };

        Ok(Self {
            label: label.into(),
            pointwise_steps,
            nmse,
            mae: mae(&y, &y_hat)?,
            mdae: mdae(&y, &y_hat)?,
            mape: mape(&y, &y_hat, settings.mape_epsilon)?,
            psde: psde_value,
            w1,
            t_valid: None,
            t_valid_censored: None,
            psde_skipped_bins: skipped,
            w1_subsampled_to: subsampled,
            degenerate,
            config: serde_json::Value::Null,
        })
    }

    pub fn csv_header() -> &'static str {
        "label,t_valid,nmse,mae,mdae,mape,psde,w1,pointwise_steps"
    }

    pub fn csv_row(&self) -> String {
        let mut s = String::new();
        let t = self.t_valid.map(format_value).unwrap_or_default();
        write!(s, "{},{t}", self.label).unwrap();
        for v in [self.nmse, self.mae, self.mdae, self.mape, self.psde, self.w1] {
            write!(s, ",{}", format_value(v)).unwrap();
        }
        write!(s, ",{}", self.pointwise_steps).unwrap();
        s
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_inputs_give_zero_everywhere() {
        let rows: Vec<[f64; 2]> = (0..300)
            .map(|k| [(k as f64 * 0.1).sin(), (k as f64 * 0.37).cos()])
            .collect();
        let y = DenseMatrix::from_rows(&rows).unwrap();
        let r = MetricReport::compute("x", &y, &y, 100, 1.0, &MetricSettings::default()).unwrap();
        for v in [r.nmse, r.mae, r.mdae, r.mape, r.psde, r.w1] {
            assert_eq!(v, 0.0);
        }
        assert_eq!(r.csv_row().split(',').count(), MetricReport::csv_header().split(',').count());
    }
}
