use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linsolve::DenseMatrix;

/// Uniformly sampled multivariate series: one row per time step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    values: DenseMatrix,
    dt: f64,
    origin: String,
}

impl TimeSeries {
    pub fn new(values: DenseMatrix, dt: f64, origin: impl Into<String>) -> Result<Self> {
        if values.rows() == 0 || values.cols() == 0 {
            return Err(Error::invalid("a time series needs at least one row and one column"));
        }
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::invalid(format!("sampling interval must be positive, got {dt}")));
        }
        if !values.all_finite() {
            return Err(Error::invalid("time series contains non-finite values"));
        }
        Ok(Self {
            values,
            dt,
            origin: origin.into(),
        })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R], dt: f64, origin: impl Into<String>) -> Result<Self> {
        Self::new(DenseMatrix::from_rows(rows)?, dt, origin)
    }

    /// Scalar series.
    pub fn scalar(values: &[f64], dt: f64, origin: impl Into<String>) -> Result<Self> {
        Self::new(DenseMatrix::column(values)?, dt, origin)
    }

    pub fn len(&self) -> usize {
        self.values.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.values.cols()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn origin(&self) -> &str {
        &self.origin
    }

    pub fn values(&self) -> &DenseMatrix {
        &self.values
    }

    pub fn into_values(self) -> DenseMatrix {
        self.values
    }

    pub fn row(&self, t: usize) -> &[f64] {
        self.values.row(t)
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.row_iter()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.values.col_to_vec(j)
    }

    /// Rows `start..end`; the label records the range.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.len() {
            return Err(Error::invalid(format!(
                "cannot slice rows {start}..{end} of a {}-row series",
                self.len()
            )));
        }
        Ok(Self {
            values: self.values.slice_rows(start, end),
            dt: self.dt,
            origin: self.origin.clone(),
        })
    }

    pub fn with_values(&self, values: DenseMatrix) -> Result<Self> {
        Self::new(values, self.dt, self.origin.clone())
    }

    pub fn with_origin(mut self, origin: impl Into<String>) -> Self {
        self.origin = origin.into();
        self
    }
}
