//! Normalization transforms fitted on training rows only, with exact inverses.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::EstimatorKind;
use crate::linsolve::{dot, DenseMatrix};
use crate::series::TimeSeries;

pub const STD_FLOOR: f64 = 1e-12;

/// An unfitted transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TransformKind {
    Identity,
    /// Per-dimension affine map of the training range onto `[0, 1]`.
    MinMax01,
    /// Per-dimension zero mean, unit variance.
    Standardize,
    Demean,
    /// Global scale so the largest training row norm equals `target`.
    MaxNormScale { target: f64 },
    ConstantScale { factor: f64 },
}

/// A fitted transform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Transform {
    Identity,
    MinMax01 {
        min: Vec<f64>,
        range: Vec<f64>,
        /// Dimensions with zero training range, mapped with range 1.
        degenerate: Vec<usize>,
    },
    Standardize {
        mean: Vec<f64>,
        std: Vec<f64>,
        degenerate: Vec<usize>,
    },
    Demean {
        mean: Vec<f64>,
    },
    MaxNormScale {
        scale: f64,
        degenerate: bool,
    },
    ConstantScale {
        factor: f64,
    },
}

fn column_stats(x: &DenseMatrix) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (n, d) = x.shape();
    let mut min = vec![f64::INFINITY; d];
    let mut max = vec![f64::NEG_INFINITY; d];
    let mut mean = vec![0.0; d];
    for row in x.row_iter() {
        for j in 0..d {
            min[j] = min[j].min(row[j]);
            max[j] = max[j].max(row[j]);
            mean[j] += row[j];
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    (min, max, mean)
}

impl Transform {
    pub fn fit(kind: TransformKind, train: &DenseMatrix) -> Result<Self> {
        if train.rows() == 0 {
            return Err(Error::invalid("cannot fit a transform on no rows"));
        }
        let d = train.cols();
        Ok(match kind {
            TransformKind::Identity => Transform::Identity,
            TransformKind::MinMax01 => {
                let (min, max, _) = column_stats(train);
                let mut degenerate = Vec::new();
                let range = (0..d)
                    .map(|j| {
                        let r = max[j] - min[j];
                        if r > 0.0 {
                            r
                        } else {
                            degenerate.push(j);
                            1.0
                        }
                    })
                    .collect();
                Transform::MinMax01 {
                    min,
                    range,
                    degenerate,
                }
            }
            TransformKind::Standardize => {
                let (_, _, mean) = column_stats(train);
                let n = train.rows() as f64;
                let mut var = vec![0.0; d];
                for row in train.row_iter() {
                    for j in 0..d {
                        var[j] += (row[j] - mean[j]).powi(2);
                    }
                }
                let mut degenerate = Vec::new();
                let std = var
                    .iter()
                    .enumerate()
                    .map(|(j, v)| {
                        let s = (v / n).sqrt();
                        if s < STD_FLOOR {
                            degenerate.push(j);
                            STD_FLOOR
                        } else {
                            s
                        }
                    })
                    .collect();
                Transform::Standardize {
                    mean,
                    std,
                    degenerate,
                }
            }
            TransformKind::Demean => Transform::Demean {
                mean: column_stats(train).2,
            },
            TransformKind::MaxNormScale { target } => {
                if !(target > 0.0) || !target.is_finite() {
                    return Err(Error::invalid(format!("norm target must be positive, got {target}")));
                }
                let max_norm = train
                    .row_iter()
                    .map(|r| dot(r, r).sqrt())
                    .fold(0.0_f64, f64::max);
                if max_norm > 0.0 {
                    Transform::MaxNormScale {
                        scale: target / max_norm,
                        degenerate: false,
                    }
                } else {
                    Transform::MaxNormScale {
                        scale: 1.0,
                        degenerate: true,
                    }
                }
            }
            TransformKind::ConstantScale { factor } => {
                if !(factor != 0.0) || !factor.is_finite() {
                    return Err(Error::invalid(format!("scale factor must be nonzero, got {factor}")));
                }
                Transform::ConstantScale { factor }
            }
        })
    }

    pub fn is_degenerate(&self) -> bool {
        match self {
            Transform::MinMax01 { degenerate, .. } | Transform::Standardize { degenerate, .. } => {
                !degenerate.is_empty()
            }
            Transform::MaxNormScale { degenerate, .. } => *degenerate,
            _ => false,
        }
    }

    fn dim(&self) -> Option<usize> {
        match self {
            Transform::MinMax01 { min, .. } => Some(min.len()),
            Transform::Standardize { mean, .. } | Transform::Demean { mean } => Some(mean.len()),
            _ => None,
        }
    }

    pub fn apply_row(&self, row: &mut [f64]) {
        match self {
            Transform::Identity => {}
            Transform::MinMax01 { min, range, .. } => {
                for ((v, m), r) in row.iter_mut().zip(min).zip(range) {
                    *v = (*v - m) / r;
                }
            }
            Transform::Standardize { mean, std, .. } => {
                for ((v, m), s) in row.iter_mut().zip(mean).zip(std) {
                    *v = (*v - m) / s;
                }
            }
            Transform::Demean { mean } => {
                for (v, m) in row.iter_mut().zip(mean) {
                    *v -= m;
                }
            }
            Transform::MaxNormScale { scale, .. } => row.iter_mut().for_each(|v| *v *= scale),
            Transform::ConstantScale { factor } => row.iter_mut().for_each(|v| *v *= factor),
        }
    }

    pub fn invert_row(&self, row: &mut [f64]) {
        match self {
            Transform::Identity => {}
            Transform::MinMax01 { min, range, .. } => {
                for ((v, m), r) in row.iter_mut().zip(min).zip(range) {
                    *v = *v * r + m;
                }
            }
            Transform::Standardize { mean, std, .. } => {
                for ((v, m), s) in row.iter_mut().zip(mean).zip(std) {
                    *v = *v * s + m;
                }
            }
            Transform::Demean { mean } => {
                for (v, m) in row.iter_mut().zip(mean) {
                    *v += m;
                }
            }
            Transform::MaxNormScale { scale, .. } => row.iter_mut().for_each(|v| *v /= scale),
            Transform::ConstantScale { factor } => row.iter_mut().for_each(|v| *v /= factor),
        }
    }
}

/// Transforms applied in order and inverted in reverse order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Pipeline {
    pub steps: Vec<Transform>,
}

impl Pipeline {
    pub fn identity() -> Self {
        Self::default()
    }

    /// Fits each step on the training rows as transformed by the steps before it.
    pub fn fit(kinds: &[TransformKind], train: &DenseMatrix) -> Result<Self> {
        let mut current = train.clone();
        let mut steps = Vec::with_capacity(kinds.len());
        for &kind in kinds {
            let t = Transform::fit(kind, &current)?;
            if t.is_degenerate() {
                log::warn!("{kind:?} fitted on degenerate training data: {t:?}");
            }
            for i in 0..current.rows() {
                t.apply_row(current.row_mut(i));
            }
            steps.push(t);
        }
        Ok(Self { steps })
    }

    fn check_dim(&self, d: usize) -> Result<()> {
        if let Some(want) = self.steps.iter().find_map(Transform::dim) {
            if want != d {
                return Err(Error::invalid(format!(
                    "transform fitted on {want} dimensions, applied to {d}"
                )));
            }
        }
        Ok(())
    }

    pub fn apply_row(&self, row: &mut [f64]) {
        for t in &self.steps {
            t.apply_row(row);
        }
    }

    pub fn invert_row(&self, row: &mut [f64]) {
        for t in self.steps.iter().rev() {
            t.invert_row(row);
        }
    }

    pub fn apply_matrix(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        self.check_dim(x.cols())?;
        let mut out = x.clone();
        for i in 0..out.rows() {
            self.apply_row(out.row_mut(i));
        }
        Ok(out)
    }

    pub fn invert_matrix(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        self.check_dim(x.cols())?;
        let mut out = x.clone();
        for i in 0..out.rows() {
            self.invert_row(out.row_mut(i));
        }
        Ok(out)
    }

    pub fn apply(&self, series: &TimeSeries) -> Result<TimeSeries> {
        series.with_values(self.apply_matrix(series.values())?)
    }

    pub fn invert(&self, series: &TimeSeries) -> Result<TimeSeries> {
        series.with_values(self.invert_matrix(series.values())?)
    }
}

/// Input and output transform lists for one estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSpec {
    pub inputs: Vec<TransformKind>,
    pub outputs: Vec<TransformKind>,
}

/// Output transforms for the covariance targets of the BEKK task.
pub fn bekk_output_transforms() -> Vec<TransformKind> {
    vec![
        TransformKind::ConstantScale { factor: 1000.0 },
        TransformKind::Standardize,
    ]
}

/// Input transforms per estimator: none for NG-RC, `[0, 1]` ranges for the
/// polynomial kernel, and demeaning plus scaling to norm `M·headroom` for the
/// Volterra kernel.
pub fn estimator_pipeline(kind: EstimatorKind, bound: f64, headroom: f64) -> Vec<TransformKind> {
    match kind {
        EstimatorKind::Ngrc => vec![TransformKind::Identity],
        EstimatorKind::Polynomial => vec![TransformKind::MinMax01],
        EstimatorKind::Volterra => vec![
            TransformKind::Demean,
            TransformKind::MaxNormScale {
                target: bound * headroom,
            },
        ],
    }
}
