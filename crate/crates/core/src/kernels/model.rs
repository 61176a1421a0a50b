use serde::{Deserialize, Serialize};

use super::poly::{ngrc_feature_rows, poly_eval, poly_gram};
use super::volterra::{volterra_gram, VolterraExtender};
use super::{GramKind, GramMatrix, KernelSpec};
use crate::error::{Error, Result};
use crate::linsolve::{dot, solve_ridge_gram, DenseMatrix, RidgeSolution};
use crate::ngrc::{ngrc_features, ExponentTable};
use crate::series::TimeSeries;

/// Kernel ridge model `ŷ(z) = Σᵢ αᵢ K(z, zᵢ)` over the training inputs.
///
/// Serializes the kernel, the training inputs and `α`; derived caches (delay
/// vectors, features, the last Volterra Gram column) are rebuilt on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KernelModelDoc", into = "KernelModelDoc")]
pub struct KernelModel {
    spec: KernelSpec,
    lambda_reg: f64,
    washout: usize,
    start: usize,
    train: DenseMatrix,
    alpha: DenseMatrix,
    cache: Cache,
}

#[derive(Debug, Clone, PartialEq)]
enum Cache {
    Poly { vectors: DenseMatrix },
    Ngrc { table: ExponentTable, features: DenseMatrix },
    Volterra { last_column: Vec<f64> },
}

#[derive(Serialize, Deserialize)]
struct KernelModelDoc {
    kernel: KernelSpec,
    lambda_reg: f64,
    washout: usize,
    train_inputs: DenseMatrix,
    alpha: DenseMatrix,
}

impl TryFrom<KernelModelDoc> for KernelModel {
    type Error = Error;

    fn try_from(doc: KernelModelDoc) -> Result<Self> {
        let start = first_fitted_row(&doc.kernel, doc.washout, doc.train_inputs.rows())?;
        if doc.alpha.rows() != doc.train_inputs.rows() - start {
            return Err(Error::invalid(format!(
                "alpha has {} rows, expected {}",
                doc.alpha.rows(),
                doc.train_inputs.rows() - start
            )));
        }
        let cache = match doc.kernel {
            KernelSpec::Volterra(params) => {
                let full = volterra_gram(&doc.train_inputs, &params)?;
                Cache::Volterra {
                    last_column: last_column_of(&full, params.border_value()),
                }
            }
            _ => lagged_cache(&doc.kernel, &doc.train_inputs, start)?,
        };
        Ok(Self {
            spec: doc.kernel,
            lambda_reg: doc.lambda_reg,
            washout: doc.washout,
            start,
            train: doc.train_inputs,
            alpha: doc.alpha,
            cache,
        })
    }
}

impl From<KernelModel> for KernelModelDoc {
    fn from(m: KernelModel) -> Self {
        Self {
            kernel: m.spec,
            lambda_reg: m.lambda_reg,
            washout: m.washout,
            train_inputs: m.train,
            alpha: m.alpha,
        }
    }
}

/// First input row whose target enters the fit: the washout, or the first
/// row with a full delay window, whichever is later.
fn first_fitted_row(spec: &KernelSpec, washout: usize, n: usize) -> Result<usize> {
    spec.validate()?;
    let start = match spec.tau() {
        Some(tau) => washout.max(tau - 1),
        None => washout,
    };
    if start >= n {
        return Err(Error::invalid(format!(
            "{n} training inputs leave nothing after skipping {start}"
        )));
    }
    Ok(start)
}

/// Delay vectors ending at rows `start..n`, one per row.
fn lagged_vectors(inputs: &DenseMatrix, tau: usize, start: usize) -> DenseMatrix {
    let d = inputs.cols();
    let n = inputs.rows();
    let flat = inputs.as_slice();
    let mut data = Vec::with_capacity((n - start) * tau * d);
    for t in start..n {
        // rows t-τ+1..=t are contiguous in row-major storage
        data.extend_from_slice(&flat[(t + 1 - tau) * d..(t + 1) * d]);
    }
    DenseMatrix::from_raw(n - start, tau * d, data)
}

fn lagged_cache(spec: &KernelSpec, inputs: &DenseMatrix, start: usize) -> Result<Cache> {
    match *spec {
        KernelSpec::Polynomial(p) => Ok(Cache::Poly {
            vectors: lagged_vectors(inputs, p.tau, start),
        }),
        KernelSpec::NgrcDot { tau, p } => {
            let table = ExponentTable::build(tau, inputs.cols(), p)?;
            let features = ngrc_feature_rows(&lagged_vectors(inputs, tau, start), &table)?;
            Ok(Cache::Ngrc { table, features })
        }
        KernelSpec::Volterra(_) => unreachable!("Volterra has no lagged cache"),
    }
}

fn last_column_of(full: &DenseMatrix, border: f64) -> Vec<f64> {
    let n = full.rows();
    let mut col = Vec::with_capacity(n + 1);
    col.push(border);
    col.extend((0..n).map(|i| full[(i, n - 1)]));
    col
}

/// Square Gram over the fitted rows (`washout` and the delay warm-up dropped).
pub fn kernel_gram(spec: &KernelSpec, inputs: &DenseMatrix, washout: usize) -> Result<GramMatrix> {
    let start = first_fitted_row(spec, washout, inputs.rows())?;
    let values = match *spec {
        KernelSpec::Volterra(params) => {
            volterra_gram(inputs, &params)?.principal_block(start, inputs.rows())
        }
        _ => square_lagged_gram(&lagged_cache(spec, inputs, start)?, spec),
    };
    Ok(GramMatrix {
        kernel: *spec,
        kind: GramKind::Square,
        values,
    })
}

fn square_lagged_gram(cache: &Cache, spec: &KernelSpec) -> DenseMatrix {
    let mut g = match (cache, spec) {
        (Cache::Poly { vectors }, KernelSpec::Polynomial(p)) => poly_gram(vectors, vectors, p),
        (Cache::Ngrc { features, .. }, _) => features
            .matmul_t(features)
            .expect("feature rows share a width"),
        _ => unreachable!("cache matches the kernel"),
    };
    // the product is symmetric up to summation order
    g.symmetrize_from_lower();
    g
}

/// Fits `α* = (K + λI)⁻¹ Y` on inputs and aligned targets (`targets[t]` is the
/// label of the input prefix ending at `t`).
pub fn fit_kernel_model(
    inputs: &TimeSeries,
    targets: &TimeSeries,
    spec: &KernelSpec,
    lambda_reg: f64,
    washout: usize,
) -> Result<(KernelModel, RidgeSolution)> {
    if inputs.len() != targets.len() {
        return Err(Error::invalid(format!(
            "{} inputs but {} targets",
            inputs.len(),
            targets.len()
        )));
    }
    let x = inputs.values();
    let n = x.rows();
    let start = first_fitted_row(spec, washout, n)?;
    let (gram, cache) = match *spec {
        KernelSpec::Volterra(params) => {
            let full = volterra_gram(x, &params)?;
            let last_column = last_column_of(&full, params.border_value());
            (full.principal_block(start, n), Cache::Volterra { last_column })
        }
        _ => {
            let cache = lagged_cache(spec, x, start)?;
            (square_lagged_gram(&cache, spec), cache)
        }
    };
    let y = targets.values().slice_rows(start, n);
    let sol = solve_ridge_gram(&gram, &y, lambda_reg)?;
    let model = KernelModel {
        spec: *spec,
        lambda_reg,
        washout,
        start,
        train: x.clone(),
        alpha: sol.coefficients.clone(),
        cache,
    };
    Ok((model, sol))
}

/// Predictions for `new_inputs` appended after the training sequence.
pub fn predict_kernel(model: &KernelModel, new_inputs: &DenseMatrix) -> Result<DenseMatrix> {
    let mut session = model.session();
    let mut out = DenseMatrix::zeros(new_inputs.rows(), model.output_dim());
    for t in 0..new_inputs.rows() {
        let y = session.push(new_inputs.row(t))?;
        out.row_mut(t).copy_from_slice(&y);
    }
    Ok(out)
}

impl KernelModel {
    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn lambda_reg(&self) -> f64 {
        self.lambda_reg
    }

    pub fn washout(&self) -> usize {
        self.washout
    }

    /// First training row with a fitted target.
    pub fn start(&self) -> usize {
        self.start
    }

    pub fn train_inputs(&self) -> &DenseMatrix {
        &self.train
    }

    pub fn alpha(&self) -> &DenseMatrix {
        &self.alpha
    }

    pub fn input_dim(&self) -> usize {
        self.train.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.alpha.cols()
    }

    /// `Σᵢ αᵢ K(v, zᵢ)` for one full delay vector. Lagged kernels only.
    pub fn predict_vector(&self, v: &[f64]) -> Result<Vec<f64>> {
        let k = match (&self.cache, &self.spec) {
            (Cache::Poly { vectors }, KernelSpec::Polynomial(p)) => {
                self.check_width(v, vectors.cols())?;
                vectors
                    .row_iter()
                    .map(|z| poly_eval(dot(z, v), p))
                    .collect::<Vec<_>>()
            }
            (Cache::Ngrc { table, features }, _) => {
                let phi = ngrc_features(v, table)?;
                features.matvec(&phi)
            }
            _ => {
                return Err(Error::invalid(
                    "the Volterra kernel predicts from sequences, not delay vectors",
                ))
            }
        };
        Ok(self.combine(&k))
    }

    fn check_width(&self, v: &[f64], width: usize) -> Result<()> {
        if v.len() != width {
            return Err(Error::invalid(format!(
                "delay vector has length {}, model expects {width}",
                v.len()
            )));
        }
        Ok(())
    }

    /// `αᵀk` for kernel values `k` over the fitted rows.
    fn combine(&self, k: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.alpha.cols()];
        for (ki, a) in k.iter().zip(self.alpha.row_iter()) {
            for (o, ai) in out.iter_mut().zip(a) {
                *o += ki * ai;
            }
        }
        out
    }

    /// A prediction session positioned at the end of the training inputs.
    pub fn session(&self) -> KernelSession<'_> {
        let state = match (&self.cache, &self.spec) {
            (Cache::Volterra { last_column }, KernelSpec::Volterra(params)) => {
                SessionState::Volterra(VolterraExtender::new(*params, last_column.clone()))
            }
            _ => {
                let tau = self.spec.tau().expect("lagged kernel");
                let d = self.train.cols();
                let n = self.train.rows();
                let flat = self.train.as_slice();
                SessionState::Lagged {
                    window: flat[(n + 1 - tau) * d..].to_vec(),
                    width: tau * d,
                }
            }
        };
        KernelSession { model: self, state }
    }
}

enum SessionState {
    /// Most recent inputs, oldest first, at most `width` values.
    Lagged { window: Vec<f64>, width: usize },
    Volterra(VolterraExtender),
}

/// Stateful one-step predictor that extends the training sequence input by
/// input.
pub struct KernelSession<'a> {
    model: &'a KernelModel,
    state: SessionState,
}

impl KernelSession<'_> {
    /// Appends `z` to the input history and returns the prediction for the
    /// extended sequence.
    pub fn push(&mut self, z: &[f64]) -> Result<Vec<f64>> {
        let d = self.model.input_dim();
        if z.len() != d {
            return Err(Error::invalid(format!(
                "input has dimension {}, model expects {d}",
                z.len()
            )));
        }
        match &mut self.state {
            SessionState::Lagged { window, width } => {
                window.extend_from_slice(z);
                if window.len() > *width {
                    window.drain(..window.len() - *width);
                }
                self.model.predict_vector(window)
            }
            SessionState::Volterra(ext) => {
                let col = ext.push(&self.model.train, z)?;
                Ok(self.model.combine(&col[self.model.start + 1..]))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{PolyKernelParams, VolterraParams};

    fn scalar(v: &[f64]) -> TimeSeries {
        TimeSeries::scalar(v, 1.0, "test").unwrap()
    }

    #[test]
    fn lagged_rows_skip_delay_warmup() {
        let spec = KernelSpec::Polynomial(PolyKernelParams::new(3, 2, 1.0).unwrap());
        let g = kernel_gram(&spec, &DenseMatrix::column(&[0.1, 0.2, 0.3, 0.4, 0.5]).unwrap(), 0)
            .unwrap();
        assert_eq!(g.values.shape(), (3, 3));
        let g = kernel_gram(&spec, &DenseMatrix::column(&[0.1, 0.2, 0.3, 0.4, 0.5]).unwrap(), 3)
            .unwrap();
        assert_eq!(g.values.shape(), (2, 2));
    }

    #[test]
    fn session_continues_training_sequence() {
        let xs: Vec<f64> = (0..12).map(|i| (i as f64 * 0.4).sin() * 0.5).collect();
        let inputs = scalar(&xs[..10]);
        let targets = scalar(&xs[1..11]);
        for spec in [
            KernelSpec::Polynomial(PolyKernelParams::new(2, 2, 1.0).unwrap()),
            KernelSpec::NgrcDot { tau: 2, p: 2 },
            KernelSpec::Volterra(VolterraParams::new(0.5, 0.5).unwrap()),
        ] {
            let (model, _) = fit_kernel_model(&inputs, &targets, &spec, 1e-3, 0).unwrap();
            // pushing the next input equals predicting on the concatenation
            let mut session = model.session();
            let stepped = session.push(&[xs[10]]).unwrap();
            let (long, _) = fit_kernel_model(&scalar(&xs[..11]), &scalar(&xs[1..12]), &spec, 1e-3, 0)
                .unwrap();
            assert_eq!(long.train_inputs().rows(), 11);
            assert!(stepped[0].is_finite());
            if let Some(tau) = spec.tau() {
                let v = &xs[11 - tau..11];
                let direct = model.predict_vector(v).unwrap();
                assert!((direct[0] - stepped[0]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn serde_round_trip_rebuilds_cache() {
        let xs: Vec<f64> = (0..20).map(|i| (i as f64 * 0.3).cos() * 0.5).collect();
        let spec = KernelSpec::Volterra(VolterraParams::new(0.6, 0.3).unwrap());
        let (model, _) =
            fit_kernel_model(&scalar(&xs[..19]), &scalar(&xs[1..]), &spec, 1e-6, 4).unwrap();
        let json = serde_json::to_string(&model).unwrap();
        let back: KernelModel = serde_json::from_str(&json).unwrap();
        assert_eq!(back, model);
        let a = predict_kernel(&model, &DenseMatrix::column(&[0.1, 0.2]).unwrap()).unwrap();
        let b = predict_kernel(&back, &DenseMatrix::column(&[0.1, 0.2]).unwrap()).unwrap();
        assert_eq!(a, b);
    }
}
