//! One interface over NG-RC, polynomial-kernel and Volterra-kernel ridge
//! regression, including each estimator's normalization.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{fit_kernel_model, Border, KernelModel, KernelSession, KernelSpec, PolyKernelParams, VolterraParams};
use crate::linsolve::{ConditioningReport, DenseMatrix};
use crate::ngrc::{fit_ngrc_with_report, predict_ngrc, NgrcModel};
use crate::preprocess::{estimator_pipeline, Pipeline, TransformKind};
use crate::series::TimeSeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    Ngrc,
    Polynomial,
    Volterra,
}

impl EstimatorKind {
    pub fn name(&self) -> &'static str {
        match self {
            EstimatorKind::Ngrc => "ngrc",
            EstimatorKind::Polynomial => "polynomial",
            EstimatorKind::Volterra => "volterra",
        }
    }
}

fn default_offset() -> f64 {
    1.0
}

fn default_bound() -> f64 {
    1.0
}

fn default_headroom() -> f64 {
    1.0
}

fn default_volterra_washout() -> usize {
    100
}

/// Hyperparameters of one estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", from = "RawSpec")]
pub enum EstimatorSpec {
    /// `washout` defaults to `tau`.
    Ngrc {
        tau: usize,
        p: usize,
        lambda_reg: f64,
        washout: usize,
    },
    Polynomial {
        tau: usize,
        p: usize,
        lambda_reg: f64,
        #[serde(default = "default_offset")]
        c: f64,
        /// Defaults to `tau`.
        washout: usize,
    },
    Volterra {
        lambda: f64,
        theta: f64,
        lambda_reg: f64,
        #[serde(default = "default_bound")]
        m: f64,
        #[serde(default)]
        border: Border,
        /// Training inputs are scaled to norm `m·headroom`, leaving room for
        /// test inputs that overshoot the training range.
        #[serde(default = "default_headroom")]
        headroom: f64,
        #[serde(default = "default_volterra_washout")]
        washout: usize,
    },
}

/// Wire form of [`EstimatorSpec`] with the lagged washouts optional.
#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
enum RawSpec {
    Ngrc {
        tau: usize,
        p: usize,
        lambda_reg: f64,
        washout: Option<usize>,
    },
    Polynomial {
        tau: usize,
        p: usize,
        lambda_reg: f64,
        #[serde(default = "default_offset")]
        c: f64,
        washout: Option<usize>,
    },
    Volterra {
        lambda: f64,
        theta: f64,
        lambda_reg: f64,
        #[serde(default = "default_bound")]
        m: f64,
        #[serde(default)]
        border: Border,
        #[serde(default = "default_headroom")]
        headroom: f64,
        #[serde(default = "default_volterra_washout")]
        washout: usize,
    },
}

impl From<RawSpec> for EstimatorSpec {
    fn from(raw: RawSpec) -> Self {
        match raw {
            RawSpec::Ngrc { tau, p, lambda_reg, washout } => EstimatorSpec::Ngrc {
                tau,
                p,
                lambda_reg,
                washout: washout.unwrap_or(tau),
            },
            RawSpec::Polynomial { tau, p, lambda_reg, c, washout } => EstimatorSpec::Polynomial {
                tau,
                p,
                lambda_reg,
                c,
                washout: washout.unwrap_or(tau),
            },
            RawSpec::Volterra { lambda, theta, lambda_reg, m, border, headroom, washout } => EstimatorSpec::Volterra {
                lambda,
                theta,
                lambda_reg,
                m,
                border,
                headroom,
                washout,
            },
        }
    }
}

impl EstimatorSpec {
    pub fn ngrc(tau: usize, p: usize, lambda_reg: f64) -> Self {
        EstimatorSpec::Ngrc {
            tau,
            p,
            lambda_reg,
            washout: tau,
        }
    }

    pub fn polynomial(tau: usize, p: usize, lambda_reg: f64) -> Self {
        EstimatorSpec::Polynomial {
            tau,
            p,
            lambda_reg,
            c: 1.0,
            washout: tau,
        }
    }

    pub fn volterra(lambda: f64, theta: f64, lambda_reg: f64) -> Self {
        EstimatorSpec::Volterra {
            lambda,
            theta,
            lambda_reg,
            m: 1.0,
            border: Border::Theta,
            headroom: 1.0,
            washout: 100,
        }
    }

    pub fn kind(&self) -> EstimatorKind {
        match self {
            EstimatorSpec::Ngrc { .. } => EstimatorKind::Ngrc,
            EstimatorSpec::Polynomial { .. } => EstimatorKind::Polynomial,
            EstimatorSpec::Volterra { .. } => EstimatorKind::Volterra,
        }
    }

    pub fn lambda_reg(&self) -> f64 {
        match *self {
            EstimatorSpec::Ngrc { lambda_reg, .. }
            | EstimatorSpec::Polynomial { lambda_reg, .. }
            | EstimatorSpec::Volterra { lambda_reg, .. } => lambda_reg,
        }
    }

    pub fn washout(&self) -> usize {
        match *self {
            EstimatorSpec::Ngrc { washout, .. }
            | EstimatorSpec::Polynomial { washout, .. }
            | EstimatorSpec::Volterra { washout, .. } => washout,
        }
    }

    pub fn tau(&self) -> Option<usize> {
        match *self {
            EstimatorSpec::Ngrc { tau, .. } | EstimatorSpec::Polynomial { tau, .. } => Some(tau),
            EstimatorSpec::Volterra { .. } => None,
        }
    }

    pub fn degree(&self) -> Option<usize> {
        match *self {
            EstimatorSpec::Ngrc { p, .. } | EstimatorSpec::Polynomial { p, .. } => Some(p),
            EstimatorSpec::Volterra { .. } => None,
        }
    }

    pub fn input_transforms(&self) -> Vec<TransformKind> {
        match *self {
            EstimatorSpec::Volterra { m, headroom, .. } => {
                estimator_pipeline(EstimatorKind::Volterra, m, headroom)
            }
            _ => estimator_pipeline(self.kind(), 1.0, 1.0),
        }
    }

    /// The kernel behind a kernel estimator.
    pub fn kernel(&self) -> Result<Option<KernelSpec>> {
        Ok(match *self {
            EstimatorSpec::Ngrc { .. } => None,
            EstimatorSpec::Polynomial { tau, p, c, .. } => {
                Some(KernelSpec::Polynomial(PolyKernelParams::new(tau, p, c)?))
            }
            EstimatorSpec::Volterra {
                lambda,
                theta,
                m,
                border,
                headroom,
                ..
            } => {
                if !(headroom > 0.0 && headroom <= 1.0) {
                    return Err(Error::invalid(format!("headroom must lie in (0, 1], got {headroom}")));
                }
                Some(KernelSpec::Volterra(
                    VolterraParams::with_bound(lambda, theta, m)?.with_border(border),
                ))
            }
        })
    }

    pub fn label(&self) -> String {
        match *self {
            EstimatorSpec::Ngrc { tau, p, lambda_reg, .. } => {
                format!("ngrc(tau={tau},p={p},lambda_reg={lambda_reg:e})")
            }
            EstimatorSpec::Polynomial { tau, p, lambda_reg, .. } => {
                format!("polynomial(tau={tau},p={p},lambda_reg={lambda_reg:e})")
            }
            EstimatorSpec::Volterra {
                lambda,
                theta,
                lambda_reg,
                ..
            } => format!("volterra(lambda={lambda},theta={theta},lambda_reg={lambda_reg:e})"),
        }
    }
}

/// How targets are normalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TargetTransform {
    /// Targets are future inputs and share the input transform.
    SameAsInputs,
    /// Targets get their own transforms, fitted on the training targets.
    Own { transforms: Vec<TransformKind> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FittedModel {
    Ngrc {
        model: NgrcModel,
        /// Last `τ-1` normalized training inputs.
        history: DenseMatrix,
    },
    Kernel {
        model: KernelModel,
    },
}

/// A fitted estimator together with its fitted input and output transforms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedEstimator {
    pub spec: EstimatorSpec,
    pub input_pipeline: Pipeline,
    pub output_pipeline: Pipeline,
    pub model: FittedModel,
    pub conditioning: ConditioningReport,
}

/// Fits on aligned `(inputs[t], targets[t])` pairs. Normalization statistics
/// come from these rows only.
pub fn fit_estimator(
    spec: &EstimatorSpec,
    inputs: &TimeSeries,
    targets: &TimeSeries,
    target_transform: &TargetTransform,
) -> Result<FittedEstimator> {
    if inputs.len() != targets.len() {
        return Err(Error::invalid(format!(
            "{} inputs but {} targets",
            inputs.len(),
            targets.len()
        )));
    }
    if !(spec.lambda_reg() > 0.0) {
        return Err(Error::invalid(format!(
            "lambda_reg must be positive, got {}",
            spec.lambda_reg()
        )));
    }
    let input_pipeline = Pipeline::fit(&spec.input_transforms(), inputs.values())?;
    let output_pipeline = match target_transform {
        TargetTransform::SameAsInputs => {
            if targets.dim() != inputs.dim() {
                return Err(Error::invalid(
                    "targets sharing the input transform must have the input dimension",
                ));
            }
            input_pipeline.clone()
        }
        TargetTransform::Own { transforms } => Pipeline::fit(transforms, targets.values())?,
    };
    let x = input_pipeline.apply(inputs)?;
    let y = output_pipeline.apply(targets)?;
    let (model, conditioning) = match *spec {
        EstimatorSpec::Ngrc {
            tau,
            p,
            lambda_reg,
            washout,
        } => {
            // rows before max(washout, τ-1) never enter the fit
            let skip = washout.saturating_sub(tau.saturating_sub(1));
            if skip + tau > x.len() {
                return Err(Error::invalid(format!(
                    "{} training rows leave no full delay window after washout {washout}",
                    x.len()
                )));
            }
            let (model, sol) = fit_ngrc_with_report(
                &x.slice(skip, x.len())?,
                &y.slice(skip, y.len())?,
                tau,
                p,
                lambda_reg,
            )?;
            let n = x.len();
            let history = x.values().slice_rows(n + 1 - tau, n);
            (FittedModel::Ngrc { model, history }, sol.conditioning)
        }
        _ => {
            let kernel = spec.kernel()?.expect("kernel estimator");
            let (model, sol) = fit_kernel_model(&x, &y, &kernel, spec.lambda_reg(), spec.washout())?;
            (FittedModel::Kernel { model }, sol.conditioning)
        }
    };
    Ok(FittedEstimator {
        spec: *spec,
        input_pipeline,
        output_pipeline,
        model,
        conditioning,
    })
}

impl FittedEstimator {
    pub fn input_dim(&self) -> usize {
        match &self.model {
            FittedModel::Ngrc { model, .. } => model.delay().d,
            FittedModel::Kernel { model } => model.input_dim(),
        }
    }

    pub fn output_dim(&self) -> usize {
        match &self.model {
            FittedModel::Ngrc { model, .. } => model.output_dim(),
            FittedModel::Kernel { model } => model.output_dim(),
        }
    }

    /// A one-step predictor positioned right after the training inputs.
    pub fn session(&self) -> EstimatorSession<'_> {
        let state = match &self.model {
            FittedModel::Ngrc { model, history } => {
                let tau = model.delay().tau;
                SessionState::Ngrc {
                    window: history.as_slice().to_vec(),
                    width: tau * model.delay().d,
                }
            }
            FittedModel::Kernel { model } => SessionState::Kernel(model.session()),
        };
        EstimatorSession {
            fitted: self,
            state,
            scratch: Vec::new(),
        }
    }
}

enum SessionState<'a> {
    Ngrc { window: Vec<f64>, width: usize },
    Kernel(KernelSession<'a>),
}

/// Stateful predictor working in the original units: each raw input is
/// normalized, pushed through the model, and the output de-normalized.
pub struct EstimatorSession<'a> {
    fitted: &'a FittedEstimator,
    state: SessionState<'a>,
    scratch: Vec<f64>,
}

impl EstimatorSession<'_> {
    pub fn push(&mut self, raw: &[f64]) -> Result<Vec<f64>> {
        if raw.len() != self.fitted.input_dim() {
            return Err(Error::invalid(format!(
                "input has dimension {}, estimator expects {}",
                raw.len(),
                self.fitted.input_dim()
            )));
        }
        self.scratch.clear();
        self.scratch.extend_from_slice(raw);
        self.fitted.input_pipeline.apply_row(&mut self.scratch);
        let mut y = match (&mut self.state, &self.fitted.model) {
            (SessionState::Ngrc { window, width }, FittedModel::Ngrc { model, .. }) => {
                window.extend_from_slice(&self.scratch);
                if window.len() > *width {
                    window.drain(..window.len() - *width);
                }
                predict_ngrc(model, window)?
            }
            (SessionState::Kernel(session), _) => session.push(&self.scratch)?,
            _ => unreachable!("session matches its model"),
        };
        self.fitted.output_pipeline.invert_row(&mut y);
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Conditioning("prediction is not finite".into()));
        }
        Ok(y)
    }
}
