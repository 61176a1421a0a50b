//! Next-generation reservoir computing (NG-RC), its polynomial-kernel dual,
//! and Volterra-kernel ridge regression, with the simulators, preprocessing,
//! forecasting, cross-validation and metrics needed to compare them.
//!
//! Layout:
//! - [`linsolve`]: ridge closed forms (primal and Gram), PSD square roots.
//! - [`ngrc`]: delay embedding, monomial features, primal NG-RC.
//! - [`kernels`]: polynomial, NG-RC dot-product and Volterra kernels, dual models.
//! - [`datasets`]: Lorenz, Mackey-Glass and diagonal BEKK simulators, CSV I/O.
//! - [`preprocess`]: train-fitted normalization transforms.
//! - [`estimator`]: one interface over all estimators, with their pipelines.
//! - [`forecast`]: path continuation, open-loop forecasting, valid time.
//! - [`metrics`]: pointwise errors, Welch PSD error, Wasserstein-1.
//! - [`cv`]: fold plans and grid search.

pub mod cv;
pub mod datasets;
pub mod error;
pub mod estimator;
pub mod forecast;
pub mod kernels;
pub mod linsolve;
pub mod metrics;
pub mod ngrc;
pub mod preprocess;
pub mod rng;
pub mod series;

pub use error::{Error, Result};
pub use linsolve::DenseMatrix;
pub use series::TimeSeries;
