use serde::{Deserialize, Serialize};

use super::ode::{integrate_uniform, OdeOptions};
use crate::error::Result;
use crate::linsolve::DenseMatrix;
use crate::series::TimeSeries;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LorenzParams {
    pub sigma: f64,
    pub rho: f64,
    pub beta: f64,
}

impl Default for LorenzParams {
    fn default() -> Self {
        Self {
            sigma: 10.0,
            rho: 28.0,
            beta: 8.0 / 3.0,
        }
    }
}

pub const LORENZ_INITIAL: [f64; 3] = [0.0, 1.0, 1.05];

pub fn simulate_lorenz(initial: [f64; 3], dt: f64, n_points: usize) -> Result<TimeSeries> {
    simulate_lorenz_with(&LorenzParams::default(), initial, dt, n_points, &OdeOptions::default())
}

pub fn simulate_lorenz_with(
    params: &LorenzParams,
    initial: [f64; 3],
    dt: f64,
    n_points: usize,
    opts: &OdeOptions,
) -> Result<TimeSeries> {
    let LorenzParams { sigma, rho, beta } = *params;
    let rows = integrate_uniform(
        |_, s, ds| {
            ds[0] = sigma * (s[1] - s[0]);
            ds[1] = s[0] * (rho - s[2]) - s[1];
            ds[2] = s[0] * s[1] - beta * s[2];
        },
        0.0,
        &initial,
        dt,
        n_points,
        opts,
    )?;
    TimeSeries::new(DenseMatrix::from_rows(&rows)?, dt, "lorenz")
}
