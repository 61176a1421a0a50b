//! Simulators for the Lorenz system, the Mackey-Glass delay equation and
//! diagonal BEKK, plus CSV I/O.

mod bekk;
mod csv;
mod lorenz;
mod mackey_glass;
pub mod ode;

pub use bekk::{simulate_bekk, unvech, vech, BekkParams, BekkSample};
pub use csv::{format_value, load_csv, parse_csv, save_csv, series_to_csv};
pub use lorenz::{simulate_lorenz, simulate_lorenz_with, LorenzParams, LORENZ_INITIAL};
pub use mackey_glass::{
    integrate_delay, simulate_mackey_glass, MackeyGlassParams, MG_DT_FINE, MG_LENGTH, MG_SPLICE,
};

use crate::error::{Error, Result};
use crate::series::TimeSeries;

/// Contiguous prefix/suffix split.
pub fn split_train_test(series: &TimeSeries, n_train: usize) -> Result<(TimeSeries, TimeSeries)> {
    if n_train == 0 || n_train >= series.len() {
        return Err(Error::invalid(format!(
            "n_train must lie in 1..{}, got {n_train}",
            series.len()
        )));
    }
    Ok((series.slice(0, n_train)?, series.slice(n_train, series.len())?))
}
