use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::ode::{dopri_step, DenseStep};
use crate::error::{Error, Result};
use crate::series::TimeSeries;

/// `ż = β z(t-δ) / (1 + z(t-δ)^n) - γ z(t)` with constant history.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MackeyGlassParams {
    pub beta: f64,
    pub gamma: f64,
    pub exponent: f64,
    pub delay: f64,
    pub history: f64,
}

impl Default for MackeyGlassParams {
    fn default() -> Self {
        Self {
            beta: 0.2,
            gamma: 0.1,
            exponent: 10.0,
            delay: 17.0,
            history: 1.2,
        }
    }
}

impl MackeyGlassParams {
    pub fn rhs(&self, z: f64, lagged: f64) -> f64 {
        self.beta * lagged / (1.0 + lagged.powf(self.exponent)) - self.gamma * z
    }
}

/// Fine-grid points per output sample and default fine step.
pub const MG_SPLICE: usize = 50;
pub const MG_DT_FINE: f64 = 0.02;
pub const MG_LENGTH: usize = 7650;

pub fn simulate_mackey_glass(
    dt_fine: f64,
    delay: f64,
    n_fine: usize,
    splice: usize,
) -> Result<TimeSeries> {
    let params = MackeyGlassParams {
        delay,
        ..MackeyGlassParams::default()
    };
    let fine = integrate_delay(|z, lag| params.rhs(z, lag), params.history, dt_fine, delay, n_fine)?;
    splice_series(&fine, dt_fine, splice, "mackey-glass")
}

/// Keeps every `splice`-th point, starting with the first.
pub(crate) fn splice_series(fine: &[f64], dt_fine: f64, splice: usize, origin: &str) -> Result<TimeSeries> {
    if splice == 0 {
        return Err(Error::invalid("splice stride must be at least 1"));
    }
    let kept: Vec<f64> = fine.iter().step_by(splice).copied().collect();
    TimeSeries::scalar(&kept, dt_fine * splice as f64, origin)
}

/// Method of steps for a scalar delay equation `ż = f(z(t), z(t-δ))` with
/// constant history, on a fixed grid whose step divides the delay. Lagged
/// values at stage times come from the dense output of the step one delay
/// earlier. Returns `n_fine` grid values starting at `t = 0`.
pub fn integrate_delay<F>(
    rhs: F,
    history: f64,
    dt_fine: f64,
    delay: f64,
    n_fine: usize,
) -> Result<Vec<f64>>
where
    F: Fn(f64, f64) -> f64,
{
    if !(dt_fine > 0.0) || !(delay > 0.0) {
        return Err(Error::invalid(format!(
            "need positive step and delay, got dt={dt_fine}, delay={delay}"
        )));
    }
    let ratio = delay / dt_fine;
    let lag_steps = ratio.round();
    if (ratio - lag_steps).abs() > 1e-9 * ratio {
        return Err(Error::invalid(format!(
            "delay {delay} is not an integral multiple of the step {dt_fine}"
        )));
    }
    if n_fine == 0 {
        return Err(Error::invalid("need at least one grid point"));
    }
    let lag_steps = lag_steps as usize;
    let mut out = Vec::with_capacity(n_fine);
    out.push(history);
    let mut past: VecDeque<DenseStep> = VecDeque::with_capacity(lag_steps + 1);
    let mut z = [history];
    for k in 0..n_fine - 1 {
        let t = k as f64 * dt_fine;
        // dense step covering [t - δ, t - δ + h], if the past has begun
        let lagged_step = if k >= lag_steps { past.front() } else { None };
        let lagged = |s: f64| -> f64 {
            match lagged_step {
                Some(step) => {
                    let mut v = [0.0];
                    step.eval(s, &mut v);
                    v[0]
                }
                None => history,
            }
        };
        let mut f = |tt: f64, y: &[f64], dy: &mut [f64]| {
            let s = ((tt - t) / dt_fine).clamp(0.0, 1.0);
            dy[0] = rhs(y[0], lagged(s));
        };
        let mut k1 = [0.0];
        f(t, &z, &mut k1);
        let step = dopri_step(&mut f, t, &z, &k1, dt_fine);
        if !step.y_new[0].is_finite() {
            return Err(Error::Simulation(format!("non-finite state at t={t}")));
        }
        z = [step.y_new[0]];
        out.push(z[0]);
        if k >= lag_steps {
            past.pop_front();
        }
        past.push_back(step.dense);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn initial_derivative() {
        let p = MackeyGlassParams::default();
        let d = p.rhs(1.2, 1.2);
        assert!((d - (0.2 * 1.2 / (1.0 + 1.2f64.powi(10)) - 0.12)).abs() < 1e-15);
        assert!((d + 0.0866284).abs() < 1e-7);
    }

    #[test]
    fn linear_segment_matches_exponential() {
        let z = integrate_delay(|z, _| -0.1 * z, 1.2, 0.02, 17.0, 851).unwrap();
        for (k, v) in z.iter().enumerate() {
            let t = k as f64 * 0.02;
            assert!((v - 1.2 * (-0.1 * t).exp()).abs() < 1e-8);
        }
    }

    #[test]
    fn second_segment_matches_closed_form() {
        // ż = -z(t-1), history 1: z = 1 - t on [0,1], 1 - t + (t-1)²/2 on [1,2]
        let z = integrate_delay(|_, lag| -lag, 1.0, 0.01, 1.0, 201).unwrap();
        for (k, v) in z.iter().enumerate() {
            let t = k as f64 * 0.01;
            let want = if t <= 1.0 { 1.0 - t } else { 1.0 - t + (t - 1.0).powi(2) / 2.0 };
            assert!((v - want).abs() < 1e-12, "t={t}");
        }
    }

    #[test]
    fn rejects_non_integral_delay() {
        assert!(integrate_delay(|z, _| z, 1.0, 0.03, 1.0, 10).is_err());
    }

    #[test]
    fn splices_to_requested_length() {
        let s = simulate_mackey_glass(MG_DT_FINE, 17.0, 200 * MG_SPLICE, MG_SPLICE).unwrap();
        assert_eq!(s.len(), 200);
        assert!((s.dt() - 1.0).abs() < 1e-15);
        assert_eq!(s.row(0)[0], 1.2);
    }
}
