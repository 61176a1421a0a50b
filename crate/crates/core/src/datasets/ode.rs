//! Dormand–Prince 5(4) with Hairer's dense output.

use crate::error::{Error, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-10,
            max_steps: 50_000_000,
        }
    }
}

/// Interpolation coefficients of one step.
#[derive(Debug, Clone)]
pub(crate) struct DenseStep {
    pub rcont: [Vec<f64>; 5],
}

impl DenseStep {
    /// State at fraction `s ∈ [0, 1]` of the step.
    pub fn eval(&self, s: f64, out: &mut [f64]) {
        let s1 = 1.0 - s;
        let [r1, r2, r3, r4, r5] = &self.rcont;
        for i in 0..out.len() {
            out[i] = r1[i] + s * (r2[i] + s1 * (r3[i] + s * (r4[i] + s1 * r5[i])));
        }
    }
}

/// One Dormand–Prince step from `(t, y)` with first stage `k1 = f(t, y)`.
/// Returns the new state, the error estimate per component, `k7 = f(t+h, y_new)`
/// and the dense-output coefficients.
pub(crate) fn dopri_step<F>(f: &mut F, t: f64, y: &[f64], k1: &[f64], h: f64) -> StepResult
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = y.len();
    let mut tmp = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut k5 = vec![0.0; n];
    let mut k6 = vec![0.0; n];
    let mut k7 = vec![0.0; n];

    for i in 0..n {
        tmp[i] = y[i] + h * A21 * k1[i];
    }
    f(t + C2 * h, &tmp, &mut k2);
    for i in 0..n {
        tmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
    }
    f(t + C3 * h, &tmp, &mut k3);
    for i in 0..n {
        tmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
    }
    f(t + C4 * h, &tmp, &mut k4);
    for i in 0..n {
        tmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
    }
    f(t + C5 * h, &tmp, &mut k5);
    for i in 0..n {
        tmp[i] = y[i]
            + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
    }
    f(t + h, &tmp, &mut k6);
    let mut y_new = vec![0.0; n];
    for i in 0..n {
        y_new[i] = y[i]
            + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
    }
    f(t + h, &y_new, &mut k7);

    let mut err = vec![0.0; n];
    for i in 0..n {
        err[i] = h
            * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
    }

    let mut r2 = vec![0.0; n];
    let mut r3 = vec![0.0; n];
    let mut r4 = vec![0.0; n];
    let mut r5 = vec![0.0; n];
    for i in 0..n {
        let ydiff = y_new[i] - y[i];
        let bspl = h * k1[i] - ydiff;
        r2[i] = ydiff;
        r3[i] = bspl;
        r4[i] = ydiff - h * k7[i] - bspl;
        r5[i] = h
            * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
    }
    StepResult {
        dense: DenseStep {
            rcont: [y.to_vec(), r2, r3, r4, r5],
        },
        y_new,
        err,
        k7,
    }
}

pub(crate) struct StepResult {
    pub dense: DenseStep,
    pub y_new: Vec<f64>,
    pub err: Vec<f64>,
    pub k7: Vec<f64>,
}

/// Integrates `y' = f(t, y)` adaptively and samples the dense output at
/// `t0 + k·dt` for `k = 0..n_points`.
pub fn integrate_uniform<F>(
    mut f: F,
    t0: f64,
    y0: &[f64],
    dt: f64,
    n_points: usize,
    opts: &OdeOptions,
) -> Result<Vec<Vec<f64>>>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::invalid(format!("sampling interval must be positive, got {dt}")));
    }
    if n_points == 0 {
        return Err(Error::invalid("need at least one sample point"));
    }
    let n = y0.len();
    let mut out = Vec::with_capacity(n_points);
    out.push(y0.to_vec());
    let t_end = t0 + (n_points - 1) as f64 * dt;
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut k1 = vec![0.0; n];
    f(t, &y, &mut k1);
    let mut h = dt.min(1e-3).max(1e-12 * (t_end - t0).abs().max(1.0));
    let mut next = 1;
    let mut steps = 0;
    let mut buf = vec![0.0; n];
    while next < n_points {
        steps += 1;
        if steps > opts.max_steps {
            return Err(Error::Simulation(format!(
                "step limit {} reached at t={t}",
                opts.max_steps
            )));
        }
        let last = h >= t_end - t;
        let h_step = if last { t_end - t } else { h };
        let step = dopri_step(&mut f, t, &y, &k1, h_step);
        let mut acc = 0.0;
        for i in 0..n {
            let sc = opts.atol + opts.rtol * y[i].abs().max(step.y_new[i].abs());
            acc += (step.err[i] / sc).powi(2);
        }
        let err = (acc / n.max(1) as f64).sqrt();
        if !err.is_finite() || step.y_new.iter().any(|v| !v.is_finite()) {
            h = h_step * 0.2;
            if h < 1e-14 * t.abs().max(1.0) {
                return Err(Error::Simulation(format!("non-finite state near t={t}")));
            }
            continue;
        }
        let fac = if err == 0.0 {
            10.0
        } else {
            (0.9 * err.powf(-0.2)).clamp(0.2, 10.0)
        };
        if err <= 1.0 {
            let t_new = t + h_step;
            while next < n_points {
                let target = t0 + next as f64 * dt;
                if target > t_new && !last {
                    break;
                }
                let s = ((target - t) / h_step).clamp(0.0, 1.0);
                step.dense.eval(s, &mut buf);
                out.push(buf.clone());
                next += 1;
            }
            t = t_new;
            y = step.y_new;
            k1 = step.k7;
            h = h_step * fac;
        } else {
            h = h_step * fac.min(1.0);
            if h < 1e-14 * t.abs().max(1.0) {
                return Err(Error::Simulation(format!("step size underflow at t={t}")));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay_matches_closed_form() {
        let out = integrate_uniform(
            |_, y, dy| dy[0] = -y[0],
            0.0,
            &[1.0],
            0.1,
            11,
            &OdeOptions::default(),
        )
        .unwrap();
        for (k, y) in out.iter().enumerate() {
            let t = k as f64 * 0.1;
            assert!((y[0] - (-t).exp()).abs() < 1e-9, "t={t}");
        }
    }

    #[test]
    fn dense_output_is_fourth_order_between_steps() {
        // sample far more finely than the accepted steps
        let out = integrate_uniform(
            |_, y, dy| {
                dy[0] = y[1];
                dy[1] = -y[0];
            },
            0.0,
            &[0.0, 1.0],
            0.001,
            3001,
            &OdeOptions::default(),
        )
        .unwrap();
        for (k, y) in out.iter().enumerate() {
            let t = k as f64 * 0.001;
            assert!((y[0] - t.sin()).abs() < 1e-8, "t={t}");
        }
    }
}
