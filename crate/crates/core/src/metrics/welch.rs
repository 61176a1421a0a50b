use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linsolve::DenseMatrix;

/// One-sided Welch estimate per dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Periodogram {
    pub frequencies: Vec<f64>,
    /// `power[u][k]` for dimension `u` at `frequencies[k]`.
    pub power: Vec<Vec<f64>>,
    pub nperseg: usize,
    pub overlap: f64,
}

/// Periodic Hann window.
fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

/// Welch's method: Hann-windowed, mean-detrended segments of `nperseg`
/// samples overlapping by `⌊overlap·nperseg⌋`, density scaling, sampling
/// frequency `fs`.
pub fn welch_psd(series: &DenseMatrix, nperseg: usize, overlap: f64, fs: f64) -> Result<Periodogram> {
    let n = series.rows();
    if nperseg < 2 || nperseg > n {
        return Err(Error::invalid(format!(
            "nperseg must lie in 2..={n}, got {nperseg}"
        )));
    }
    if !(0.0..1.0).contains(&overlap) {
        return Err(Error::invalid(format!("overlap must lie in [0, 1), got {overlap}")));
    }
    if !(fs > 0.0) {
        return Err(Error::invalid(format!("sampling frequency must be positive, got {fs}")));
    }
    let noverlap = (overlap * nperseg as f64).floor() as usize;
    let step = nperseg - noverlap;
    let window = hann(nperseg);
    let scale = 1.0 / (fs * window.iter().map(|w| w * w).sum::<f64>());
    let n_freq = nperseg / 2 + 1;
    let fft = FftPlanner::<f64>::new().plan_fft_forward(nperseg);
    let starts: Vec<usize> = (0..).map(|k| k * step).take_while(|s| s + nperseg <= n).collect();
    let power = (0..series.cols())
        .into_par_iter()
        .map(|u| {
            let x = series.col_to_vec(u);
            let mut buf = vec![Complex::new(0.0, 0.0); nperseg];
            let mut acc = vec![0.0; n_freq];
            for &s in &starts {
                let seg = &x[s..s + nperseg];
                let mean = seg.iter().sum::<f64>() / nperseg as f64;
                for ((b, v), w) in buf.iter_mut().zip(seg).zip(&window) {
                    *b = Complex::new((v - mean) * w, 0.0);
                }
                fft.process(&mut buf);
                for (a, c) in acc.iter_mut().zip(&buf) {
                    *a += c.norm_sqr();
                }
            }
            for (k, a) in acc.iter_mut().enumerate() {
                *a *= scale / starts.len() as f64;
                // fold negative frequencies, except DC and an even-length Nyquist bin
                let nyquist = nperseg % 2 == 0 && k == nperseg / 2;
                if k != 0 && !nyquist {
                    *a *= 2.0;
                }
            }
            acc
        })
        .collect();
    let frequencies = (0..n_freq).map(|k| k as f64 * fs / nperseg as f64).collect();
    Ok(Periodogram {
        frequencies,
        power,
        nperseg,
        overlap,
    })
}

/// PSD error and the number of bins skipped for zero true power.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Psde {
    pub value: f64,
    pub skipped_bins: usize,
}

/// `Σ_u Σ_{0 < f ≤ f_cut} |PSD - PSD̂| / PSD`. The zero-frequency bin is left
/// out: segments are mean-detrended, so its true power is zero up to rounding.
pub fn psde(truth: &Periodogram, est: &Periodogram, f_cut: Option<f64>) -> Result<Psde> {
    if truth.frequencies != est.frequencies || truth.power.len() != est.power.len() {
        return Err(Error::invalid("periodograms are on different grids"));
    }
    let cut = f_cut.unwrap_or(f64::INFINITY);
    let mut value = 0.0;
    let mut skipped_bins = 0;
    for (p, q) in truth.power.iter().zip(&est.power) {
        for (k, f) in truth.frequencies.iter().enumerate().skip(1) {
            if *f > cut {
                break;
            }
            if p[k] > 0.0 {
                value += (p[k] - q[k]).abs() / p[k];
            } else {
                skipped_bins += 1;
            }
        }
    }
    Ok(Psde { value, skipped_bins })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_series_has_no_power() {
        let x = DenseMatrix::column(&vec![3.0; 256]).unwrap();
        let p = welch_psd(&x, 64, 0.5, 1.0).unwrap();
        assert!(p.power[0].iter().all(|&v| v.abs() <= 1e-10 * 256.0));
    }

    #[test]
    fn psde_counts_doubled_bins() {
        let truth = Periodogram {
            frequencies: vec![0.0, 0.1, 0.2, 0.3],
            power: vec![vec![1.0, 2.0, 3.0, 4.0]],
            nperseg: 6,
            overlap: 0.5,
        };
        let mut est = truth.clone();
        est.power[0][1] *= 2.0;
        est.power[0][3] *= 2.0;
        assert_eq!(psde(&truth, &truth, None).unwrap().value, 0.0);
        assert_eq!(psde(&truth, &est, None).unwrap().value, 2.0);
        assert_eq!(psde(&truth, &est, Some(0.25)).unwrap().value, 1.0);
    }

    #[test]
    fn rejects_bad_segments() {
        let x = DenseMatrix::column(&[1.0, 2.0, 3.0]).unwrap();
        assert!(welch_psd(&x, 4, 0.5, 1.0).is_err());
        assert!(welch_psd(&x, 2, 1.0, 1.0).is_err());
    }
}
