//! Diagonal BEKK(1,0,1):
//! `r_t = Σ_t^{1/2} z_t`, `Σ_{t+1} = CCᵀ + A r_t r_tᵀ A + B Σ_t B`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linsolve::{psd_sqrt, DenseMatrix, GRAM_SYMMETRY_TOL};
use crate::rng::SeededRng;
use crate::series::TimeSeries;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BekkParams {
    /// Upper-triangular `d x d`.
    pub c: DenseMatrix,
    /// Diagonal of `A`.
    pub a: Vec<f64>,
    /// Diagonal of `B`.
    pub b: Vec<f64>,
    pub seed: u64,
}

impl BekkParams {
    /// A fixed, covariance-stationary parameter set of dimension `d`.
    pub fn desk_default(d: usize, seed: u64) -> Self {
        let mut c = DenseMatrix::zeros(d, d);
        for i in 0..d {
            c[(i, i)] = 0.005 * (1.0 + 0.1 * i as f64);
            for j in i + 1..d {
                c[(i, j)] = 0.001 * (1.0 + ((i + 2 * j) % 5) as f64) / 5.0;
            }
        }
        let a = (0..d).map(|i| 0.22 + 0.02 * (i % 5) as f64).collect();
        let b = (0..d).map(|i| 0.95 - 0.01 * (i % 5) as f64).collect();
        Self { c, a, b, seed }
    }

    pub fn dim(&self) -> usize {
        self.a.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.a.len();
        if d == 0 || self.b.len() != d || self.c.shape() != (d, d) {
            return Err(Error::invalid(format!(
                "BEKK blocks disagree: C is {:?}, A has {}, B has {}",
                self.c.shape(),
                d,
                self.b.len()
            )));
        }
        for i in 0..d {
            for j in 0..i {
                if self.c[(i, j)] != 0.0 {
                    return Err(Error::invalid(format!("C[{i}][{j}] is below the diagonal")));
                }
            }
        }
        if let Some(i) = (0..d).find(|&i| !(self.a[i] > 0.0) || !(self.b[i].abs() < 1.0)) {
            return Err(Error::invalid(format!(
                "stationarity needs A_ii > 0 and |B_ii| < 1; entry {i} has A={}, B={}",
                self.a[i], self.b[i]
            )));
        }
        Ok(())
    }

    /// Unconditional covariance `Σ̄_ij = (CCᵀ)_ij / (1 - a_i a_j - b_i b_j)`,
    /// falling back to `CCᵀ / (1 - max b²)` when some pair is not
    /// covariance-stationary.
    pub fn unconditional_covariance(&self) -> DenseMatrix {
        let d = self.dim();
        let cc = self.c.matmul_t(&self.c).expect("square C");
        let mut s = DenseMatrix::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                let den = 1.0 - self.a[i] * self.a[j] - self.b[i] * self.b[j];
                if !(den > 0.0) {
                    let bmax = self.b.iter().fold(0.0_f64, |m, v| m.max(v * v));
                    log::warn!("BEKK parameters are not covariance-stationary; using CCᵀ/(1-max b²)");
                    return cc.scaled(1.0 / (1.0 - bmax));
                }
                s[(i, j)] = cc[(i, j)] / den;
            }
        }
        s
    }
}

/// Inputs `z_t`, returns `r_t` and outputs `vech Σ_{t+1}`, row `t` each, so
/// that output `t` is a function of the inputs up to and including `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct BekkSample {
    pub inputs: TimeSeries,
    pub returns: TimeSeries,
    pub outputs: TimeSeries,
}

pub fn simulate_bekk(params: &BekkParams, n: usize) -> Result<BekkSample> {
    params.validate()?;
    if n == 0 {
        return Err(Error::invalid("BEKK sample length must be positive"));
    }
    let d = params.dim();
    let q = d * (d + 1) / 2;
    let cc = params.c.matmul_t(&params.c)?;
    let mut sigma = params.unconditional_covariance();
    let mut rng = SeededRng::new(params.seed);
    let mut z_data = Vec::with_capacity(n * d);
    let mut r_data = Vec::with_capacity(n * d);
    let mut h_data = Vec::with_capacity(n * q);
    let mut z = vec![0.0; d];
    for _ in 0..n {
        for v in z.iter_mut() {
            *v = rng.standard_normal();
        }
        let root = psd_sqrt(&sigma).map_err(|e| Error::Simulation(e.to_string()))?;
        let r = root.matvec(&z);
        let mut next = DenseMatrix::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                next[(i, j)] = cc[(i, j)]
                    + params.a[i] * params.a[j] * r[i] * r[j]
                    + params.b[i] * params.b[j] * sigma[(i, j)];
            }
        }
        z_data.extend_from_slice(&z);
        r_data.extend_from_slice(&r);
        h_data.extend(vech(&next)?);
        sigma = next;
    }
    Ok(BekkSample {
        inputs: TimeSeries::new(DenseMatrix::new(n, d, z_data)?, 1.0, "bekk-inputs")?,
        returns: TimeSeries::new(DenseMatrix::new(n, d, r_data)?, 1.0, "bekk-returns")?,
        outputs: TimeSeries::new(DenseMatrix::new(n, q, h_data)?, 1.0, "bekk-outputs")?,
    })
}

/// Lower triangle stacked column by column from the diagonal down.
pub fn vech(s: &DenseMatrix) -> Result<Vec<f64>> {
    if !s.is_square() {
        return Err(Error::invalid("vech needs a square matrix"));
    }
    if s.asymmetry() > GRAM_SYMMETRY_TOL * s.max_abs() {
        return Err(Error::invalid("vech needs a symmetric matrix"));
    }
    let d = s.rows();
    let mut out = Vec::with_capacity(d * (d + 1) / 2);
    for j in 0..d {
        for i in j..d {
            out.push(s[(i, j)]);
        }
    }
    Ok(out)
}

/// Inverse of [`vech`].
pub fn unvech(v: &[f64]) -> Result<DenseMatrix> {
    // q = d(d+1)/2
    let d = (((8 * v.len() + 1) as f64).sqrt() as usize).saturating_sub(1) / 2;
    if d * (d + 1) / 2 != v.len() || d == 0 {
        return Err(Error::invalid(format!("{} is not a triangular number", v.len())));
    }
    let mut s = DenseMatrix::zeros(d, d);
    let mut k = 0;
    for j in 0..d {
        for i in j..d {
            s[(i, j)] = v[k];
            s[(j, i)] = v[k];
            k += 1;
        }
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vech_layout_and_inverse() {
        let s = DenseMatrix::from_rows(&[[1.0, 2.0], [2.0, 3.0]]).unwrap();
        assert_eq!(vech(&s).unwrap(), vec![1.0, 2.0, 3.0]);
        assert_eq!(unvech(&[1.0, 2.0, 3.0]).unwrap(), s);
        assert_eq!(vech(&DenseMatrix::identity(15)).unwrap().len(), 120);
        assert!(unvech(&[1.0, 2.0]).is_err());
        let asym = DenseMatrix::from_rows(&[[1.0, 2.0], [0.0, 3.0]]).unwrap();
        assert!(vech(&asym).is_err());
    }

    #[test]
    fn stationarity_is_enforced() {
        let mut p = BekkParams::desk_default(3, 1);
        p.b[1] = 1.0;
        assert!(simulate_bekk(&p, 10).is_err());
        let mut p = BekkParams::desk_default(3, 1);
        p.a[0] = 0.0;
        assert!(simulate_bekk(&p, 10).is_err());
    }

    #[test]
    fn tiny_arch_term_keeps_covariance_constant() {
        let mut p = BekkParams::desk_default(3, 2);
        p.a = vec![1e-6; 3];
        p.b = vec![0.0; 3];
        let out = simulate_bekk(&p, 50).unwrap();
        let cc = vech(&p.c.matmul_t(&p.c).unwrap()).unwrap();
        for row in out.outputs.rows() {
            for (h, c) in row.iter().zip(&cc) {
                assert!((h - c).abs() <= 1e-9 * c.abs().max(1e-6));
            }
        }
    }

    #[test]
    fn seeded_runs_are_identical() {
        let p = BekkParams::desk_default(5, 9);
        assert_eq!(simulate_bekk(&p, 40).unwrap(), simulate_bekk(&p, 40).unwrap());
    }
}
