use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linsolve::DenseMatrix;
use crate::rng::SeededRng;

pub const W1_ASSIGNMENT_CAP: usize = 512;

/// W1 between the empirical distributions of two samples, as the integral of
/// the absolute difference of their CDFs.
pub fn w1_1d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("W1 needs non-empty samples"));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::invalid("W1 samples must be finite"));
    }
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let (na, nb) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut prev = xs[0].min(ys[0]);
    let mut total = 0.0;
    while i < xs.len() || j < ys.len() {
        let next = match (xs.get(i), ys.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        total += (i as f64 / na - j as f64 / nb).abs() * (next - prev);
        while i < xs.len() && xs[i] == next {
            i += 1;
        }
        while j < ys.len() && ys[j] == next {
            j += 1;
        }
        prev = next;
    }
    Ok(total)
}

/// Minimum-cost perfect matching on a square cost matrix (Hungarian method
/// with potentials). Returns `col_of_row`.
pub fn min_cost_assignment(cost: &DenseMatrix) -> Vec<usize> {
    let n = cost.rows();
    debug_assert!(cost.is_square());
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut col_of_row = vec![0; n];
    for j in 1..=n {
        col_of_row[p[j] - 1] = j - 1;
    }
    col_of_row
}

fn euclidean_costs(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    let k = a.rows();
    let mut cost = DenseMatrix::zeros(k, k);
    for i in 0..k {
        let x = a.row(i);
        for j in 0..k {
            cost[(i, j)] = x
                .iter()
                .zip(b.row(j))
                .map(|(p, q)| (p - q).powi(2))
                .sum::<f64>()
                .sqrt();
        }
    }
    cost
}

/// Exact W1 between two equal-size point clouds under the Euclidean cost.
/// Fails above `cap` points; see [`w1_nd_sampled`] for larger samples.
pub fn w1_nd(a: &DenseMatrix, b: &DenseMatrix, cap: usize) -> Result<f64> {
    if a.cols() != b.cols() {
        return Err(Error::invalid(format!(
            "point dimensions differ: {} and {}",
            a.cols(),
            b.cols()
        )));
    }
    if a.rows() != b.rows() || a.rows() == 0 {
        return Err(Error::invalid(format!(
            "W1 assignment needs equal non-empty samples, got {} and {}",
            a.rows(),
            b.rows()
        )));
    }
    if a.rows() > cap {
        return Err(Error::Capacity(format!(
            "{} points exceed the assignment cap {cap}",
            a.rows()
        )));
    }
    if !a.all_finite() || !b.all_finite() {
        return Err(Error::invalid("W1 samples must be finite"));
    }
    let cost = euclidean_costs(a, b);
    let assign = min_cost_assignment(&cost);
    let total: f64 = assign.iter().enumerate().map(|(i, &j)| cost[(i, j)]).sum();
    Ok(total / a.rows() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct W1Estimate {
    pub value: f64,
    /// Points per sample actually matched when subsampling was needed.
    pub subsampled_to: Option<usize>,
}

/// W1 in any dimension: exact when both samples fit under `cap`, otherwise
/// computed on `cap` points drawn without replacement from each sample.
pub fn w1_nd_sampled(a: &DenseMatrix, b: &DenseMatrix, cap: usize, seed: u64) -> Result<W1Estimate> {
    let k = a.rows().min(b.rows());
    if a.rows() == b.rows() && k <= cap {
        return Ok(W1Estimate {
            value: w1_nd(a, b, cap)?,
            subsampled_to: None,
        });
    }
    let k = k.min(cap);
    if k == 0 {
        return Err(Error::invalid("W1 needs non-empty samples"));
    }
    let mut rng = SeededRng::new(seed);
    let pick = |m: &DenseMatrix, rng: &mut SeededRng| -> Result<DenseMatrix> {
        let idx = rng.sample_indices(m.rows(), k);
        let rows: Vec<&[f64]> = idx.iter().map(|&i| m.row(i)).collect();
        DenseMatrix::from_rows(&rows)
    };
    let sa = pick(a, &mut rng)?;
    let sb = pick(b, &mut rng)?;
    Ok(W1Estimate {
        value: w1_nd(&sa, &sb, cap)?,
        subsampled_to: Some(k),
    })
}
