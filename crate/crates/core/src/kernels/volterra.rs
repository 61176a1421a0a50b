//! The Volterra series kernel
//!
//! `K(z, z') = 1 + Σ_{τ≥1} λ^{2τ} Π_{t<τ} 1/(1 - θ²⟨z_{-t}, z'_{-t}⟩)`,
//!
//! computed on whole sequences through the recursion
//! `K_{i,j} = 1 + λ² K_{i-1,j-1} / (1 - θ²⟨z_i, z'_j⟩)`, seeded with a border
//! value at `i = 0` or `j = 0`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linsolve::{dot, DenseMatrix};

/// Rows at least this long are split across threads.
const PAR_ROW_MIN: usize = 2048;

/// Slack on the norm check so that inputs scaled to exactly `M` pass.
const NORM_SLACK: f64 = 1e-12;

/// Value of `K_{i,j}` when either index runs off the start of a sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Border {
    /// `1/(1 - θ²)`.
    #[default]
    Theta,
    /// `1/(1 - λ²)`, the kernel value for two all-zero infinite pasts. With
    /// this border the recursion equals the series on zero-padded sequences.
    ZeroPadded,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolterraParams {
    pub lambda: f64,
    pub theta: f64,
    /// Bound on every input norm.
    #[serde(default = "default_bound")]
    pub m: f64,
    #[serde(default)]
    pub border: Border,
}

fn default_bound() -> f64 {
    1.0
}

impl VolterraParams {
    pub fn new(lambda: f64, theta: f64) -> Result<Self> {
        Self::with_bound(lambda, theta, 1.0)
    }

    pub fn with_bound(lambda: f64, theta: f64, m: f64) -> Result<Self> {
        let p = Self {
            lambda,
            theta,
            m,
            border: Border::Theta,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_border(mut self, border: Border) -> Self {
        self.border = border;
        self
    }

    /// `θ²M² < 1` and `0 < λ < sqrt(1 - θ²M²)`.
    pub fn validate(&self) -> Result<()> {
        let Self { lambda, theta, m, .. } = *self;
        if !(m > 0.0) || !m.is_finite() {
            return Err(Error::invalid(format!("norm bound must be positive, got {m}")));
        }
        if !(theta > 0.0) || !theta.is_finite() || theta * theta * m * m >= 1.0 {
            return Err(Error::invalid(format!(
                "theta must satisfy 0 < theta and theta^2 M^2 < 1, got theta={theta}, M={m}"
            )));
        }
        let cap = self.lambda_cap();
        if !(lambda > 0.0) || lambda >= cap {
            return Err(Error::invalid(format!(
                "lambda must lie in (0, {cap:.6}) for theta={theta}, M={m}, got {lambda}"
            )));
        }
        Ok(())
    }

    /// `sqrt(1 - θ²M²)`, the supremum of admissible `λ`.
    pub fn lambda_cap(&self) -> f64 {
        (1.0 - self.theta * self.theta * self.m * self.m).sqrt()
    }

    /// Parameters at `λ = fraction · sqrt(1 - θ²M²)`.
    pub fn from_fraction(fraction: f64, theta: f64, m: f64) -> Result<Self> {
        let cap_sq = 1.0 - theta * theta * m * m;
        if !(cap_sq > 0.0) {
            return Err(Error::invalid(format!(
                "theta={theta} with M={m} leaves no admissible lambda"
            )));
        }
        Self::with_bound(fraction * cap_sq.sqrt(), theta, m)
    }

    pub fn border_value(&self) -> f64 {
        match self.border {
            Border::Theta => 1.0 / (1.0 - self.theta * self.theta),
            Border::ZeroPadded => 1.0 / (1.0 - self.lambda * self.lambda),
        }
    }

    /// `r = λ²/(1 - θ²M²)`, the geometric ratio bounding each series term.
    pub fn ratio(&self) -> f64 {
        self.lambda * self.lambda / (1.0 - self.theta * self.theta * self.m * self.m)
    }

    /// Bound on the series tail beyond `τ_max`: `r^{τ_max+1}/(1 - r)`.
    pub fn tail_bound(&self, tau_max: usize) -> f64 {
        let r = self.ratio();
        r.powi(tau_max as i32 + 1) / (1.0 - r)
    }

    /// Bound on how far the recursion with this border drifts from the
    /// zero-padded series at an entry whose shorter prefix has length `depth`.
    pub fn border_offset_bound(&self, depth: usize) -> f64 {
        let zero_padded = 1.0 / (1.0 - self.lambda * self.lambda);
        self.ratio().powi(depth as i32) * (self.border_value() - zero_padded).abs()
    }
}

/// Fails with [`Error::NormBound`] on the first row whose norm exceeds `M`.
pub fn check_norms(inputs: &DenseMatrix, bound: f64) -> Result<()> {
    let limit = bound * (1.0 + NORM_SLACK);
    for (index, row) in inputs.row_iter().enumerate() {
        let norm = dot(row, row).sqrt();
        if !(norm <= limit) {
            return Err(Error::NormBound { index, norm, bound });
        }
    }
    Ok(())
}

#[inline]
fn step(params: &VolterraParams, prev: f64, inner: f64) -> f64 {
    let l2 = params.lambda * params.lambda;
    let t2 = params.theta * params.theta;
    1.0 + l2 * prev / (1.0 - t2 * inner)
}

/// Fills `next[j]` (1-based column `j`, `next[0]` the border) from the
/// previous row, for columns `1..=upto`.
fn sweep_row(
    params: &VolterraParams,
    z_i: &[f64],
    cols: &DenseMatrix,
    prev: &[f64],
    next: &mut [f64],
    upto: usize,
) {
    let border = params.border_value();
    next[0] = border;
    let body = &mut next[1..=upto];
    let kernel = |(j, out): (usize, &mut f64)| {
        *out = step(params, prev[j], dot(z_i, cols.row(j)));
    };
    if upto >= PAR_ROW_MIN {
        body.par_iter_mut().enumerate().for_each(kernel);
    } else {
        body.iter_mut().enumerate().for_each(kernel);
    }
}

/// Square Gram `K_{ij}` over the prefixes of one sequence (rows of `inputs`).
///
/// Row `i` is computed from row `i-1`; entries within a row are independent.
pub fn volterra_gram(inputs: &DenseMatrix, params: &VolterraParams) -> Result<DenseMatrix> {
    let mut g = DenseMatrix::zeros(0, 0);
    volterra_gram_into(inputs, params, &mut g)?;
    Ok(g)
}

/// [`volterra_gram`] written into `g`, whose allocation is reused when it
/// already has the right shape.
pub fn volterra_gram_into(inputs: &DenseMatrix, params: &VolterraParams, g: &mut DenseMatrix) -> Result<()> {
    params.validate()?;
    check_norms(inputs, params.m)?;
    let n = inputs.rows();
    let border = params.border_value();
    if g.shape() != (n, n) {
        *g = DenseMatrix::zeros(n, n);
    }
    let mut prev = vec![border; n + 1];
    let mut next = vec![border; n + 1];
    for i in 0..n {
        // lower triangle only: row i needs prev[j] for j <= i
        sweep_row(params, inputs.row(i), inputs, &prev, &mut next, i + 1);
        g.row_mut(i)[..=i].copy_from_slice(&next[1..=i + 1]);
        std::mem::swap(&mut prev, &mut next);
    }
    g.symmetrize_from_lower();
    Ok(())
}

/// Last column `K_{i,n}` of the Gram of `inputs`, with the border prepended
/// (index 0), in `O(n²)` time and `O(n)` memory.
pub fn volterra_last_column(inputs: &DenseMatrix, params: &VolterraParams) -> Result<Vec<f64>> {
    params.validate()?;
    check_norms(inputs, params.m)?;
    let n = inputs.rows();
    let border = params.border_value();
    // sweeping columns of a symmetric matrix is the same as sweeping rows
    let mut prev = vec![border; n + 1];
    let mut next = vec![border; n + 1];
    for i in 0..n {
        sweep_row(params, inputs.row(i), inputs, &prev, &mut next, n);
        std::mem::swap(&mut prev, &mut next);
    }
    Ok(prev)
}

/// Incremental extension of a training Gram by new inputs appended after the
/// training sequence. Holds the most recent column.
#[derive(Debug, Clone, PartialEq)]
pub struct VolterraExtender {
    params: VolterraParams,
    column: Vec<f64>,
}

impl VolterraExtender {
    /// `last_column` as returned by [`volterra_last_column`].
    pub fn new(params: VolterraParams, last_column: Vec<f64>) -> Self {
        Self {
            params,
            column: last_column,
        }
    }

    /// Kernel values `K(train prefix i, extended sequence)`, index 0 the border.
    pub fn column(&self) -> &[f64] {
        &self.column
    }

    /// Appends `z` and returns the new column.
    pub fn push(&mut self, train: &DenseMatrix, z: &[f64]) -> Result<&[f64]> {
        let norm = dot(z, z).sqrt();
        if !(norm <= self.params.m * (1.0 + NORM_SLACK)) {
            return Err(Error::NormBound {
                index: train.rows(),
                norm,
                bound: self.params.m,
            });
        }
        let n = train.rows();
        // walk downwards so column[i-1] still holds the previous value
        for i in (1..=n).rev() {
            self.column[i] = step(&self.params, self.column[i - 1], dot(train.row(i - 1), z));
        }
        self.column[0] = self.params.border_value();
        Ok(&self.column)
    }
}

/// Rectangular block `K(train prefix i, train ++ test[..=j])`, `n x h`.
pub fn volterra_gram_extend(
    train: &DenseMatrix,
    test: &DenseMatrix,
    params: &VolterraParams,
) -> Result<DenseMatrix> {
    if train.cols() != test.cols() {
        return Err(Error::invalid(format!(
            "train has dimension {}, test has {}",
            train.cols(),
            test.cols()
        )));
    }
    check_norms(test, params.m)?;
    let last = volterra_last_column(train, params)?;
    let n = train.rows();
    let h = test.rows();
    let mut ext = VolterraExtender::new(*params, last);
    let mut out = DenseMatrix::zeros(n, h);
    for j in 0..h {
        let col = ext.push(train, test.row(j))?;
        for i in 0..n {
            out[(i, j)] = col[i + 1];
        }
    }
    Ok(out)
}

/// Series truncated at `τ_max` on two sequences aligned at their last rows,
/// zero-padded into the past. Returns the value and the tail bound.
pub fn volterra_kernel_truncated(
    a: &DenseMatrix,
    b: &DenseMatrix,
    params: &VolterraParams,
    tau_max: usize,
) -> Result<(f64, f64)> {
    params.validate()?;
    if a.cols() != b.cols() {
        return Err(Error::invalid(format!(
            "sequences have dimensions {} and {}",
            a.cols(),
            b.cols()
        )));
    }
    check_norms(a, params.m)?;
    check_norms(b, params.m)?;
    let l2 = params.lambda * params.lambda;
    let t2 = params.theta * params.theta;
    let (na, nb) = (a.rows(), b.rows());
    let mut sum = 1.0;
    let mut term = 1.0;
    for t in 0..tau_max {
        let inner = if t < na && t < nb {
            dot(a.row(na - 1 - t), b.row(nb - 1 - t))
        } else {
            0.0
        };
        term *= l2 / (1.0 - t2 * inner);
        sum += term;
    }
    Ok((sum, params.tail_bound(tau_max)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(rows: &[[f64; 2]]) -> DenseMatrix {
        DenseMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn reused_buffers_are_fully_overwritten() {
        let z = seq(&[[0.1, 0.2], [-0.3, 0.4], [0.5, 0.0]]);
        let p = VolterraParams::new(0.5, 0.5).unwrap();
        let mut g = DenseMatrix::new(3, 3, vec![-7.5e300; 9]).unwrap();
        volterra_gram_into(&z, &p, &mut g).unwrap();
        assert_eq!(g, volterra_gram(&z, &p).unwrap());
        let mut wrong = DenseMatrix::zeros(1, 2);
        volterra_gram_into(&z, &p, &mut wrong).unwrap();
        assert_eq!(wrong, g);
    }

    #[test]
    fn parameter_constraints() {
        assert!(VolterraParams::new(0.5, 0.5).is_ok());
        assert!(VolterraParams::new(0.9, 0.5).is_err());
        assert!(VolterraParams::new(0.5, 1.0).is_err());
        assert!(VolterraParams::new(0.0, 0.5).is_err());
        assert!(VolterraParams::with_bound(0.5, 0.5, 2.0).is_err());
        let p = VolterraParams::from_fraction(0.3, 0.3, 1.0).unwrap();
        assert!((p.lambda - 0.3 * 0.91f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn first_entry_from_border() {
        let p = VolterraParams::new(0.5, 0.5).unwrap();
        let z = seq(&[[0.0, 0.0]]);
        let g = volterra_gram(&z, &p).unwrap();
        let border = 1.0 / (1.0 - 0.25);
        assert!((g[(0, 0)] - (1.0 + 0.25 * border)).abs() < 1e-15);
        assert!((g[(0, 0)] - 4.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn norm_bound_violation_names_row() {
        let p = VolterraParams::new(0.5, 0.5).unwrap();
        let z = seq(&[[0.1, 0.1], [1.0, 1.0]]);
        match volterra_gram(&z, &p) {
            Err(Error::NormBound { index, .. }) => assert_eq!(index, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn gram_is_symmetric_and_column_matches() {
        let p = VolterraParams::new(0.6, 0.4).unwrap();
        let z = seq(&[[0.1, 0.2], [-0.3, 0.5], [0.7, -0.1], [0.0, 0.9], [0.2, 0.2]]);
        let g = volterra_gram(&z, &p).unwrap();
        assert_eq!(g.asymmetry(), 0.0);
        let col = volterra_last_column(&z, &p).unwrap();
        for i in 0..5 {
            assert!((col[i + 1] - g[(i, 4)]).abs() < 1e-14);
        }
    }

    #[test]
    fn extension_matches_gram_of_concatenation() {
        let p = VolterraParams::new(0.6, 0.4).unwrap();
        let all = seq(&[[0.1, 0.2], [-0.3, 0.5], [0.7, -0.1], [0.0, 0.9], [0.2, 0.2], [-0.4, 0.1]]);
        let g = volterra_gram(&all, &p).unwrap();
        let train = all.slice_rows(0, 4);
        let test = all.slice_rows(4, 6);
        let ext = volterra_gram_extend(&train, &test, &p).unwrap();
        for i in 0..4 {
            for j in 0..2 {
                assert!((ext[(i, j)] - g[(i, 4 + j)]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn zero_padded_border_matches_series() {
        let p = VolterraParams::new(0.6, 0.4)
            .unwrap()
            .with_border(Border::ZeroPadded);
        let z = seq(&[[0.1, 0.2], [-0.3, 0.5], [0.7, -0.1]]);
        let g = volterra_gram(&z, &p).unwrap();
        let (v, bound) = volterra_kernel_truncated(&z, &z.slice_rows(0, 2), &p, 60).unwrap();
        assert!((g[(2, 1)] - v).abs() <= bound + 1e-14);
    }

    #[test]
    fn truncation_error_within_tail_bound() {
        let p = VolterraParams::new(0.8, 0.5).unwrap();
        let z = seq(&[[0.5, 0.5], [0.3, -0.6], [0.7, 0.1]]);
        let (exact, _) = volterra_kernel_truncated(&z, &z, &p, 400).unwrap();
        for t in 0..10 {
            let (v, bound) = volterra_kernel_truncated(&z, &z, &p, t).unwrap();
            assert!(exact - v >= 0.0);
            assert!(exact - v <= bound);
        }
    }
}
