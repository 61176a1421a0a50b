//! NG-RC: τ-delay embedding, monomial features up to degree `p`, and the
//! primal ridge readout `w* = (XᵀX + λI)⁻¹XᵀY`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linsolve::{solve_ridge_primal, DenseMatrix, RidgeSolution};
use crate::series::TimeSeries;

/// Largest exponent table we are willing to materialize (entries, not rows).
pub const MAX_TABLE_ENTRIES: usize = 1 << 28;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DelaySpec {
    pub tau: usize,
    pub d: usize,
}

impl DelaySpec {
    pub fn new(tau: usize, d: usize) -> Result<Self> {
        if tau == 0 || d == 0 {
            return Err(Error::invalid(format!(
                "delay spec needs tau >= 1 and d >= 1, got tau={tau}, d={d}"
            )));
        }
        Ok(Self { tau, d })
    }

    /// Length of a delay vector, `τd`.
    pub fn width(&self) -> usize {
        self.tau * self.d
    }
}

/// `N = C(τd + p, p)`, the number of monomials of degree at most `p` in `τd`
/// variables, constant included.
pub fn feature_dim(tau: usize, d: usize, p: usize) -> Result<usize> {
    if tau == 0 || d == 0 || p == 0 {
        return Err(Error::invalid(format!(
            "feature_dim needs tau, d, p >= 1, got ({tau}, {d}, {p})"
        )));
    }
    let m = tau
        .checked_mul(d)
        .ok_or_else(|| Error::Capacity(format!("tau*d overflows for tau={tau}, d={d}")))?;
    binomial(m as u128 + p as u128, p as u128)
        .and_then(|c| usize::try_from(c).ok())
        .ok_or_else(|| Error::Capacity(format!("C({m}+{p}, {p}) overflows usize")))
}

fn binomial(n: u128, k: u128) -> Option<u128> {
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 1..=k {
        // c * (n - k + i) is divisible by i at every step
        c = c.checked_mul(n - k + i)? / i;
    }
    Some(c)
}

/// Monomial exponents in graded lexicographic order, constant first.
///
/// Within a degree, rows are sorted so that larger exponents on earlier
/// variables come first: for two variables and `p = 2` the order is
/// `1, v₀, v₁, v₀², v₀v₁, v₁²`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExponentTable {
    width: usize,
    p: usize,
    exps: Vec<u8>,
}

impl ExponentTable {
    pub fn build(tau: usize, d: usize, p: usize) -> Result<Self> {
        let n = feature_dim(tau, d, p)?;
        let width = tau * d;
        if p > u8::MAX as usize {
            return Err(Error::Capacity(format!("degree {p} exceeds 255")));
        }
        if n.checked_mul(width).is_none_or(|e| e > MAX_TABLE_ENTRIES) {
            return Err(Error::Capacity(format!(
                "exponent table with {n} rows of width {width} is too large"
            )));
        }
        let mut exps = Vec::with_capacity(n * width);
        let mut cur = vec![0u8; width];
        for degree in 0..=p {
            push_degree(&mut exps, &mut cur, 0, degree);
        }
        debug_assert_eq!(exps.len(), n * width);
        Ok(Self { width, p, exps })
    }

    /// Number of monomials `N`.
    pub fn len(&self) -> usize {
        if self.width == 0 {
            0
        } else {
            self.exps.len() / self.width
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn max_degree(&self) -> usize {
        self.p
    }

    pub fn row(&self, k: usize) -> &[u8] {
        &self.exps[k * self.width..(k + 1) * self.width]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u8]> {
        self.exps.chunks_exact(self.width)
    }

    pub fn degree(&self, k: usize) -> usize {
        self.row(k).iter().map(|&e| e as usize).sum()
    }
}

fn push_degree(out: &mut Vec<u8>, cur: &mut [u8], pos: usize, remaining: usize) {
    if pos + 1 == cur.len() {
        cur[pos] = remaining as u8;
        out.extend_from_slice(cur);
        cur[pos] = 0;
        return;
    }
    for e in (0..=remaining).rev() {
        cur[pos] = e as u8;
        push_degree(out, cur, pos + 1, remaining - e);
    }
    cur[pos] = 0;
}

pub fn build_exponent_table(tau: usize, d: usize, p: usize) -> Result<ExponentTable> {
    ExponentTable::build(tau, d, p)
}

/// Delay vectors `(z_{t-τ+1}, …, z_t)` for `t = τ-1 … n-1`, oldest lag first.
pub fn delay_vectors(series: &TimeSeries, tau: usize) -> Result<Vec<Vec<f64>>> {
    delay_rows(series.values(), tau)
}

pub(crate) fn delay_rows(values: &DenseMatrix, tau: usize) -> Result<Vec<Vec<f64>>> {
    if tau == 0 {
        return Err(Error::invalid("tau must be at least 1"));
    }
    let n = values.rows();
    if n < tau {
        return Err(Error::invalid(format!(
            "series of length {n} is shorter than tau={tau}"
        )));
    }
    let d = values.cols();
    let flat = values.as_slice();
    Ok((tau - 1..n)
        .map(|t| flat[(t + 1 - tau) * d..(t + 1) * d].to_vec())
        .collect())
}

/// `Φ(v)`: entry `k` is `Π_s v_s^{e_{k,s}}` for table row `k`.
pub fn ngrc_features(v: &[f64], table: &ExponentTable) -> Result<Vec<f64>> {
    if v.len() != table.width() {
        return Err(Error::invalid(format!(
            "feature input has length {}, table expects {}",
            v.len(),
            table.width()
        )));
    }
    let mut out = vec![0.0; table.len()];
    fill_features(v, table, &mut out);
    Ok(out)
}

fn fill_features(v: &[f64], table: &ExponentTable, out: &mut [f64]) {
    // powers[s][e] = v_s^e, built by repeated multiplication
    let p = table.max_degree();
    let mut powers = vec![1.0; v.len() * (p + 1)];
    for (s, &x) in v.iter().enumerate() {
        for e in 1..=p {
            powers[s * (p + 1) + e] = powers[s * (p + 1) + e - 1] * x;
        }
    }
    for (o, row) in out.iter_mut().zip(table.rows()) {
        let mut prod = 1.0;
        for (s, &e) in row.iter().enumerate() {
            if e != 0 {
                prod *= powers[s * (p + 1) + e as usize];
            }
        }
        *o = prod;
    }
}

/// Feature matrix with one row `Φ(v)ᵀ` per delay vector.
pub fn feature_matrix(vectors: &[Vec<f64>], table: &ExponentTable) -> Result<DenseMatrix> {
    let n_feat = table.len();
    if let Some(bad) = vectors.iter().find(|v| v.len() != table.width()) {
        return Err(Error::invalid(format!(
            "delay vector of length {}, table expects {}",
            bad.len(),
            table.width()
        )));
    }
    let mut data = vec![0.0; vectors.len() * n_feat];
    if n_feat > 0 {
        data.par_chunks_mut(n_feat)
            .zip(vectors.par_iter())
            .for_each(|(row, v)| fill_features(v, table, row));
    }
    Ok(DenseMatrix::from_raw(vectors.len(), n_feat, data))
}

/// Fitted NG-RC readout. Serializes as `(tau, d, p, weights, lambda_reg)`;
/// the exponent table is rebuilt on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NgrcModelDoc", into = "NgrcModelDoc")]
pub struct NgrcModel {
    delay: DelaySpec,
    table: ExponentTable,
    weights: DenseMatrix,
    lambda_reg: f64,
}

#[derive(Serialize, Deserialize)]
struct NgrcModelDoc {
    tau: usize,
    d: usize,
    p: usize,
    lambda_reg: f64,
    weights: DenseMatrix,
}

impl TryFrom<NgrcModelDoc> for NgrcModel {
    type Error = Error;

    fn try_from(doc: NgrcModelDoc) -> Result<Self> {
        let delay = DelaySpec::new(doc.tau, doc.d)?;
        let table = ExponentTable::build(doc.tau, doc.d, doc.p)?;
        if doc.weights.rows() != table.len() {
            return Err(Error::invalid(format!(
                "weights have {} rows, feature space has {}",
                doc.weights.rows(),
                table.len()
            )));
        }
        Ok(Self {
            delay,
            table,
            weights: doc.weights,
            lambda_reg: doc.lambda_reg,
        })
    }
}

impl From<NgrcModel> for NgrcModelDoc {
    fn from(m: NgrcModel) -> Self {
        Self {
            tau: m.delay.tau,
            d: m.delay.d,
            p: m.table.max_degree(),
            lambda_reg: m.lambda_reg,
            weights: m.weights,
        }
    }
}

impl NgrcModel {
    pub fn delay(&self) -> DelaySpec {
        self.delay
    }

    pub fn table(&self) -> &ExponentTable {
        &self.table
    }

    /// `N x m` readout weights.
    pub fn weights(&self) -> &DenseMatrix {
        &self.weights
    }

    pub fn lambda_reg(&self) -> f64 {
        self.lambda_reg
    }

    pub fn output_dim(&self) -> usize {
        self.weights.cols()
    }
}

/// Ridge regression of `targets[t]` on `Φ(inputs[t-τ+1..=t])` for every `t`
/// with a full delay window. The first `τ-1` rows are consumed by the
/// embedding.
pub fn fit_ngrc(
    inputs: &TimeSeries,
    targets: &TimeSeries,
    tau: usize,
    p: usize,
    lambda_reg: f64,
) -> Result<NgrcModel> {
    let (model, _) = fit_ngrc_with_report(inputs, targets, tau, p, lambda_reg)?;
    Ok(model)
}

pub fn fit_ngrc_with_report(
    inputs: &TimeSeries,
    targets: &TimeSeries,
    tau: usize,
    p: usize,
    lambda_reg: f64,
) -> Result<(NgrcModel, RidgeSolution)> {
    if inputs.len() != targets.len() {
        return Err(Error::invalid(format!(
            "{} inputs but {} targets",
            inputs.len(),
            targets.len()
        )));
    }
    let delay = DelaySpec::new(tau, inputs.dim())?;
    let table = ExponentTable::build(tau, delay.d, p)?;
    let vectors = delay_vectors(inputs, tau)?;
    if vectors.len() < table.len() {
        log::warn!(
            "NG-RC fit has {} rows for {} features; the ridge term carries the solution",
            vectors.len(),
            table.len()
        );
    }
    let x = feature_matrix(&vectors, &table)?;
    let y = targets.values().slice_rows(tau - 1, targets.len());
    let sol = solve_ridge_primal(&x, &y, lambda_reg)?;
    let model = NgrcModel {
        delay,
        table,
        weights: sol.coefficients.clone(),
        lambda_reg,
    };
    Ok((model, sol))
}

/// `ŷ = (w*)ᵀ Φ(v)` for one delay vector.
pub fn predict_ngrc(model: &NgrcModel, v: &[f64]) -> Result<Vec<f64>> {
    let phi = ngrc_features(v, &model.table)?;
    let m = model.weights.cols();
    let mut out = vec![0.0; m];
    for (k, &f) in phi.iter().enumerate() {
        if f != 0.0 {
            for (o, w) in out.iter_mut().zip(model.weights.row(k)) {
                *o += f * w;
            }
        }
    }
    Ok(out)
}

/// Predictions for every full delay window of `inputs`.
pub fn predict_ngrc_series(model: &NgrcModel, inputs: &TimeSeries) -> Result<DenseMatrix> {
    if inputs.dim() != model.delay.d {
        return Err(Error::invalid(format!(
            "model expects {}-dimensional inputs, got {}",
            model.delay.d,
            inputs.dim()
        )));
    }
    let vectors = delay_vectors(inputs, model.delay.tau)?;
    feature_matrix(&vectors, &model.table)?.matmul(&model.weights)
}
