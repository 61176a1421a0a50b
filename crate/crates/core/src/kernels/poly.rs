use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linsolve::{dot, DenseMatrix};
use crate::ngrc::{feature_matrix, ngrc_features, ExponentTable};

/// `K(u, v) = (c + uᵀv)^p` on τ-delay vectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolyKernelParams {
    pub tau: usize,
    pub p: usize,
    #[serde(default = "default_offset")]
    pub c: f64,
}

fn default_offset() -> f64 {
    1.0
}

impl PolyKernelParams {
    pub fn new(tau: usize, p: usize, c: f64) -> Result<Self> {
        let params = Self { tau, p, c };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if self.tau == 0 || self.p == 0 {
            return Err(Error::invalid(format!(
                "polynomial kernel needs tau >= 1 and p >= 1, got tau={}, p={}",
                self.tau, self.p
            )));
        }
        if !(self.c > 0.0) || !self.c.is_finite() {
            return Err(Error::invalid(format!(
                "polynomial kernel offset must be positive, got {}",
                self.c
            )));
        }
        Ok(())
    }
}

pub fn poly_kernel(u: &[f64], v: &[f64], params: &PolyKernelParams) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::invalid(format!(
            "kernel arguments have lengths {} and {}",
            u.len(),
            v.len()
        )));
    }
    Ok(poly_eval(dot(u, v), params))
}

#[inline]
pub(crate) fn poly_eval(inner: f64, params: &PolyKernelParams) -> f64 {
    (params.c + inner).powi(params.p as i32)
}

/// `K(u, v) = Φ(u)ᵀΦ(v)` with the NG-RC monomial feature map.
pub fn ngrc_kernel(u: &[f64], v: &[f64], table: &ExponentTable) -> Result<f64> {
    let fu = ngrc_features(u, table)?;
    let fv = ngrc_features(v, table)?;
    Ok(dot(&fu, &fv))
}

/// Polynomial-kernel Gram between two sets of delay vectors (rows).
pub(crate) fn poly_gram(a: &DenseMatrix, b: &DenseMatrix, params: &PolyKernelParams) -> DenseMatrix {
    let mut g = a.matmul_t(b).expect("delay vectors share a width");
    for v in g.as_mut_slice() {
        *v = poly_eval(*v, params);
    }
    g
}

/// Feature rows for a set of delay vectors.
pub(crate) fn ngrc_feature_rows(vectors: &DenseMatrix, table: &ExponentTable) -> Result<DenseMatrix> {
    let rows: Vec<Vec<f64>> = vectors.row_iter().map(<[f64]>::to_vec).collect();
    feature_matrix(&rows, table)
}
