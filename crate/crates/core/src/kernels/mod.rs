//! Kernels and kernel ridge models.

mod model;
mod poly;
mod volterra;

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linsolve::DenseMatrix;

pub use model::{fit_kernel_model, kernel_gram, predict_kernel, KernelModel, KernelSession};
pub use poly::{ngrc_kernel, poly_kernel, PolyKernelParams};
pub use volterra::{
    check_norms, volterra_gram, volterra_gram_extend, volterra_gram_into, volterra_kernel_truncated,
    volterra_last_column, Border, VolterraExtender, VolterraParams,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum KernelSpec {
    /// `(c + uᵀv)^p` on τ-delay vectors.
    Polynomial(PolyKernelParams),
    /// `Φ(u)ᵀΦ(v)` with the NG-RC feature map on τ-delay vectors.
    NgrcDot { tau: usize, p: usize },
    /// Volterra kernel on whole input prefixes.
    Volterra(VolterraParams),
}

impl KernelSpec {
    /// Delay length for the lagged kernels, `None` for Volterra.
    pub fn tau(&self) -> Option<usize> {
        match self {
            KernelSpec::Polynomial(p) => Some(p.tau),
            KernelSpec::NgrcDot { tau, .. } => Some(*tau),
            KernelSpec::Volterra(_) => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            KernelSpec::Polynomial(p) => p.validate(),
            KernelSpec::NgrcDot { tau, p } => {
                if *tau == 0 || *p == 0 {
                    Err(Error::invalid(format!(
                        "NG-RC kernel needs tau >= 1 and p >= 1, got tau={tau}, p={p}"
                    )))
                } else {
                    Ok(())
                }
            }
            KernelSpec::Volterra(v) => v.validate(),
        }
    }

    pub fn label(&self) -> String {
        match self {
            KernelSpec::Polynomial(p) => format!("poly(tau={},p={},c={})", p.tau, p.p, p.c),
            KernelSpec::NgrcDot { tau, p } => format!("ngrc-dot(tau={tau},p={p})"),
            KernelSpec::Volterra(v) => format!(
                "volterra(lambda={},theta={},M={},border={:?})",
                v.lambda, v.theta, v.m, v.border
            ),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GramKind {
    /// Training inputs against themselves.
    Square,
    /// Training inputs against an extension of the sequence.
    Extension,
}

/// A Gram matrix together with the kernel that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GramMatrix {
    pub kernel: KernelSpec,
    pub kind: GramKind,
    pub values: DenseMatrix,
}

impl GramMatrix {
    /// Writes the entries as CSV with a `# kernel=…` comment line.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "# kernel={} kind={:?}", self.kernel.label(), self.kind)?;
        for row in self.values.row_iter() {
            let line: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        out.flush()?;
        Ok(())
    }
}
