//! Dense symmetric solves behind both ridge closed forms, and the symmetric
//! matrix square root used by the BEKK simulator.
//!
//! Loss convention: sums of squares, no `1/n` factor. The regularization
//! strength therefore absorbs the sample-size factor of a mean-squared loss.

mod cholesky;
mod matrix;

pub use cholesky::{Cholesky, NotPositiveDefinite};
pub use matrix::{dot, DenseMatrix};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative symmetry tolerance for Gram inputs.
pub const GRAM_SYMMETRY_TOL: f64 = 1e-8;
const JITTER_START: f64 = 1e-12;
const JITTER_RETRIES: usize = 4;
/// Estimated condition number above which small systems are re-solved by an
/// orthogonal factorization.
const REFINE_COND: f64 = 1e4;
/// Largest `rows·cols·min(rows, cols)` for the SVD re-solve of a primal system.
const SVD_MAX_WORK: f64 = 2e8;
/// Largest Gram order for the spectral re-solve.
const SPECTRAL_MAX_ORDER: usize = 600;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveRoute {
    Cholesky,
    /// Thin SVD of the design matrix.
    Svd,
    /// Eigendecomposition of the Gram matrix, null space dropped.
    PseudoInverse,
}

/// What the factorization saw while solving.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditioningReport {
    /// Smallest Cholesky diagonal, or smallest retained eigenvalue on the
    /// pseudo-inverse route.
    pub min_pivot: f64,
    /// Diagonal jitter that had to be added on top of the regularizer.
    pub jitter: f64,
    pub route: SolveRoute,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeSolution {
    pub coefficients: DenseMatrix,
    pub regularizer: f64,
    pub conditioning: ConditioningReport,
}

fn check_regularizer(lambda_reg: f64) -> Result<()> {
    if !(lambda_reg > 0.0) || !lambda_reg.is_finite() {
        return Err(Error::invalid(format!(
            "regularizer must be positive and finite, got {lambda_reg}"
        )));
    }
    Ok(())
}

/// Factors `a + shift·I`, escalating diagonal jitter from `1e-12·‖a‖_max`
/// tenfold per retry.
fn factor_with_jitter(a: &DenseMatrix, shift: f64) -> Result<(Cholesky, f64)> {
    match Cholesky::factor(a, shift) {
        Ok(c) => return Ok((c, 0.0)),
        Err(e) => log::debug!("cholesky failed at pivot {} ({:e})", e.index, e.value),
    }
    let scale = a.max_abs().max(shift.abs()).max(f64::MIN_POSITIVE);
    let mut jitter = JITTER_START * scale;
    let mut last = None;
    for _ in 0..JITTER_RETRIES {
        match Cholesky::factor(a, shift + jitter) {
            Ok(c) => {
                log::warn!("cholesky needed diagonal jitter {jitter:e}");
                return Ok((c, jitter));
            }
            Err(e) => last = Some(e),
        }
        jitter *= 10.0;
    }
    let e = last.expect("at least one retry");
    Err(Error::Conditioning(format!(
        "factorization failed at pivot {} (value {:e}) after {} jitter retries",
        e.index, e.value, JITTER_RETRIES
    )))
}

/// `w* = (XᵀX + λ I)⁻¹ XᵀY`, one factorization shared by all target columns.
pub fn solve_ridge_primal(
    x: &DenseMatrix,
    y: &DenseMatrix,
    lambda_reg: f64,
) -> Result<RidgeSolution> {
    check_regularizer(lambda_reg)?;
    if x.rows() == 0 {
        return Err(Error::invalid("design matrix has no rows"));
    }
    if x.rows() != y.rows() {
        return Err(Error::invalid(format!(
            "design has {} rows but targets have {}",
            x.rows(),
            y.rows()
        )));
    }
    if !x.all_finite() || !y.all_finite() {
        return Err(Error::invalid("non-finite entry in design or targets"));
    }
    let n_feat = x.cols();
    let rows = x.rows();
    let svd_affordable = rows as f64 * n_feat as f64 * rows.min(n_feat) as f64 <= SVD_MAX_WORK;
    if rows < n_feat && svd_affordable {
        // the normal equations would carry a null space held up only by λ
        return primal_svd(x, y, lambda_reg);
    }
    let gram = x.t_matmul(x)?;
    let rhs = x.t_matmul(y)?;
    let (chol, jitter) = factor_with_jitter(&gram, lambda_reg)?;
    if svd_affordable && estimated_condition(&gram, lambda_reg, &chol) > REFINE_COND {
        return primal_svd(x, y, lambda_reg);
    }
    Ok(RidgeSolution {
        coefficients: chol.solve(&rhs),
        regularizer: lambda_reg,
        conditioning: ConditioningReport {
            min_pivot: chol.min_pivot(),
            jitter,
            route: SolveRoute::Cholesky,
        },
    })
}

/// Cheap lower estimate of `cond(A + shift·I)` from the Cholesky pivots.
fn estimated_condition(a: &DenseMatrix, shift: f64, chol: &Cholesky) -> f64 {
    let n = a.rows();
    let max_diag = (0..n).map(|i| a[(i, i)] + shift).fold(0.0_f64, f64::max);
    let p = chol.min_pivot();
    max_diag / (p * p)
}

/// `w* = V diag(σ/(σ² + λ)) Uᵀ Y` from the thin SVD of `X`.
fn primal_svd(x: &DenseMatrix, y: &DenseMatrix, lambda_reg: f64) -> Result<RidgeSolution> {
    let svd = nalgebra::SVD::new(x.to_nalgebra(), true, true);
    let u = svd.u.as_ref().expect("requested U");
    let v_t = svd.v_t.as_ref().expect("requested Vᵀ");
    let mut ut_y = u.transpose() * y.to_nalgebra();
    let mut min_sigma = f64::INFINITY;
    for (i, &s) in svd.singular_values.iter().enumerate() {
        min_sigma = min_sigma.min(s);
        ut_y.row_mut(i).scale_mut(s / (s * s + lambda_reg));
    }
    let w = v_t.transpose() * ut_y;
    let coefficients = DenseMatrix::from_nalgebra(&w);
    if !coefficients.all_finite() {
        return Err(Error::Conditioning("SVD route produced non-finite weights".into()));
    }
    Ok(RidgeSolution {
        coefficients,
        regularizer: lambda_reg,
        conditioning: ConditioningReport {
            min_pivot: if min_sigma.is_finite() { min_sigma } else { 0.0 },
            jitter: 0.0,
            route: SolveRoute::Svd,
        },
    })
}

/// Dual coefficients `α* = (K² + λK)⁻¹ K Y`.
///
/// Computed as `(K + λI)⁻¹ Y` by Cholesky; for singular `K` the two differ only
/// by components in the kernel of `K`, which no prediction `Σ αᵢ K(·, zᵢ)` can
/// see. If the factorization fails even after jitter, falls back to the
/// minimum-norm solution `V diag(1/(μᵢ+λ)) Vᵀ Y` over the numerically nonzero
/// eigenpairs `(μᵢ, vᵢ)` of `K`. Small, badly conditioned systems take the
/// eigendecomposition route directly, since a null space held up only by `λ`
/// inflates `α` by `1/λ` and with it the rounding in every prediction.
pub fn solve_ridge_gram(k: &DenseMatrix, y: &DenseMatrix, lambda_reg: f64) -> Result<RidgeSolution> {
    check_regularizer(lambda_reg)?;
    if !k.is_square() {
        return Err(Error::invalid(format!(
            "Gram matrix must be square, got {}x{}",
            k.rows(),
            k.cols()
        )));
    }
    if k.rows() != y.rows() {
        return Err(Error::invalid(format!(
            "Gram matrix has {} rows but targets have {}",
            k.rows(),
            y.rows()
        )));
    }
    if !k.all_finite() || !y.all_finite() {
        return Err(Error::invalid("non-finite entry in Gram matrix or targets"));
    }
    let scale = k.max_abs();
    let asym = k.asymmetry();
    if asym > GRAM_SYMMETRY_TOL * scale {
        return Err(Error::invalid(format!(
            "Gram matrix asymmetry {asym:e} exceeds {GRAM_SYMMETRY_TOL:e}·‖K‖_max"
        )));
    }
    match factor_with_jitter(k, lambda_reg) {
        Ok((chol, _))
            if k.rows() <= SPECTRAL_MAX_ORDER
                && estimated_condition(k, lambda_reg, &chol) > REFINE_COND =>
        {
            gram_pseudo_inverse(k, y, lambda_reg)
        }
        Ok((chol, jitter)) => Ok(RidgeSolution {
            coefficients: chol.solve(y),
            regularizer: lambda_reg,
            conditioning: ConditioningReport {
                min_pivot: chol.min_pivot(),
                jitter,
                route: SolveRoute::Cholesky,
            },
        }),
        Err(err) => {
            log::warn!("{err}; using the pseudo-inverse route");
            gram_pseudo_inverse(k, y, lambda_reg)
        }
    }
}

fn gram_pseudo_inverse(k: &DenseMatrix, y: &DenseMatrix, lambda_reg: f64) -> Result<RidgeSolution> {
    let n = k.rows();
    let mut sym = k.to_nalgebra();
    sym = (&sym + sym.transpose()) * 0.5;
    let eig = nalgebra::SymmetricEigen::new(sym);
    let top = eig.eigenvalues.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let cutoff = top * n as f64 * f64::EPSILON;
    let v = &eig.eigenvectors;
    let vt_y = v.transpose() * y.to_nalgebra();
    let mut scaled = vt_y.clone();
    let mut min_kept = f64::INFINITY;
    for (i, &mu) in eig.eigenvalues.iter().enumerate() {
        let g = if mu > cutoff {
            min_kept = min_kept.min(mu);
            1.0 / (mu + lambda_reg)
        } else {
            0.0
        };
        scaled.row_mut(i).scale_mut(g);
    }
    let alpha = v * scaled;
    let coefficients = DenseMatrix::from_nalgebra(&alpha);
    if !coefficients.all_finite() {
        return Err(Error::Conditioning(
            "pseudo-inverse route produced non-finite coefficients".into(),
        ));
    }
    Ok(RidgeSolution {
        coefficients,
        regularizer: lambda_reg,
        conditioning: ConditioningReport {
            min_pivot: if min_kept.is_finite() { min_kept } else { 0.0 },
            jitter: 0.0,
            route: SolveRoute::PseudoInverse,
        },
    })
}

/// Symmetric square root `R = V diag(√μ) Vᵀ` of a positive semidefinite matrix.
///
/// Eigenvalues down to `-1e-10·‖S‖₂` are clipped to zero; anything more
/// negative is rejected.
pub fn psd_sqrt(s: &DenseMatrix) -> Result<DenseMatrix> {
    if !s.is_square() {
        return Err(Error::invalid("psd_sqrt needs a square matrix"));
    }
    if !s.all_finite() {
        return Err(Error::invalid("psd_sqrt input has non-finite entries"));
    }
    let scale = s.max_abs();
    if s.asymmetry() > GRAM_SYMMETRY_TOL * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::invalid("psd_sqrt input is not symmetric"));
    }
    let mut m = s.to_nalgebra();
    m = (&m + m.transpose()) * 0.5;
    let eig = nalgebra::SymmetricEigen::new(m);
    let norm = eig.eigenvalues.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let mut roots = Vec::with_capacity(eig.eigenvalues.len());
    for &mu in eig.eigenvalues.iter() {
        if mu < -1e-10 * norm {
            return Err(Error::invalid(format!(
                "matrix is indefinite: eigenvalue {mu:e} below -1e-10·{norm:e}"
            )));
        }
        roots.push(mu.max(0.0).sqrt());
    }
    let v = &eig.eigenvectors;
    let r = v * nalgebra::DMatrix::from_diagonal(&nalgebra::DVector::from_vec(roots)) * v.transpose();
    let mut out = DenseMatrix::from_nalgebra(&r);
    // exact symmetry
    let n = out.rows();
    for i in 0..n {
        for j in 0..i {
            let avg = 0.5 * (out[(i, j)] + out[(j, i)]);
            out[(i, j)] = avg;
            out[(j, i)] = avg;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(v: &[f64]) -> DenseMatrix {
        DenseMatrix::column(v).unwrap()
    }

    #[test]
    fn scalar_primal_cases() {
        let x = col(&[1.0]);
        let y = col(&[2.0]);
        let w = solve_ridge_primal(&x, &y, 1e-12).unwrap();
        assert!((w.coefficients[(0, 0)] - 2.0).abs() < 1e-10);
        let w = solve_ridge_primal(&x, &y, 1.0).unwrap();
        assert!((w.coefficients[(0, 0)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn scalar_and_identity_gram_cases() {
        let a = solve_ridge_gram(&col(&[1.0]), &col(&[1.0]), 1.0).unwrap();
        assert!((a.coefficients[(0, 0)] - 0.5).abs() < 1e-15);
        let a = solve_ridge_gram(&DenseMatrix::identity(3), &col(&[1.0, 2.0, 3.0]), 1e-12).unwrap();
        for (i, want) in [1.0, 2.0, 3.0].iter().enumerate() {
            assert!((a.coefficients[(i, 0)] - want).abs() < 1e-10);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let x = col(&[1.0]);
        assert!(matches!(
            solve_ridge_primal(&x, &x, 0.0),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            solve_ridge_primal(&x, &x, -1.0),
            Err(Error::InvalidInput(_))
        ));
        let asym = DenseMatrix::from_rows(&[[1.0, 0.5], [0.0, 1.0]]).unwrap();
        assert!(matches!(
            solve_ridge_gram(&asym, &col(&[1.0, 1.0]), 1.0),
            Err(Error::InvalidInput(_))
        ));
        let indefinite = DenseMatrix::from_rows(&[[1.0, 0.0], [0.0, -1.0]]).unwrap();
        assert!(psd_sqrt(&indefinite).is_err());
    }

    #[test]
    fn pseudo_inverse_route_matches_cholesky_on_nonsingular_input() {
        let k = DenseMatrix::from_rows(&[[2.0, 0.5, 0.0], [0.5, 1.0, 0.2], [0.0, 0.2, 3.0]]).unwrap();
        let y = DenseMatrix::from_rows(&[[1.0, 0.0], [2.0, 1.0], [-1.0, 4.0]]).unwrap();
        let a = solve_ridge_gram(&k, &y, 0.3).unwrap();
        let b = gram_pseudo_inverse(&k, &y, 0.3).unwrap();
        assert_eq!(b.conditioning.route, SolveRoute::PseudoInverse);
        assert!(a.coefficients.sub(&b.coefficients).max_abs() < 1e-12);
    }

    #[test]
    fn pseudo_inverse_drops_null_space() {
        // K = diag(1, 0): the null direction gets no weight
        let k = DenseMatrix::from_diag(&[1.0, 0.0]);
        let b = gram_pseudo_inverse(&k, &col(&[1.0, 1.0]), 1.0).unwrap();
        assert!((b.coefficients[(0, 0)] - 0.5).abs() < 1e-15);
        assert_eq!(b.coefficients[(1, 0)], 0.0);
    }

    #[test]
    fn sqrt_of_diagonal_and_identity() {
        let r = psd_sqrt(&DenseMatrix::identity(2)).unwrap();
        assert!(r.sub(&DenseMatrix::identity(2)).max_abs() < 1e-15);
        let r = psd_sqrt(&DenseMatrix::from_diag(&[4.0, 9.0])).unwrap();
        assert!(r.sub(&DenseMatrix::from_diag(&[2.0, 3.0])).max_abs() < 1e-14);
    }

    #[test]
    fn sqrt_clips_tiny_negative_eigenvalues() {
        let s = DenseMatrix::from_diag(&[1.0, -1e-14]);
        let r = psd_sqrt(&s).unwrap();
        assert_eq!(r[(1, 1)], 0.0);
    }
}
