use crate::error::{Error, Result};
use crate::linsolve::DenseMatrix;

pub const MAPE_EPSILON: f64 = 1e-8;

pub(crate) fn check_shapes(y: &DenseMatrix, y_hat: &DenseMatrix) -> Result<()> {
    if y.shape() != y_hat.shape() {
        return Err(Error::invalid(format!(
            "reference is {:?}, prediction {:?}",
            y.shape(),
            y_hat.shape()
        )));
    }
    if y.rows() == 0 {
        return Err(Error::invalid("metrics need at least one row"));
    }
    Ok(())
}

/// NMSE averaged over dimensions with nonzero variance; the zero-variance
/// dimensions are returned alongside.
pub fn nmse_with_flags(y: &DenseMatrix, y_hat: &DenseMatrix) -> Result<(f64, Vec<usize>)> {
    check_shapes(y, y_hat)?;
    let (h, d) = y.shape();
    let mut total = 0.0;
    let mut degenerate = Vec::new();
    for u in 0..d {
        let mean = (0..h).map(|i| y[(i, u)]).sum::<f64>() / h as f64;
        let sse: f64 = (0..h).map(|i| (y[(i, u)] - y_hat[(i, u)]).powi(2)).sum();
        let tss: f64 = (0..h).map(|i| (y[(i, u)] - mean).powi(2)).sum();
        if tss > 0.0 {
            total += sse / tss;
        } else {
            degenerate.push(u);
        }
    }
    let used = d - degenerate.len();
    if used == 0 {
        return Err(Error::invalid("every dimension of the reference is constant"));
    }
    Ok((total / used as f64, degenerate))
}

pub fn nmse(y: &DenseMatrix, y_hat: &DenseMatrix) -> Result<f64> {
    nmse_with_flags(y, y_hat).map(|(v, _)| v)
}

/// Mean over steps of the 1-norm error.
pub fn mae(y: &DenseMatrix, y_hat: &DenseMatrix) -> Result<f64> {
    check_shapes(y, y_hat)?;
    let total: f64 = y
        .as_slice()
        .iter()
        .zip(y_hat.as_slice())
        .map(|(a, b)| (a - b).abs())
        .sum();
    Ok(total / y.rows() as f64)
}

/// Mean over dimensions of the lower median absolute error.
pub fn mdae(y: &DenseMatrix, y_hat: &DenseMatrix) -> Result<f64> {
    check_shapes(y, y_hat)?;
    let (h, d) = y.shape();
    let mut total = 0.0;
    let mut errs = vec![0.0; h];
    for u in 0..d {
        for i in 0..h {
            errs[i] = (y[(i, u)] - y_hat[(i, u)]).abs();
        }
        errs.sort_by(f64::total_cmp);
        total += errs[(h - 1) / 2];
    }
    Ok(total / d as f64)
}

/// `|y - ŷ| / max(ε, |y|)` averaged over all entries, per-entry denominator.
pub fn mape(y: &DenseMatrix, y_hat: &DenseMatrix, epsilon: f64) -> Result<f64> {
    check_shapes(y, y_hat)?;
    if !(epsilon > 0.0) {
        return Err(Error::invalid(format!("MAPE floor must be positive, got {epsilon}")));
    }
    let total: f64 = y
        .as_slice()
        .iter()
        .zip(y_hat.as_slice())
        .map(|(a, b)| (a - b).abs() / epsilon.max(a.abs()))
        .sum();
    Ok(total / y.as_slice().len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_entry_cases() {
        let y = DenseMatrix::column(&[1.0]).unwrap();
        let p = DenseMatrix::column(&[1.1]).unwrap();
        assert!((mae(&y, &p).unwrap() - 0.1).abs() < 1e-12);
        assert!((mdae(&y, &p).unwrap() - 0.1).abs() < 1e-12);
        assert!((mape(&y, &p, MAPE_EPSILON).unwrap() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn lower_median_for_even_counts() {
        let y = DenseMatrix::column(&[0.0, 0.0, 0.0, 0.0]).unwrap();
        let p = DenseMatrix::column(&[1.0, 4.0, 2.0, 3.0]).unwrap();
        assert_eq!(mdae(&y, &p).unwrap(), 2.0);
    }

    #[test]
    fn constant_dimension_is_flagged() {
        let y = DenseMatrix::from_rows(&[[1.0, 2.0], [1.0, 3.0]]).unwrap();
        let (v, flags) = nmse_with_flags(&y, &y).unwrap();
        assert_eq!(v, 0.0);
        assert_eq!(flags, vec![0]);
    }
}
