//! Fold construction and grid search.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datasets::format_value;
use crate::error::{Error, Result};
use crate::estimator::{fit_estimator, EstimatorKind, EstimatorSpec, TargetTransform};
use crate::forecast::{open_loop, path_continue};
use crate::kernels::Border;
use crate::linsolve::DenseMatrix;
use crate::series::TimeSeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FoldMode {
    Overlapping,
    Expanding,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Range<usize>,
    pub validation: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub mode: FoldMode,
    pub folds: Vec<Fold>,
}

impl FoldPlan {
    pub fn len(&self) -> usize {
        self.folds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.folds.is_empty()
    }
}

/// Sliding windows: train on `[s, s+fold_len)`, validate on the `val_len`
/// points after it, for `s = 0, stride, 2·stride, …`.
pub fn overlapping_folds(n_train: usize, fold_len: usize, val_len: usize, stride: usize) -> Result<FoldPlan> {
    if fold_len == 0 || val_len == 0 || stride == 0 {
        return Err(Error::invalid("fold length, validation length and stride must be positive"));
    }
    if fold_len + val_len > n_train {
        return Err(Error::invalid(format!(
            "fold {fold_len} plus validation {val_len} exceeds {n_train} training points"
        )));
    }
    let folds = (0..)
        .map(|k| k * stride)
        .take_while(|s| s + fold_len + val_len <= n_train)
        .map(|s| Fold {
            train: s..s + fold_len,
            validation: s + fold_len..s + fold_len + val_len,
        })
        .collect();
    Ok(FoldPlan {
        mode: FoldMode::Overlapping,
        folds,
    })
}

/// `k` equal blocks (the last one takes the remainder); fold `i` trains on
/// the first `i` blocks and validates on block `i+1`.
pub fn expanding_folds(n_train: usize, k: usize) -> Result<FoldPlan> {
    if k < 2 || n_train < k {
        return Err(Error::invalid(format!(
            "expanding folds need 2 <= k <= n_train, got k={k}, n_train={n_train}"
        )));
    }
    let b = n_train / k;
    let end = |i: usize| if i == k { n_train } else { i * b };
    let folds = (1..k)
        .map(|i| Fold {
            train: 0..end(i),
            validation: end(i)..end(i + 1),
        })
        .collect();
    Ok(FoldPlan {
        mode: FoldMode::Expanding,
        folds,
    })
}

/// Candidate values per hyperparameter. Lagged estimators use `taus`,
/// `degrees` and `lambda_regs`; Volterra uses `thetas` with `lambdas` and/or
/// `lambda_fractions` (fractions of the cap `sqrt(1-θ²M²)`), and `lambda_regs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub kind: EstimatorKind,
    #[serde(default)]
    pub taus: Vec<usize>,
    #[serde(default)]
    pub degrees: Vec<usize>,
    pub lambda_regs: Vec<f64>,
    #[serde(default)]
    pub lambdas: Vec<f64>,
    #[serde(default)]
    pub lambda_fractions: Vec<f64>,
    #[serde(default)]
    pub thetas: Vec<f64>,
    #[serde(default = "default_m")]
    pub m: f64,
    #[serde(default = "default_headroom")]
    pub headroom: f64,
    #[serde(default)]
    pub border: Border,
    #[serde(default = "default_volterra_washout")]
    pub volterra_washout: usize,
}

fn default_m() -> f64 {
    1.0
}

fn default_headroom() -> f64 {
    1.0
}

fn default_volterra_washout() -> usize {
    100
}

/// A Volterra pair rejected before fitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrunedPair {
    pub lambda: f64,
    pub theta: f64,
    pub reason: String,
}

impl Grid {
    pub fn lagged(kind: EstimatorKind, taus: Vec<usize>, degrees: Vec<usize>, lambda_regs: Vec<f64>) -> Self {
        Self {
            kind,
            taus,
            degrees,
            lambda_regs,
            lambdas: Vec::new(),
            lambda_fractions: Vec::new(),
            thetas: Vec::new(),
            m: 1.0,
            headroom: 1.0,
            border: Border::Theta,
            volterra_washout: 100,
        }
    }

    pub fn volterra(lambdas: Vec<f64>, thetas: Vec<f64>, lambda_regs: Vec<f64>) -> Self {
        Self {
            lambdas,
            thetas,
            ..Self::lagged(EstimatorKind::Volterra, Vec::new(), Vec::new(), lambda_regs)
        }
    }

    /// Candidates in grid order, and the infeasible Volterra pairs.
    pub fn candidates(&self) -> (Vec<EstimatorSpec>, Vec<PrunedPair>) {
        let mut out = Vec::new();
        let mut pruned = Vec::new();
        match self.kind {
            EstimatorKind::Ngrc | EstimatorKind::Polynomial => {
                for &tau in &self.taus {
                    for &p in &self.degrees {
                        for &reg in &self.lambda_regs {
                            out.push(match self.kind {
                                EstimatorKind::Ngrc => EstimatorSpec::ngrc(tau, p, reg),
                                _ => EstimatorSpec::polynomial(tau, p, reg),
                            });
                        }
                    }
                }
            }
            EstimatorKind::Volterra => {
                for &theta in &self.thetas {
                    let t2m2 = theta * theta * self.m * self.m;
                    let cap = (1.0 - t2m2).max(0.0).sqrt();
                    let lambdas = self
                        .lambdas
                        .iter()
                        .copied()
                        .chain(self.lambda_fractions.iter().map(|f| f * cap));
                    for lambda in lambdas {
                        let reason = if !(t2m2 < 1.0) {
                            Some(format!("θ²M² = {t2m2} is not below 1"))
                        } else if !(lambda > 0.0 && lambda < cap) {
                            Some(format!("λ = {lambda} outside (0, {cap})"))
                        } else {
                            None
                        };
                        if let Some(reason) = reason {
                            pruned.push(PrunedPair { lambda, theta, reason });
                            continue;
                        }
                        for &reg in &self.lambda_regs {
                            out.push(EstimatorSpec::Volterra {
                                lambda,
                                theta,
                                lambda_reg: reg,
                                m: self.m,
                                border: self.border,
                                headroom: self.headroom,
                                washout: self.volterra_washout,
                            });
                        }
                    }
                }
            }
        }
        (out, pruned)
    }
}

/// The data a grid search validates against.
#[derive(Debug, Clone, Copy)]
pub enum CvTask<'a> {
    /// One series; each validation window is forecast by path continuation
    /// from the end of its training window.
    PathContinuation { series: &'a TimeSeries },
    /// Aligned input and target series; validation inputs are fed open loop.
    OpenLoop {
        inputs: &'a TimeSeries,
        targets: &'a TimeSeries,
        target_transform: &'a TargetTransform,
    },
}

impl CvTask<'_> {
    fn len(&self) -> usize {
        match self {
            CvTask::PathContinuation { series } => series.len(),
            CvTask::OpenLoop { inputs, .. } => inputs.len(),
        }
    }

    /// Validation MSE of one fold; divergent rollouts score `+∞`.
    fn fold_mse(&self, spec: &EstimatorSpec, fold: &Fold) -> Result<f64> {
        let (predicted, reference) = match *self {
            CvTask::PathContinuation { series } => {
                let (a, b) = (fold.train.start, fold.train.end);
                if b - a < 2 {
                    return Err(Error::invalid("path-continuation folds need two training points"));
                }
                let fitted = fit_estimator(
                    spec,
                    &series.slice(a, b - 1)?,
                    &series.slice(a + 1, b)?,
                    &TargetTransform::SameAsInputs,
                )?;
                let (pred, truncated) = path_continue(&fitted, series.row(b - 1), fold.validation.len())?;
                if truncated.is_some() {
                    return Ok(f64::INFINITY);
                }
                let reference = series
                    .values()
                    .slice_rows(fold.validation.start, fold.validation.end);
                (pred, reference)
            }
            CvTask::OpenLoop {
                inputs,
                targets,
                target_transform,
            } => {
                let (a, b) = (fold.train.start, fold.train.end);
                let fitted = fit_estimator(spec, &inputs.slice(a, b)?, &targets.slice(a, b)?, target_transform)?;
                let v = &fold.validation;
                match open_loop(&fitted, &inputs.values().slice_rows(v.start, v.end)) {
                    Ok(pred) => (pred, targets.values().slice_rows(v.start, v.end)),
                    Err(e) if e.is_numerical() => return Ok(f64::INFINITY),
                    Err(e) => return Err(e),
                }
            }
        };
        Ok(mse(&reference, &predicted))
    }
}

fn mse(y: &DenseMatrix, y_hat: &DenseMatrix) -> f64 {
    let s: f64 = y
        .as_slice()
        .iter()
        .zip(y_hat.as_slice())
        .map(|(a, b)| (a - b).powi(2))
        .sum();
    let m = s / y.as_slice().len() as f64;
    if m.is_finite() {
        m
    } else {
        f64::INFINITY
    }
}

/// JSON has no infinity: divergent scores are written as `null` and read
/// back as `+∞`.
mod divergent_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    fn wire(v: f64) -> Option<f64> {
        v.is_finite().then_some(v)
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_some(&wire(*v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }

    pub mod seq {
        use super::*;

        pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
            s.collect_seq(v.iter().map(|&x| wire(x)))
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
            let raw = Vec::<Option<f64>>::deserialize(d)?;
            Ok(raw.into_iter().map(|v| v.unwrap_or(f64::INFINITY)).collect())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateResult {
    pub spec: EstimatorSpec,
    #[serde(with = "divergent_as_null::seq")]
    pub fold_mse: Vec<f64>,
    /// Mean over folds, `+∞` if any fold diverged or the candidate failed.
    #[serde(with = "divergent_as_null")]
    pub mean_mse: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub best: EstimatorSpec,
    pub best_mse: f64,
    /// All candidates, best first.
    pub leaderboard: Vec<CandidateResult>,
    pub pruned: Vec<PrunedPair>,
}

impl SearchResult {
    pub fn leaderboard_csv(&self) -> String {
        let mut s = String::from("rank,candidate,mean_mse,fold_mse,error\n");
        for (i, c) in self.leaderboard.iter().enumerate() {
            let folds: Vec<String> = c.fold_mse.iter().map(|v| format_value(*v)).collect();
            let err = c.error.as_deref().unwrap_or("").replace([',', '\n'], ";");
            writeln!(
                s,
                "{},\"{}\",{},{},{}",
                i + 1,
                c.spec.label(),
                format_value(c.mean_mse),
                folds.join(";"),
                err
            )
            .unwrap();
        }
        s
    }
}

/// Preference among equal scores: smaller degree, smaller lag, larger
/// regularizer; the stable sort then keeps grid order.
fn tie_break(a: &EstimatorSpec, b: &EstimatorSpec) -> Ordering {
    a.degree()
        .cmp(&b.degree())
        .then(a.tau().cmp(&b.tau()))
        .then(b.lambda_reg().total_cmp(&a.lambda_reg()))
}

/// Scores every candidate by mean validation MSE over the folds, refitting
/// preprocessing and model on each training window.
pub fn grid_search(grid: &Grid, folds: &FoldPlan, task: CvTask<'_>) -> Result<SearchResult> {
    let (candidates, pruned) = grid.candidates();
    if candidates.is_empty() {
        return Err(Error::invalid(format!(
            "grid has no feasible candidates ({} pairs pruned)",
            pruned.len()
        )));
    }
    if folds.is_empty() {
        return Err(Error::invalid("fold plan is empty"));
    }
    let n = task.len();
    if let Some(f) = folds.folds.iter().find(|f| f.validation.end > n) {
        return Err(Error::invalid(format!(
            "fold validating on {:?} overruns {n} points",
            f.validation
        )));
    }
    let mut results: Vec<CandidateResult> = candidates
        .par_iter()
        .map(|spec| {
            let scores: Vec<Result<f64>> = folds
                .folds
                .par_iter()
                .map(|f| task.fold_mse(spec, f))
                .collect();
            let mut fold_mse = Vec::with_capacity(scores.len());
            let mut error = None;
            for s in scores {
                match s {
                    Ok(v) => fold_mse.push(v),
                    Err(e) => {
                        error.get_or_insert_with(|| e.to_string());
                        fold_mse.push(f64::INFINITY);
                    }
                }
            }
            let mean_mse = fold_mse.iter().sum::<f64>() / fold_mse.len() as f64;
            CandidateResult {
                spec: *spec,
                fold_mse,
                mean_mse,
                error,
            }
        })
        .collect();
    results.sort_by(|a, b| {
        a.mean_mse
            .total_cmp(&b.mean_mse)
            .then_with(|| tie_break(&a.spec, &b.spec))
    });
    let best = &results[0];
    if !best.mean_mse.is_finite() {
        let mut diagnostics = String::new();
        for c in &results {
            let why = c.error.as_deref().unwrap_or("rollout diverged");
            writeln!(diagnostics, "  {}: {why}", c.spec.label()).unwrap();
        }
        return Err(Error::ExhaustiveFailure {
            candidates: results.len(),
            diagnostics,
        });
    }
    Ok(SearchResult {
        best: best.spec,
        best_mse: best.mean_mse,
        leaderboard: results,
        pruned,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overlapping_example() {
        let plan = overlapping_folds(10, 4, 2, 4).unwrap();
        assert_eq!(
            plan.folds,
            vec![
                Fold { train: 0..4, validation: 4..6 },
                Fold { train: 4..8, validation: 8..10 },
            ]
        );
        assert!(overlapping_folds(5, 4, 2, 1).is_err());
    }

    #[test]
    fn expanding_example() {
        let plan = expanding_folds(9, 3).unwrap();
        assert_eq!(
            plan.folds,
            vec![
                Fold { train: 0..3, validation: 3..6 },
                Fold { train: 0..6, validation: 6..9 },
            ]
        );
        assert_eq!(expanding_folds(11, 2).unwrap().folds[0].validation, 5..11);
        assert!(expanding_folds(9, 1).is_err());
    }

    #[test]
    fn volterra_pruning() {
        let mut g = Grid::volterra(vec![0.5, 0.99], vec![0.3, 1.2], vec![1e-6]);
        g.lambda_fractions = vec![0.5];
        let (c, pruned) = g.candidates();
        // θ = 0.3: 0.5 and the fraction kept, 0.99 > sqrt(0.91) pruned; θ = 1.2: all pruned
        assert_eq!(c.len(), 2);
        assert_eq!(pruned.len(), 4);
    }

    #[test]
    fn divergent_scores_survive_json() {
        let c = CandidateResult {
            spec: EstimatorSpec::ngrc(2, 2, 1e-6),
            fold_mse: vec![f64::INFINITY, 0.25],
            mean_mse: f64::INFINITY,
            error: None,
        };
        let text = serde_json::to_string(&c).unwrap();
        assert!(text.contains("[null,0.25]"), "{text}");
        assert_eq!(serde_json::from_str::<CandidateResult>(&text).unwrap(), c);
    }

    #[test]
    fn tie_break_prefers_simple_models() {
        let a = EstimatorSpec::ngrc(2, 2, 1e-6);
        let b = EstimatorSpec::ngrc(1, 3, 1e-6);
        let c = EstimatorSpec::ngrc(2, 2, 1e-3);
        assert_eq!(tie_break(&a, &b), Ordering::Less);
        assert_eq!(tie_break(&c, &a), Ordering::Less);
    }
}
