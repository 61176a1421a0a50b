use ngrc_core::cv::{expanding_folds, grid_search, overlapping_folds, CvTask, FoldMode, Grid};
use ngrc_core::estimator::{fit_estimator, EstimatorKind, EstimatorSpec, TargetTransform};
use ngrc_core::forecast::{open_loop, path_continue};
use ngrc_core::ngrc::{build_exponent_table, ngrc_features};
use ngrc_core::preprocess::{Pipeline, TransformKind};
use ngrc_core::rng::SeededRng;
use ngrc_core::{DenseMatrix, Error, TimeSeries};
use proptest::prelude::*;

/// Targets generated by a fixed NG-RC model on noise inputs, plus small noise.
fn planted(tau: usize, p: usize, n: usize, seed: u64) -> (TimeSeries, TimeSeries) {
    let mut rng = SeededRng::new(seed);
    let table = build_exponent_table(tau, 1, p).unwrap();
    let w: Vec<f64> = (0..table.len()).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
    let u: Vec<f64> = (0..n).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
    let mut y = vec![0.0; n];
    for t in tau - 1..n {
        let phi = ngrc_features(&u[t + 1 - tau..=t], &table).unwrap();
        y[t] = phi.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + 0.01 * rng.standard_normal();
    }
    (
        TimeSeries::scalar(&u, 1.0, "u").unwrap(),
        TimeSeries::scalar(&y, 1.0, "y").unwrap(),
    )
}

#[test]
fn grid_search_recovers_planted_lag_and_degree() {
    let (inputs, targets) = planted(2, 2, 800, 31);
    let grid = Grid::lagged(EstimatorKind::Ngrc, vec![1, 2, 3], vec![1, 2, 3], vec![1e-8]);
    let folds = expanding_folds(800, 4).unwrap();
    let tt = TargetTransform::SameAsInputs;
    let result = grid_search(
        &grid,
        &folds,
        CvTask::OpenLoop {
            inputs: &inputs,
            targets: &targets,
            target_transform: &tt,
        },
    )
    .unwrap();
    assert_eq!((result.best.tau(), result.best.degree()), (Some(2), Some(2)));
    assert_eq!(result.leaderboard.len(), 9);
    assert!(result.leaderboard.windows(2).all(|w| w[0].mean_mse <= w[1].mean_mse));
    let csv = result.leaderboard_csv();
    assert_eq!(csv.lines().count(), 10);
}

#[test]
fn result_does_not_depend_on_grid_order() {
    let (inputs, targets) = planted(2, 2, 400, 32);
    let folds = expanding_folds(400, 3).unwrap();
    let tt = TargetTransform::SameAsInputs;
    let task = CvTask::OpenLoop {
        inputs: &inputs,
        targets: &targets,
        target_transform: &tt,
    };
    let a = Grid::lagged(EstimatorKind::Polynomial, vec![1, 2], vec![1, 2], vec![1e-6, 1e-3]);
    let b = Grid::lagged(EstimatorKind::Polynomial, vec![2, 1], vec![2, 1], vec![1e-3, 1e-6]);
    let ra = grid_search(&a, &folds, task).unwrap();
    let rb = grid_search(&b, &folds, task).unwrap();
    assert_eq!(ra.best, rb.best);
    assert_eq!(ra.best_mse.to_bits(), rb.best_mse.to_bits());
}

#[test]
fn single_candidate_is_returned_and_ties_prefer_smaller_models() {
    // targets identically zero: every candidate predicts exactly zero
    let u: Vec<f64> = (0..120).map(|k| (k as f64 * 0.3).sin()).collect();
    let inputs = TimeSeries::scalar(&u, 1.0, "u").unwrap();
    let targets = TimeSeries::scalar(&vec![0.0; 120], 1.0, "y").unwrap();
    let tt = TargetTransform::Own { transforms: vec![] };
    let task = CvTask::OpenLoop {
        inputs: &inputs,
        targets: &targets,
        target_transform: &tt,
    };
    let folds = expanding_folds(120, 3).unwrap();
    let one = Grid::lagged(EstimatorKind::Ngrc, vec![2], vec![2], vec![1e-4]);
    assert_eq!(grid_search(&one, &folds, task).unwrap().best, EstimatorSpec::ngrc(2, 2, 1e-4));
    let many = Grid::lagged(EstimatorKind::Ngrc, vec![3, 2], vec![3, 2], vec![1e-6, 1e-4]);
    let r = grid_search(&many, &folds, task).unwrap();
    assert_eq!(r.best_mse, 0.0);
    assert_eq!(r.best, EstimatorSpec::ngrc(2, 2, 1e-4));
}

#[test]
fn all_failing_candidates_are_reported() {
    let series = TimeSeries::scalar(&(0..60).map(|k| k as f64).collect::<Vec<_>>(), 1.0, "x").unwrap();
    let folds = overlapping_folds(60, 10, 5, 10).unwrap();
    // delay longer than every training window
    let grid = Grid::lagged(EstimatorKind::Ngrc, vec![20], vec![2], vec![1e-6]);
    match grid_search(&grid, &folds, CvTask::PathContinuation { series: &series }) {
        Err(Error::ExhaustiveFailure { candidates, diagnostics }) => {
            assert_eq!(candidates, 1);
            assert!(diagnostics.contains("ngrc"));
        }
        other => panic!("expected exhaustive failure, got {other:?}"),
    }
}

#[test]
fn infeasible_volterra_grids_are_rejected() {
    let series = TimeSeries::scalar(&vec![0.5; 300], 1.0, "x").unwrap();
    let folds = overlapping_folds(300, 200, 50, 50).unwrap();
    let grid = Grid::volterra(vec![0.99], vec![0.5], vec![1e-6]);
    assert!(grid_search(&grid, &folds, CvTask::PathContinuation { series: &series }).is_err());
}

#[test]
fn path_continuation_cv_on_a_sine() {
    let x: Vec<f64> = (0..600).map(|k| (k as f64 * 0.1).sin()).collect();
    let series = TimeSeries::scalar(&x, 0.1, "sine").unwrap();
    let folds = overlapping_folds(600, 300, 100, 100).unwrap();
    assert_eq!(folds.mode, FoldMode::Overlapping);
    let mut grid = Grid::volterra(vec![], vec![0.3], vec![1e-8, 1e-4]);
    grid.lambda_fractions = vec![0.5, 0.9];
    grid.volterra_washout = 50;
    let r = grid_search(&grid, &folds, CvTask::PathContinuation { series: &series }).unwrap();
    assert_eq!(r.leaderboard.len(), 4);
    assert!(r.best_mse < 1e-2, "{}", r.best_mse);
}

#[test]
fn preprocessing_ignores_test_rows() {
    let mut rng = SeededRng::new(41);
    let data: Vec<f64> = (0..200).map(|_| rng.standard_normal()).collect();
    let full = DenseMatrix::new(100, 2, data).unwrap();
    let train = full.slice_rows(0, 70);
    let mut perturbed = full.clone();
    for i in 70..100 {
        perturbed[(i, 0)] += 1e3;
    }
    for kinds in [
        vec![TransformKind::MinMax01],
        vec![TransformKind::Demean, TransformKind::MaxNormScale { target: 1.0 }],
    ] {
        let a = Pipeline::fit(&kinds, &train).unwrap();
        let b = Pipeline::fit(&kinds, &perturbed.slice_rows(0, 70)).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn open_loop_matches_path_continuation_on_true_inputs() {
    // feeding the true next values open loop reproduces the first rollout step
    let x: Vec<f64> = (0..400).map(|k| (k as f64 * 0.05).sin() + 0.5 * (k as f64 * 0.11).cos()).collect();
    let s = TimeSeries::scalar(&x, 0.05, "x").unwrap();
    for spec in [
        EstimatorSpec::ngrc(3, 2, 1e-7),
        EstimatorSpec::polynomial(4, 2, 1e-6),
        EstimatorSpec::volterra(0.4, 0.3, 1e-8),
    ] {
        let fitted = fit_estimator(
            &spec,
            &s.slice(0, 299).unwrap(),
            &s.slice(1, 300).unwrap(),
            &TargetTransform::SameAsInputs,
        )
        .unwrap();
        let (pc, trunc) = path_continue(&fitted, s.row(299), 5).unwrap();
        assert!(trunc.is_none());
        let ol = open_loop(&fitted, &s.values().slice_rows(299, 304)).unwrap();
        assert_eq!(pc.row(0), ol.row(0));
        assert!((pc[(0, 0)] - x[300]).abs() < 1e-2, "{}", spec.label());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn overlapping_fold_count(n in 2usize..400, fold in 1usize..100, val in 1usize..50, stride in 1usize..60) {
        match overlapping_folds(n, fold, val, stride) {
            Ok(plan) => {
                let mut expected = 0;
                let mut s = 0;
                while s + fold + val <= n {
                    expected += 1;
                    s += stride;
                }
                prop_assert_eq!(plan.len(), expected);
                for f in &plan.folds {
                    prop_assert_eq!(f.train.end, f.validation.start);
                    prop_assert!(f.validation.end <= n);
                }
            }
            Err(_) => prop_assert!(fold + val > n),
        }
    }

    #[test]
    fn expanding_blocks_cover_the_training_set(n in 2usize..500, k in 2usize..12) {
        prop_assume!(k <= n);
        let plan = expanding_folds(n, k).unwrap();
        prop_assert_eq!(plan.len(), k - 1);
        let b = n / k;
        for (i, f) in plan.folds.iter().enumerate() {
            prop_assert_eq!(f.train.clone(), 0..(i + 1) * b);
            prop_assert_eq!(f.validation.start, (i + 1) * b);
            let end = if i + 2 == k { n } else { (i + 2) * b };
            prop_assert_eq!(f.validation.end, end);
        }
    }

    #[test]
    fn pipelines_invert(seed in any::<u64>(), n in 2usize..40, d in 1usize..4) {
        let mut rng = SeededRng::new(seed);
        let x = DenseMatrix::new(n, d, (0..n * d).map(|_| 10.0 * rng.standard_normal()).collect()).unwrap();
        for kinds in [
            vec![TransformKind::MinMax01],
            vec![TransformKind::Standardize],
            vec![TransformKind::Demean, TransformKind::MaxNormScale { target: 1.0 }],
            vec![TransformKind::ConstantScale { factor: 1000.0 }, TransformKind::Standardize],
        ] {
            let p = Pipeline::fit(&kinds, &x).unwrap();
            let back = p.invert_matrix(&p.apply_matrix(&x).unwrap()).unwrap();
            for (a, b) in back.as_slice().iter().zip(x.as_slice()) {
                prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
            }
        }
    }
}
