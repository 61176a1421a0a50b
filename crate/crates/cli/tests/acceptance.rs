//! Acceptance criteria, run one after another so timings are not disturbed by
//! concurrent tests. Prints one PASS/FAIL line per criterion.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use ngrc_cli::artifacts::Run;
use ngrc_cli::bench::{self, BenchConfig};
use ngrc_cli::commands;
use ngrc_cli::config::{preset, ExperimentConfig};
use ngrc_core::forecast::{lyapunov_horizon, ForecastRun};
use ngrc_core::kernels::{fit_kernel_model, volterra_gram, Border, KernelSpec, VolterraParams};
use ngrc_core::metrics::{
    mae, mape, mdae, nmse, psde, w1_1d, w1_nd, welch_psd, MetricReport, MAPE_EPSILON, W1_ASSIGNMENT_CAP,
};
use ngrc_core::ngrc::{fit_ngrc, predict_ngrc};
use ngrc_core::rng::SeededRng;
use ngrc_core::{DenseMatrix, TimeSeries};

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn random(rng: &mut SeededRng, n: usize, d: usize) -> DenseMatrix {
    DenseMatrix::new(n, d, (0..n * d).map(|_| rng.uniform_range(-1.0, 1.0)).collect()).unwrap()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

// 1 ------------------------------------------------------------------------

fn duality() -> Outcome {
    let mut rng = SeededRng::new(1001);
    let instances = 240;
    let mut worst: f64 = 0.0;
    let mut worst_case = String::new();
    for case in 0..instances {
        let d = 1 + rng.below(4);
        let tau = 1 + rng.below(12 / d);
        let p = 1 + rng.below(4);
        let n = tau + 1 + rng.below(50 - tau);
        let lambda_reg = 10f64.powf(rng.uniform_range(-8.0, 0.0));
        let m = 1 + rng.below(2);
        let inputs = TimeSeries::new(random(&mut rng, n, d), 1.0, "x").unwrap();
        let targets = TimeSeries::new(random(&mut rng, n, m), 1.0, "y").unwrap();
        let primal = fit_ngrc(&inputs, &targets, tau, p, lambda_reg).unwrap();
        let (dual, _) =
            fit_kernel_model(&inputs, &targets, &KernelSpec::NgrcDot { tau, p }, lambda_reg, 0).unwrap();
        let mut a = Vec::new();
        let mut b = Vec::new();
        for _ in 0..8 {
            let v: Vec<f64> = (0..tau * d).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
            a.extend(predict_ngrc(&primal, &v).unwrap());
            b.extend(dual.predict_vector(&v).unwrap());
        }
        let diff: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        let rel = norm(&diff) / norm(&a).max(norm(&b)).max(f64::MIN_POSITIVE);
        if rel > worst {
            worst = rel;
            worst_case = format!("#{case} n={n} tau={tau} d={d} p={p} lambda_reg={lambda_reg:.1e}");
        }
    }
    check(
        worst <= 1e-8,
        format!("{instances} instances, worst relative gap {worst:.2e} ({worst_case}), tolerance 1e-8"),
    )
}

// 2 ------------------------------------------------------------------------

/// The kernel series written out term by term with zero inputs before the
/// start of the sequence, truncated after `tau_max` lags.
fn truncated_series(z: &DenseMatrix, lambda: f64, theta: f64, i: usize, j: usize, tau_max: usize) -> f64 {
    let (l2, t2) = (lambda * lambda, theta * theta);
    let mut sum = 1.0;
    let mut prod = 1.0;
    for s in 0..tau_max {
        let inner = if s <= i.min(j) {
            z.row(i - s).iter().zip(z.row(j - s)).map(|(x, y)| x * y).sum()
        } else {
            0.0
        };
        prod *= l2 / (1.0 - t2 * inner);
        sum += prod;
    }
    sum
}

fn volterra_series() -> Vec<(String, Outcome)> {
    let mut rng = SeededRng::new(2002);
    // the three tabulated settings, then random ones spanning the same range
    let table = [(0.3 * 0.91f64.sqrt(), 0.3), (0.9 * 0.91f64.sqrt(), 0.3), (0.72, 0.6)];
    let sequences = 120;
    let mut out = Vec::new();
    for border in [Border::ZeroPadded, Border::Theta] {
        let mut worst_ratio: f64 = 0.0;
        let mut entries = 0usize;
        for case in 0..sequences {
            let (lambda, theta) = if case < table.len() {
                table[case]
            } else {
                let theta = rng.uniform_range(0.3, 0.6);
                (rng.uniform_range(0.3, 0.95) * (1.0 - theta * theta).sqrt(), theta)
            };
            let n = 1 + rng.below(32);
            let d = 1 + rng.below(4);
            let mut z = random(&mut rng, n, d);
            for i in 0..n {
                let r = z.row_mut(i);
                let s = rng.uniform() / norm(r).max(1e-300);
                r.iter_mut().for_each(|v| *v *= s);
            }
            let params = VolterraParams::new(lambda, theta).unwrap().with_border(border);
            let k = volterra_gram(&z, &params).unwrap();
            let tau_max = n;
            for i in 0..n {
                for j in 0..n {
                    let oracle = truncated_series(&z, lambda, theta, i, j, tau_max);
                    let rounding = 4.0 * (n as f64 + 2.0) * f64::EPSILON * k[(i, j)].abs();
                    let mut allowed = params.tail_bound(tau_max) + rounding;
                    if border == Border::Theta {
                        allowed += params.border_offset_bound(i.min(j) + 1);
                    }
                    worst_ratio = worst_ratio.max((k[(i, j)] - oracle).abs() / allowed);
                    entries += 1;
                }
            }
        }
        let label = match border {
            Border::ZeroPadded => "2a",
            Border::Theta => "2b",
        };
        out.push((
            label.to_string(),
            check(
                worst_ratio <= 1.0,
                format!(
                    "{border:?} border: {sequences} sequences, {entries} entries, worst error/allowance {worst_ratio:.3}"
                ),
            ),
        ));
    }
    out
}

// 3-5 ----------------------------------------------------------------------

struct PresetRun {
    report: MetricReport,
    forecast: ForecastRun,
}

fn run_preset(name: &str, root: &Path) -> PresetRun {
    let config = ExperimentConfig::parse(preset(name).unwrap()).unwrap();
    let run = Run::new(root.join(name), &config);
    commands::simulate(&run).unwrap();
    commands::fit(&run).unwrap();
    let forecast = commands::forecast(&run).unwrap();
    let report = commands::eval(&run, None, None).unwrap();
    PresetRun { report, forecast }
}

fn run_family(family: &str, root: &Path) -> BTreeMap<&'static str, PresetRun> {
    ["ngrc", "polynomial", "volterra"]
        .into_iter()
        .map(|e| (e, run_preset(&format!("{family}-{e}"), root)))
        .collect()
}

fn t_valid(r: &PresetRun) -> f64 {
    r.report.t_valid.unwrap()
}

fn lorenz(root: &Path) -> Outcome {
    let runs = run_family("lorenz", root);
    let line: Vec<String> = runs.iter().map(|(k, r)| format!("{k} {:.3}", t_valid(r))).collect();
    check(
        runs.values().all(|r| t_valid(r) >= 4.0),
        format!("T_valid {} (need >= 4)", line.join(", ")),
    )
}

fn mackey_glass(root: &Path) -> Outcome {
    let runs = run_family("mackey-glass", root);
    let (ng, po, vo) = (&runs["ngrc"], &runs["polynomial"], &runs["volterra"]);
    // pointwise window: ceiling of the best valid time among the two
    let best = t_valid(po).max(t_valid(vo));
    let f = &vo.forecast;
    let lyap = ngrc_core::forecast::MACKEY_GLASS_LYAPUNOV;
    let h = lyapunov_horizon(best, f.dt, lyap, f.predicted.rows().min(po.forecast.predicted.rows()));
    let window_nmse = |r: &PresetRun| {
        nmse(
            &r.forecast.reference.slice_rows(0, h),
            &r.forecast.predicted.slice_rows(0, h),
        )
        .unwrap()
    };
    let (np, nv) = (window_nmse(po), window_nmse(vo));
    check(
        t_valid(ng) < 1.0 && t_valid(po) >= 4.0 && t_valid(vo) >= 4.0 && nv < np,
        format!(
            "T_valid ngrc {:.3} (< 1), polynomial {:.3}, volterra {:.3} (>= 4); NMSE over {h} steps volterra {nv:.3e} < polynomial {np:.3e}",
            t_valid(ng),
            t_valid(po),
            t_valid(vo)
        ),
    )
}

fn bekk(root: &Path) -> Outcome {
    let runs = run_family("bekk", root);
    let (ng, po, vo) = (&runs["ngrc"].report, &runs["polynomial"].report, &runs["volterra"].report);
    check(
        vo.nmse < ng.nmse && vo.nmse < po.nmse && vo.w1 < ng.w1 && vo.w1 < po.w1,
        format!(
            "NMSE volterra {:.4} vs ngrc {:.4}, polynomial {:.4}; W1 volterra {:.3e} vs ngrc {:.3e}, polynomial {:.3e}",
            vo.nmse, ng.nmse, po.nmse, vo.w1, ng.w1, po.w1
        ),
    )
}

// 6 ------------------------------------------------------------------------

fn brute_force_w1(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    fn perms(k: usize) -> Vec<Vec<usize>> {
        if k == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in perms(k - 1) {
            for pos in 0..=p.len() {
                let mut q = p.clone();
                q.insert(pos, k - 1);
                out.push(q);
            }
        }
        out
    }
    let k = a.rows();
    perms(k)
        .iter()
        .map(|perm| {
            perm.iter()
                .enumerate()
                .map(|(i, &j)| {
                    let d: Vec<f64> = a.row(i).iter().zip(b.row(j)).map(|(x, y)| x - y).collect();
                    norm(&d)
                })
                .sum::<f64>()
                / k as f64
        })
        .fold(f64::INFINITY, f64::min)
}

fn metrics_suite() -> Outcome {
    let mut rng = SeededRng::new(6006);
    let mut failures = Vec::new();

    let y = random(&mut rng, 120, 3);
    let mut mean = DenseMatrix::zeros(120, 3);
    for j in 0..3 {
        let m = y.col_to_vec(j).iter().sum::<f64>() / 120.0;
        (0..120).for_each(|i| mean[(i, j)] = m);
    }
    let mean_nmse = nmse(&y, &mean).unwrap();
    if (mean_nmse - 1.0).abs() > 1e-12 {
        failures.push(format!("NMSE of mean predictor {mean_nmse}"));
    }

    let z = [
        nmse(&y, &y).unwrap(),
        mae(&y, &y).unwrap(),
        mdae(&y, &y).unwrap(),
        mape(&y, &y, MAPE_EPSILON).unwrap(),
        psde(
            &welch_psd(&y, 64, 0.5, 1.0).unwrap(),
            &welch_psd(&y, 64, 0.5, 1.0).unwrap(),
            None,
        )
        .unwrap()
        .value,
        w1_1d(&y.col_to_vec(0), &y.col_to_vec(0)).unwrap(),
        w1_nd(&y, &y, W1_ASSIGNMENT_CAP).unwrap(),
    ];
    if z.iter().any(|&v| v != 0.0) {
        failures.push(format!("metrics on identical inputs {z:?}"));
    }

    let mut worst_w1: f64 = 0.0;
    for k in 1..=6 {
        for d in 1..=3 {
            let a = random(&mut rng, k, d);
            let b = random(&mut rng, k, d);
            let exact = brute_force_w1(&a, &b);
            worst_w1 = worst_w1.max((w1_nd(&a, &b, W1_ASSIGNMENT_CAP).unwrap() - exact).abs() / exact.max(1.0));
        }
    }
    if worst_w1 > 1e-12 {
        failures.push(format!("w1_nd vs permutations {worst_w1:e}"));
    }

    let nperseg = 256;
    for f0 in [0.05, 0.1234, 0.3] {
        let x: Vec<f64> = (0..8192).map(|k| (2.0 * std::f64::consts::PI * f0 * k as f64).sin()).collect();
        let p = welch_psd(&DenseMatrix::column(&x).unwrap(), nperseg, 0.5, 1.0).unwrap();
        let peak = (0..p.frequencies.len())
            .max_by(|&a, &b| p.power[0][a].total_cmp(&p.power[0][b]))
            .unwrap();
        if (p.frequencies[peak] - f0).abs() > 0.5 / nperseg as f64 + 1e-12 {
            failures.push(format!("peak of {f0} at {}", p.frequencies[peak]));
        }
    }

    let noise = DenseMatrix::new(1 << 15, 1, (0..1 << 15).map(|_| rng.standard_normal()).collect()).unwrap();
    let v = noise.col_to_vec(0);
    let mu = v.iter().sum::<f64>() / v.len() as f64;
    let var = v.iter().map(|a| (a - mu).powi(2)).sum::<f64>() / v.len() as f64;
    let mut parseval = Vec::new();
    for fs in [1.0, 200.0] {
        let p = welch_psd(&noise, 512, 0.5, fs).unwrap();
        let df = p.frequencies[1] - p.frequencies[0];
        let ratio = p.power[0].iter().sum::<f64>() * df / var;
        if (ratio - 1.0).abs() >= 0.05 {
            failures.push(format!("Parseval ratio {ratio} at fs {fs}"));
        }
        parseval.push(ratio);
    }
    check(
        failures.is_empty(),
        if failures.is_empty() {
            format!("mean-predictor NMSE {mean_nmse}, w1 gap {worst_w1:.1e}, Parseval ratios {parseval:.4?}")
        } else {
            failures.join("; ")
        },
    )
}

// 7 ------------------------------------------------------------------------

fn complexity() -> Outcome {
    let config = BenchConfig {
        repeats: 11,
        ..BenchConfig::default()
    };
    let rows = bench::run(&config).unwrap();
    let sweep: Vec<_> = rows.iter().filter(|r| r.case.n == 2000).collect();
    let doubled = rows.iter().find(|r| r.case.n == 4000).unwrap();
    let base = sweep.iter().find(|r| r.case.p == doubled.case.p).unwrap();

    let train: Vec<f64> = sweep.iter().map(|r| r.ngrc_train).collect();
    let increasing = train.windows(2).all(|w| w[1] > w[0]);
    // superlinear: each step grows faster than p itself
    let superlinear = sweep
        .windows(2)
        .all(|w| w[1].ngrc_train / w[0].ngrc_train > w[1].case.p as f64 / w[0].case.p as f64);
    let gram: Vec<f64> = sweep.iter().map(|r| r.volterra_gram).collect();
    let (lo, hi) = gram.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &g| (a.min(g), b.max(g)));
    let spread = hi / lo - 1.0;
    let volterra_ratio = doubled.volterra_gram / base.volterra_gram;
    let poly_ratio = doubled.poly_gram / base.poly_gram;
    let in_band = |r: f64| (2.0..=8.0).contains(&r);
    check(
        increasing && superlinear && spread < 0.2 && in_band(volterra_ratio) && in_band(poly_ratio),
        format!(
            "NG-RC train s over p=2..5 {train:.4?}; Volterra Gram s {gram:.4?} (spread {:.1}%); \
             n 2000->4000 Gram ratios volterra {volterra_ratio:.2}, polynomial {poly_ratio:.2} (band [2, 8]); \
             medians of {} after {} warm-up",
            100.0 * spread,
            config.repeats,
            config.warmup
        ),
    )
}

// 8 ------------------------------------------------------------------------

fn csv_files(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else if path.extension().is_some_and(|e| e == "csv") {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn determinism(first: &Path, second: &Path) -> Outcome {
    for family in ["lorenz", "mackey-glass", "bekk"] {
        run_family(family, second);
    }
    let a = csv_files(first);
    let b = csv_files(second);
    let differing: Vec<String> = a
        .iter()
        .filter(|(k, v)| b.get(*k) != Some(*v))
        .map(|(k, _)| k.display().to_string())
        .collect();
    check(
        a.len() == b.len() && !a.is_empty() && differing.is_empty(),
        format!("{} CSV files compared, {} differ {:?}", a.len(), differing.len(), differing),
    )
}

// --------------------------------------------------------------------------

fn timed(id: &str, limit: Duration, results: &mut Vec<bool>, f: impl FnOnce() -> Outcome) {
    let start = Instant::now();
    let outcome = f();
    report(id, limit, start.elapsed(), outcome, results);
}

fn report(id: &str, limit: Duration, elapsed: Duration, outcome: Outcome, results: &mut Vec<bool>) {
    let in_time = elapsed <= limit;
    let pass = outcome.pass && in_time;
    println!(
        "{} criterion {id}: {} [{:.1}s of {}s]",
        if pass { "PASS" } else { "FAIL" },
        outcome.detail,
        elapsed.as_secs_f64(),
        limit.as_secs()
    );
    results.push(pass);
}

fn main() {
    let minute = Duration::from_secs(60);
    let mut results = Vec::new();
    let dir = tempfile::tempdir().unwrap();
    let (first, second) = (dir.path().join("first"), dir.path().join("second"));

    timed("1", minute, &mut results, duality);

    let start = Instant::now();
    let series = volterra_series();
    let elapsed = start.elapsed();
    for (id, outcome) in series {
        report(&id, minute, elapsed, outcome, &mut results);
    }

    timed("3", 10 * minute, &mut results, || lorenz(&first));
    timed("4", 10 * minute, &mut results, || mackey_glass(&first));
    timed("5", 10 * minute, &mut results, || bekk(&first));
    timed("6", Duration::from_secs(30), &mut results, metrics_suite);
    timed("7", 5 * minute, &mut results, complexity);
    timed("8", 30 * minute, &mut results, || determinism(&first, &second));

    let failed = results.iter().filter(|p| !**p).count();
    println!("acceptance: {} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
