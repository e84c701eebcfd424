//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any criterion fails.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::OnceLock;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use nowcast_core::asymclass::{fit_weighted_logistic, observation_weights, quartet_weights, LogisticOptions, LossQuartet};
use nowcast_core::datavintage::{Period, VintageStore};
use nowcast_core::hdinfer::{
    bandwidth_rule, debiased_block, granger_test, nodewise_precision, GrangerConfig, KernelFamily, KernelSpec,
    SingularPolicy, TailRegime,
};
use nowcast_core::lagpoly::{GroupMap, GroupedDesign};
use nowcast_core::seeds::stream_rng;
use nowcast_core::sglasso::{PenaltySpec, SgLassoSolver, SolverOptions};
use nowcast_core::tensorfac::{matricize, outer_product, rank_test, tensor_pca, Tensor};
use nowcast_core::tscv::gap_cv_indices;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

type Outcome = (bool, String);

fn main() {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("golden matricization", golden_matricization),
        ("solver nesting", solver_nesting),
        ("KKT suite", kkt_suite),
        ("gap-CV oracle", gap_cv_oracle),
        ("bandwidth rule", bandwidth),
        ("Granger test size", granger_size),
        ("debiasing coverage", debiasing_coverage),
        ("weighted classification", weighted_classification),
        ("tensor PCA recovery", tensor_recovery),
        ("rank test behaviour", rank_test_behaviour),
        ("vintage no-look-ahead", no_look_ahead),
        ("end-to-end determinism", cli_determinism),
    ];
    let filter: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        if filter.is_some_and(|n| n != i + 1) {
            continue;
        }
        let start = Instant::now();
        let (ok, detail) = f();
        let secs = start.elapsed().as_secs_f64();
        println!("criterion {:>2} {:<26} {}  {detail} [{secs:.1}s]", i + 1, name, if ok { "PASS" } else { "FAIL" });
        if !ok {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

fn golden_matricization() -> Outcome {
    let t = Tensor::new(vec![3, 4, 2], (1..=24).map(f64::from).collect()).unwrap();
    let y1 = DMatrix::from_row_slice(3, 8, &[
        1., 4., 7., 10., 13., 16., 19., 22.,
        2., 5., 8., 11., 14., 17., 20., 23.,
        3., 6., 9., 12., 15., 18., 21., 24.,
    ]);
    let y2 = DMatrix::from_row_slice(4, 6, &[
        1., 2., 3., 13., 14., 15.,
        4., 5., 6., 16., 17., 18.,
        7., 8., 9., 19., 20., 21.,
        10., 11., 12., 22., 23., 24.,
    ]);
    let y3 = DMatrix::from_fn(2, 12, |i, j| (12 * i + j + 1) as f64);
    let ok = [y1, y2, y3].iter().enumerate().all(|(m, want)| &matricize(&t, m + 1).unwrap() == want);
    (ok, "modes 1-3 compared entry by entry".into())
}

fn random_design(seed: u64) -> GroupedDesign {
    let mut rng = stream_rng(seed, 0);
    let x = common::normal_matrix(&mut rng, 60, 24);
    let beta = DVector::from_fn(24, |j, _| match j {
        0 => 1.5,
        1 => -1.0,
        7 => 0.8,
        23 => 0.6,
        _ => 0.0,
    });
    let y = &x * beta + common::normal_vector(&mut rng, 60) + DVector::from_element(60, 1.0);
    GroupedDesign::new(x, GroupMap::from_sizes(&[6; 4]).unwrap(), y).unwrap()
}

fn group_ranges() -> Vec<std::ops::Range<usize>> {
    (0..4).map(|g| 6 * g..6 * g + 6).collect()
}

struct NestingRun {
    worst_lasso: f64,
    worst_group: f64,
    worst_ls: f64,
    kkt_worst: f64,
    converged: usize,
    fits: usize,
}

fn nesting_runs() -> &'static NestingRun {
    static RUN: OnceLock<NestingRun> = OnceLock::new();
    RUN.get_or_init(run_nesting)
}

fn run_nesting() -> NestingRun {
    let mut out = NestingRun { worst_lasso: 0.0, worst_group: 0.0, worst_ls: 0.0, kkt_worst: 0.0, converged: 0, fits: 0 };
    for seed in 0..50 {
        let d = random_design(9000 + seed);
        let solver = SgLassoSolver::new(&d, &SolverOptions::default()).unwrap();
        let (z, y, _) = common::standardize(&d.matrix, &d.response);
        for gamma in [1.0, 0.0] {
            let pen = PenaltySpec::new(0.2 * solver.lambda_max(gamma), gamma).unwrap();
            let fit = solver.fit(pen, None);
            let oracle = if gamma == 1.0 {
                common::lasso_cd(&z, &y, pen.lambda)
            } else {
                common::group_lasso_fista(&z, &y, &group_ranges(), pen.lambda)
            };
            let want = common::sg_objective(&z, &y, &oracle, &group_ranges(), pen.lambda, gamma);
            let gap = (fit.objective_value - want).abs();
            if gamma == 1.0 {
                out.worst_lasso = out.worst_lasso.max(gap);
            } else {
                out.worst_group = out.worst_group.max(gap);
            }
            out.fits += 1;
            if fit.converged {
                out.converged += 1;
                out.kkt_worst = out.kkt_worst.max(solver.kkt(&fit).max_violation());
            }
        }
        let fit = solver.fit(PenaltySpec::new(0.0, 0.5).unwrap(), None);
        let (_, b) = common::least_squares(&d.matrix, &d.response);
        out.worst_ls = out.worst_ls.max((&fit.coefficients - b).amax());
        out.fits += 1;
        if fit.converged {
            out.converged += 1;
            out.kkt_worst = out.kkt_worst.max(solver.kkt(&fit).max_violation());
        }
    }
    out
}

fn solver_nesting() -> Outcome {
    let r = nesting_runs();
    let ok = r.worst_lasso < 1e-6 && r.worst_group < 1e-6 && r.worst_ls < 1e-6;
    (ok, format!(
        "max objective gap LASSO {:.1e}, group LASSO {:.1e}; max coefficient gap LS {:.1e}",
        r.worst_lasso, r.worst_group, r.worst_ls
    ))
}

fn kkt_suite() -> Outcome {
    let r = nesting_runs();
    (r.kkt_worst < 1e-6, format!("{}/{} fits converged, worst violation {:.1e}", r.converged, r.fits, r.kkt_worst))
}

fn gap_cv_oracle() -> Outcome {
    let mut cases = 0;
    let mut bad = 0;
    for t_len in 1..=30 {
        for l in 0..=5 {
            for t in 1..=t_len {
                cases += 1;
                let want = common::brute_gap(t_len, t, l);
                let agree = match gap_cv_indices(t_len, t, l) {
                    Ok(got) => got == want,
                    Err(_) => want.is_empty(),
                };
                bad += usize::from(!agree);
            }
        }
    }
    (bad == 0, format!("{cases} cases, {bad} mismatches"))
}

fn bandwidth() -> Outcome {
    let ln10 = std::f64::consts::LN_10;
    let cases = [
        (100, TailRegime::SubGaussian, 1.3 * (100.0 / ln10).cbrt(), Some(4.57)),
        (100, TailRegime::HeavyTailed { moments: 4.0 }, 1.3 * (1000.0 / 10f64.sqrt()).cbrt(), Some(8.86)),
        (400, TailRegime::SubGaussian, 1.3 * (400.0 / ln10).cbrt(), None),
    ];
    let mut ok = true;
    let mut got = Vec::new();
    for (t, regime, hand, approx) in cases {
        let m = bandwidth_rule(t, 10, regime).unwrap();
        ok &= (m - hand).abs() <= 1e-9 && approx.is_none_or(|a: f64| (m - a).abs() < 5e-3);
        got.push(format!("{m:.4}"));
    }
    (ok, format!("M_T = {}", got.join(", ")))
}

fn gaussian_regression(rng: &mut ChaCha8Rng, t: usize, beta: &DVector<f64>, groups: GroupMap) -> GroupedDesign {
    let x = common::normal_matrix(rng, t, beta.len());
    let y = &x * beta + common::normal_vector(rng, t);
    GroupedDesign::new(x, groups, y).unwrap()
}

fn granger_size() -> Outcome {
    let (t, p, reps) = (200, 40, 500);
    let rate = ((p as f64).ln() / t as f64).sqrt();
    let beta = DVector::from_fn(p, |j, _| if (2..6).contains(&j) { 1.0 } else { 0.0 });
    let config = GrangerConfig {
        penalty: PenaltySpec::new(rate, 0.5).unwrap(),
        nodewise: vec![PenaltySpec::new(0.5 * rate, 1.0).unwrap()],
        kernel: KernelFamily::Parzen,
        regime: TailRegime::SubGaussian,
        bandwidth: None,
        level: 0.05,
        singular: SingularPolicy::Error,
        solver: SolverOptions::default(),
    };
    let mut rejections = 0;
    for rep in 0..reps {
        let mut rng = stream_rng(60_000, rep);
        let d = gaussian_regression(&mut rng, t, &beta, GroupMap::from_sizes(&[2; 20]).unwrap());
        if granger_test(&d, &[0, 1], &config).unwrap().test.reject {
            rejections += 1;
        }
    }
    let freq = rejections as f64 / reps as f64;
    ((0.02..=0.10).contains(&freq), format!("rejection rate {freq:.3} over {reps} replications"))
}

fn debiasing_coverage() -> Outcome {
    let (t, p, reps) = (200, 50, 500);
    let rate = ((p as f64).ln() / t as f64).sqrt();
    let beta = DVector::from_fn(p, |j, _| if j < 5 { 1.0 } else { 0.0 });
    let targets: Vec<usize> = (0..10).collect();
    let kernel = KernelSpec { family: KernelFamily::Parzen, bandwidth: bandwidth_rule(t, p, TailRegime::SubGaussian).unwrap() };
    let mut covered = vec![0usize; targets.len()];
    for rep in 0..reps {
        let mut rng = stream_rng(70_000, rep);
        let d = gaussian_regression(&mut rng, t, &beta, GroupMap::singletons(p));
        let fit = nowcast_core::sglasso::fit_sg_lasso(&d, PenaltySpec::new(rate, 1.0).unwrap()).unwrap();
        let prec =
            nodewise_precision(&d, &targets, &[PenaltySpec::new(0.5 * rate, 1.0).unwrap()], &SolverOptions::default())
                .unwrap();
        let block = debiased_block(&fit, &d, &prec, kernel).unwrap();
        for (i, &j) in targets.iter().enumerate() {
            let (lo, hi) = block.confidence_interval(i, 1.959_963_984_540_054);
            covered[i] += usize::from(lo <= beta[j] && beta[j] <= hi);
        }
    }
    let rates: Vec<f64> = covered.iter().map(|c| *c as f64 / reps as f64).collect();
    let min = rates.iter().copied().fold(f64::INFINITY, f64::min);
    let max = rates.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ok = min >= 0.90 && max <= 0.99;
    (ok, format!("per-coordinate coverage in [{min:.3}, {max:.3}] for 5 active and 5 zero coefficients"))
}

fn weighted_classification() -> Outcome {
    let mut rng = stream_rng(80_000, 0);
    let n = 150;
    let x = common::normal_matrix(&mut rng, n, 3);
    let theta = [0.3, 1.0, -0.5, 0.25];
    let y: Vec<i8> = (0..n)
        .map(|i| {
            let eta = theta[0] + (0..3).map(|j| theta[j + 1] * x[(i, j)]).sum::<f64>();
            if rng.random::<f64>() < 1.0 / (1.0 + (-eta).exp()) { 1 } else { -1 }
        })
        .collect();
    let sym = LossQuartet::symmetric();
    let w = observation_weights(&sym, &x, &y).unwrap();
    let fit = fit_weighted_logistic(&x, &y, &w, 0.0, &LogisticOptions::default()).unwrap();
    let oracle = common::newton_logistic(&x.clone().insert_column(0, 1.0), &y, &w);
    let gap = (&fit.coefficients - oracle).amax();

    let costly_release = LossQuartet::constant(0.0, 0.0, 2.0, 0.0);
    let w_of = |q: &LossQuartet, y| quartet_weights(q, &[0.0], y).unwrap();
    let examples_ok = w_of(&sym, 1) == 2.0
        && w_of(&sym, -1) == 2.0
        && w_of(&costly_release, 1) == 4.0
        && w_of(&costly_release, -1) == 0.0;
    (gap < 1e-5 && examples_ok, format!("Newton gap {gap:.1e}; worked-example weights exact: {examples_ok}"))
}

fn unit(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    let v = common::normal_vector(rng, n);
    &v / v.norm()
}

fn low_rank(rng: &mut ChaCha8Rng, dims: &[usize], sigmas: &[f64], noise_sd: f64) -> (Tensor, Vec<Vec<DVector<f64>>>) {
    let count: usize = dims.iter().product();
    let mut values = vec![0.0; count];
    let mut factors = Vec::new();
    for &s in sigmas {
        let f: Vec<DVector<f64>> = dims.iter().map(|&n| unit(rng, n)).collect();
        let term = outer_product(&f).unwrap();
        for (v, t) in values.iter_mut().zip(term.values()) {
            *v += s * t;
        }
        factors.push(f);
    }
    for v in &mut values {
        *v += noise_sd * rng.sample::<f64, _>(StandardNormal);
    }
    (Tensor::new(dims.to_vec(), values).unwrap(), factors)
}

fn tensor_recovery() -> Outcome {
    let dims = [10, 12, 8];
    let mut rng = stream_rng(90_000, 0);
    let sigma = 3.0;
    let (t, f) = low_rank(&mut rng, &dims, &[sigma], 0.0);
    let fit = tensor_pca(&t, 1).unwrap();
    let eig_gap = fit.scales.iter().map(|s| (s[0] - sigma * sigma).abs()).fold(0.0, f64::max);
    let cos_gap = fit.loadings.iter().zip(&f[0]).map(|(m, u)| 1.0 - m.column(0).dot(u).abs()).fold(0.0, f64::max);
    let noiseless = eig_gap <= 1e-8 && cos_gap <= 1e-10;

    let mut good = 0;
    for rep in 0..100 {
        let mut rng = stream_rng(90_001, rep);
        let sd = 5.0 / 100.0 / (dims.iter().product::<usize>() as f64).sqrt();
        let (t, f) = low_rank(&mut rng, &dims, &[5.0], sd);
        let fit = tensor_pca(&t, 1).unwrap();
        if fit.loadings.iter().zip(&f[0]).all(|(m, u)| m.column(0).dot(u).abs() >= 0.99) {
            good += 1;
        }
    }
    (noiseless && good >= 95, format!(
        "noiseless eigenvalue gap {eig_gap:.1e}, 1-|cos| {cos_gap:.1e}; SNR 100 recovered in {good}/100"
    ))
}

fn rank_test_behaviour() -> Outcome {
    let dims = [30, 30, 60];
    let reps = 100;
    let (mut reject_one, mut reject_two) = (0, 0);
    for rep in 0..reps {
        let mut rng = stream_rng(100_000, rep);
        let (t, _) = low_rank(&mut rng, &dims, &[200.0, 150.0], 1.0);
        if rank_test(&t, 1, None, 500, rep).unwrap().p_mean < 0.05 {
            reject_one += 1;
        }
        if rank_test(&t, 2, None, 500, rep).unwrap().p_mean < 0.05 {
            reject_two += 1;
        }
    }
    let ok = reject_one >= 90 && reject_two <= 15;
    (ok, format!("k=1 rejected {reject_one}/{reps}, k=2 rejected {reject_two}/{reps}"))
}

fn no_look_ahead() -> Outcome {
    let base = chrono::NaiveDate::from_ymd_opt(2020, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
    let mut violations = 0;
    for case in 0..1000 {
        let mut rng = stream_rng(110_000, case);
        let mut store = VintageStore::new();
        let mut clock = [0i64; 3];
        let mut log: Vec<(usize, i64, i64, f64)> = Vec::new();
        for _ in 0..rng.random_range(0..30) {
            let s = rng.random_range(0..3);
            clock[s] += rng.random_range(0..48);
            let first = rng.random_range(0..10);
            let obs: Vec<(Period, f64)> =
                (first..first + rng.random_range(1..4)).map(|p| (Period::index(p), rng.random())).collect();
            let when = base + chrono::Duration::hours(clock[s]);
            store.ingest_release(["a", "b", "c"][s], when, &obs).unwrap();
            log.extend(obs.iter().map(|(p, v)| (s, clock[s], p.index, *v)));
        }
        let q_hours = rng.random_range(-5..200);
        let snap = store.as_of(base + chrono::Duration::hours(q_hours));
        let mut want: BTreeMap<(usize, i64), f64> = BTreeMap::new();
        for &(s, h, p, v) in &log {
            if h <= q_hours {
                want.insert((s, p), v);
            }
        }
        let got: BTreeMap<(usize, i64), f64> = snap
            .series
            .iter()
            .flat_map(|(id, ser)| {
                let s = ["a", "b", "c"].iter().position(|n| n == id).unwrap();
                ser.values.iter().map(move |(p, v)| ((s, *p), *v))
            })
            .collect();
        violations += usize::from(got != want);
    }
    (violations == 0, format!("1000 random ingestion sequences, {violations} snapshots differed from the oracle"))
}

fn sample(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("sample").join(name)
}

fn run_cli(args: &[&str], threads: usize, out: &Path) -> bool {
    let status = Command::new(env!("CARGO_BIN_EXE_nowcast"))
        .args(args)
        .args(["--threads", &threads.to_string(), "--output"])
        .arg(out)
        .env_remove(nowcast_cli::CONFIG_ENV)
        .status()
        .expect("binary runs");
    status.success()
}

fn dir_contents(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect()
}

fn cli_determinism() -> Outcome {
    let midas = sample("midas.conf");
    let granger = sample("granger.conf");
    let classify = sample("classify.conf");
    let tensor = sample("tensor.conf");
    let m = midas.to_str().unwrap();
    let runs: Vec<(&str, Vec<&str>)> = vec![
        ("fit", vec!["fit", "--config", m, "--seed", "5", "--set", "cv_subsample=30"]),
        ("nowcast", vec!["nowcast", "--config", m, "--seed", "5", "--as-of", "2020-01-20"]),
        ("cv", vec!["cv", "--config", m, "--seed", "5", "--set", "cv_subsample=25", "--set", "cv_gap=2"]),
        ("granger", vec!["granger", "--config", granger.to_str().unwrap(), "--seed", "5", "--set", "cv_subsample=30"]),
        ("classify", vec!["classify", "--config", classify.to_str().unwrap(), "--seed", "5"]),
        ("tensor-rank", vec!["tensor-rank", "--config", tensor.to_str().unwrap(), "--seed", "5"]),
    ];
    let tmp = tempfile::tempdir().unwrap();
    let mut failures = Vec::new();
    for (name, args) in &runs {
        let outs: Vec<PathBuf> = (0..3).map(|i| tmp.path().join(format!("{name}-{i}"))).collect();
        let ran = run_cli(args, 1, &outs[0]) && run_cli(args, 1, &outs[1]) && run_cli(args, 4, &outs[2]);
        if !ran {
            failures.push(format!("{name}: non-zero exit"));
            continue;
        }
        let first = dir_contents(&outs[0]);
        if first.len() < 2 || outs[1..].iter().any(|o| dir_contents(o) != first) {
            failures.push(format!("{name}: outputs differ"));
        }
    }
    let detail = if failures.is_empty() {
        format!("{} subcommands identical over two runs and threads 1 and 4", runs.len())
    } else {
        failures.join("; ")
    };
    (failures.is_empty(), detail)
}
