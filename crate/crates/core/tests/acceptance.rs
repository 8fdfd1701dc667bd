//! Acceptance suite. One line per criterion; exits nonzero if any fails.
//!
//! Runs on the reference plan with `PB_ACCEPT_PATHS` paths (default 500).

mod common;

use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::sync::OnceLock;
use std::time::Instant;

use poisson_barrier::cli::cmd_value_curves;
use poisson_barrier::config::{ScenarioConfig, DEFAULT_SEED};
use poisson_barrier::diagnostics::{check_coupling, check_resolvent_fixed_point, ResolventOptions};
use poisson_barrier::estimator::{discounted_time_integral, value_samples};
use poisson_barrier::lattice::{exhaustive_bundle, simulate_lattice};
use poisson_barrier::optimizer::convergence_study_on_bundle;
use poisson_barrier::{
    estimate_rho, estimate_value, estimate_value_derivative, find_optimal_barrier, find_optimal_barrier_classical,
    simulate_paths, BarrierSearchResult, BisectionOptions, CostCase, CostSpec, Estimate, LatticeWalk, LevyModelSpec,
    PathBundle, SimulationPlan,
};

use common::{geometric_constant, LatticeTree};

const GEOMETRIC_ABS_TOL: f64 = 1e-10;
const AFFINE_REL_TOL: f64 = 1e-9;
const COUPLING_SHIFTS: [f64; 2] = [0.1, 1.0];
const COUPLING_BARRIERS: [f64; 3] = [-1.0, 0.0, 1.0];
const LATTICE_STEPS: usize = 4;
const LATTICE_PATHS: usize = 200_000;
const LATTICE_SE_MULTIPLE: f64 = 3.0;
const LATTICE_ROOT_TOL: f64 = 1e-3;
const BISECTION_TOL: f64 = 1e-3;
const OPTIMALITY_SE_MULTIPLE: f64 = 2.0;
const SLOPE_SE_MULTIPLE: f64 = 3.0;
const SLOPE_SLACK: f64 = 0.02;
const CENTRAL_DIFFERENCE_STEP: f64 = 0.1;
const M_OPERATOR_SE_MULTIPLE: f64 = 3.0;
const PUSH_GRID_STEP: f64 = 0.05;
const PUSH_GRID_MAX: f64 = 3.0;
const LADDER: [f64; 9] = [2.0, 5.0, 10.0, 20.0, 50.0, 100.0, 200.0, 500.0, 1000.0];
const CONVERGENCE_SE_MULTIPLE: f64 = 2.0;
const CLASSICAL_SE_MULTIPLE: f64 = 3.0;
const CASES: [CostCase; 3] = [CostCase::F1, CostCase::F2, CostCase::F3];
const UNIT_COST: f64 = 1.0;

fn paths() -> usize {
    std::env::var("PB_ACCEPT_PATHS").ok().and_then(|v| v.parse().ok()).unwrap_or(500)
}

fn plan() -> SimulationPlan {
    SimulationPlan {
        paths: paths(),
        ..SimulationPlan::reference(DEFAULT_SEED)
    }
}

fn bundle() -> &'static PathBundle {
    static BUNDLE: OnceLock<PathBundle> = OnceLock::new();
    BUNDLE.get_or_init(|| simulate_paths(&LevyModelSpec::reference(), &plan()).expect("reference bundle"))
}

fn cost(case: CostCase) -> CostSpec {
    CostSpec::builtin(case, UNIT_COST)
}

fn searches() -> &'static Vec<BarrierSearchResult> {
    static SEARCHES: OnceLock<Vec<BarrierSearchResult>> = OnceLock::new();
    SEARCHES.get_or_init(|| {
        CASES
            .iter()
            .map(|&c| find_optimal_barrier(bundle(), &cost(c), &BisectionOptions::with_tol(BISECTION_TOL)).unwrap())
            .collect()
    })
}

fn b_grid() -> Vec<f64> {
    (0..17).map(|i| -3.0 + 0.25 * i as f64).collect()
}

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err(e: poisson_barrier::Error) -> String {
    e.to_string()
}

fn criterion_1() -> Outcome {
    let (q, dt, n) = (0.05, 0.01, 10_000);
    let closed = geometric_constant(q, dt, n);
    let integral = discounted_time_integral(&vec![1.0; n + 1], dt, q).map_err(err)?;
    ensure((integral - closed).abs() <= GEOMETRIC_ABS_TOL, || format!("integral {integral} vs closed form {closed}"))?;
    let rho = estimate_rho(bundle(), &cost(CostCase::Linear), 0.3).map_err(err)?;
    ensure(rho.mean == integral && rho.std_error == 0.0, || format!("linear rho {rho:?} vs {integral}"))?;
    Ok(format!("G = {integral:.12}, closed form {closed:.12}, linear rho exact with zero spread"))
}

fn criterion_2() -> Outcome {
    for case in CASES {
        let means: Vec<f64> = b_grid()
            .into_iter()
            .map(|b| estimate_rho(bundle(), &cost(case), b).map(|e| e.mean))
            .collect::<Result<_, _>>()
            .map_err(err)?;
        if let Some(i) = (1..means.len()).find(|&i| means[i] < means[i - 1]) {
            return Err(format!("{case:?}: rho decreases at grid index {i}"));
        }
    }
    Ok(format!("17-point grid, three cases, M = {}", paths()))
}

fn criterion_3() -> Outcome {
    let grid = b_grid();
    let means: Vec<f64> = grid
        .iter()
        .map(|&b| estimate_rho(bundle(), &cost(CostCase::F1), b).map(|e| e.mean))
        .collect::<Result<_, _>>()
        .map_err(err)?;
    let scale = means.iter().fold(0f64, |m, v| m.max(v.abs()));
    let worst_second = means.windows(3).map(|w| (w[2] - 2.0 * w[1] + w[0]).abs()).fold(0.0, f64::max) / scale;
    ensure(worst_second <= AFFINE_REL_TOL, || format!("relative second difference {worst_second:e}"))?;
    let p = bundle().plan();
    let target = 2.0 * geometric_constant(p.discount, p.dt(), p.steps);
    let worst_slope = means
        .windows(2)
        .zip(grid.windows(2))
        .map(|(m, b)| ((m[1] - m[0]) / (b[1] - b[0]) / target - 1.0).abs())
        .fold(0.0, f64::max);
    ensure(worst_slope <= AFFINE_REL_TOL, || format!("relative slope error {worst_slope:e}"))?;
    Ok(format!("max rel second difference {worst_second:.1e}, max rel slope error {worst_slope:.1e}"))
}

fn criterion_4() -> Outcome {
    let mut total = 0.0;
    for eps in COUPLING_SHIFTS {
        for b in COUPLING_BARRIERS {
            let r = check_coupling(bundle(), b, eps).map_err(err)?;
            ensure(r.passed(), || format!("eps {eps}, b {b}: {} violations", r.lhs.mean))?;
            total += r.lhs.mean;
        }
    }
    Ok(format!("{total} violations over 6 (eps, b) pairs"))
}

fn within(e: &Estimate, exact: f64, k: f64) -> bool {
    (e.mean - exact).abs() <= k * e.std_error
}

fn criterion_5() -> Outcome {
    let walk = LatticeWalk::default();
    let tree = LatticeTree {
        steps: LATTICE_STEPS,
        step: 1.0,
        discount: 0.05,
    };
    let exact_plan = LatticeWalk::plan(LATTICE_STEPS, 1, 0.05, 0);
    let all = exhaustive_bundle(&walk, &exact_plan).map_err(err)?;
    ensure(all.n_paths() == 256, || format!("{} outcomes", all.n_paths()))?;
    let mc = simulate_lattice(&walk, &LatticeWalk::plan(LATTICE_STEPS, LATTICE_PATHS, 0.05, 2718)).map_err(err)?;
    let opts = BisectionOptions::with_tol(LATTICE_ROOT_TOL);
    let mut worst: f64 = 0.0;
    for case in CASES {
        let c = cost(case);
        let root = tree.root(&c, 1e-10);
        let b = root;
        let exact_rho = tree.rho(&c, b);
        let e = estimate_rho(&all, &c, b).map_err(err)?;
        ensure((e.mean - exact_rho).abs() <= 1e-12 * (1.0 + exact_rho.abs()), || format!("{case:?}: enumeration rho"))?;
        let e = estimate_rho(&mc, &c, b).map_err(err)?;
        ensure(within(&e, exact_rho, LATTICE_SE_MULTIPLE), || format!("{case:?}: MC rho {e:?} vs {exact_rho}"))?;
        worst = worst.max((e.mean - exact_rho).abs() / e.std_error);
        for x in [b - 1.5, b + 0.5] {
            let v = tree.value(&c, b, x);
            let slope = tree.value_slope(&c, b, x, 1e-5);
            let ev = estimate_value(&all, &c, b, x).map_err(err)?;
            let ed = estimate_value_derivative(&all, &c, b, x).map_err(err)?;
            ensure((ev.mean - v).abs() <= 1e-12 * (1.0 + v.abs()), || format!("{case:?}: enumeration v({x})"))?;
            ensure((ed.mean - slope).abs() <= 1e-6 * (1.0 + slope.abs()), || format!("{case:?}: enumeration v'({x})"))?;
            let ev = estimate_value(&mc, &c, b, x).map_err(err)?;
            let ed = estimate_value_derivative(&mc, &c, b, x).map_err(err)?;
            ensure(within(&ev, v, LATTICE_SE_MULTIPLE), || format!("{case:?}: MC v({x}) {ev:?} vs {v}"))?;
            ensure(within(&ed, slope, LATTICE_SE_MULTIPLE), || format!("{case:?}: MC v'({x}) {ed:?} vs {slope}"))?;
            worst = worst.max((ev.mean - v).abs() / ev.std_error).max((ed.mean - slope).abs() / ed.std_error);
        }
        let found = find_optimal_barrier(&all, &c, &opts).map_err(err)?;
        ensure((found.b_star - root).abs() <= LATTICE_ROOT_TOL, || format!("{case:?}: root {} vs {root}", found.b_star))?;
        let mc_found = find_optimal_barrier(&mc, &c, &opts).map_err(err)?;
        let h = 1e-3;
        let slope = (tree.rho(&c, root + h) - tree.rho(&c, root - h)) / (2.0 * h);
        let rho_se = estimate_rho(&mc, &c, root).map_err(err)?.std_error;
        let allowed = LATTICE_ROOT_TOL + LATTICE_SE_MULTIPLE * rho_se / slope;
        ensure((mc_found.b_star - root).abs() <= allowed, || format!("{case:?}: MC root {} vs {root}", mc_found.b_star))?;
    }
    Ok(format!("256 outcomes exact; MC worst |gap|/se = {worst:.2}; roots within {LATTICE_ROOT_TOL}"))
}

fn criterion_6() -> Outcome {
    let mut worst = f64::NEG_INFINITY;
    for (case, search) in CASES.iter().zip(searches()) {
        let c = cost(*case);
        let b_star = search.b_star;
        for i in 0..9 {
            let x = b_star - 2.0 + 0.5 * i as f64;
            let best = estimate_value(bundle(), &c, b_star, x).map_err(err)?;
            for d in [-1.0, -0.5, 0.5, 1.0] {
                let other = estimate_value(bundle(), &c, b_star + d, x).map_err(err)?;
                let slack = OPTIMALITY_SE_MULTIPLE * best.combined_std_error(&other);
                let excess = best.mean - other.mean;
                ensure(excess <= slack, || format!("{case:?}: x {x}, b* {b_star} vs b*{d:+}: excess {excess} > {slack}"))?;
                worst = worst.max(excess / slack);
            }
        }
    }
    Ok(format!("b* = {:?}; worst excess / allowance = {worst:.3}", searches().iter().map(|s| s.b_star).collect::<Vec<_>>()))
}

fn criterion_7() -> Outcome {
    let mut lines = Vec::new();
    for (case, search) in CASES.iter().zip(searches()) {
        let c = cost(*case);
        let b = search.b_star;
        let direct = estimate_value_derivative(bundle(), &c, b, b).map_err(err)?;
        let gap = (direct.mean + UNIT_COST).abs();
        let allowed = SLOPE_SE_MULTIPLE * direct.std_error + SLOPE_SLACK;
        ensure(gap <= allowed, || format!("{case:?}: slope {direct:?}, gap {gap} > {allowed}"))?;
        let h = CENTRAL_DIFFERENCE_STEP;
        let up = value_samples(bundle(), &c, b, b + h).map_err(err)?;
        let down = value_samples(bundle(), &c, b, b - h).map_err(err)?;
        let central: Vec<f64> = up.iter().zip(&down).map(|(u, d)| (u - d) / (2.0 * h)).collect();
        let central = Estimate::from_samples(&central);
        let diff = (central.mean - direct.mean).abs();
        let allowed_cd = SLOPE_SE_MULTIPLE * central.combined_std_error(&direct);
        ensure(diff <= allowed_cd, || format!("{case:?}: central {central:?} vs direct {direct:?}"))?;
        lines.push(format!("{:?} slope {:.3}±{:.3}", case, direct.mean, direct.std_error));
    }
    Ok(lines.join(", "))
}

fn criterion_8() -> Outcome {
    let pushes: Vec<f64> = (0..=(PUSH_GRID_MAX / PUSH_GRID_STEP).round() as usize)
        .map(|i| i as f64 * PUSH_GRID_STEP)
        .collect();
    let mut worst: f64 = 0.0;
    for (case, search) in CASES.iter().zip(searches()) {
        let c = cost(*case);
        let b = search.b_star;
        for x in [b - 2.0, b - 1.0, b, b + 1.0, b + 2.0] {
            let mut lhs: Option<Estimate> = None;
            for &l in &pushes {
                let v = estimate_value(bundle(), &c, b, x + l).map_err(err)?;
                let cand = Estimate {
                    mean: UNIT_COST * l + v.mean,
                    ..v
                };
                if lhs.is_none_or(|best| cand.mean < best.mean) {
                    lhs = Some(cand);
                }
            }
            let lhs = lhs.unwrap();
            let v = estimate_value(bundle(), &c, b, x.max(b)).map_err(err)?;
            let rhs = UNIT_COST * (b - x).max(0.0) + v.mean;
            let gap = (lhs.mean - rhs).abs();
            let allowed = M_OPERATOR_SE_MULTIPLE * lhs.combined_std_error(&v) + PUSH_GRID_STEP;
            ensure(gap <= allowed, || format!("{case:?}: x {x}: {} vs {rhs}", lhs.mean))?;
            worst = worst.max(gap / allowed);
        }
    }
    Ok(format!("15 points, worst gap / allowance = {worst:.3}"))
}

fn criterion_9() -> Outcome {
    let b = searches()[0].b_star;
    let reports = check_resolvent_fixed_point(
        bundle(),
        &LevyModelSpec::reference(),
        &cost(CostCase::F1),
        b,
        &[b - 1.0, b, b + 1.0],
        &ResolventOptions::default(),
    )
    .map_err(err)?;
    let mut parts = Vec::new();
    for r in &reports {
        ensure(r.passed(), || format!("{}: gap {} > {}", r.note, r.discrepancy, r.threshold))?;
        ensure(!r.note.contains("DEGRADED"), || r.note.clone())?;
        parts.push(format!("{:.3} (threshold {:.3})", r.discrepancy, r.threshold));
    }
    Ok(format!("case 1 gaps {}", parts.join(", ")))
}

fn criterion_10() -> Outcome {
    let opts = BisectionOptions::with_tol(BISECTION_TOL);
    let tol = BISECTION_TOL;
    let mut summary = Vec::new();
    for case in CASES {
        let c = cost(case);
        let anchor = find_optimal_barrier_classical(bundle(), &c, &opts).map_err(err)?.b_star;
        let xs: Vec<f64> = (0..9).map(|i| anchor - 2.0 + 0.5 * i as f64).collect();
        let table = convergence_study_on_bundle(bundle(), &c, &LADDER, &xs, &opts).map_err(err)?;
        let stars = table.b_stars();
        for (k, w) in stars.windows(2).enumerate() {
            ensure(w[1] <= w[0] + tol, || format!("{case:?}: b* rises from eta {} to {}", LADDER[k], LADDER[k + 1]))?;
        }
        let classical = &table.classical;
        let last = table.rows.last().unwrap();
        ensure(last.search.b_star >= classical.search.b_star - 2.0 * tol, || {
            format!("{case:?}: b*_1000 {} below classical {}", last.search.b_star, classical.search.b_star)
        })?;
        for (k, pair) in table.rows.windows(2).enumerate() {
            for (i, x) in xs.iter().enumerate() {
                let (a, b) = (&pair[0].values[i], &pair[1].values[i]);
                ensure(b.mean <= a.mean + CONVERGENCE_SE_MULTIPLE * a.combined_std_error(b), || {
                    format!("{case:?}: v* rises at x {x} from eta {} to {}", LADDER[k], LADDER[k + 1])
                })?;
            }
        }
        for (i, x) in xs.iter().enumerate() {
            let (a, b) = (&last.values[i], &classical.values[i]);
            ensure((a.mean - b.mean).abs() <= CLASSICAL_SE_MULTIPLE * a.combined_std_error(b), || {
                format!("{case:?}: v*_1000({x}) {} vs classical {}", a.mean, b.mean)
            })?;
        }
        summary.push(format!("{case:?} b* {:.3} -> {:.3} (classical {:.3})", stars[0], stars[8], classical.search.b_star));
    }
    Ok(summary.join("; "))
}

fn tree_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    for case in fs::read_dir(dir).unwrap() {
        let case = case.unwrap().path();
        for f in fs::read_dir(&case).unwrap() {
            let f = f.unwrap().path();
            files.push((f.strip_prefix(dir).unwrap().display().to_string(), fs::read(&f).unwrap()));
        }
    }
    files.sort();
    files
}

fn criterion_11() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let many = std::thread::available_parallelism().map_or(4, |n| n.get().max(4));
    let mut trees = Vec::new();
    for threads in [1, many] {
        let mut cfg = ScenarioConfig::default();
        cfg.plan.paths = paths();
        cfg.output.dir = dir.path().join(threads.to_string());
        cfg.validate().map_err(err)?;
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(|e| e.to_string())?;
        pool.install(|| cmd_value_curves(&cfg)).map_err(err)?;
        trees.push(tree_bytes(&cfg.output.dir));
    }
    ensure(trees[0].len() == 6, || format!("{} files", trees[0].len()))?;
    ensure(trees[0] == trees[1], || "outputs differ between thread counts".into())?;
    let bytes: usize = trees[0].iter().map(|f| f.1.len()).sum();
    Ok(format!("6 files ({bytes} bytes) identical under 1 and {many} threads"))
}

fn main() -> ExitCode {
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("geometric series and linear cost", criterion_1),
        ("monotone rho under common random numbers", criterion_2),
        ("affine rho for the quadratic cost", criterion_3),
        ("coupling band", criterion_4),
        ("lattice enumeration oracle", criterion_5),
        ("optimality of b* over shifted barriers", criterion_6),
        ("slope -C at the barrier", criterion_7),
        ("push operator identity", criterion_8),
        ("resolvent fixed point", criterion_9),
        ("convergence along the observation ladder", criterion_10),
        ("determinism across thread counts", criterion_11),
    ];
    println!("acceptance: reference plan, M = {} paths", paths());
    let mut failed = 0;
    for (i, (title, run)) in criterion_iter(&criteria) {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {i:>2} PASS  {title} [{secs:.1}s]: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {i:>2} FAIL  {title} [{secs:.1}s]: {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn criterion_iter<'a>(
    criteria: &'a [(&'a str, fn() -> Outcome)],
) -> impl Iterator<Item = (usize, (&'a str, fn() -> Outcome))> + 'a {
    criteria.iter().enumerate().map(|(i, &(t, f))| (i + 1, (t, f)))
}
