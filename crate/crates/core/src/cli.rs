//! `pbarrier` command-line front end.
//!
//! Every command reads one [`ScenarioConfig`], simulates one bundle and
//! writes CSV files under `<out>/<case>/`. Each file starts with a comment
//! line carrying the command, the scenario hash and the seed.
//!
//! | file | columns |
//! |------|---------|
//! | `rho_curve.csv` | `b,mean,std_error` |
//! | `barrier.csv`, `value_curves.csv`, `convergence.csv`, `convergence_values.csv` | `quantity,b,x,eta,mean,std_error,n_paths` |
//! | `verify.csv` (in `<out>`) | `case,name,lhs,lhs_std_error,rhs,rhs_std_error,discrepancy,threshold,status,note` |

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{ModelConfig, ScenarioConfig};
use crate::cost::{CostCase, CostSpec};
use crate::diagnostics::{
    check_coupling, check_derivative_consistency, check_lattice_oracle, check_m_operator, check_resolvent_fixed_point,
    check_slope_at_barrier, CheckReport, CheckStatus, ResolventOptions,
};
use crate::error::{Error, Result};
use crate::estimator::{estimate_rho, estimate_value, Estimate};
use crate::lattice::{exact_optimal_barrier, exact_value, exhaustive_bundle, simulate_lattice};
use crate::levy_model::{simulate_paths_with_budget, PathBundle};
use crate::optimizer::{
    convergence_study_on_bundle, find_optimal_barrier, find_optimal_barrier_classical, BarrierSearchResult,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "pbarrier", version, about = "Periodic barrier control experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// ρ̂(b) over the b-grid plus the optimal barrier.
    RhoCurve,
    /// v̂_b(x) for the optimal and shifted barriers.
    ValueCurves,
    /// Optimal barriers and value curves along the observation-rate ladder.
    Converge,
    /// Structural checks; exits 1 if any check fails.
    Verify,
}

#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// Scenario file; built-in defaults otherwise.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Run only this cost case.
    #[arg(long, global = true, value_parser = clap::value_parser!(u8).range(1..=3))]
    pub case: Option<u8>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub eta: Option<f64>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub paths: Option<usize>,
    #[arg(long, global = true)]
    pub steps: Option<usize>,
    #[arg(long, global = true)]
    pub horizon: Option<f64>,
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

/// Loads the scenario, applies command-line overrides and validates.
pub fn resolve_config(overrides: &Overrides) -> Result<ScenarioConfig> {
    let mut cfg = match &overrides.config {
        Some(path) => ScenarioConfig::load(path)?,
        None => ScenarioConfig::default(),
    };
    if let Some(case) = overrides.case {
        let case = CostCase::parse(&case.to_string()).expect("range-checked by the parser");
        cfg.cost.cases = vec![case];
    }
    if let Some(seed) = overrides.seed {
        cfg.plan.seed = seed;
    }
    if let Some(eta) = overrides.eta {
        cfg.plan.eta = eta;
    }
    if let Some(out) = &overrides.out {
        cfg.output.dir = out.clone();
    }
    if let Some(paths) = overrides.paths {
        cfg.plan.paths = paths;
    }
    if let Some(steps) = overrides.steps {
        cfg.plan.steps = steps;
    }
    if let Some(horizon) = overrides.horizon {
        cfg.plan.horizon = horizon;
    }
    if let Some(tol) = overrides.tol {
        cfg.optimizer.tol = tol;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let cfg = match resolve_config(&cli.overrides) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("pbarrier: {e}");
            return EXIT_CONFIG;
        }
    };
    let job = || run_command(cli.command, &cfg);
    let outcome = match cli.overrides.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(job),
            Err(e) => Err(Error::Config(format!("thread pool: {e}"))),
        },
        None => job(),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("pbarrier: {e}");
            EXIT_CONFIG
        }
    }
}

fn run_command(command: Command, cfg: &ScenarioConfig) -> Result<i32> {
    let files = match command {
        Command::RhoCurve => cmd_rho_curve(cfg)?,
        Command::ValueCurves => cmd_value_curves(cfg)?,
        Command::Converge => cmd_converge(cfg)?,
        Command::Verify => {
            let outcome = cmd_verify(cfg)?;
            for (case, r) in &outcome.reports {
                let tag = match r.status {
                    CheckStatus::Passed => "PASS",
                    CheckStatus::Failed => "FAIL",
                    CheckStatus::Skipped => "SKIP",
                };
                println!("{tag} {case} {}: gap {:.3e} / threshold {:.3e} ({})", r.name, r.discrepancy, r.threshold, r.note);
            }
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            return Ok(if outcome.any_failed() { EXIT_CHECK_FAILED } else { EXIT_OK });
        }
    };
    for f in &files {
        println!("wrote {}", f.display());
    }
    Ok(EXIT_OK)
}

/// Simulates the scenario's bundle. Small lattice scenarios use every
/// outcome once instead of sampling.
pub fn build_bundle(cfg: &ScenarioConfig) -> Result<PathBundle> {
    let plan = cfg.simulation_plan();
    match &cfg.model {
        ModelConfig::Levy(spec) => simulate_paths_with_budget(spec, &plan, cfg.plan.step_budget),
        ModelConfig::Lattice(walk) if cfg.is_exhaustive_lattice() => exhaustive_bundle(walk, &plan),
        ModelConfig::Lattice(walk) => simulate_lattice(walk, &plan),
    }
}

fn cost_for(cfg: &ScenarioConfig, case: CostCase) -> CostSpec {
    CostSpec::builtin(case, cfg.cost.unit_cost)
}

struct Csv {
    writer: csv::Writer<Vec<u8>>,
}

impl Csv {
    fn new(command: &str, cfg: &ScenarioConfig, columns: &[&str]) -> Self {
        let comment = format!("# pbarrier {command} config_hash={} seed={}\n", cfg.hash(), cfg.plan.seed);
        let mut writer = csv::Writer::from_writer(comment.into_bytes());
        writer.write_record(columns).expect("in-memory write");
        Csv { writer }
    }

    fn row<I: IntoIterator<Item = String>>(&mut self, fields: I) {
        self.writer.write_record(fields).expect("in-memory write");
    }

    fn estimate(&mut self, quantity: &str, b: Option<f64>, x: Option<f64>, eta: f64, e: &Estimate) {
        self.row([
            quantity.to_string(),
            opt(b),
            opt(x),
            eta.to_string(),
            e.mean.to_string(),
            e.std_error.to_string(),
            e.n_paths.to_string(),
        ]);
    }

    fn write(self, path: &Path) -> Result<PathBuf> {
        let bytes = self
            .writer
            .into_inner()
            .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(path, bytes)?;
        Ok(path.to_path_buf())
    }
}

const ESTIMATE_COLUMNS: [&str; 7] = ["quantity", "b", "x", "eta", "mean", "std_error", "n_paths"];

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn case_dir(cfg: &ScenarioConfig, case: CostCase) -> PathBuf {
    cfg.output.dir.join(case.label())
}

fn barrier_csv(cfg: &ScenarioConfig, command: &str, eta: f64, search: &BarrierSearchResult) -> Csv {
    let mut csv = Csv::new(command, cfg, &ESTIMATE_COLUMNS);
    let half_width = Estimate {
        mean: search.b_star,
        std_error: 0.5 * (search.bracket_hi - search.bracket_lo),
        n_paths: search.rho_at_hi.n_paths,
    };
    csv.estimate("b_star", Some(search.b_star), None, eta, &half_width);
    csv.estimate("rho", Some(search.bracket_lo), None, eta, &search.rho_at_lo);
    csv.estimate("rho", Some(search.bracket_hi), None, eta, &search.rho_at_hi);
    csv
}

fn no_barrier(case: CostCase, e: &Error) {
    eprintln!("pbarrier: {}: no optimal barrier ({e})", case.label());
}

/// `rho_curve.csv` and `barrier.csv` per cost case.
pub fn cmd_rho_curve(cfg: &ScenarioConfig) -> Result<Vec<PathBuf>> {
    let bundle = build_bundle(cfg)?;
    let eta = bundle.plan().eta;
    let mut files = Vec::new();
    for &case in &cfg.cost.cases {
        let cost = cost_for(cfg, case);
        let dir = case_dir(cfg, case);
        let mut csv = Csv::new("rho-curve", cfg, &["b", "mean", "std_error"]);
        for b in cfg.rho_curve.b_grid.values() {
            let e = estimate_rho(&bundle, &cost, b)?;
            csv.row([b.to_string(), e.mean.to_string(), e.std_error.to_string()]);
        }
        files.push(csv.write(&dir.join("rho_curve.csv"))?);
        match find_optimal_barrier(&bundle, &cost, &cfg.optimizer.options()) {
            Ok(search) => files.push(barrier_csv(cfg, "rho-curve", eta, &search).write(&dir.join("barrier.csv"))?),
            Err(e @ Error::BracketExpansion { .. }) => no_barrier(case, &e),
            Err(e) => return Err(e),
        }
    }
    Ok(files)
}

/// `value_curves.csv` and `barrier.csv` per cost case.
pub fn cmd_value_curves(cfg: &ScenarioConfig) -> Result<Vec<PathBuf>> {
    let bundle = build_bundle(cfg)?;
    let plan = *bundle.plan();
    let mut files = Vec::new();
    for &case in &cfg.cost.cases {
        let cost = cost_for(cfg, case);
        let dir = case_dir(cfg, case);
        let search = match find_optimal_barrier(&bundle, &cost, &cfg.optimizer.options()) {
            Ok(s) => s,
            Err(e @ Error::BracketExpansion { .. }) => {
                no_barrier(case, &e);
                continue;
            }
            Err(e) => return Err(e),
        };
        let b_star = search.b_star;
        let barriers: Vec<f64> = std::iter::once(b_star)
            .chain(cfg.value_curves.barrier_offsets.iter().map(|d| b_star + d))
            .collect();
        let xs: Vec<f64> = cfg.value_curves.x_offsets.values().iter().map(|d| b_star + d).collect();
        let mut csv = Csv::new("value-curves", cfg, &ESTIMATE_COLUMNS);
        for &b in &barriers {
            for &x in &xs {
                csv.estimate("value", Some(b), Some(x), plan.eta, &estimate_value(&bundle, &cost, b, x)?);
            }
        }
        for &b in &barriers {
            csv.estimate("barrier", Some(b), Some(b), plan.eta, &estimate_value(&bundle, &cost, b, b)?);
        }
        if let (ModelConfig::Lattice(walk), true) = (&cfg.model, cfg.is_exhaustive_lattice()) {
            for &b in &barriers {
                for &x in &xs {
                    let exact = Estimate {
                        n_paths: bundle.n_paths(),
                        ..Estimate::exact(exact_value(walk, &plan, &cost, b, x)?)
                    };
                    csv.estimate("exact_value", Some(b), Some(x), plan.eta, &exact);
                }
            }
        }
        files.push(csv.write(&dir.join("value_curves.csv"))?);
        files.push(barrier_csv(cfg, "value-curves", plan.eta, &search).write(&dir.join("barrier.csv"))?);
    }
    Ok(files)
}

/// `convergence.csv` (optimal barrier per rate) and `convergence_values.csv`
/// (value curve per rate) per cost case. The classical problem is the row
/// with `eta = inf`.
pub fn cmd_converge(cfg: &ScenarioConfig) -> Result<Vec<PathBuf>> {
    if !matches!(cfg.model, ModelConfig::Levy(_)) {
        return Err(Error::Config("converge needs a levy model; lattice plans fix the observation rate".into()));
    }
    let bundle = build_bundle(cfg)?;
    let opts = cfg.optimizer.options();
    let mut files = Vec::new();
    for &case in &cfg.cost.cases {
        let cost = cost_for(cfg, case);
        let dir = case_dir(cfg, case);
        let anchor = match find_optimal_barrier_classical(&bundle, &cost, &opts) {
            Ok(s) => s.b_star,
            Err(e @ Error::BracketExpansion { .. }) => {
                no_barrier(case, &e);
                continue;
            }
            Err(e) => return Err(e),
        };
        let xs: Vec<f64> = cfg.converge.x_offsets.values().iter().map(|d| anchor + d).collect();
        let table = convergence_study_on_bundle(&bundle, &cost, &cfg.converge.rates, &xs, &opts)?;
        let mut barriers = Csv::new("converge", cfg, &ESTIMATE_COLUMNS);
        let mut values = Csv::new("converge", cfg, &ESTIMATE_COLUMNS);
        for row in table.rows.iter().chain(std::iter::once(&table.classical)) {
            let eta = row.eta.unwrap_or(f64::INFINITY);
            let s = &row.search;
            let b_star = Estimate {
                mean: s.b_star,
                std_error: 0.5 * (s.bracket_hi - s.bracket_lo),
                n_paths: s.rho_at_hi.n_paths,
            };
            barriers.estimate("b_star", Some(s.b_star), None, eta, &b_star);
            for (x, v) in table.x_grid.iter().zip(&row.values) {
                values.estimate("value", Some(s.b_star), Some(*x), eta, v);
            }
        }
        files.push(barriers.write(&dir.join("convergence.csv"))?);
        files.push(values.write(&dir.join("convergence_values.csv"))?);
    }
    Ok(files)
}

pub struct VerifyOutcome {
    /// `(case label, report)`; pathwise checks use the label `all`.
    pub reports: Vec<(String, CheckReport)>,
    pub files: Vec<PathBuf>,
}

impl VerifyOutcome {
    pub fn any_failed(&self) -> bool {
        self.reports.iter().any(|(_, r)| r.failed())
    }
}

/// Runs every applicable check and writes `verify.csv`.
pub fn cmd_verify(cfg: &ScenarioConfig) -> Result<VerifyOutcome> {
    let bundle = build_bundle(cfg)?;
    let plan = *bundle.plan();
    let v = &cfg.verify;
    let opts = cfg.optimizer.options();
    let mut reports: Vec<(String, CheckReport)> = Vec::new();
    for &case in &cfg.cost.cases {
        let label = case.label().to_string();
        let cost = cost_for(cfg, case);
        let search = match find_optimal_barrier(&bundle, &cost, &opts) {
            Ok(s) => s,
            Err(Error::BracketExpansion { condition, .. }) => {
                let reason = format!("slope condition {condition} fails; no optimal barrier");
                for name in ["slope_at_barrier", "derivative_vs_central_difference", "m_operator"] {
                    reports.push((label.clone(), CheckReport::skipped(name, reason.clone())));
                }
                continue;
            }
            Err(e) => return Err(e),
        };
        let b = search.b_star + v.barrier_shift;
        match &cfg.model {
            ModelConfig::Levy(spec) => {
                reports.push((label.clone(), check_slope_at_barrier(&bundle, &cost, b, v.slope_slack)?));
                reports.push((label.clone(), check_derivative_consistency(&bundle, &cost, b, b, v.difference_step)?));
                let xs: Vec<f64> = v.m_operator_x_offsets.iter().map(|d| b + d).collect();
                for r in check_m_operator(&bundle, &cost, b, &xs, &v.push_grid(), v.push_step)? {
                    reports.push((label.clone(), r));
                }
                if v.resolvent_cases.contains(&case) {
                    let xs: Vec<f64> = v.resolvent_x_offsets.iter().map(|d| b + d).collect();
                    let ropts = ResolventOptions {
                        max_exit_fraction: v.resolvent_max_exit_fraction,
                        ..ResolventOptions::default()
                    };
                    for r in check_resolvent_fixed_point(&bundle, spec, &cost, b, &xs, &ropts)? {
                        reports.push((label.clone(), r));
                    }
                }
            }
            ModelConfig::Lattice(walk) if cfg.is_exhaustive_lattice() => {
                let reason = "finite horizon: restart identities do not hold on the lattice";
                for name in ["slope_at_barrier", "m_operator", "resolvent_fixed_point"] {
                    reports.push((label.clone(), CheckReport::skipped(name, reason)));
                }
                let exact_root = exact_optimal_barrier(walk, &plan, &cost, opts.tol)?;
                reports.push((
                    label.clone(),
                    CheckReport::compare(
                        "lattice_root",
                        Estimate::exact(b),
                        Estimate::exact(exact_root),
                        opts.tol,
                        format!("bisection tolerance {}", opts.tol),
                    ),
                ));
                for x in [b - 1.0, b, b + 1.0] {
                    for r in check_lattice_oracle(walk, &bundle, &cost, b, x)? {
                        reports.push((label.clone(), r));
                    }
                }
            }
            ModelConfig::Lattice(_) => {
                let reason = "lattice too long to enumerate";
                reports.push((label.clone(), CheckReport::skipped("lattice_oracle", reason)));
            }
        }
    }
    for &eps in &v.coupling_shifts {
        for &b in &v.coupling_barriers {
            reports.push(("all".to_string(), check_coupling(&bundle, b, eps)?));
        }
    }

    let mut csv = Csv::new(
        "verify",
        cfg,
        &["case", "name", "lhs", "lhs_std_error", "rhs", "rhs_std_error", "discrepancy", "threshold", "status", "note"],
    );
    for (case, r) in &reports {
        let status = match r.status {
            CheckStatus::Passed => "passed",
            CheckStatus::Failed => "failed",
            CheckStatus::Skipped => "skipped",
        };
        csv.row([
            case.clone(),
            r.name.clone(),
            r.lhs.mean.to_string(),
            r.lhs.std_error.to_string(),
            r.rhs.mean.to_string(),
            r.rhs.std_error.to_string(),
            r.discrepancy.to_string(),
            r.threshold.to_string(),
            status.to_string(),
            r.note.clone(),
        ]);
    }
    let file = csv.write(&cfg.output.dir.join("verify.csv"))?;
    Ok(VerifyOutcome {
        reports,
        files: vec![file],
    })
}
