//! Optimal barrier search and the η → ∞ convergence study.
//!
//! `g(b) = ρ̂(b) + C` is evaluated on one fixed bundle at every probe, so it is
//! a deterministic nondecreasing function of `b` and plain bisection applies.

use serde::Serialize;

use crate::cost::CostSpec;
use crate::error::{Error, Result};
use crate::estimator::{
    estimate_classical_value, estimate_rho, estimate_rho_classical, estimate_value, Estimate,
};
use crate::levy_model::{simulate_paths_with_budget, LevyModelSpec, PathBundle, SimulationPlan, DEFAULT_STEP_BUDGET};
use crate::observation::build_ladder;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BisectionOptions {
    pub tol: f64,
    pub max_iterations: usize,
    pub max_doublings: usize,
    pub initial_lo: f64,
    pub initial_hi: f64,
}

impl Default for BisectionOptions {
    fn default() -> Self {
        BisectionOptions {
            tol: 1e-3,
            max_iterations: 60,
            max_doublings: 40,
            initial_lo: -1.0,
            initial_hi: 1.0,
        }
    }
}

impl BisectionOptions {
    pub fn with_tol(tol: f64) -> Self {
        BisectionOptions {
            tol,
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::InvalidArgument("bisection tolerance must be positive".into()));
        }
        if !(self.initial_lo < 0.0 && self.initial_hi > 0.0) {
            return Err(Error::InvalidArgument("initial bracket must straddle 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BarrierSearchResult {
    pub b_star: f64,
    pub bracket_lo: f64,
    pub bracket_hi: f64,
    pub iterations: usize,
    pub rho_at_lo: Estimate,
    pub rho_at_hi: Estimate,
    pub tolerance: f64,
}

/// Bisection for `inf{b : rho(b).mean + C ≥ 0}` of a nondecreasing `rho`.
///
/// The bracket grows outward by doubling until `g(lo) < 0 ≤ g(hi)`, then
/// halves until its width is at most `tol`. Probes with `g = 0` move the upper
/// end, which picks the leftmost sign change on flat stretches.
pub fn bisect_monotone<F>(mut rho: F, unit_cost: f64, opts: &BisectionOptions) -> Result<BarrierSearchResult>
where
    F: FnMut(f64) -> Result<Estimate>,
{
    opts.validate()?;
    let mut lo = opts.initial_lo;
    let mut hi = opts.initial_hi;
    let mut at_lo = rho(lo)?;
    let mut at_hi = rho(hi)?;

    let mut doublings = 0;
    while at_lo.mean + unit_cost >= 0.0 {
        if doublings == opts.max_doublings {
            return Err(Error::BracketExpansion {
                doublings,
                condition: "f'(-inf) < -Cq",
                detail: format!("rho({lo}) + C = {} is still nonnegative", at_lo.mean + unit_cost),
            });
        }
        hi = lo;
        at_hi = at_lo;
        lo *= 2.0;
        at_lo = rho(lo)?;
        doublings += 1;
    }
    while at_hi.mean + unit_cost < 0.0 {
        if doublings == opts.max_doublings {
            return Err(Error::BracketExpansion {
                doublings,
                condition: "-Cq < f'(+inf)",
                detail: format!("rho({hi}) + C = {} is still negative", at_hi.mean + unit_cost),
            });
        }
        lo = hi;
        at_lo = at_hi;
        hi *= 2.0;
        at_hi = rho(hi)?;
        doublings += 1;
    }

    let mut iterations = 0;
    while hi - lo > opts.tol && iterations < opts.max_iterations {
        let mid = 0.5 * (lo + hi);
        let at_mid = rho(mid)?;
        if at_mid.mean + unit_cost >= 0.0 {
            hi = mid;
            at_hi = at_mid;
        } else {
            lo = mid;
            at_lo = at_mid;
        }
        iterations += 1;
    }

    Ok(BarrierSearchResult {
        b_star: 0.5 * (lo + hi),
        bracket_lo: lo,
        bracket_hi: hi,
        iterations,
        rho_at_lo: at_lo,
        rho_at_hi: at_hi,
        tolerance: opts.tol,
    })
}

fn check_slope(bundle: &PathBundle, cost: &CostSpec, opts: &BisectionOptions) -> Result<()> {
    let bracket = opts.initial_hi.max(-opts.initial_lo) * 2f64.powi(opts.max_doublings.min(1000) as i32);
    cost.check_slope_condition(bundle.plan().discount, bracket)
        .map_err(|side| Error::BracketExpansion {
            doublings: 0,
            condition: side.condition(),
            detail: "rejected before search".into(),
        })
}

/// Optimal periodic barrier `b*` on a fixed bundle.
pub fn find_optimal_barrier(bundle: &PathBundle, cost: &CostSpec, opts: &BisectionOptions) -> Result<BarrierSearchResult> {
    if cost.slope_limits().is_some() {
        check_slope(bundle, cost, opts)?;
    }
    bisect_monotone(|b| estimate_rho(bundle, cost, b), cost.unit_cost(), opts)
}

/// Optimal barrier of the classical (continuously reflected) problem.
pub fn find_optimal_barrier_classical(
    bundle: &PathBundle,
    cost: &CostSpec,
    opts: &BisectionOptions,
) -> Result<BarrierSearchResult> {
    if cost.slope_limits().is_some() {
        check_slope(bundle, cost, opts)?;
    }
    bisect_monotone(|b| estimate_rho_classical(bundle, cost, b), cost.unit_cost(), opts)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    /// `None` for the classical (η = ∞) row.
    pub eta: Option<f64>,
    pub search: BarrierSearchResult,
    /// `v̂*_η(x)` at each point of the study's x-grid.
    pub values: Vec<Estimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceTable {
    pub x_grid: Vec<f64>,
    pub rows: Vec<ConvergenceRow>,
    pub classical: ConvergenceRow,
}

impl ConvergenceTable {
    pub fn b_stars(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.search.b_star).collect()
    }
}

/// Runs the study on an existing bundle: one nested ladder over `rates`, one
/// barrier search per level, plus the classical problem.
pub fn convergence_study_on_bundle(
    bundle: &PathBundle,
    cost: &CostSpec,
    rates: &[f64],
    x_grid: &[f64],
    opts: &BisectionOptions,
) -> Result<ConvergenceTable> {
    let ladder = build_ladder(rates, bundle.plan())?;
    let mut rows = Vec::with_capacity(rates.len());
    for (level, &eta) in ladder.rates().iter().enumerate() {
        let level_bundle = bundle.with_obs_mask(ladder.mask(level).clone(), eta)?;
        let search = find_optimal_barrier(&level_bundle, cost, opts)?;
        let values = x_grid
            .iter()
            .map(|&x| estimate_value(&level_bundle, cost, search.b_star, x))
            .collect::<Result<Vec<_>>>()?;
        rows.push(ConvergenceRow {
            eta: Some(eta),
            search,
            values,
        });
    }
    let search = find_optimal_barrier_classical(bundle, cost, opts)?;
    let values = x_grid
        .iter()
        .map(|&x| estimate_classical_value(bundle, cost, search.b_star, x))
        .collect::<Result<Vec<_>>>()?;
    Ok(ConvergenceTable {
        x_grid: x_grid.to_vec(),
        rows,
        classical: ConvergenceRow {
            eta: None,
            search,
            values,
        },
    })
}

pub fn convergence_study(
    spec: &LevyModelSpec,
    plan: &SimulationPlan,
    cost: &CostSpec,
    rates: &[f64],
    x_grid: &[f64],
    opts: &BisectionOptions,
) -> Result<ConvergenceTable> {
    let bundle = simulate_paths_with_budget(spec, plan, DEFAULT_STEP_BUDGET)?;
    convergence_study_on_bundle(&bundle, cost, rates, x_grid, opts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exact(v: f64) -> Result<Estimate> {
        Ok(Estimate::exact(v))
    }

    #[test]
    fn affine_root() {
        let res = bisect_monotone(|b| exact(2.0 * b - 3.0), 1.0, &BisectionOptions::default()).unwrap();
        assert!((res.b_star - 1.0).abs() <= 1e-3);
        assert!(res.rho_at_lo.mean + 1.0 < 0.0 && res.rho_at_hi.mean + 1.0 >= 0.0);
        assert!(res.bracket_hi - res.bracket_lo <= 1e-3);
    }

    #[test]
    fn bracket_invariant_holds_at_every_probe() {
        let mut probes = Vec::new();
        let res = bisect_monotone(
            |b| {
                probes.push(b);
                exact((b - 37.0).tanh())
            },
            0.0,
            &BisectionOptions::with_tol(1e-6),
        )
        .unwrap();
        assert!((res.b_star - 37.0).abs() <= 1e-6);
        assert!(probes.len() > 10);
    }

    #[test]
    fn flat_stretch_picks_leftmost_crossing() {
        // g vanishes on [0.5, 2); the infimum of {g ≥ 0} is 0.5.
        let g = |b: f64| exact(if b < 0.5 { b - 0.5 } else if b < 2.0 { 0.0 } else { b - 2.0 });
        let res = bisect_monotone(g, 0.0, &BisectionOptions::with_tol(1e-4)).unwrap();
        assert!((res.b_star - 0.5).abs() <= 1e-4, "{}", res.b_star);
    }

    #[test]
    fn expansion_failure_names_condition() {
        let err = bisect_monotone(|_| exact(1.0), 1.0, &BisectionOptions::default()).unwrap_err();
        match err {
            Error::BracketExpansion { condition, .. } => assert_eq!(condition, "f'(-inf) < -Cq"),
            other => panic!("unexpected {other:?}"),
        }
        let err = bisect_monotone(|_| exact(-5.0), 1.0, &BisectionOptions::default()).unwrap_err();
        assert!(matches!(err, Error::BracketExpansion { condition: "-Cq < f'(+inf)", .. }));
    }

    #[test]
    fn rejects_bad_options() {
        let opts = BisectionOptions {
            tol: 0.0,
            ..Default::default()
        };
        assert!(bisect_monotone(|b| exact(b), 0.0, &opts).is_err());
    }
}
