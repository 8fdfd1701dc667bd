//! Discounted-functional Monte Carlo estimators on a fixed [`PathBundle`].
//!
//! All time integrals use the left-endpoint rule `Δt Σ_{n=0}^{N} e^{−qnΔt} g_n`
//! (both endpoints included). Control costs are exact jump sums
//! `Σ_n e^{−qnΔt} ΔR_n`.
//!
//! Per-path contributions are evaluated in parallel and collected in path
//! order; the reduction is sequential, so every estimate is bit-identical for
//! any thread count and, for CRN comparisons, exactly monotone whenever the
//! per-path contributions are.

use rayon::prelude::*;
use serde::Serialize;

use crate::control::{first_periodic_control, ClassicalReflection, PeriodicBarrier};
use crate::cost::CostSpec;
use crate::error::{Error, Result};
use crate::levy_model::PathBundle;
use crate::observation::MaskRow;

/// Sample mean with its standard error `sd / √n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_paths: usize,
}

impl Estimate {
    /// An exactly known value.
    pub fn exact(value: f64) -> Self {
        Estimate {
            mean: value,
            std_error: 0.0,
            n_paths: 0,
        }
    }

    /// Mean `Σx/n` clamped to the sample range; variance from data shifted by
    /// the first sample. Constant data gives that constant with zero spread,
    /// and the mean stays nondecreasing under pointwise increases of the data.
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len();
        if n == 0 {
            return Estimate {
                mean: f64::NAN,
                std_error: f64::NAN,
                n_paths: 0,
            };
        }
        let (lo, hi) = samples
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
        let mean = (samples.iter().sum::<f64>() / n as f64).max(lo).min(hi);
        let std_error = if n > 1 {
            let shift = samples[0];
            let (s1, s2) = samples.iter().fold((0.0, 0.0), |(s1, s2), &x| {
                let d = x - shift;
                (s1 + d, s2 + d * d)
            });
            let var = ((s2 - s1 * s1 / n as f64) / (n - 1) as f64).max(0.0);
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Estimate {
            mean,
            std_error,
            n_paths: n,
        }
    }

    /// `sqrt(se₁² + se₂²)`.
    pub fn combined_std_error(&self, other: &Estimate) -> f64 {
        self.std_error.hypot(other.std_error)
    }
}

/// `e^{−qnΔt}` and `Δt·e^{−qnΔt}` on the grid `n = 0..=steps`.
#[derive(Debug, Clone)]
pub struct DiscountGrid {
    factors: Vec<f64>,
    weights: Vec<f64>,
}

impl DiscountGrid {
    pub fn new(discount: f64, dt: f64, steps: usize) -> Self {
        let factors: Vec<f64> = (0..=steps).map(|n| (-discount * (n as f64 * dt)).exp()).collect();
        let weights = factors.iter().map(|f| dt * f).collect();
        DiscountGrid { factors, weights }
    }

    pub fn for_bundle(bundle: &PathBundle) -> Self {
        let plan = bundle.plan();
        DiscountGrid::new(plan.discount, plan.dt(), plan.steps)
    }

    #[inline]
    pub fn factor(&self, n: usize) -> f64 {
        self.factors[n]
    }

    #[inline]
    pub fn weight(&self, n: usize) -> f64 {
        self.weights[n]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `Δt Σ_{n=0}^{N} e^{−qnΔt}`.
    pub fn geometric_constant(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// `Δt Σ_{n=0}^{N} e^{−qnΔt} values[n]`.
pub fn discounted_time_integral(values: &[f64], dt: f64, discount: f64) -> Result<f64> {
    if !(dt > 0.0 && dt.is_finite()) || !(discount > 0.0 && discount.is_finite()) {
        return Err(Error::InvalidArgument("dt and discount must be positive".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("integrand"));
    }
    let grid = DiscountGrid::new(discount, dt, values.len().saturating_sub(1));
    Ok(values.iter().zip(grid.weights()).map(|(v, w)| w * v).sum())
}

/// `Σ_n e^{−qnΔt}(R_n − R_{n−1})` with `R_{−1} = 0`.
pub fn control_cost_jump_sum(r_values: &[f64], dt: f64, discount: f64) -> f64 {
    let grid = DiscountGrid::new(discount, dt, r_values.len().saturating_sub(1));
    let mut prev = 0.0;
    let mut acc = 0.0;
    for (n, &r) in r_values.iter().enumerate() {
        acc += grid.factor(n) * (r - prev);
        prev = r;
    }
    acc
}

/// The same quantity by summation by parts:
/// `Σ_{n<N} (e^{−qnΔt} − e^{−q(n+1)Δt}) R_n + e^{−qNΔt} R_N`.
pub fn control_cost_by_parts(r_values: &[f64], dt: f64, discount: f64) -> f64 {
    let Some(last) = r_values.len().checked_sub(1) else {
        return 0.0;
    };
    let grid = DiscountGrid::new(discount, dt, last);
    let mut acc = grid.factor(last) * r_values[last];
    for n in 0..last {
        acc += (grid.factor(n) - grid.factor(n + 1)) * r_values[n];
    }
    acc
}

fn collect_paths<F>(bundle: &PathBundle, quantity: &'static str, per_path: F) -> Result<Vec<f64>>
where
    F: Fn(&[f64], MaskRow<'_>) -> f64 + Sync,
{
    let samples: Vec<f64> = (0..bundle.n_paths())
        .into_par_iter()
        .map(|m| per_path(bundle.path(m), bundle.mask(m)))
        .collect();
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(quantity));
    }
    Ok(samples)
}

/// Per-path `Δt Σ e^{−qnΔt} f'₊(U⁰_n + b)`, `U⁰` the periodic barrier at 0 from 0.
pub fn rho_samples(bundle: &PathBundle, cost: &CostSpec, b: f64) -> Result<Vec<f64>> {
    let grid = DiscountGrid::for_bundle(bundle);
    collect_paths(bundle, "rho", |path, mask| {
        PeriodicBarrier::new(path, &mask, 0.0, 0.0)
            .map(|s| grid.weight(s.n) * cost.f_prime_plus(s.u + b))
            .sum()
    })
}

/// `ρ̂(b)`: expected discounted `f'₊` along the barrier-`b` process started at `b`.
pub fn estimate_rho(bundle: &PathBundle, cost: &CostSpec, b: f64) -> Result<Estimate> {
    Ok(Estimate::from_samples(&rho_samples(bundle, cost, b)?))
}

pub fn rho_classical_samples(bundle: &PathBundle, cost: &CostSpec, b: f64) -> Result<Vec<f64>> {
    let grid = DiscountGrid::for_bundle(bundle);
    collect_paths(bundle, "rho_classical", |path, _| {
        ClassicalReflection::new(path, 0.0, 0.0)
            .map(|s| grid.weight(s.n) * cost.f_prime_plus(s.u + b))
            .sum()
    })
}

/// `ρ̂_∞(b)` under continuous reflection.
pub fn estimate_rho_classical(bundle: &PathBundle, cost: &CostSpec, b: f64) -> Result<Estimate> {
    Ok(Estimate::from_samples(&rho_classical_samples(bundle, cost, b)?))
}

/// Value estimate split into running and control parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ValueEstimate {
    pub total: Estimate,
    pub running: Estimate,
    pub control: Estimate,
}

#[derive(Debug, Clone, Copy)]
struct PathValue {
    running: f64,
    control: f64,
}

fn value_parts<F>(bundle: &PathBundle, cost: &CostSpec, quantity: &'static str, per_path: F) -> Result<ValueEstimate>
where
    F: Fn(&[f64], MaskRow<'_>) -> PathValue + Sync,
{
    let parts: Vec<PathValue> = (0..bundle.n_paths())
        .into_par_iter()
        .map(|m| per_path(bundle.path(m), bundle.mask(m)))
        .collect();
    let c = cost.unit_cost();
    let running: Vec<f64> = parts.iter().map(|p| p.running).collect();
    let control: Vec<f64> = parts.iter().map(|p| p.control).collect();
    let total: Vec<f64> = parts.iter().map(|p| p.running + c * p.control).collect();
    if total.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(quantity));
    }
    Ok(ValueEstimate {
        total: Estimate::from_samples(&total),
        running: Estimate::from_samples(&running),
        control: Estimate::from_samples(&control),
    })
}

/// Per-path total cost `Σ w_n f(U_n) + C Σ e^{−qnΔt} ΔR_n` under the periodic barrier.
pub fn value_samples(bundle: &PathBundle, cost: &CostSpec, b: f64, x: f64) -> Result<Vec<f64>> {
    let grid = DiscountGrid::for_bundle(bundle);
    let c = cost.unit_cost();
    collect_paths(bundle, "value", |path, mask| {
        let (running, control) = PeriodicBarrier::new(path, &mask, x, b).fold((0.0, 0.0), |(run, ctl), s| {
            (run + grid.weight(s.n) * cost.f(s.u), ctl + grid.factor(s.n) * s.pushed)
        });
        running + c * control
    })
}

pub fn estimate_value_parts(bundle: &PathBundle, cost: &CostSpec, b: f64, x: f64) -> Result<ValueEstimate> {
    let grid = DiscountGrid::for_bundle(bundle);
    value_parts(bundle, cost, "value", |path, mask| {
        let (running, control) = PeriodicBarrier::new(path, &mask, x, b).fold((0.0, 0.0), |(run, ctl), s| {
            (run + grid.weight(s.n) * cost.f(s.u), ctl + grid.factor(s.n) * s.pushed)
        });
        PathValue { running, control }
    })
}

/// `v̂_b(x)` under the periodic barrier strategy.
pub fn estimate_value(bundle: &PathBundle, cost: &CostSpec, b: f64, x: f64) -> Result<Estimate> {
    Ok(Estimate::from_samples(&value_samples(bundle, cost, b, x)?))
}

pub fn classical_value_samples(bundle: &PathBundle, cost: &CostSpec, b: f64, x: f64) -> Result<Vec<f64>> {
    let grid = DiscountGrid::for_bundle(bundle);
    let c = cost.unit_cost();
    collect_paths(bundle, "classical_value", |path, _| {
        let (running, control) = ClassicalReflection::new(path, x, b).fold((0.0, 0.0), |(run, ctl), s| {
            (run + grid.weight(s.n) * cost.f(s.u), ctl + grid.factor(s.n) * s.pushed)
        });
        running + c * control
    })
}

pub fn estimate_classical_value_parts(bundle: &PathBundle, cost: &CostSpec, b: f64, x: f64) -> Result<ValueEstimate> {
    let grid = DiscountGrid::for_bundle(bundle);
    value_parts(bundle, cost, "classical_value", |path, _| {
        let (running, control) = ClassicalReflection::new(path, x, b).fold((0.0, 0.0), |(run, ctl), s| {
            (run + grid.weight(s.n) * cost.f(s.u), ctl + grid.factor(s.n) * s.pushed)
        });
        PathValue { running, control }
    })
}

/// Value under continuous reflection at `b`; an initial shortfall `(b − x)⁺` is paid at time 0.
pub fn estimate_classical_value(bundle: &PathBundle, cost: &CostSpec, b: f64, x: f64) -> Result<Estimate> {
    Ok(Estimate::from_samples(&classical_value_samples(bundle, cost, b, x)?))
}

/// Per-path `Δt Σ_{n<T_b} e^{−qnΔt} f'₊(x + X_n) − C e^{−qT_b}`; paths never
/// controlled contribute the full-horizon sum and no terminal term.
pub fn value_derivative_samples(bundle: &PathBundle, cost: &CostSpec, b: f64, x: f64) -> Result<Vec<f64>> {
    let grid = DiscountGrid::for_bundle(bundle);
    let c = cost.unit_cost();
    collect_paths(bundle, "value_derivative", |path, mask| {
        let first = first_periodic_control(path, &mask, x, b);
        let end = first.unwrap_or(path.len());
        let running: f64 = path[..end]
            .iter()
            .enumerate()
            .map(|(n, &p)| grid.weight(n) * cost.f_prime_plus(x + p))
            .sum();
        match first {
            Some(t) => running - c * grid.factor(t),
            None => running,
        }
    })
}

/// `v̂_b'(x)` from the first-control-time representation of the slope.
pub fn estimate_value_derivative(bundle: &PathBundle, cost: &CostSpec, b: f64, x: f64) -> Result<Estimate> {
    Ok(Estimate::from_samples(&value_derivative_samples(bundle, cost, b, x)?))
}

/// Bound on the horizon-truncation error of `ρ̂(b)`:
/// `e^{−qT} · max |f'₊(U⁰ + b)| / q` over every visited grid value.
pub fn rho_truncation_bound(bundle: &PathBundle, cost: &CostSpec, b: f64) -> Result<f64> {
    let sup = collect_paths(bundle, "rho_truncation_bound", |path, mask| {
        PeriodicBarrier::new(path, &mask, 0.0, 0.0)
            .map(|s| cost.f_prime_plus(s.u + b).abs())
            .fold(0.0, f64::max)
    })?
    .into_iter()
    .fold(0.0, f64::max);
    let plan = bundle.plan();
    Ok((-plan.discount * plan.horizon).exp() * sup / plan.discount)
}
