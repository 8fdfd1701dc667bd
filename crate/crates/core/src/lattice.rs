//! Symmetric ±step random walk observed with probability ½ per step.
//!
//! Small enough to enumerate: with `N` steps there are `2^N` walks and `2^N`
//! observation patterns, all equally likely. [`exhaustive_bundle`] lists every
//! outcome once, so bundle estimators on it return exact expectations.
//! The `exact_*` functions evaluate the same expectations through the
//! step-by-step recursion of the controlled process (reset to the barrier at
//! each flagged step where it sits strictly below), independent of the
//! running-maximum form used by [`crate::control`].

use std::f64::consts::LN_2;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cost::CostSpec;
use crate::error::{Error, Result};
use crate::levy_model::{PathBundle, SimulationPlan};
use crate::observation::ObsMask;
use crate::rng::{substream, Stream};

/// Largest step count accepted by the exhaustive routines (`4^N` outcomes).
pub const MAX_EXHAUSTIVE_STEPS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeWalk {
    pub step_size: f64,
}

impl Default for LatticeWalk {
    fn default() -> Self {
        LatticeWalk { step_size: 1.0 }
    }
}

impl LatticeWalk {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::InvalidModel("lattice step size must be positive".into()));
        }
        Ok(())
    }

    /// Observation rate giving per-step flag probability ½ on a grid of width `dt`.
    pub fn eta_for(dt: f64) -> f64 {
        LN_2 / dt
    }

    /// Plan with `steps` unit-width steps and the matching observation rate.
    pub fn plan(steps: usize, paths: usize, discount: f64, seed: u64) -> SimulationPlan {
        SimulationPlan {
            horizon: steps as f64,
            steps,
            paths,
            discount,
            eta: LatticeWalk::eta_for(1.0),
            seed,
        }
    }
}

fn check_plan(plan: &SimulationPlan) -> Result<()> {
    plan.validate()?;
    let expected = LatticeWalk::eta_for(plan.dt());
    if (plan.eta - expected).abs() > 1e-12 * expected {
        return Err(Error::InvalidPlan(format!(
            "lattice plans need eta = ln 2 / dt = {expected}, got {}",
            plan.eta
        )));
    }
    Ok(())
}

/// Random lattice paths with observation flags of probability ½.
pub fn simulate_lattice(walk: &LatticeWalk, plan: &SimulationPlan) -> Result<PathBundle> {
    walk.validate()?;
    check_plan(plan)?;
    let width = plan.width();
    let mut x_values = vec![0.0; plan.paths * width];
    x_values.par_chunks_mut(width).enumerate().for_each(|(m, row)| {
        let mut rng = substream(plan.seed, m, Stream::LatticeStep);
        let mut level = 0.0;
        for n in 1..width {
            level += if rng.random::<bool>() { walk.step_size } else { -walk.step_size };
            row[n] = level;
        }
    });
    PathBundle::from_parts(*plan, x_values, ObsMask::sample(plan, plan.eta, 0))
}

fn walk_from_bits(walk: &LatticeWalk, bits: usize, steps: usize) -> Vec<f64> {
    let mut path = Vec::with_capacity(steps + 1);
    let mut level = 0.0;
    path.push(level);
    for k in 0..steps {
        level += if bits >> k & 1 == 1 { walk.step_size } else { -walk.step_size };
        path.push(level);
    }
    path
}

fn mask_from_bits(bits: usize, steps: usize) -> Vec<bool> {
    std::iter::once(false).chain((0..steps).map(|k| bits >> k & 1 == 1)).collect()
}

fn check_exhaustive(plan: &SimulationPlan) -> Result<usize> {
    check_plan(plan)?;
    if plan.steps > MAX_EXHAUSTIVE_STEPS {
        return Err(Error::InvalidPlan(format!(
            "exhaustive lattice supports at most {MAX_EXHAUSTIVE_STEPS} steps"
        )));
    }
    Ok(1 << plan.steps)
}

/// Every (walk, mask) outcome exactly once; `plan.paths` is replaced by `4^N`.
pub fn exhaustive_bundle(walk: &LatticeWalk, plan: &SimulationPlan) -> Result<PathBundle> {
    walk.validate()?;
    let per_axis = check_exhaustive(plan)?;
    let steps = plan.steps;
    let mut x_values = Vec::with_capacity(per_axis * per_axis * (steps + 1));
    let mut rows = Vec::with_capacity(per_axis * per_axis);
    for walk_bits in 0..per_axis {
        let path = walk_from_bits(walk, walk_bits, steps);
        for mask_bits in 0..per_axis {
            x_values.extend_from_slice(&path);
            rows.push(mask_from_bits(mask_bits, steps));
        }
    }
    let plan = SimulationPlan {
        paths: per_axis * per_axis,
        ..*plan
    };
    PathBundle::from_parts(plan, x_values, ObsMask::from_rows(&rows)?)
}

/// One step of the recursively controlled process.
struct Recursion {
    u: f64,
}

impl Recursion {
    /// Moves by `dx`; at a flagged step below `barrier`, resets to `barrier`
    /// and returns the push size.
    fn advance(&mut self, dx: f64, flagged: bool, barrier: f64) -> f64 {
        self.u += dx;
        if flagged && self.u < barrier {
            let push = barrier - self.u;
            self.u = barrier;
            push
        } else {
            0.0
        }
    }
}

fn enumerate_mean(walk: &LatticeWalk, plan: &SimulationPlan, g: impl Fn(&[f64], &[bool]) -> f64) -> Result<f64> {
    walk.validate()?;
    let per_axis = check_exhaustive(plan)?;
    let mut acc = 0.0;
    for walk_bits in 0..per_axis {
        let path = walk_from_bits(walk, walk_bits, plan.steps);
        for mask_bits in 0..per_axis {
            acc += g(&path, &mask_from_bits(mask_bits, plan.steps));
        }
    }
    Ok(acc / (per_axis * per_axis) as f64)
}

fn discount_weight(plan: &SimulationPlan, n: usize) -> f64 {
    (-plan.discount * (n as f64 * plan.dt())).exp()
}

/// Exact `ρ(b)` of the lattice model on its finite grid.
pub fn exact_rho(walk: &LatticeWalk, plan: &SimulationPlan, cost: &CostSpec, b: f64) -> Result<f64> {
    let dt = plan.dt();
    enumerate_mean(walk, plan, |path, mask| {
        let mut state = Recursion { u: b };
        let mut acc = dt * cost.f_prime_plus(b);
        for n in 1..path.len() {
            state.advance(path[n] - path[n - 1], mask[n], b);
            acc += dt * discount_weight(plan, n) * cost.f_prime_plus(state.u);
        }
        acc
    })
}

/// Exact `v_b(x)` of the lattice model.
pub fn exact_value(walk: &LatticeWalk, plan: &SimulationPlan, cost: &CostSpec, b: f64, x: f64) -> Result<f64> {
    let dt = plan.dt();
    let c = cost.unit_cost();
    enumerate_mean(walk, plan, |path, mask| {
        let mut state = Recursion { u: x };
        let mut acc = dt * cost.f(x);
        for n in 1..path.len() {
            let push = state.advance(path[n] - path[n - 1], mask[n], b);
            let disc = discount_weight(plan, n);
            acc += dt * disc * cost.f(state.u) + c * disc * push;
        }
        acc
    })
}

/// Exact `v_b'(x)`: discounted `f'₊` of the free walk before the first push,
/// minus `C` times the discount at the first push.
pub fn exact_value_derivative(
    walk: &LatticeWalk,
    plan: &SimulationPlan,
    cost: &CostSpec,
    b: f64,
    x: f64,
) -> Result<f64> {
    let dt = plan.dt();
    let c = cost.unit_cost();
    enumerate_mean(walk, plan, |path, mask| {
        let mut level = x;
        let mut acc = dt * cost.f_prime_plus(x);
        for n in 1..path.len() {
            level += path[n] - path[n - 1];
            if mask[n] && level < b {
                return acc - c * discount_weight(plan, n);
            }
            acc += dt * discount_weight(plan, n) * cost.f_prime_plus(level);
        }
        acc
    })
}

/// `inf{b : ρ(b) + C ≥ 0}` of the exact lattice `ρ`, by bisection to `tol`.
pub fn exact_optimal_barrier(walk: &LatticeWalk, plan: &SimulationPlan, cost: &CostSpec, tol: f64) -> Result<f64> {
    let c = cost.unit_cost();
    let g = |b: f64| exact_rho(walk, plan, cost, b).map(|r| r + c);
    let (mut lo, mut hi) = (-1.0, 1.0);
    for _ in 0..60 {
        if g(lo)? < 0.0 {
            break;
        }
        lo *= 2.0;
    }
    for _ in 0..60 {
        if g(hi)? >= 0.0 {
            break;
        }
        hi *= 2.0;
    }
    if g(lo)? >= 0.0 || g(hi)? < 0.0 {
        return Err(Error::InvalidArgument("no sign change of the exact lattice rho".into()));
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if g(mid)? >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
