//! Test-side oracles, written independently of the library's code paths.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use poisson_barrier::CostSpec;

/// Exact draw of `X_t` for the reference jump diffusion: drift −0.1,
/// σ = 0.2, rate-0.4 upward `|N(0,1)|` jumps, rate-0.6 downward Weibull(2, 1)
/// jumps. Jump counts are Poisson, sizes by inversion.
pub struct ReferenceSampler {
    rng: ChaCha20Rng,
}

impl ReferenceSampler {
    pub fn new(seed: u64) -> Self {
        ReferenceSampler {
            rng: ChaCha20Rng::seed_from_u64(seed),
        }
    }

    fn normal(&mut self) -> f64 {
        // Box–Muller.
        let u1: f64 = 1.0 - self.rng.random::<f64>();
        let u2: f64 = self.rng.random::<f64>();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    fn poisson(&mut self, mean: f64) -> u32 {
        // Knuth; means here are small.
        let limit = (-mean).exp();
        let mut k = 0;
        let mut p = self.rng.random::<f64>();
        while p > limit {
            k += 1;
            p *= self.rng.random::<f64>();
        }
        k
    }

    pub fn sample(&mut self, t: f64) -> f64 {
        let mut x = -0.1 * t + 0.2 * t.sqrt() * self.normal();
        for _ in 0..self.poisson(0.4 * t) {
            x += self.normal().abs();
        }
        for _ in 0..self.poisson(0.6 * t) {
            let u: f64 = 1.0 - self.rng.random::<f64>();
            x -= (-u.ln()).sqrt();
        }
        x
    }
}

/// `E[X_1]` of the reference model: `−0.1 + 0.4·√(2/π) − 0.6·√π/2`.
pub fn reference_mean_rate() -> f64 {
    -0.1 + 0.4 * (2.0 / std::f64::consts::PI).sqrt() - 0.6 * std::f64::consts::PI.sqrt() / 2.0
}

/// `Var[X_1]`: `σ² + 0.4·E|Z|² + 0.6·E[W²]` with `E[W²] = Γ(2) = 1`.
pub fn reference_variance_rate() -> f64 {
    0.04 + 0.4 + 0.6
}

/// Backward evaluation over the probability tree of the ±`step` lattice
/// walk with independent fair observation coins, unit grid.
pub struct LatticeTree {
    pub steps: usize,
    pub step: f64,
    pub discount: f64,
}

impl LatticeTree {
    fn disc(&self, n: usize) -> f64 {
        (-self.discount * n as f64).exp()
    }

    fn expand(&self, n: usize, u: f64, b: f64, running: &dyn Fn(f64) -> f64, unit_cost: f64) -> f64 {
        let here = self.disc(n) * running(u);
        if n == self.steps {
            return here;
        }
        let mut future = 0.0;
        for dx in [self.step, -self.step] {
            let uncontrolled = u + dx;
            future += 0.25 * self.expand(n + 1, uncontrolled, b, running, unit_cost);
            let (next, push) = if uncontrolled < b { (b, b - uncontrolled) } else { (uncontrolled, 0.0) };
            future += 0.25 * (unit_cost * self.disc(n + 1) * push + self.expand(n + 1, next, b, running, unit_cost));
        }
        here + future
    }

    pub fn rho(&self, cost: &CostSpec, b: f64) -> f64 {
        self.expand(0, b, b, &|u| cost.f_prime_plus(u), 0.0)
    }

    pub fn value(&self, cost: &CostSpec, b: f64, x: f64) -> f64 {
        self.expand(0, x, b, &|u| cost.f(u), cost.unit_cost())
    }

    /// Central difference of [`LatticeTree::value`]; `x` must keep every
    /// reachable level away from `b` by more than `h`.
    pub fn value_slope(&self, cost: &CostSpec, b: f64, x: f64, h: f64) -> f64 {
        (self.value(cost, b, x + h) - self.value(cost, b, x - h)) / (2.0 * h)
    }

    /// `inf{b : ρ(b) + C ≥ 0}` by bisection to `tol`.
    pub fn root(&self, cost: &CostSpec, tol: f64) -> f64 {
        let g = |b: f64| self.rho(cost, b) + cost.unit_cost();
        let (mut lo, mut hi) = (-16.0, 16.0);
        assert!(g(lo) < 0.0 && g(hi) >= 0.0);
        while hi - lo > tol {
            let mid = 0.5 * (lo + hi);
            if g(mid) >= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

/// `U⁰` by direct recursion: add the increment, and at a flagged step reset to
/// 0 when below it.
pub fn reflect_at_zero(path: &[f64], flagged: impl Fn(usize) -> bool) -> Vec<f64> {
    let mut u = Vec::with_capacity(path.len());
    let mut level = 0.0;
    u.push(0.0);
    for n in 1..path.len() {
        level += path[n] - path[n - 1];
        if flagged(n) && level < 0.0 {
            level = 0.0;
        }
        u.push(level);
    }
    u
}

/// `dt Σ_{n=0}^{N} e^{−q n dt}` in closed form.
pub fn geometric_constant(discount: f64, dt: f64, steps: usize) -> f64 {
    let r = (-discount * dt).exp();
    dt * (1.0 - r.powi(steps as i32 + 1)) / (1.0 - r)
}
