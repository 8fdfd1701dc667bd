//! Lévy model specification and Euler path simulation.
//!
//! The simulated process is
//! `X_t = drift·t + sigma·B_t + Σ_i sign_i · (compound Poisson sum of law_i)`,
//! always started at 0. Starting points enter downstream by shifting the path.
//!
//! `drift` is the linear coefficient of the simulated path. For finite-activity
//! jump parts this coincides with the triplet drift once the small-jump
//! compensator is folded in, so no truncation term appears in
//! [`characteristic_exponent`].

use std::io::Write;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Exp, Normal, StandardNormal, Weibull};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::observation::{MaskRow, ObsMask};
use crate::rng::{substream, Stream, MAX_PATHS};

/// Default limit on `paths · steps` for a single bundle (about 1.6 GB of `f64`).
pub const DEFAULT_STEP_BUDGET: u64 = 200_000_000;

/// Distribution of a (nonnegative) jump magnitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MagnitudeLaw {
    /// `|Y|` with `Y ~ Normal(mean, variance)`.
    FoldedNormal { mean: f64, variance: f64 },
    /// Weibull with `shape ≥ 1` (light tailed).
    Weibull { shape: f64, scale: f64 },
    PointMass { value: f64 },
    Exponential { mean: f64 },
}

impl MagnitudeLaw {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            MagnitudeLaw::FoldedNormal { mean, variance } => mean.is_finite() && variance > 0.0 && variance.is_finite(),
            MagnitudeLaw::Weibull { shape, scale } => shape >= 1.0 && shape.is_finite() && scale > 0.0 && scale.is_finite(),
            MagnitudeLaw::PointMass { value } => value > 0.0 && value.is_finite(),
            MagnitudeLaw::Exponential { mean } => mean > 0.0 && mean.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidModel(format!("bad magnitude law parameters: {self:?}")))
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            MagnitudeLaw::FoldedNormal { mean, variance } => {
                let s = variance.sqrt();
                let z = mean / s;
                s * (2.0 / std::f64::consts::PI).sqrt() * (-0.5 * z * z).exp()
                    + mean * statrs::function::erf::erf(z / std::f64::consts::SQRT_2)
            }
            MagnitudeLaw::Weibull { shape, scale } => scale * statrs::function::gamma::gamma(1.0 + 1.0 / shape),
            MagnitudeLaw::PointMass { value } => value,
            MagnitudeLaw::Exponential { mean } => mean,
        }
    }

    pub fn second_moment(&self) -> f64 {
        match *self {
            MagnitudeLaw::FoldedNormal { mean, variance } => variance + mean * mean,
            MagnitudeLaw::Weibull { shape, scale } => scale * scale * statrs::function::gamma::gamma(1.0 + 2.0 / shape),
            MagnitudeLaw::PointMass { value } => value * value,
            MagnitudeLaw::Exponential { mean } => 2.0 * mean * mean,
        }
    }

    /// `E[exp(i·lam·Z)]`.
    pub fn characteristic_function(&self, lam: f64) -> Complex64 {
        match *self {
            MagnitudeLaw::PointMass { value } => Complex64::new(0.0, lam * value).exp(),
            MagnitudeLaw::Exponential { mean } => Complex64::new(1.0, 0.0) / Complex64::new(1.0, -lam * mean),
            MagnitudeLaw::FoldedNormal { mean, variance } => {
                let s = variance.sqrt();
                let norm = 1.0 / (s * (2.0 * std::f64::consts::PI).sqrt());
                let density = |z: f64| {
                    let a = (z - mean) / s;
                    let b = (z + mean) / s;
                    norm * ((-0.5 * a * a).exp() + (-0.5 * b * b).exp())
                };
                fourier_simpson(density, lam, mean.abs() + 40.0 * s)
            }
            MagnitudeLaw::Weibull { shape, scale } => {
                let density = |z: f64| {
                    if z <= 0.0 {
                        return if shape == 1.0 { 1.0 / scale } else { 0.0 };
                    }
                    let t = z / scale;
                    shape / scale * t.powf(shape - 1.0) * (-t.powf(shape)).exp()
                };
                fourier_simpson(density, lam, scale * 40f64.powf(1.0 / shape))
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            MagnitudeLaw::FoldedNormal { mean, variance } => {
                let y: f64 = Normal::new(mean, variance.sqrt()).expect("validated").sample(rng);
                y.abs()
            }
            MagnitudeLaw::Weibull { shape, scale } => Weibull::new(scale, shape).expect("validated").sample(rng),
            MagnitudeLaw::PointMass { value } => value,
            MagnitudeLaw::Exponential { mean } => Exp::new(1.0 / mean).expect("validated").sample(rng),
        }
    }
}

/// `∫_0^upper e^{i lam z} density(z) dz` by composite Simpson.
fn fourier_simpson(density: impl Fn(f64) -> f64, lam: f64, upper: f64) -> Complex64 {
    const INTERVALS: usize = 20_000;
    let h = upper / INTERVALS as f64;
    let mut acc = Complex64::new(0.0, 0.0);
    for j in 0..=INTERVALS {
        let z = j as f64 * h;
        let w = if j == 0 || j == INTERVALS {
            1.0
        } else if j % 2 == 1 {
            4.0
        } else {
            2.0
        };
        acc += Complex64::new(0.0, lam * z).exp() * (w * density(z));
    }
    acc * (h / 3.0)
}

/// One compound-Poisson jump component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JumpComponent {
    pub rate: f64,
    /// `+1` for upward jumps, `-1` for downward jumps.
    pub sign: i8,
    pub law: MagnitudeLaw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevyModelSpec {
    pub drift: f64,
    pub sigma: f64,
    #[serde(default)]
    pub jumps: Vec<JumpComponent>,
}

impl LevyModelSpec {
    /// Drift −0.1, volatility 0.2, upward folded-normal jumps at rate 0.4 and
    /// downward Weibull(2, 1) jumps at rate 0.6.
    pub fn reference() -> Self {
        LevyModelSpec {
            drift: -0.1,
            sigma: 0.2,
            jumps: vec![
                JumpComponent {
                    rate: 0.4,
                    sign: 1,
                    law: MagnitudeLaw::FoldedNormal { mean: 0.0, variance: 1.0 },
                },
                JumpComponent {
                    rate: 0.6,
                    sign: -1,
                    law: MagnitudeLaw::Weibull { shape: 2.0, scale: 1.0 },
                },
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.drift.is_finite() {
            return Err(Error::InvalidModel("drift must be finite".into()));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidModel("sigma must be finite and nonnegative".into()));
        }
        if self.jumps.len() > usize::from(u8::MAX) {
            return Err(Error::InvalidModel("too many jump components".into()));
        }
        for (i, jump) in self.jumps.iter().enumerate() {
            if !(jump.rate > 0.0 && jump.rate.is_finite()) {
                return Err(Error::InvalidModel(format!("jump component {i}: rate must be positive")));
            }
            if jump.sign != 1 && jump.sign != -1 {
                return Err(Error::InvalidModel(format!("jump component {i}: sign must be +1 or -1")));
            }
            jump.law.validate()?;
        }
        if self.sigma == 0.0 && self.drift == 0.0 {
            if self.jumps.is_empty() {
                return Err(Error::InvalidModel("process is identically zero".into()));
            }
            return Err(Error::InvalidModel("driftless compound Poisson process is not allowed".into()));
        }
        Ok(())
    }

    /// `E[X_1]`.
    pub fn mean_rate(&self) -> f64 {
        self.drift + self.jumps.iter().map(|j| j.rate * f64::from(j.sign) * j.law.mean()).sum::<f64>()
    }

    /// `Var[X_1]`.
    pub fn variance_rate(&self) -> f64 {
        self.sigma * self.sigma + self.jumps.iter().map(|j| j.rate * j.law.second_moment()).sum::<f64>()
    }
}

/// `Ψ(λ)` with `E[e^{iλX_t}] = e^{-tΨ(λ)}`:
/// `−i·drift·λ + ½σ²λ² + Σ rate_i (1 − φ_i(sign_i·λ))`.
pub fn characteristic_exponent(spec: &LevyModelSpec, lam: f64) -> Complex64 {
    let mut psi = Complex64::new(0.5 * spec.sigma * spec.sigma * lam * lam, -spec.drift * lam);
    for jump in &spec.jumps {
        let phi = jump.law.characteristic_function(f64::from(jump.sign) * lam);
        psi += (Complex64::new(1.0, 0.0) - phi) * jump.rate;
    }
    psi
}

/// Time grid, path count, discount rate, observation rate and seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationPlan {
    pub horizon: f64,
    pub steps: usize,
    pub paths: usize,
    pub discount: f64,
    pub eta: f64,
    pub seed: u64,
}

impl SimulationPlan {
    /// `T = 100`, `N = 10 000`, `M = 5 000`, `q = 0.05`, `η = 1`.
    pub fn reference(seed: u64) -> Self {
        SimulationPlan {
            horizon: 100.0,
            steps: 10_000,
            paths: 5_000,
            discount: 0.05,
            eta: 1.0,
            seed,
        }
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn width(&self) -> usize {
        self.steps + 1
    }

    pub fn total_steps(&self) -> u64 {
        self.paths as u64 * self.steps as u64
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::InvalidPlan("horizon must be positive".into()));
        }
        if self.steps == 0 {
            return Err(Error::InvalidPlan("steps must be positive".into()));
        }
        if self.paths == 0 || self.paths as u64 >= MAX_PATHS {
            return Err(Error::InvalidPlan("path count out of range".into()));
        }
        if !(self.discount > 0.0 && self.discount.is_finite()) {
            return Err(Error::InvalidPlan("discount rate must be positive".into()));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::InvalidPlan("observation rate must be positive".into()));
        }
        Ok(())
    }

    pub fn check_budget(&self, budget: u64) -> Result<()> {
        let requested = self.total_steps();
        if requested > budget {
            return Err(Error::BudgetExceeded { requested, budget });
        }
        Ok(())
    }
}

/// Simulated paths of `X` (started at 0) and their observation flags.
///
/// Immutable and cheap to clone; the path and mask storage are shared.
#[derive(Debug, Clone)]
pub struct PathBundle {
    plan: SimulationPlan,
    x_values: Arc<[f64]>,
    obs_mask: Arc<ObsMask>,
}

impl PathBundle {
    /// Assembles a bundle from row-major `paths × (steps+1)` values.
    pub fn from_parts(plan: SimulationPlan, x_values: Vec<f64>, obs_mask: ObsMask) -> Result<Self> {
        plan.validate()?;
        let width = plan.width();
        if x_values.len() != plan.paths * width {
            return Err(Error::LengthMismatch {
                what: "x_values",
                got: x_values.len(),
                expected: plan.paths * width,
            });
        }
        if x_values.chunks(width).any(|row| row[0] != 0.0) {
            return Err(Error::InvalidArgument("every path must start at 0".into()));
        }
        if x_values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("x_values"));
        }
        let bundle = PathBundle {
            plan,
            x_values: x_values.into(),
            obs_mask: Arc::new(ObsMask::empty(0, 0)),
        };
        bundle.with_obs_mask(Arc::new(obs_mask), plan.eta)
    }

    /// Same paths, different observation flags (and nominal rate `eta`).
    pub fn with_obs_mask(&self, obs_mask: Arc<ObsMask>, eta: f64) -> Result<Self> {
        if obs_mask.paths() != self.plan.paths || obs_mask.width() != self.plan.width() {
            return Err(Error::LengthMismatch {
                what: "obs_mask",
                got: obs_mask.paths() * obs_mask.width(),
                expected: self.plan.paths * self.plan.width(),
            });
        }
        if (0..obs_mask.paths()).any(|m| obs_mask.get(m, 0)) {
            return Err(Error::InvalidArgument("step 0 cannot be an observation".into()));
        }
        let plan = SimulationPlan { eta, ..self.plan };
        plan.validate()?;
        Ok(PathBundle {
            plan,
            x_values: Arc::clone(&self.x_values),
            obs_mask,
        })
    }

    pub fn plan(&self) -> &SimulationPlan {
        &self.plan
    }

    pub fn n_paths(&self) -> usize {
        self.plan.paths
    }

    pub fn n_steps(&self) -> usize {
        self.plan.steps
    }

    pub fn dt(&self) -> f64 {
        self.plan.dt()
    }

    pub fn path(&self, m: usize) -> &[f64] {
        let w = self.plan.width();
        &self.x_values[m * w..(m + 1) * w]
    }

    pub fn mask(&self, m: usize) -> MaskRow<'_> {
        self.obs_mask.row(m)
    }

    pub fn obs_mask(&self) -> &Arc<ObsMask> {
        &self.obs_mask
    }

    pub fn x_values(&self) -> &[f64] {
        &self.x_values
    }

    /// Debug dump: one row per path, one column per grid time.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let dt = self.dt();
        let header: Vec<String> = (0..self.plan.width()).map(|n| format!("t{}", n as f64 * dt)).collect();
        writeln!(out, "{}", header.join(","))?;
        for m in 0..self.n_paths() {
            let row: Vec<String> = self.path(m).iter().map(|v| v.to_string()).collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// Debug dump: little-endian `u64 paths, u64 steps`, then the `f64` grid
    /// row-major, then the mask as one byte per entry.
    pub fn write_binary<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(&(self.plan.paths as u64).to_le_bytes())?;
        out.write_all(&(self.plan.steps as u64).to_le_bytes())?;
        for v in self.x_values.iter() {
            out.write_all(&v.to_le_bytes())?;
        }
        for m in 0..self.n_paths() {
            let row = self.mask(m);
            let bytes: Vec<u8> = (0..self.plan.width()).map(|n| u8::from(row.get(n))).collect();
            out.write_all(&bytes)?;
        }
        Ok(())
    }
}

/// Euler simulation under the default step budget.
pub fn simulate_paths(spec: &LevyModelSpec, plan: &SimulationPlan) -> Result<PathBundle> {
    simulate_paths_with_budget(spec, plan, DEFAULT_STEP_BUDGET)
}

pub fn simulate_paths_with_budget(spec: &LevyModelSpec, plan: &SimulationPlan, budget: u64) -> Result<PathBundle> {
    spec.validate()?;
    plan.validate()?;
    plan.check_budget(budget)?;
    let width = plan.width();
    let mut x_values = vec![0.0; plan.paths * width];
    x_values
        .par_chunks_mut(width)
        .enumerate()
        .for_each(|(m, row)| fill_levy_row(spec, plan, m, row));
    let mask = ObsMask::sample(plan, plan.eta, 0);
    PathBundle::from_parts(*plan, x_values, mask)
}

fn fill_levy_row(spec: &LevyModelSpec, plan: &SimulationPlan, m: usize, row: &mut [f64]) {
    let dt = plan.dt();
    let diffusion = spec.sigma * dt.sqrt();
    let mut gauss = substream(plan.seed, m, Stream::Gaussian);
    let mut arrivals: Vec<_> = (0..spec.jumps.len())
        .map(|i| substream(plan.seed, m, Stream::JumpArrival(i as u8)))
        .collect();
    let mut sizes: Vec<_> = (0..spec.jumps.len())
        .map(|i| substream(plan.seed, m, Stream::JumpSize(i as u8)))
        .collect();
    let fire_prob: Vec<f64> = spec.jumps.iter().map(|j| -(-j.rate * dt).exp_m1()).collect();

    let mut noise = 0.0;
    row[0] = 0.0;
    for n in 1..row.len() {
        if diffusion > 0.0 {
            let g: f64 = StandardNormal.sample(&mut gauss);
            noise += diffusion * g;
        }
        for (i, jump) in spec.jumps.iter().enumerate() {
            if arrivals[i].random::<f64>() < fire_prob[i] {
                noise += f64::from(jump.sign) * jump.law.sample(&mut sizes[i]);
            }
        }
        row[n] = spec.drift * (n as f64 * dt) + noise;
    }
}
