//! Scenario files.
//!
//! A scenario is a TOML document with one table per stage. Every key has a
//! built-in default reproducing the reference experiment, so an empty file
//! (or no file) is a complete scenario. Unknown keys are rejected.
//!
//! ```toml
//! [model]
//! kind = "levy"            # or "lattice"
//! drift = -0.1
//! sigma = 0.2
//!
//! [[model.jumps]]
//! rate = 0.4
//! sign = 1
//! law = { kind = "folded_normal", mean = 0.0, variance = 1.0 }
//!
//! [plan]
//! horizon = 100.0
//! steps = 10000
//! paths = 5000
//! seed = 20240601
//!
//! [cost]
//! cases = ["f1", "f2", "f3"]
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cost::CostCase;
use crate::error::{Error, Result};
use crate::lattice::{LatticeWalk, MAX_EXHAUSTIVE_STEPS};
use crate::levy_model::{LevyModelSpec, SimulationPlan, DEFAULT_STEP_BUDGET};
use crate::optimizer::BisectionOptions;

pub const DEFAULT_SEED: u64 = 20_240_601;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelConfig {
    Levy(LevyModelSpec),
    /// ±`step_size` walk on a unit grid with flag probability ½.
    Lattice(LatticeWalk),
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::Levy(LevyModelSpec::reference())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlanConfig {
    pub horizon: f64,
    pub steps: usize,
    pub paths: usize,
    pub discount: f64,
    pub eta: f64,
    pub seed: u64,
    pub step_budget: u64,
}

impl Default for PlanConfig {
    fn default() -> Self {
        let p = SimulationPlan::reference(DEFAULT_SEED);
        PlanConfig {
            horizon: p.horizon,
            steps: p.steps,
            paths: p.paths,
            discount: p.discount,
            eta: p.eta,
            seed: p.seed,
            step_budget: DEFAULT_STEP_BUDGET,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostConfig {
    pub cases: Vec<CostCase>,
    pub unit_cost: f64,
}

impl Default for CostConfig {
    fn default() -> Self {
        CostConfig {
            cases: vec![CostCase::F1, CostCase::F2, CostCase::F3],
            unit_cost: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub tol: f64,
    pub max_iterations: usize,
    pub max_doublings: usize,
    pub initial_lo: f64,
    pub initial_hi: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        let o = BisectionOptions::default();
        OptimizerConfig {
            tol: o.tol,
            max_iterations: o.max_iterations,
            max_doublings: o.max_doublings,
            initial_lo: o.initial_lo,
            initial_hi: o.initial_hi,
        }
    }
}

impl OptimizerConfig {
    pub fn options(&self) -> BisectionOptions {
        BisectionOptions {
            tol: self.tol,
            max_iterations: self.max_iterations,
            max_doublings: self.max_doublings,
            initial_lo: self.initial_lo,
            initial_hi: self.initial_hi,
        }
    }
}

/// Inclusive uniform grid `start, start + step, …, stop`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

impl GridConfig {
    pub fn values(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.start];
        }
        let step = (self.stop - self.start) / (self.points - 1) as f64;
        (0..self.points).map(|i| self.start + i as f64 * step).collect()
    }

    fn validate(&self, what: &str) -> Result<()> {
        if self.points == 0 || !self.start.is_finite() || !self.stop.is_finite() || self.stop < self.start {
            return Err(Error::Config(format!("{what}: grid needs points ≥ 1 and finite start ≤ stop")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RhoCurveConfig {
    pub b_grid: GridConfig,
}

impl Default for RhoCurveConfig {
    fn default() -> Self {
        RhoCurveConfig {
            b_grid: GridConfig { start: -3.0, stop: 1.0, points: 17 },
        }
    }
}

/// Grids relative to the optimal barrier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValueCurvesConfig {
    pub x_offsets: GridConfig,
    pub barrier_offsets: Vec<f64>,
}

impl Default for ValueCurvesConfig {
    fn default() -> Self {
        ValueCurvesConfig {
            x_offsets: GridConfig { start: -2.0, stop: 2.0, points: 9 },
            barrier_offsets: vec![-1.0, -0.5, 0.5, 1.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvergeConfig {
    /// Strictly increasing observation rates of the nested ladder.
    pub rates: Vec<f64>,
    /// Value-curve grid relative to the classical optimal barrier.
    pub x_offsets: GridConfig,
}

impl Default for ConvergeConfig {
    fn default() -> Self {
        ConvergeConfig {
            rates: vec![2.0, 5.0, 10.0, 20.0, 50.0, 100.0, 200.0, 500.0, 1000.0],
            x_offsets: GridConfig { start: -2.0, stop: 2.0, points: 9 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    pub slope_slack: f64,
    pub difference_step: f64,
    pub m_operator_x_offsets: Vec<f64>,
    pub push_max: f64,
    pub push_step: f64,
    pub resolvent_cases: Vec<CostCase>,
    pub resolvent_x_offsets: Vec<f64>,
    pub resolvent_max_exit_fraction: f64,
    pub coupling_shifts: Vec<f64>,
    pub coupling_barriers: Vec<f64>,
    /// Added to every found barrier before checking; nonzero values are for
    /// demonstrating that the checks detect a wrong barrier.
    pub barrier_shift: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            slope_slack: 0.02,
            difference_step: 0.1,
            m_operator_x_offsets: vec![-2.0, -1.0, 0.0, 1.0, 2.0],
            push_max: 3.0,
            push_step: 0.05,
            resolvent_cases: vec![CostCase::F1],
            resolvent_x_offsets: vec![-1.0, 0.0, 1.0],
            resolvent_max_exit_fraction: 0.01,
            coupling_shifts: vec![0.1, 1.0],
            coupling_barriers: vec![-1.0, 0.0, 1.0],
            barrier_shift: 0.0,
        }
    }
}

impl VerifyConfig {
    pub fn push_grid(&self) -> Vec<f64> {
        let n = (self.push_max / self.push_step).round() as usize;
        (0..=n).map(|i| i as f64 * self.push_step).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub model: ModelConfig,
    pub plan: PlanConfig,
    pub cost: CostConfig,
    pub optimizer: OptimizerConfig,
    pub rho_curve: RhoCurveConfig,
    pub value_curves: ValueCurvesConfig,
    pub converge: ConvergeConfig,
    pub verify: VerifyConfig,
    pub output: OutputConfig,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// The effective plan. Lattice scenarios always run on a unit grid with
    /// flag probability ½, so `horizon` and `eta` are ignored there.
    pub fn simulation_plan(&self) -> SimulationPlan {
        let p = &self.plan;
        match self.model {
            ModelConfig::Levy(_) => SimulationPlan {
                horizon: p.horizon,
                steps: p.steps,
                paths: p.paths,
                discount: p.discount,
                eta: p.eta,
                seed: p.seed,
            },
            ModelConfig::Lattice(_) => LatticeWalk::plan(p.steps, p.paths, p.discount, p.seed),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.model {
            ModelConfig::Levy(spec) => spec.validate()?,
            ModelConfig::Lattice(walk) => walk.validate()?,
        }
        let plan = self.simulation_plan();
        plan.validate()?;
        plan.check_budget(self.plan.step_budget)?;
        if self.cost.cases.is_empty() {
            return Err(Error::Config("cost.cases must name at least one case".into()));
        }
        if !(self.cost.unit_cost >= 0.0 && self.cost.unit_cost.is_finite()) {
            return Err(Error::Config("cost.unit_cost must be finite and nonnegative".into()));
        }
        let opts = self.optimizer.options();
        if !(opts.tol > 0.0 && opts.initial_lo < 0.0 && opts.initial_hi > 0.0) {
            return Err(Error::Config("optimizer needs tol > 0 and initial_lo < 0 < initial_hi".into()));
        }
        self.rho_curve.b_grid.validate("rho_curve.b_grid")?;
        self.value_curves.x_offsets.validate("value_curves.x_offsets")?;
        self.converge.x_offsets.validate("converge.x_offsets")?;
        if self.converge.rates.is_empty()
            || self.converge.rates.windows(2).any(|w| !(w[0] < w[1]))
            || !(self.converge.rates[0] > 0.0)
        {
            return Err(Error::Config("converge.rates must be positive and strictly increasing".into()));
        }
        let v = &self.verify;
        if !(v.difference_step > 0.0 && v.push_step > 0.0 && v.push_max >= 0.0 && v.slope_slack >= 0.0) {
            return Err(Error::Config("verify steps must be positive".into()));
        }
        if v.coupling_shifts.iter().any(|&e| !(e >= 0.0 && e.is_finite())) {
            return Err(Error::Config("verify.coupling_shifts must be nonnegative".into()));
        }
        Ok(())
    }

    /// Whether the lattice scenario is small enough to enumerate exactly.
    pub fn is_exhaustive_lattice(&self) -> bool {
        matches!(self.model, ModelConfig::Lattice(_)) && self.plan.steps <= MAX_EXHAUSTIVE_STEPS
    }

    /// SHA-256 of the effective scenario, hex encoded. The output location
    /// is not part of the scenario and does not enter the hash.
    pub fn hash(&self) -> String {
        let scenario = ScenarioConfig {
            output: OutputConfig::default(),
            ..self.clone()
        };
        hex::encode(Sha256::digest(format!("{scenario:?}").as_bytes()))
    }
}
