//! Monte Carlo engine for barrier control of a Lévy process whose controller
//! can only act at the arrival times of an independent Poisson clock.
//!
//! A [`PathBundle`] holds one set of simulated increments and observation
//! flags. Every estimator in [`estimator`] evaluates on the same bundle, so
//! comparisons across barriers use common random numbers and the barrier
//! search in [`optimizer`] bisects an exactly monotone function.
//!
//! ```
//! use poisson_barrier::{find_optimal_barrier, simulate_paths, BisectionOptions, CostCase, CostSpec, LevyModelSpec, SimulationPlan};
//!
//! let plan = SimulationPlan { horizon: 10.0, steps: 1000, paths: 50, ..SimulationPlan::reference(7) };
//! let bundle = simulate_paths(&LevyModelSpec::reference(), &plan).unwrap();
//! let cost = CostSpec::builtin(CostCase::F1, 1.0);
//! let found = find_optimal_barrier(&bundle, &cost, &BisectionOptions::default()).unwrap();
//! assert!(found.bracket_hi - found.bracket_lo <= 1e-3);
//! ```

pub mod cli;
pub mod config;
pub mod control;
pub mod cost;
pub mod diagnostics;
mod error;
pub mod estimator;
pub mod lattice;
pub mod levy_model;
pub mod observation;
pub mod optimizer;
pub mod rng;

pub use control::{apply_classical_reflection, apply_periodic_barrier, ControlledOutcome};
pub use cost::{CostCase, CostSpec};
pub use error::{Error, Result};
pub use estimator::{
    estimate_classical_value, estimate_rho, estimate_rho_classical, estimate_value, estimate_value_derivative,
    Estimate,
};
pub use lattice::LatticeWalk;
pub use levy_model::{simulate_paths, JumpComponent, LevyModelSpec, MagnitudeLaw, PathBundle, SimulationPlan};
pub use observation::{build_ladder, ObsMask, ObservationLadder};
pub use optimizer::{find_optimal_barrier, find_optimal_barrier_classical, BarrierSearchResult, BisectionOptions};
