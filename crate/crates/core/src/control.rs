//! Periodic barrier control and classical reflection on a discrete grid.
//!
//! With start value `x` the observed level at step `n` is `x + X_n`. Under the
//! periodic barrier at `b` the cumulative control is the running maximum of
//! the shortfalls `(b − x − X_k)⁺` over flagged steps `k ≤ n`; a push happens
//! only when the pre-control level is strictly below `b`. Classical reflection
//! takes the maximum over every step `k ≤ n`, including `k = 0`.

use crate::error::{Error, Result};
use crate::observation::ObservationFlags;

/// State of the controlled process at one grid step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlStep {
    /// Grid index.
    pub n: usize,
    /// Uncontrolled level `x + X_n`.
    pub x: f64,
    /// Controlled level `U_n = x + X_n + R_n`.
    pub u: f64,
    /// Cumulative control `R_n`.
    pub r: f64,
    /// `R_n − R_{n−1}` (with `R_{−1} = 0`).
    pub pushed: f64,
}

/// Streams [`ControlStep`]s for the periodic barrier strategy.
pub struct PeriodicBarrier<'a, M: ObservationFlags + ?Sized> {
    path: &'a [f64],
    mask: &'a M,
    start_x: f64,
    barrier: f64,
    n: usize,
    r: f64,
}

impl<'a, M: ObservationFlags + ?Sized> PeriodicBarrier<'a, M> {
    pub fn new(path: &'a [f64], mask: &'a M, start_x: f64, barrier: f64) -> Self {
        debug_assert_eq!(path.len(), mask.len());
        PeriodicBarrier {
            path,
            mask,
            start_x,
            barrier,
            n: 0,
            r: 0.0,
        }
    }
}

impl<M: ObservationFlags + ?Sized> Iterator for PeriodicBarrier<'_, M> {
    type Item = ControlStep;

    #[inline]
    fn next(&mut self) -> Option<ControlStep> {
        let n = self.n;
        let &p = self.path.get(n)?;
        self.n += 1;
        let x = self.start_x + p;
        let mut pushed = 0.0;
        if n > 0 && self.mask.is_set(n) && x + self.r < self.barrier {
            let shortfall = self.barrier - x;
            pushed = shortfall - self.r;
            self.r = shortfall;
        }
        Some(ControlStep {
            n,
            x,
            u: x + self.r,
            r: self.r,
            pushed,
        })
    }
}

/// Streams [`ControlStep`]s for reflection at `barrier` via the running infimum.
pub struct ClassicalReflection<'a> {
    path: &'a [f64],
    start_x: f64,
    barrier: f64,
    n: usize,
    r: f64,
}

impl<'a> ClassicalReflection<'a> {
    pub fn new(path: &'a [f64], start_x: f64, barrier: f64) -> Self {
        ClassicalReflection {
            path,
            start_x,
            barrier,
            n: 0,
            r: 0.0,
        }
    }
}

impl Iterator for ClassicalReflection<'_> {
    type Item = ControlStep;

    #[inline]
    fn next(&mut self) -> Option<ControlStep> {
        let n = self.n;
        let &p = self.path.get(n)?;
        self.n += 1;
        let x = self.start_x + p;
        let mut pushed = 0.0;
        if x + self.r < self.barrier {
            let shortfall = self.barrier - x;
            pushed = shortfall - self.r;
            self.r = shortfall;
        }
        Some(ControlStep {
            n,
            x,
            u: x + self.r,
            r: self.r,
            pushed,
        })
    }
}

/// Controlled path `U`, cumulative control `R` and the steps where `R` jumps.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlledOutcome {
    pub u_values: Vec<f64>,
    pub r_values: Vec<f64>,
    pub control_steps: Vec<usize>,
    pub barrier: f64,
    pub start_x: f64,
}

impl ControlledOutcome {
    fn collect(steps: impl Iterator<Item = ControlStep>, len: usize, barrier: f64, start_x: f64) -> Self {
        let mut out = ControlledOutcome {
            u_values: Vec::with_capacity(len),
            r_values: Vec::with_capacity(len),
            control_steps: Vec::new(),
            barrier,
            start_x,
        };
        for step in steps {
            out.u_values.push(step.u);
            out.r_values.push(step.r);
            if step.pushed > 0.0 {
                out.control_steps.push(step.n);
            }
        }
        out
    }

    /// First step at which control is exercised, if any.
    pub fn first_control_step(&self) -> Option<usize> {
        self.control_steps.first().copied()
    }
}

pub fn apply_periodic_barrier<M: ObservationFlags + ?Sized>(
    path: &[f64],
    mask: &M,
    start_x: f64,
    barrier: f64,
) -> Result<ControlledOutcome> {
    if path.len() != mask.len() {
        return Err(Error::LengthMismatch {
            what: "mask",
            got: mask.len(),
            expected: path.len(),
        });
    }
    if !mask.is_empty() && mask.is_set(0) {
        return Err(Error::InvalidArgument("step 0 cannot be an observation".into()));
    }
    Ok(ControlledOutcome::collect(
        PeriodicBarrier::new(path, mask, start_x, barrier),
        path.len(),
        barrier,
        start_x,
    ))
}

pub fn apply_classical_reflection(path: &[f64], start_x: f64, barrier: f64) -> Result<ControlledOutcome> {
    if path.is_empty() {
        return Err(Error::InvalidArgument("empty path".into()));
    }
    Ok(ControlledOutcome::collect(
        ClassicalReflection::new(path, start_x, barrier),
        path.len(),
        barrier,
        start_x,
    ))
}

pub fn first_control_step(outcome: &ControlledOutcome) -> Option<usize> {
    outcome.first_control_step()
}

/// First flagged step with `start_x + path[n] < barrier`, i.e. the first
/// control time of the periodic barrier strategy, without building the path.
pub fn first_periodic_control<M: ObservationFlags + ?Sized>(
    path: &[f64],
    mask: &M,
    start_x: f64,
    barrier: f64,
) -> Option<usize> {
    (1..path.len()).find(|&n| mask.is_set(n) && start_x + path[n] < barrier)
}
