//! Running costs `f`, their right derivatives `f'₊`, and the unit control cost.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Built-in cost selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostCase {
    /// `x²`
    F1,
    /// `x³` on `x ≥ 0`, `x²` on `x < 0`
    F2,
    /// `x² + e^{−(x−1)}` on `x ≥ 1`, `(x² + 3)/2` on `x < 1`
    F3,
    /// `x`
    Linear,
}

impl CostCase {
    pub fn label(self) -> &'static str {
        match self {
            CostCase::F1 => "case1",
            CostCase::F2 => "case2",
            CostCase::F3 => "case3",
            CostCase::Linear => "linear",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "1" | "f1" | "case1" => Some(CostCase::F1),
            "2" | "f2" | "case2" => Some(CostCase::F2),
            "3" | "f3" | "case3" => Some(CostCase::F3),
            "linear" => Some(CostCase::Linear),
            _ => None,
        }
    }
}

#[derive(Clone)]
enum Kind {
    Builtin(CostCase),
    Custom { f: ScalarFn, f_prime_plus: ScalarFn },
}

/// Which side of the slope condition `f'₊(−∞) < −Cq < f'₊(∞)` fails.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlopeViolation {
    Lower,
    Upper,
}

impl SlopeViolation {
    pub fn condition(self) -> &'static str {
        match self {
            SlopeViolation::Lower => "f'(-inf) < -Cq",
            SlopeViolation::Upper => "-Cq < f'(+inf)",
        }
    }
}

/// Convex running cost with its right derivative and unit control cost `C`.
#[derive(Clone)]
pub struct CostSpec {
    kind: Kind,
    unit_cost: f64,
}

impl fmt::Debug for CostSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &self.kind {
            Kind::Builtin(case) => format!("{case:?}"),
            Kind::Custom { .. } => "Custom".to_string(),
        };
        f.debug_struct("CostSpec")
            .field("kind", &kind)
            .field("unit_cost", &self.unit_cost)
            .finish()
    }
}

impl CostSpec {
    pub fn builtin(case: CostCase, unit_cost: f64) -> Self {
        CostSpec {
            kind: Kind::Builtin(case),
            unit_cost,
        }
    }

    /// A user cost. `f_prime_plus` must be the right derivative of `f`; it is
    /// never obtained numerically.
    pub fn custom(
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        f_prime_plus: impl Fn(f64) -> f64 + Send + Sync + 'static,
        unit_cost: f64,
    ) -> Self {
        CostSpec {
            kind: Kind::Custom {
                f: Arc::new(f),
                f_prime_plus: Arc::new(f_prime_plus),
            },
            unit_cost,
        }
    }

    /// `f ≡ 0`.
    pub fn zero(unit_cost: f64) -> Self {
        CostSpec::custom(|_| 0.0, |_| 0.0, unit_cost)
    }

    pub fn case(&self) -> Option<CostCase> {
        match self.kind {
            Kind::Builtin(case) => Some(case),
            Kind::Custom { .. } => None,
        }
    }

    pub fn unit_cost(&self) -> f64 {
        self.unit_cost
    }

    pub fn with_unit_cost(&self, unit_cost: f64) -> Self {
        CostSpec {
            kind: self.kind.clone(),
            unit_cost,
        }
    }

    #[inline]
    pub fn f(&self, x: f64) -> f64 {
        match &self.kind {
            Kind::Builtin(CostCase::F1) => x * x,
            Kind::Builtin(CostCase::F2) => {
                if x >= 0.0 {
                    x * x * x
                } else {
                    x * x
                }
            }
            Kind::Builtin(CostCase::F3) => {
                if x >= 1.0 {
                    x * x + (-(x - 1.0)).exp()
                } else {
                    0.5 * (x * x + 3.0)
                }
            }
            Kind::Builtin(CostCase::Linear) => x,
            Kind::Custom { f, .. } => f(x),
        }
    }

    #[inline]
    pub fn f_prime_plus(&self, x: f64) -> f64 {
        match &self.kind {
            Kind::Builtin(CostCase::F1) => 2.0 * x,
            Kind::Builtin(CostCase::F2) => {
                if x >= 0.0 {
                    3.0 * x * x
                } else {
                    2.0 * x
                }
            }
            Kind::Builtin(CostCase::F3) => {
                if x >= 1.0 {
                    2.0 * x - (-(x - 1.0)).exp()
                } else {
                    x
                }
            }
            Kind::Builtin(CostCase::Linear) => 1.0,
            Kind::Custom { f_prime_plus, .. } => f_prime_plus(x),
        }
    }

    /// Checks midpoint convexity of `f` and monotonicity of `f'₊` on a uniform
    /// grid over `[lo, hi]`.
    pub fn validate_on_grid(&self, lo: f64, hi: f64, points: usize) -> Result<()> {
        if !(lo < hi) || points < 3 {
            return Err(Error::InvalidArgument("validation grid needs lo < hi and at least 3 points".into()));
        }
        if !self.unit_cost.is_finite() {
            return Err(Error::InvalidCost("unit cost must be finite".into()));
        }
        let h = (hi - lo) / (points - 1) as f64;
        let grid: Vec<f64> = (0..points).map(|i| lo + i as f64 * h).collect();
        let mut prev_slope = f64::NEG_INFINITY;
        for (i, &x) in grid.iter().enumerate() {
            let fx = self.f(x);
            let slope = self.f_prime_plus(x);
            if !fx.is_finite() || !slope.is_finite() {
                return Err(Error::NonFinite("cost evaluation"));
            }
            let slack = 1e-9 * (1.0 + slope.abs());
            if slope < prev_slope - slack {
                return Err(Error::InvalidCost(format!("f'+ decreases near x = {x}")));
            }
            prev_slope = slope;
            if i + 1 < grid.len() && i > 0 {
                let (a, b) = (grid[i - 1], grid[i + 1]);
                let mid = self.f(0.5 * (a + b));
                let chord = 0.5 * (self.f(a) + self.f(b));
                if mid > chord + 1e-9 * (1.0 + chord.abs()) {
                    return Err(Error::InvalidCost(format!("f is not convex near x = {x}")));
                }
            }
        }
        Ok(())
    }

    /// Known limits `(f'₊(−∞), f'₊(∞))` for builtins.
    pub fn slope_limits(&self) -> Option<(f64, f64)> {
        match self.kind {
            Kind::Builtin(CostCase::F1 | CostCase::F2 | CostCase::F3) => Some((f64::NEG_INFINITY, f64::INFINITY)),
            Kind::Builtin(CostCase::Linear) => Some((1.0, 1.0)),
            Kind::Custom { .. } => None,
        }
    }

    /// `f'₊(−B) < −Cq < f'₊(B)`, using exact limits for builtins.
    pub fn check_slope_condition(&self, discount: f64, bracket: f64) -> std::result::Result<(), SlopeViolation> {
        let target = -self.unit_cost * discount;
        let (lower, upper) = self
            .slope_limits()
            .unwrap_or_else(|| (self.f_prime_plus(-bracket), self.f_prime_plus(bracket)));
        if !(lower < target) {
            return Err(SlopeViolation::Lower);
        }
        if !(target < upper) {
            return Err(SlopeViolation::Upper);
        }
        Ok(())
    }
}
