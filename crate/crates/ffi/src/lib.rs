//! C ABI for the `poisson-barrier` engine.
//!
//! Models, bundles and costs are opaque handles created by `pb_*_new`-style
//! constructors and released with the matching `pb_*_free`. Every fallible
//! call returns a [`PbStatus`]; on failure [`pb_last_error_message`] gives a
//! description valid until the next call on the same thread. Panics never
//! cross the boundary, they are reported as [`PbStatus::Panic`].
//!
//! Handles are immutable after construction and may be shared between
//! threads. Estimation calls run on the engine's internal thread pool, so a
//! custom cost's callbacks may be invoked concurrently.

use std::cell::RefCell;
use std::ffi::{c_char, c_void, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use poisson_barrier::{
    estimate_rho, estimate_value, estimate_value_derivative, find_optimal_barrier, simulate_paths, BisectionOptions,
    CostCase, CostSpec, Error, Estimate, JumpComponent, LevyModelSpec, MagnitudeLaw, PathBundle, SimulationPlan,
};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidModel = 3,
    InvalidPlan = 4,
    BudgetExceeded = 5,
    NonFinite = 6,
    InvalidCost = 7,
    BracketExpansion = 8,
    Io = 9,
    Panic = 10,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PbCostCase {
    F1 = 1,
    F2 = 2,
    F3 = 3,
    Linear = 4,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PbLawKind {
    /// `|N(param_a, param_b)|`, with `param_b` the variance.
    FoldedNormal = 0,
    /// Shape `param_a`, scale `param_b`.
    Weibull = 1,
    /// Constant `param_a`.
    PointMass = 2,
    /// Mean `param_a`.
    Exponential = 3,
}

/// One compound Poisson component. `sign` is +1 or -1.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct PbJump {
    pub rate: f64,
    pub sign: i32,
    pub law: PbLawKind,
    pub param_a: f64,
    pub param_b: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PbPlan {
    pub horizon: f64,
    pub steps: usize,
    pub paths: usize,
    pub discount: f64,
    pub eta: f64,
    pub seed: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PbEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_paths: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PbBarrier {
    pub b_star: f64,
    pub bracket_lo: f64,
    pub bracket_hi: f64,
    pub iterations: usize,
    pub rho_at_lo: PbEstimate,
    pub rho_at_hi: PbEstimate,
}

pub struct PbModel {
    spec: LevyModelSpec,
}

pub struct PbBundle {
    bundle: PathBundle,
}

pub struct PbCost {
    cost: CostSpec,
}

/// Cost callback: value of the cost (or its right derivative) at `x`.
pub type PbScalarFn = Option<extern "C" fn(x: f64, user_data: *mut c_void) -> f64>;

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let message = CString::new(message.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(message));
}

fn clear_last_error() {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
}

fn status_of(e: &Error) -> PbStatus {
    match e {
        Error::InvalidModel(_) => PbStatus::InvalidModel,
        Error::InvalidPlan(_) => PbStatus::InvalidPlan,
        Error::BudgetExceeded { .. } => PbStatus::BudgetExceeded,
        Error::NonFinite(_) => PbStatus::NonFinite,
        Error::InvalidCost(_) => PbStatus::InvalidCost,
        Error::BracketExpansion { .. } => PbStatus::BracketExpansion,
        Error::Io(_) => PbStatus::Io,
        _ => PbStatus::InvalidArgument,
    }
}

/// Runs `body`, recording any error or panic as the thread's last error.
fn guard<F>(body: F) -> PbStatus
where
    F: FnOnce() -> Result<(), (PbStatus, String)>,
{
    clear_last_error();
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => PbStatus::Ok,
        Ok(Err((status, message))) => {
            set_last_error(message);
            status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {message}"));
            PbStatus::Panic
        }
    }
}

fn engine(e: Error) -> (PbStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (PbStatus, String) {
    (PbStatus::NullPointer, format!("{what} is null"))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, (PbStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> Result<(), (PbStatus, String)> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

impl From<Estimate> for PbEstimate {
    fn from(e: Estimate) -> Self {
        PbEstimate {
            mean: e.mean,
            std_error: e.std_error,
            n_paths: e.n_paths,
        }
    }
}

impl From<PbPlan> for SimulationPlan {
    fn from(p: PbPlan) -> Self {
        SimulationPlan {
            horizon: p.horizon,
            steps: p.steps,
            paths: p.paths,
            discount: p.discount,
            eta: p.eta,
            seed: p.seed,
        }
    }
}

/// Message for the last failed call on this thread, or NULL. The pointer is
/// owned by the library and valid until the next `pb_*` call on this thread.
#[no_mangle]
pub extern "C" fn pb_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Static name of a status code.
#[no_mangle]
pub extern "C" fn pb_status_name(status: PbStatus) -> *const c_char {
    let name: &'static [u8] = match status {
        PbStatus::Ok => b"ok\0",
        PbStatus::NullPointer => b"null pointer\0",
        PbStatus::InvalidArgument => b"invalid argument\0",
        PbStatus::InvalidModel => b"invalid model\0",
        PbStatus::InvalidPlan => b"invalid plan\0",
        PbStatus::BudgetExceeded => b"budget exceeded\0",
        PbStatus::NonFinite => b"non-finite value\0",
        PbStatus::InvalidCost => b"invalid cost\0",
        PbStatus::BracketExpansion => b"bracket expansion failed\0",
        PbStatus::Io => b"i/o error\0",
        PbStatus::Panic => b"internal panic\0",
    };
    name.as_ptr().cast()
}

/// Reference plan (`T = 100`, `N = 10000`, `M = 5000`, `q = 0.05`, `η = 1`).
#[no_mangle]
pub extern "C" fn pb_plan_reference(seed: u64) -> PbPlan {
    let p = SimulationPlan::reference(seed);
    PbPlan {
        horizon: p.horizon,
        steps: p.steps,
        paths: p.paths,
        discount: p.discount,
        eta: p.eta,
        seed: p.seed,
    }
}

/// Reference jump diffusion.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn pb_model_reference(out: *mut *mut PbModel) -> PbStatus {
    guard(|| {
        let model = Box::new(PbModel {
            spec: LevyModelSpec::reference(),
        });
        write_out(out, Box::into_raw(model), "out")
    })
}

/// Drift, volatility and `n_jumps` compound Poisson components.
///
/// # Safety
/// `jumps` must point to `n_jumps` readable elements (or be NULL when
/// `n_jumps` is 0); `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pb_model_new(
    drift: f64,
    sigma: f64,
    jumps: *const PbJump,
    n_jumps: usize,
    out: *mut *mut PbModel,
) -> PbStatus {
    guard(|| {
        let jumps: &[PbJump] = match (jumps.is_null(), n_jumps) {
            (_, 0) => &[],
            (true, _) => return Err(null("jumps")),
            (false, n) => std::slice::from_raw_parts(jumps, n),
        };
        let mut components = Vec::with_capacity(jumps.len());
        for j in jumps {
            let sign = i8::try_from(j.sign).map_err(|_| (PbStatus::InvalidModel, "jump sign must be +1 or -1".into()))?;
            let law = match j.law {
                PbLawKind::FoldedNormal => MagnitudeLaw::FoldedNormal {
                    mean: j.param_a,
                    variance: j.param_b,
                },
                PbLawKind::Weibull => MagnitudeLaw::Weibull {
                    shape: j.param_a,
                    scale: j.param_b,
                },
                PbLawKind::PointMass => MagnitudeLaw::PointMass { value: j.param_a },
                PbLawKind::Exponential => MagnitudeLaw::Exponential { mean: j.param_a },
            };
            components.push(JumpComponent {
                rate: j.rate,
                sign,
                law,
            });
        }
        let spec = LevyModelSpec {
            drift,
            sigma,
            jumps: components,
        };
        spec.validate().map_err(engine)?;
        write_out(out, Box::into_raw(Box::new(PbModel { spec })), "out")
    })
}

/// # Safety
/// `model` must be NULL or a handle from a `pb_model_*` constructor not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pb_model_free(model: *mut PbModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Simulates one bundle of paths and observation flags.
///
/// # Safety
/// `model` must be a live handle, `plan` readable and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pb_simulate(model: *const PbModel, plan: *const PbPlan, out: *mut *mut PbBundle) -> PbStatus {
    guard(|| {
        let model = deref(model, "model")?;
        let plan = SimulationPlan::from(*deref(plan, "plan")?);
        let bundle = simulate_paths(&model.spec, &plan).map_err(engine)?;
        write_out(out, Box::into_raw(Box::new(PbBundle { bundle })), "out")
    })
}

/// # Safety
/// `bundle` must be NULL or a handle from [`pb_simulate`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pb_bundle_free(bundle: *mut PbBundle) {
    if !bundle.is_null() {
        drop(Box::from_raw(bundle));
    }
}

/// Path count and grid width (`steps + 1`).
///
/// # Safety
/// `bundle` must be a live handle; `paths` and `width` writable.
#[no_mangle]
pub unsafe extern "C" fn pb_bundle_shape(bundle: *const PbBundle, paths: *mut usize, width: *mut usize) -> PbStatus {
    guard(|| {
        let b = &deref(bundle, "bundle")?.bundle;
        write_out(paths, b.n_paths(), "paths")?;
        write_out(width, b.plan().width(), "width")
    })
}

/// Borrowed view of path `m` (`X_0 = 0, …, X_N`), valid while the bundle lives.
///
/// # Safety
/// `bundle` must be a live handle; `values` and `len` writable.
#[no_mangle]
pub unsafe extern "C" fn pb_bundle_path(
    bundle: *const PbBundle,
    m: usize,
    values: *mut *const f64,
    len: *mut usize,
) -> PbStatus {
    guard(|| {
        let b = &deref(bundle, "bundle")?.bundle;
        if m >= b.n_paths() {
            return Err((PbStatus::InvalidArgument, format!("path {m} out of range 0..{}", b.n_paths())));
        }
        let path = b.path(m);
        write_out(values, path.as_ptr(), "values")?;
        write_out(len, path.len(), "len")
    })
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pb_cost_builtin(cost_case: PbCostCase, unit_cost: f64, out: *mut *mut PbCost) -> PbStatus {
    guard(|| {
        if !(unit_cost >= 0.0 && unit_cost.is_finite()) {
            return Err((PbStatus::InvalidCost, "unit cost must be finite and nonnegative".into()));
        }
        let case = match cost_case {
            PbCostCase::F1 => CostCase::F1,
            PbCostCase::F2 => CostCase::F2,
            PbCostCase::F3 => CostCase::F3,
            PbCostCase::Linear => CostCase::Linear,
        };
        let cost = CostSpec::builtin(case, unit_cost);
        write_out(out, Box::into_raw(Box::new(PbCost { cost })), "out")
    })
}

#[derive(Clone, Copy)]
struct UserData(*mut c_void);

// The caller promises thread-safe callbacks in `pb_cost_custom`.
unsafe impl Send for UserData {}
unsafe impl Sync for UserData {}

impl UserData {
    fn get(self) -> *mut c_void {
        self.0
    }
}

/// User cost from callbacks. `f_prime_plus` must return the right derivative
/// of `f`. Both callbacks may run concurrently from several threads and must
/// not unwind; `user_data` must outlive the handle.
///
/// # Safety
/// `out` must be writable and the callbacks must satisfy the contract above.
#[no_mangle]
pub unsafe extern "C" fn pb_cost_custom(
    f: PbScalarFn,
    f_prime_plus: PbScalarFn,
    user_data: *mut c_void,
    unit_cost: f64,
    out: *mut *mut PbCost,
) -> PbStatus {
    guard(|| {
        let (Some(f), Some(fp)) = (f, f_prime_plus) else {
            return Err(null("cost callback"));
        };
        if !(unit_cost >= 0.0 && unit_cost.is_finite()) {
            return Err((PbStatus::InvalidCost, "unit cost must be finite and nonnegative".into()));
        }
        let data = UserData(user_data);
        let cost = CostSpec::custom(move |x| f(x, data.get()), move |x| fp(x, data.get()), unit_cost);
        write_out(out, Box::into_raw(Box::new(PbCost { cost })), "out")
    })
}

/// # Safety
/// `cost` must be NULL or a handle from a `pb_cost_*` constructor not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pb_cost_free(cost: *mut PbCost) {
    if !cost.is_null() {
        drop(Box::from_raw(cost));
    }
}

/// `ρ̂(b)`: discounted integral of the cost slope along the process
/// controlled at `b` from `b`.
///
/// # Safety
/// `bundle` and `cost` must be live handles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pb_estimate_rho(
    bundle: *const PbBundle,
    cost: *const PbCost,
    b: f64,
    out: *mut PbEstimate,
) -> PbStatus {
    guard(|| {
        let bundle = &deref(bundle, "bundle")?.bundle;
        let cost = &deref(cost, "cost")?.cost;
        let e = estimate_rho(bundle, cost, b).map_err(engine)?;
        write_out(out, e.into(), "out")
    })
}

/// `v̂_b(x)`: expected discounted running plus control cost.
///
/// # Safety
/// `bundle` and `cost` must be live handles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pb_estimate_value(
    bundle: *const PbBundle,
    cost: *const PbCost,
    b: f64,
    x: f64,
    out: *mut PbEstimate,
) -> PbStatus {
    guard(|| {
        let bundle = &deref(bundle, "bundle")?.bundle;
        let cost = &deref(cost, "cost")?.cost;
        let e = estimate_value(bundle, cost, b, x).map_err(engine)?;
        write_out(out, e.into(), "out")
    })
}

/// `v̂'_b(x)`.
///
/// # Safety
/// `bundle` and `cost` must be live handles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pb_estimate_value_derivative(
    bundle: *const PbBundle,
    cost: *const PbCost,
    b: f64,
    x: f64,
    out: *mut PbEstimate,
) -> PbStatus {
    guard(|| {
        let bundle = &deref(bundle, "bundle")?.bundle;
        let cost = &deref(cost, "cost")?.cost;
        let e = estimate_value_derivative(bundle, cost, b, x).map_err(engine)?;
        write_out(out, e.into(), "out")
    })
}

/// Optimal barrier `inf{b : ρ̂(b) + C ≥ 0}` by bisection to `tol`.
///
/// # Safety
/// `bundle` and `cost` must be live handles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pb_find_optimal_barrier(
    bundle: *const PbBundle,
    cost: *const PbCost,
    tol: f64,
    out: *mut PbBarrier,
) -> PbStatus {
    guard(|| {
        let bundle = &deref(bundle, "bundle")?.bundle;
        let cost = &deref(cost, "cost")?.cost;
        let r = find_optimal_barrier(bundle, cost, &BisectionOptions::with_tol(tol)).map_err(engine)?;
        let result = PbBarrier {
            b_star: r.b_star,
            bracket_lo: r.bracket_lo,
            bracket_hi: r.bracket_hi,
            iterations: r.iterations,
            rho_at_lo: r.rho_at_lo.into(),
            rho_at_hi: r.rho_at_hi.into(),
        };
        write_out(out, result, "out")
    })
}
