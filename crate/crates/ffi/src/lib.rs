//! C ABI for the dissipative Dicke simulator.
//!
//! Conventions:
//!
//! * Every fallible function returns a [`DdStatus`]; results are written
//!   through out-pointers only on success.
//! * Objects are opaque handles created by `dd_*_new`/producer functions and
//!   released by the matching `dd_*_free`. Freeing NULL is a no-op.
//! * After a failure, [`dd_last_error_message`] copies a human-readable
//!   description of the most recent error on the calling thread.
//! * Semiclassical states are `double[5]` in the order (q, p, S_x, S_y, S_z).
//! * Panics never cross the boundary; they are reported as
//!   [`DdStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use dissipative_dicke::diag::{self, DiagError, DiagonalizationResult};
use dissipative_dicke::dynamics::{self, IntegrationError, Method, SolverConfig, Trajectory};
use dissipative_dicke::model::{self, Branch, ModelParams, Phase, SemiclassicalState};
use dissipative_dicke::semiclassical::{self, DissipatorKind, RhsSpec, SemiclassicalError};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    NumericalFailure = 3,
    NormalPhase = 4,
    OutOfRange = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DdBranch {
    Plus = 0,
    Minus = 1,
}

impl From<DdBranch> for Branch {
    fn from(b: DdBranch) -> Self {
        match b {
            DdBranch::Plus => Branch::Plus,
            DdBranch::Minus => Branch::Minus,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DdPhase {
    Normal = 0,
    Superradiant = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DdDissipator {
    None = 0,
    Bare = 1,
    AdHocRotated = 2,
    Dressed = 3,
}

impl From<DdDissipator> for DissipatorKind {
    fn from(d: DdDissipator) -> Self {
        match d {
            DdDissipator::None => DissipatorKind::None,
            DdDissipator::Bare => DissipatorKind::Bare,
            DdDissipator::AdHocRotated => DissipatorKind::AdHocRotated,
            DdDissipator::Dressed => DissipatorKind::Dressed,
        }
    }
}

/// Model parameters.
pub struct DdModel {
    params: ModelParams,
}

/// Superradiant-frame diagonalization for one branch.
pub struct DdDiagonalization {
    result: DiagonalizationResult,
}

/// Recorded semiclassical trajectory.
pub struct DdTrajectory {
    traj: Trajectory<5>,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

struct Failure(DdStatus, String);

impl From<DiagError> for Failure {
    fn from(e: DiagError) -> Self {
        let status = match e {
            DiagError::NormalPhase => DdStatus::NormalPhase,
            DiagError::Unstable { .. } => DdStatus::NumericalFailure,
            _ => DdStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

impl From<SemiclassicalError> for Failure {
    fn from(e: SemiclassicalError) -> Self {
        match e {
            SemiclassicalError::NormalPhase(_) => Failure(DdStatus::NormalPhase, e.to_string()),
            SemiclassicalError::Diag(d) => d.into(),
            _ => Failure(DdStatus::InvalidArgument, e.to_string()),
        }
    }
}

impl From<IntegrationError> for Failure {
    fn from(e: IntegrationError) -> Self {
        let status = match e {
            IntegrationError::InvalidConfig(_) | IntegrationError::NonFiniteInitial => DdStatus::InvalidArgument,
            _ => DdStatus::NumericalFailure,
        };
        Failure(status, e.to_string())
    }
}

fn null(name: &str) -> Failure {
    Failure(DdStatus::NullPointer, format!("`{name}` is NULL"))
}

/// Runs `f`, converting failures and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> DdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DdStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".to_owned());
            set_error(format!("panic: {msg}"));
            DdStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    // SAFETY: the caller guarantees `p` is NULL or a valid, live pointer.
    unsafe { p.as_ref() }.ok_or_else(|| null(name))
}

unsafe fn write<T>(p: *mut T, name: &str, v: T) -> Result<(), Failure> {
    if p.is_null() {
        return Err(null(name));
    }
    // SAFETY: non-null and, by contract, valid for writes.
    unsafe { p.write(v) };
    Ok(())
}

unsafe fn read_state(p: *const f64) -> Result<SemiclassicalState, Failure> {
    if p.is_null() {
        return Err(null("state"));
    }
    // SAFETY: by contract `p` points to five readable doubles.
    let s = unsafe { slice::from_raw_parts(p, 5) };
    Ok(SemiclassicalState::new(s[0], s[1], s[2], s[3], s[4]))
}

unsafe fn write_state(p: *mut f64, x: &SemiclassicalState) -> Result<(), Failure> {
    if p.is_null() {
        return Err(null("out_state"));
    }
    // SAFETY: by contract `p` points to five writable doubles.
    unsafe { slice::from_raw_parts_mut(p, 5) }.copy_from_slice(&x.to_array());
    Ok(())
}

/// Version string of the library (static storage, never freed).
#[no_mangle]
pub extern "C" fn dd_version() -> *const c_char {
    static VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(s) => s,
        Err(_) => panic!("version contains NUL"),
    };
    VERSION.as_ptr()
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len - 1` bytes) and returns the full message length in
/// bytes, excluding the terminator. `buf` may be NULL to query the length.
///
/// # Safety
/// `buf` must be NULL or point to at least `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn dd_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            // SAFETY: `buf` holds at least `len` > n bytes.
            unsafe {
                ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
                *buf.add(n) = 0;
            }
        }
        bytes.len()
    })
}

/// Creates a model handle after validating the parameters.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn dd_model_new(
    omega: f64,
    e_z: f64,
    g: f64,
    eps: f64,
    s: f64,
    kappa1: f64,
    kappa2: f64,
    out: *mut *mut DdModel,
) -> DdStatus {
    guard(|| {
        let params = ModelParams::new(omega, e_z, g, eps, s, kappa1, kappa2)
            .map_err(|e| Failure(DdStatus::InvalidArgument, e.to_string()))?;
        let handle = Box::into_raw(Box::new(DdModel { params }));
        // SAFETY: forwarded caller contract.
        unsafe { write(out, "out", handle) }.inspect_err(|_| {
            // SAFETY: `handle` was just created by Box::into_raw.
            drop(unsafe { Box::from_raw(handle) });
        })
    })
}

/// # Safety
/// `model` must be NULL or a handle from [`dd_model_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dd_model_free(model: *mut DdModel) {
    if !model.is_null() {
        // SAFETY: handle created by Box::into_raw in dd_model_new.
        drop(unsafe { Box::from_raw(model) });
    }
}

/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dd_model_phase(model: *const DdModel, out: *mut DdPhase) -> DdStatus {
    guard(|| {
        let m = unsafe { deref(model, "model") }?;
        let phase = match model::classify_phase(&m.params) {
            Phase::Normal => DdPhase::Normal,
            Phase::Superradiant => DdPhase::Superradiant,
        };
        unsafe { write(out, "out", phase) }
    })
}

/// Semiclassical energy of a state.
///
/// # Safety
/// `model` must be a live handle, `state` must point to 5 doubles and `out`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn dd_model_energy(model: *const DdModel, state: *const f64, out: *mut f64) -> DdStatus {
    guard(|| {
        let m = unsafe { deref(model, "model") }?;
        let x = unsafe { read_state(state) }?;
        unsafe { write(out, "out", model::energy(&x, &m.params)) }
    })
}

/// Energy minimum of the given branch. Fails with
/// [`DdStatus::NormalPhase`] outside the superradiant phase.
///
/// # Safety
/// `model` must be a live handle, `out_state` must point to 5 writable
/// doubles and `out_energy` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dd_model_superradiant_minimum(
    model: *const DdModel,
    branch: DdBranch,
    out_state: *mut f64,
    out_energy: *mut f64,
) -> DdStatus {
    guard(|| {
        let m = unsafe { deref(model, "model") }?;
        let min = model::superradiant_minimum(&m.params, branch.into())
            .ok_or_else(|| Failure(DdStatus::NormalPhase, "parameters are in the normal phase".into()))?;
        if out_energy.is_null() {
            return Err(null("out_energy"));
        }
        unsafe { write_state(out_state, &min.state()) }?;
        unsafe { write(out_energy, "out_energy", min.energy) }
    })
}

/// Analytic stationary points of the bare dissipator: the trivial point
/// followed, when present, by the two tilted points. Writes up to
/// `capacity` states (5 doubles each) into `out_states` and the total
/// number of points into `out_count`; fails with [`DdStatus::OutOfRange`]
/// if `capacity` is too small (`out_count` is still written).
///
/// # Safety
/// `model` must be a live handle, `out_states` must point to
/// `5 * capacity` writable doubles and `out_count` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dd_model_bare_fixed_points(
    model: *const DdModel,
    out_states: *mut f64,
    capacity: usize,
    out_count: *mut usize,
) -> DdStatus {
    guard(|| {
        let m = unsafe { deref(model, "model") }?;
        let pts = semiclassical::bare_fixed_points(&m.params);
        unsafe { write(out_count, "out_count", pts.len()) }?;
        if capacity < pts.len() {
            return Err(Failure(
                DdStatus::OutOfRange,
                format!("capacity {capacity} < {} fixed points", pts.len()),
            ));
        }
        if out_states.is_null() {
            return Err(null("out_states"));
        }
        for (k, x) in pts.iter().enumerate() {
            unsafe { write_state(out_states.add(5 * k), x) }?;
        }
        Ok(())
    })
}

/// Diagonalizes the fluctuations around the minimum of `branch`.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dd_diagonalize(
    model: *const DdModel,
    branch: DdBranch,
    out: *mut *mut DdDiagonalization,
) -> DdStatus {
    guard(|| {
        let m = unsafe { deref(model, "model") }?;
        if out.is_null() {
            return Err(null("out"));
        }
        let result = diag::diagonalize(&m.params, branch.into())?;
        unsafe { write(out, "out", Box::into_raw(Box::new(DdDiagonalization { result }))) }
    })
}

/// # Safety
/// `d` must be NULL or a handle from [`dd_diagonalize`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dd_diagonalization_free(d: *mut DdDiagonalization) {
    if !d.is_null() {
        // SAFETY: handle created by Box::into_raw in dd_diagonalize.
        drop(unsafe { Box::from_raw(d) });
    }
}

/// Polariton energies ε₁ ≤ ε₂.
///
/// # Safety
/// `d` must be a live handle; the out-pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn dd_diagonalization_energies(
    d: *const DdDiagonalization,
    out_eps1: *mut f64,
    out_eps2: *mut f64,
) -> DdStatus {
    guard(|| {
        let d = unsafe { deref(d, "diagonalization") }?;
        if out_eps2.is_null() {
            return Err(null("out_eps2"));
        }
        unsafe { write(out_eps1, "out_eps1", d.result.eps1) }?;
        unsafe { write(out_eps2, "out_eps2", d.result.eps2) }
    })
}

/// Spin tilt θ, Bogoliubov angle χ and condensate momentum p₀.
///
/// # Safety
/// `d` must be a live handle; the out-pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn dd_diagonalization_angles(
    d: *const DdDiagonalization,
    out_theta: *mut f64,
    out_chi: *mut f64,
    out_p0: *mut f64,
) -> DdStatus {
    guard(|| {
        let d = unsafe { deref(d, "diagonalization") }?;
        if out_chi.is_null() || out_p0.is_null() {
            return Err(null("out_chi/out_p0"));
        }
        unsafe { write(out_theta, "out_theta", d.result.theta) }?;
        unsafe { write(out_chi, "out_chi", d.result.chi) }?;
        unsafe { write(out_p0, "out_p0", d.result.p0) }
    })
}

/// Integrates the semiclassical equations of motion with adaptive
/// Dormand–Prince steps. The dressed dissipator uses the weights
/// (κ₁, κ₂) of the model.
///
/// # Safety
/// `model` must be a live handle, `initial` must point to 5 doubles and
/// `out` must be writable.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn dd_simulate(
    model: *const DdModel,
    dissipator: DdDissipator,
    branch: DdBranch,
    initial: *const f64,
    t_end: f64,
    rtol: f64,
    atol: f64,
    out: *mut *mut DdTrajectory,
) -> DdStatus {
    guard(|| {
        let m = unsafe { deref(model, "model") }?;
        let x0 = unsafe { read_state(initial) }?;
        if out.is_null() {
            return Err(null("out"));
        }
        let kind: DissipatorKind = dissipator.into();
        let rhs = semiclassical::build_rhs(
            &m.params,
            &RhsSpec {
                kind,
                branch: branch.into(),
                kappa_eff: None,
            },
        )?;
        let solver = SolverConfig {
            method: Method::Rk45 { rtol, atol },
            ..SolverConfig::rk45(t_end)
        };
        let traj = dynamics::integrate_semiclassical(|x| rhs(x), x0, &solver)?.with_model(&m.params, kind);
        unsafe { write(out, "out", Box::into_raw(Box::new(DdTrajectory { traj }))) }
    })
}

/// # Safety
/// `t` must be NULL or a handle from [`dd_simulate`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dd_trajectory_free(t: *mut DdTrajectory) {
    if !t.is_null() {
        // SAFETY: handle created by Box::into_raw in dd_simulate.
        drop(unsafe { Box::from_raw(t) });
    }
}

/// Number of recorded samples.
///
/// # Safety
/// `t` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dd_trajectory_len(t: *const DdTrajectory, out: *mut usize) -> DdStatus {
    guard(|| {
        let t = unsafe { deref(t, "trajectory") }?;
        unsafe { write(out, "out", t.traj.len()) }
    })
}

/// Sample `index` (0-based): time and state.
///
/// # Safety
/// `t` must be a live handle, `out_time` writable and `out_state` must point
/// to 5 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn dd_trajectory_sample(
    t: *const DdTrajectory,
    index: usize,
    out_time: *mut f64,
    out_state: *mut f64,
) -> DdStatus {
    guard(|| {
        let t = unsafe { deref(t, "trajectory") }?;
        if index >= t.traj.len() {
            return Err(Failure(
                DdStatus::OutOfRange,
                format!("index {index} out of range for {} samples", t.traj.len()),
            ));
        }
        if out_time.is_null() {
            return Err(null("out_time"));
        }
        unsafe { write_state(out_state, &t.traj.states[index].into()) }?;
        unsafe { write(out_time, "out_time", t.traj.times[index]) }
    })
}
