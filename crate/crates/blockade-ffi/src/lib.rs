//! C interface to the blockade simulator.
//!
//! Conventions:
//!
//! - Every fallible call returns a [`BlockadeStatus`]; zero means success.
//!   On failure [`blockade_last_error`] holds a message that stays valid
//!   until the next failing call on the same thread.
//! - Objects live behind opaque handles created and destroyed here. Pass
//!   each handle to its matching `*_free` exactly once; `*_free` ignores
//!   NULL. Handles are not thread-safe; share them only with external
//!   synchronization.
//! - Array pointers returned by accessors borrow the handle and are valid
//!   while it lives.
//! - Parameter keys and units match the CLI parameter files: ordinary MHz
//!   for frequencies, with the angular conversion applied internally.
//!
//! The build script writes the matching C header to `include/blockade.h`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::fmt::Display;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use blockade::analysis::{self, IntensityTrace};
use blockade::config::Config;
use blockade::meanfield::{self, Controls, MeanFieldState, Trajectory};
use blockade::params::{dispersive_shift, lorentzian_transmission};
use blockade::stochastic::{self, CountRecord, StochasticConfig};
use blockade::Error;

/// Outcome of a call. Zero is success; anything else is a failure whose
/// message is available through `blockade_last_error`.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum BlockadeStatus {
    Ok = 0,
    /// A required pointer argument was NULL.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// A parameter or option was rejected.
    InvalidInput = 3,
    /// An input file was malformed.
    ParseFailed = 4,
    /// Integration failed: non-finite state, exhausted step budget, or a
    /// singular quasi-steady solve.
    NumericsFailed = 5,
    /// The trace never crosses the requested transition thresholds.
    NoTransition = 6,
    /// A fit was impossible on the given data.
    FitFailed = 7,
    /// File input or output failed.
    IoFailed = 8,
    /// An internal invariant broke; please report.
    Internal = 9,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn fail(status: BlockadeStatus, msg: impl Display) -> BlockadeStatus {
    let text = msg.to_string().replace('\0', " ");
    let stored = CString::new(text).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = stored);
    status
}

fn fail_with(err: &Error) -> BlockadeStatus {
    let status = match err {
        Error::Config(_) => BlockadeStatus::InvalidInput,
        Error::Parse { .. } => BlockadeStatus::ParseFailed,
        Error::NonFinite { .. } | Error::StepBudget { .. } | Error::SingularSteadyState { .. } => {
            BlockadeStatus::NumericsFailed
        }
        Error::NoTransition { .. } => BlockadeStatus::NoTransition,
        Error::NotBracketed { .. } | Error::BadFitInput(_) => BlockadeStatus::FitFailed,
        Error::Io(_) => BlockadeStatus::IoFailed,
    };
    fail(status, err)
}

fn guarded(body: impl FnOnce() -> BlockadeStatus) -> BlockadeStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => fail(BlockadeStatus::Internal, "internal panic"),
    }
}

/// Reads a NUL-terminated UTF-8 argument.
///
/// # Safety
/// `ptr` must be NULL or point at a NUL-terminated string.
unsafe fn text_arg<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, BlockadeStatus> {
    if ptr.is_null() {
        return Err(fail(
            BlockadeStatus::NullArgument,
            format!("{what} must not be NULL"),
        ));
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        fail(
            BlockadeStatus::InvalidUtf8,
            format!("{what} must be valid UTF-8"),
        )
    })
}

/// Opaque parameter set in the same key space as the CLI parameter files.
pub struct BlockadeParams {
    config: Config,
}

impl BlockadeParams {
    fn physical(&self) -> Result<blockade::PhysicalParams, Error> {
        let p = self.config.to_params();
        p.validate()?;
        Ok(p)
    }
}

/// Opaque trajectory on a uniform output grid.
pub struct BlockadeTrajectory {
    traj: Trajectory,
    photons: Vec<f64>,
    ground: Vec<f64>,
    excited: Vec<f64>,
}

impl BlockadeTrajectory {
    fn new(traj: Trajectory) -> Self {
        let photons = traj.photons();
        let ground = traj.states.iter().map(|s| s.n_g).collect();
        let excited = traj.states.iter().map(|s| s.n_e).collect();
        BlockadeTrajectory {
            traj,
            photons,
            ground,
            excited,
        }
    }
}

/// Opaque photon-count record with calibration metadata.
pub struct BlockadeCounts {
    record: CountRecord,
}

/// Transition timing of a transmission trace, all in microseconds.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct BlockadeTransition {
    /// Crossing of 10% of the reference transmission.
    pub t10_us: f64,
    /// Crossing of 50%.
    pub t50_us: f64,
    /// Crossing of 90%.
    pub t90_us: f64,
    /// `t90_us - t10_us`.
    pub width_us: f64,
}

/// Library version as a static NUL-terminated string. Never freed.
#[no_mangle]
pub extern "C" fn blockade_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr().cast()
}

/// Message of the most recent failure on this thread; empty if none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn blockade_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Fresh parameter set at the built-in experimental defaults.
#[no_mangle]
pub extern "C" fn blockade_params_default() -> *mut BlockadeParams {
    Box::into_raw(Box::new(BlockadeParams {
        config: Config::default(),
    }))
}

/// Releases a parameter handle.
///
/// # Safety
/// `params` must be NULL or a handle from `blockade_params_default` that
/// has not been freed.
#[no_mangle]
pub unsafe extern "C" fn blockade_params_free(params: *mut BlockadeParams) {
    if !params.is_null() {
        drop(Box::from_raw(params));
    }
}

/// Sets a numeric parameter. Keys: `kappa_mhz`, `gamma_mhz`,
/// `Gamma_over_gamma`, `g_mhz`, `delta_A_mhz`, `delta_C_mhz`,
/// `eta_over_kappa`, `n_atoms`, `waist_um`, `wavelength_nm`.
///
/// # Safety
/// `params` must be a live handle; `key` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn blockade_params_set(
    params: *mut BlockadeParams,
    key: *const c_char,
    value: f64,
) -> BlockadeStatus {
    guarded(|| {
        let Some(handle) = params.as_mut() else {
            return fail(BlockadeStatus::NullArgument, "params must not be NULL");
        };
        let key = match text_arg(key, "key") {
            Ok(k) => k,
            Err(status) => return status,
        };
        match handle.config.set(&format!("{key}={value}")) {
            Ok(()) => BlockadeStatus::Ok,
            Err(e) => fail_with(&e),
        }
    })
}

/// Sets a text parameter; currently `g_eff_mode` with values `averaged`
/// or `peak`.
///
/// # Safety
/// `params` must be a live handle; `key` and `value` must be
/// NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn blockade_params_set_text(
    params: *mut BlockadeParams,
    key: *const c_char,
    value: *const c_char,
) -> BlockadeStatus {
    guarded(|| {
        let Some(handle) = params.as_mut() else {
            return fail(BlockadeStatus::NullArgument, "params must not be NULL");
        };
        let key = match text_arg(key, "key") {
            Ok(k) => k,
            Err(status) => return status,
        };
        let value = match text_arg(value, "value") {
            Ok(v) => v,
            Err(status) => return status,
        };
        match handle.config.set(&format!("{key}={value}")) {
            Ok(()) => BlockadeStatus::Ok,
            Err(e) => fail_with(&e),
        }
    })
}

/// Reads a numeric parameter back into `out`.
///
/// # Safety
/// `params` must be a live handle; `key` NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn blockade_params_get(
    params: *const BlockadeParams,
    key: *const c_char,
    out: *mut f64,
) -> BlockadeStatus {
    guarded(|| {
        let Some(handle) = params.as_ref() else {
            return fail(BlockadeStatus::NullArgument, "params must not be NULL");
        };
        if out.is_null() {
            return fail(BlockadeStatus::NullArgument, "out must not be NULL");
        }
        let key = match text_arg(key, "key") {
            Ok(k) => k,
            Err(status) => return status,
        };
        for (name, value) in handle.config.entries() {
            if name == key {
                return match value.parse::<f64>() {
                    Ok(v) => {
                        *out = v;
                        BlockadeStatus::Ok
                    }
                    Err(_) => fail(
                        BlockadeStatus::InvalidInput,
                        format!("parameter '{key}' is not numeric (value '{value}')"),
                    ),
                };
            }
        }
        fail(
            BlockadeStatus::InvalidInput,
            format!("unknown parameter '{key}'"),
        )
    })
}

/// Collective dispersive shift per effective atom, rad/us, signed.
///
/// # Safety
/// `params` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn blockade_dispersive_shift(
    params: *const BlockadeParams,
    out: *mut f64,
) -> BlockadeStatus {
    guarded(|| {
        let Some(handle) = params.as_ref() else {
            return fail(BlockadeStatus::NullArgument, "params must not be NULL");
        };
        if out.is_null() {
            return fail(BlockadeStatus::NullArgument, "out must not be NULL");
        }
        match handle.physical() {
            Ok(p) => {
                *out = dispersive_shift(&p);
                BlockadeStatus::Ok
            }
            Err(e) => fail_with(&e),
        }
    })
}

/// On-resonance Lorentzian transmission when `n_eff` atoms shift the
/// cavity, as a fraction of the empty-cavity level.
///
/// # Safety
/// `params` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn blockade_transmission(
    params: *const BlockadeParams,
    n_eff: f64,
    out: *mut f64,
) -> BlockadeStatus {
    guarded(|| {
        let Some(handle) = params.as_ref() else {
            return fail(BlockadeStatus::NullArgument, "params must not be NULL");
        };
        if out.is_null() {
            return fail(BlockadeStatus::NullArgument, "out must not be NULL");
        }
        match handle.physical() {
            Ok(p) => {
                *out = lorentzian_transmission(&p, n_eff);
                BlockadeStatus::Ok
            }
            Err(e) => fail_with(&e),
        }
    })
}

/// Empty-cavity photon number at the configured drive.
///
/// # Safety
/// `params` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn blockade_reference_photons(
    params: *const BlockadeParams,
    out: *mut f64,
) -> BlockadeStatus {
    guarded(|| {
        let Some(handle) = params.as_ref() else {
            return fail(BlockadeStatus::NullArgument, "params must not be NULL");
        };
        if out.is_null() {
            return fail(BlockadeStatus::NullArgument, "out must not be NULL");
        }
        match handle.physical() {
            Ok(p) => {
                *out = p.n_ref();
                BlockadeStatus::Ok
            }
            Err(e) => fail_with(&e),
        }
    })
}

unsafe fn simulate_deterministic(
    params: *const BlockadeParams,
    t_end_us: f64,
    dt_out_us: f64,
    out: *mut *mut BlockadeTrajectory,
    full: bool,
) -> BlockadeStatus {
    let Some(handle) = params.as_ref() else {
        return fail(BlockadeStatus::NullArgument, "params must not be NULL");
    };
    if out.is_null() {
        return fail(BlockadeStatus::NullArgument, "out must not be NULL");
    }
    let p = match handle.physical() {
        Ok(p) => p,
        Err(e) => return fail_with(&e),
    };
    let s0 = MeanFieldState::vacuum_ground(&p);
    let result = if full {
        meanfield::integrate_full(&p, &s0, t_end_us, &Controls::full().with_dt_out(dt_out_us))
    } else {
        meanfield::integrate_slow(&p, &s0, t_end_us, &Controls::slow().with_dt_out(dt_out_us))
    };
    match result {
        Ok(traj) => {
            *out = Box::into_raw(Box::new(BlockadeTrajectory::new(traj)));
            BlockadeStatus::Ok
        }
        Err(e) => fail_with(&e),
    }
}

/// Integrates the slow-manifold equations from vacuum with all atoms in
/// the ground state and writes a new trajectory handle into `out`.
///
/// # Safety
/// `params` must be a live handle; `out` must be writable. The returned
/// handle must be released with `blockade_trajectory_free`.
#[no_mangle]
pub unsafe extern "C" fn blockade_simulate_slow(
    params: *const BlockadeParams,
    t_end_us: f64,
    dt_out_us: f64,
    out: *mut *mut BlockadeTrajectory,
) -> BlockadeStatus {
    guarded(|| simulate_deterministic(params, t_end_us, dt_out_us, out, false))
}

/// Integrates the full field and atom dynamics (stiff; spans beyond ~1e5
/// cavity lifetimes are better served by `blockade_simulate_slow`).
///
/// # Safety
/// `params` must be a live handle; `out` must be writable. The returned
/// handle must be released with `blockade_trajectory_free`.
#[no_mangle]
pub unsafe extern "C" fn blockade_simulate_full(
    params: *const BlockadeParams,
    t_end_us: f64,
    dt_out_us: f64,
    out: *mut *mut BlockadeTrajectory,
) -> BlockadeStatus {
    guarded(|| simulate_deterministic(params, t_end_us, dt_out_us, out, true))
}

/// Runs one stochastic realization with discrete atom escape and Poisson
/// photon counting. `t_end_us` and `dt_out_us` must be whole multiples of
/// `dt_jump_us`, which must be a whole multiple of `bin_time_us`. The same
/// seed always reproduces the same outputs.
///
/// # Safety
/// `params` must be a live handle; `out_trajectory` and `out_counts` must
/// be writable. Release the results with `blockade_trajectory_free` and
/// `blockade_counts_free`.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn blockade_simulate_stochastic(
    params: *const BlockadeParams,
    seed: u64,
    dt_jump_us: f64,
    bin_time_us: f64,
    efficiency: f64,
    decrement_excited: bool,
    t_end_us: f64,
    dt_out_us: f64,
    out_trajectory: *mut *mut BlockadeTrajectory,
    out_counts: *mut *mut BlockadeCounts,
) -> BlockadeStatus {
    guarded(|| {
        let Some(handle) = params.as_ref() else {
            return fail(BlockadeStatus::NullArgument, "params must not be NULL");
        };
        if out_trajectory.is_null() || out_counts.is_null() {
            return fail(
                BlockadeStatus::NullArgument,
                "out pointers must not be NULL",
            );
        }
        let p = match handle.physical() {
            Ok(p) => p,
            Err(e) => return fail_with(&e),
        };
        let cfg = StochasticConfig {
            seed,
            dt_jump: dt_jump_us,
            bin_time: bin_time_us,
            efficiency,
            decrement_excited_only: decrement_excited,
        };
        match stochastic::simulate_trajectory(&p, &cfg, t_end_us, dt_out_us) {
            Ok((traj, rec)) => {
                *out_trajectory = Box::into_raw(Box::new(BlockadeTrajectory::new(traj)));
                *out_counts = Box::into_raw(Box::new(BlockadeCounts { record: rec }));
                BlockadeStatus::Ok
            }
            Err(e) => fail_with(&e),
        }
    })
}

/// Number of samples in a trajectory; 0 for NULL.
///
/// # Safety
/// `trajectory` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn blockade_trajectory_len(trajectory: *const BlockadeTrajectory) -> usize {
    trajectory.as_ref().map_or(0, |t| t.traj.t.len())
}

/// Sample times, us. Borrowed from the handle; NULL for NULL input.
///
/// # Safety
/// `trajectory` must be NULL or a live handle; the pointer is valid while
/// the handle lives.
#[no_mangle]
pub unsafe extern "C" fn blockade_trajectory_times(
    trajectory: *const BlockadeTrajectory,
) -> *const f64 {
    trajectory
        .as_ref()
        .map_or(std::ptr::null(), |t| t.traj.t.as_ptr())
}

/// Intracavity photon number per sample. Borrowed from the handle.
///
/// # Safety
/// `trajectory` must be NULL or a live handle; the pointer is valid while
/// the handle lives.
#[no_mangle]
pub unsafe extern "C" fn blockade_trajectory_photons(
    trajectory: *const BlockadeTrajectory,
) -> *const f64 {
    trajectory
        .as_ref()
        .map_or(std::ptr::null(), |t| t.photons.as_ptr())
}

/// Ground-state population per sample. Borrowed from the handle.
///
/// # Safety
/// `trajectory` must be NULL or a live handle; the pointer is valid while
/// the handle lives.
#[no_mangle]
pub unsafe extern "C" fn blockade_trajectory_ground(
    trajectory: *const BlockadeTrajectory,
) -> *const f64 {
    trajectory
        .as_ref()
        .map_or(std::ptr::null(), |t| t.ground.as_ptr())
}

/// Excited-state population per sample. Borrowed from the handle.
///
/// # Safety
/// `trajectory` must be NULL or a live handle; the pointer is valid while
/// the handle lives.
#[no_mangle]
pub unsafe extern "C" fn blockade_trajectory_excited(
    trajectory: *const BlockadeTrajectory,
) -> *const f64 {
    trajectory
        .as_ref()
        .map_or(std::ptr::null(), |t| t.excited.as_ptr())
}

/// Writes a trajectory in the CSV layout used by the CLI.
///
/// # Safety
/// `trajectory` must be a live handle; `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn blockade_trajectory_write_csv(
    trajectory: *const BlockadeTrajectory,
    path: *const c_char,
) -> BlockadeStatus {
    guarded(|| {
        let Some(handle) = trajectory.as_ref() else {
            return fail(BlockadeStatus::NullArgument, "trajectory must not be NULL");
        };
        let path = match text_arg(path, "path") {
            Ok(p) => p,
            Err(status) => return status,
        };
        match handle.traj.write_csv(Path::new(path)) {
            Ok(()) => BlockadeStatus::Ok,
            Err(e) => fail_with(&e),
        }
    })
}

/// Reads a trajectory CSV produced by this library or the CLI.
///
/// # Safety
/// `path` must be NUL-terminated; `out` writable. Release the result with
/// `blockade_trajectory_free`.
#[no_mangle]
pub unsafe extern "C" fn blockade_trajectory_read_csv(
    path: *const c_char,
    out: *mut *mut BlockadeTrajectory,
) -> BlockadeStatus {
    guarded(|| {
        if out.is_null() {
            return fail(BlockadeStatus::NullArgument, "out must not be NULL");
        }
        let path = match text_arg(path, "path") {
            Ok(p) => p,
            Err(status) => return status,
        };
        match Trajectory::read_csv(Path::new(path)) {
            Ok(traj) => {
                *out = Box::into_raw(Box::new(BlockadeTrajectory::new(traj)));
                BlockadeStatus::Ok
            }
            Err(e) => fail_with(&e),
        }
    })
}

/// Releases a trajectory handle.
///
/// # Safety
/// `trajectory` must be NULL or an unfreed handle from this library.
#[no_mangle]
pub unsafe extern "C" fn blockade_trajectory_free(trajectory: *mut BlockadeTrajectory) {
    if !trajectory.is_null() {
        drop(Box::from_raw(trajectory));
    }
}

/// Number of count bins; 0 for NULL.
///
/// # Safety
/// `counts` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn blockade_counts_len(counts: *const BlockadeCounts) -> usize {
    counts.as_ref().map_or(0, |c| c.record.counts.len())
}

/// Bin centers, us. Borrowed from the handle.
///
/// # Safety
/// `counts` must be NULL or a live handle; the pointer is valid while the
/// handle lives.
#[no_mangle]
pub unsafe extern "C" fn blockade_counts_times(counts: *const BlockadeCounts) -> *const f64 {
    counts
        .as_ref()
        .map_or(std::ptr::null(), |c| c.record.t.as_ptr())
}

/// Detected counts per bin. Borrowed from the handle.
///
/// # Safety
/// `counts` must be NULL or a live handle; the pointer is valid while the
/// handle lives.
#[no_mangle]
pub unsafe extern "C" fn blockade_counts_values(counts: *const BlockadeCounts) -> *const u64 {
    counts
        .as_ref()
        .map_or(std::ptr::null(), |c| c.record.counts.as_ptr())
}

/// Calibration in photons per count.
///
/// # Safety
/// `counts` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn blockade_counts_calibration(
    counts: *const BlockadeCounts,
    out: *mut f64,
) -> BlockadeStatus {
    guarded(|| {
        let Some(handle) = counts.as_ref() else {
            return fail(BlockadeStatus::NullArgument, "counts must not be NULL");
        };
        if out.is_null() {
            return fail(BlockadeStatus::NullArgument, "out must not be NULL");
        }
        *out = handle.record.calibration;
        BlockadeStatus::Ok
    })
}

/// Writes a count record as CSV plus its `.meta` sidecar.
///
/// # Safety
/// `counts` must be a live handle; `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn blockade_counts_write_csv(
    counts: *const BlockadeCounts,
    path: *const c_char,
) -> BlockadeStatus {
    guarded(|| {
        let Some(handle) = counts.as_ref() else {
            return fail(BlockadeStatus::NullArgument, "counts must not be NULL");
        };
        let path = match text_arg(path, "path") {
            Ok(p) => p,
            Err(status) => return status,
        };
        match handle.record.write_csv(Path::new(path)) {
            Ok(()) => BlockadeStatus::Ok,
            Err(e) => fail_with(&e),
        }
    })
}

/// Reads a count record written by this library or the CLI (the `.meta`
/// sidecar must sit next to the CSV).
///
/// # Safety
/// `path` must be NUL-terminated; `out` writable. Release the result with
/// `blockade_counts_free`.
#[no_mangle]
pub unsafe extern "C" fn blockade_counts_read_csv(
    path: *const c_char,
    out: *mut *mut BlockadeCounts,
) -> BlockadeStatus {
    guarded(|| {
        if out.is_null() {
            return fail(BlockadeStatus::NullArgument, "out must not be NULL");
        }
        let path = match text_arg(path, "path") {
            Ok(p) => p,
            Err(status) => return status,
        };
        match CountRecord::read_csv(Path::new(path)) {
            Ok(record) => {
                *out = Box::into_raw(Box::new(BlockadeCounts { record }));
                BlockadeStatus::Ok
            }
            Err(e) => fail_with(&e),
        }
    })
}

/// Releases a counts handle.
///
/// # Safety
/// `counts` must be NULL or an unfreed handle from this library.
#[no_mangle]
pub unsafe extern "C" fn blockade_counts_free(counts: *mut BlockadeCounts) {
    if !counts.is_null() {
        drop(Box::from_raw(counts));
    }
}

/// Locates the 10/50/90% crossings of a trajectory against a reference
/// photon number. `smooth_us <= 0` disables smoothing.
///
/// # Safety
/// `trajectory` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn blockade_transition_report(
    trajectory: *const BlockadeTrajectory,
    n_ref_photons: f64,
    smooth_us: f64,
    out: *mut BlockadeTransition,
) -> BlockadeStatus {
    guarded(|| {
        let Some(handle) = trajectory.as_ref() else {
            return fail(BlockadeStatus::NullArgument, "trajectory must not be NULL");
        };
        if out.is_null() {
            return fail(BlockadeStatus::NullArgument, "out must not be NULL");
        }
        if n_ref_photons <= 0.0 || n_ref_photons.is_nan() {
            return fail(
                BlockadeStatus::InvalidInput,
                format!("n_ref_photons must be > 0, got {n_ref_photons}"),
            );
        }
        let trace = match IntensityTrace::from_trajectory(&handle.traj, n_ref_photons, "trajectory")
        {
            Ok(t) => t,
            Err(e) => return fail_with(&e),
        };
        let smoothing = if smooth_us > 0.0 {
            Some(smooth_us)
        } else {
            None
        };
        match analysis::transition_report(&trace, smoothing) {
            Ok(rep) => {
                *out = BlockadeTransition {
                    t10_us: rep.t10,
                    t50_us: rep.t50,
                    t90_us: rep.t90,
                    width_us: rep.width,
                };
                BlockadeStatus::Ok
            }
            Err(e) => fail_with(&e),
        }
    })
}

/// Peak windowed thermal occupation of a count record. Either output may
/// be NULL if not needed.
///
/// # Safety
/// `counts` must be a live handle; non-NULL outputs writable.
#[no_mangle]
pub unsafe extern "C" fn blockade_fluctuation_peak(
    counts: *const BlockadeCounts,
    window_us: f64,
    out_t_us: *mut f64,
    out_n_th: *mut f64,
) -> BlockadeStatus {
    guarded(|| {
        let Some(handle) = counts.as_ref() else {
            return fail(BlockadeStatus::NullArgument, "counts must not be NULL");
        };
        let series = match analysis::fluctuations(&handle.record, window_us) {
            Ok(s) => s,
            Err(e) => return fail_with(&e),
        };
        match series.n_th_peak() {
            Some((t, value)) => {
                if !out_t_us.is_null() {
                    *out_t_us = t;
                }
                if !out_n_th.is_null() {
                    *out_n_th = value;
                }
                BlockadeStatus::Ok
            }
            None => fail(
                BlockadeStatus::FitFailed,
                "count record has no window with finite statistics",
            ),
        }
    })
}

/// Writes the sliding-window photon statistics of a count record as CSV.
///
/// # Safety
/// `counts` must be a live handle; `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn blockade_fluctuations_write_csv(
    counts: *const BlockadeCounts,
    window_us: f64,
    path: *const c_char,
) -> BlockadeStatus {
    guarded(|| {
        let Some(handle) = counts.as_ref() else {
            return fail(BlockadeStatus::NullArgument, "counts must not be NULL");
        };
        let path = match text_arg(path, "path") {
            Ok(p) => p,
            Err(status) => return status,
        };
        let series = match analysis::fluctuations(&handle.record, window_us) {
            Ok(s) => s,
            Err(e) => return fail_with(&e),
        };
        match series.write_csv(Path::new(path)) {
            Ok(()) => BlockadeStatus::Ok,
            Err(e) => fail_with(&e),
        }
    })
}

/// Least-squares power law `y = amplitude * x^exponent` through positive
/// points. Any output pointer may be NULL.
///
/// # Safety
/// `xs` and `ys` must point at `len` readable doubles; non-NULL outputs
/// writable.
#[no_mangle]
pub unsafe extern "C" fn blockade_power_law_fit(
    xs: *const f64,
    ys: *const f64,
    len: usize,
    out_exponent: *mut f64,
    out_stderr: *mut f64,
    out_amplitude: *mut f64,
) -> BlockadeStatus {
    guarded(|| {
        if len > 0 && (xs.is_null() || ys.is_null()) {
            return fail(BlockadeStatus::NullArgument, "xs and ys must not be NULL");
        }
        let xs = if len == 0 {
            &[]
        } else {
            std::slice::from_raw_parts(xs, len)
        };
        let ys = if len == 0 {
            &[]
        } else {
            std::slice::from_raw_parts(ys, len)
        };
        let points: Vec<(f64, f64)> = xs.iter().copied().zip(ys.iter().copied()).collect();
        match analysis::power_law_fit(&points) {
            Ok(fit) => {
                if !out_exponent.is_null() {
                    *out_exponent = fit.exponent;
                }
                if !out_stderr.is_null() {
                    *out_stderr = fit.exponent_stderr;
                }
                if !out_amplitude.is_null() {
                    *out_amplitude = fit.amplitude;
                }
                BlockadeStatus::Ok
            }
            Err(e) => fail_with(&e),
        }
    })
}

/// Thermal occupation inferred from a mean photon number and a
/// binned-count g2 (clamped into [1, 2]).
#[no_mangle]
pub extern "C" fn blockade_thermal_occupation(mean_photons: f64, g2: f64) -> f64 {
    analysis::thermal_occupation(mean_photons, g2)
}
