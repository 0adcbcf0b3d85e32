//! C ABI for the bellpost toolkit.
//!
//! Conventions: every function returns a [`BpStatus`] code and writes results
//! through out-pointers; density matrices travel as opaque [`BpState`]
//! handles owned by the library and released with [`bp_state_free`]. The last
//! error's human-readable message is retrievable per thread via
//! [`bp_last_error_message`]. All functions catch panics at the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use bellpost::classical::{Direction3, ReadoutConvention};
use bellpost::config::load_config;
use bellpost::error::Error;
use bellpost::experiment::run_experiment;
use bellpost::quantum::{make_state, DensityMatrix, Projector, StateKind};
use bellpost::werner::{find_paradox, paradox_figure_bases};

/// Status codes mirroring the library's error variants.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BpStatus {
    Ok = 0,
    InvalidArgument = 1,
    Precondition = 2,
    Numeric = 3,
    EmptySubensemble = 4,
    SearchExhausted = 5,
    Config = 6,
    Schema = 7,
    Io = 8,
    NullPointer = 9,
    Panic = 10,
}

/// Opaque density-matrix handle.
pub struct BpState {
    inner: DensityMatrix,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: &str) {
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_of(err: &Error) -> BpStatus {
    match err {
        Error::InvalidArgument(_) => BpStatus::InvalidArgument,
        Error::Precondition(_) => BpStatus::Precondition,
        Error::Numeric(_) => BpStatus::Numeric,
        Error::EmptySubensemble(_) => BpStatus::EmptySubensemble,
        Error::SearchExhausted(_) => BpStatus::SearchExhausted,
        Error::Config { .. } => BpStatus::Config,
        Error::Schema(_) => BpStatus::Schema,
        Error::Io(_) => BpStatus::Io,
    }
}

fn guard(f: impl FnOnce() -> BpStatus) -> BpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("panic across the FFI boundary");
            BpStatus::Panic
        }
    }
}

fn fail(err: Error) -> BpStatus {
    set_error(&err.to_string());
    status_of(&err)
}

fn direction(x: f64, y: f64, z: f64) -> Result<Direction3, Error> {
    Direction3::new(x, y, z)
}

/// Copy the current thread's last error message into `buffer` (NUL
/// terminated, truncated to `length` bytes). Returns the full message length
/// in bytes, excluding the terminator.
///
/// # Safety
/// `buffer` must point to at least `length` writable bytes, or be null
/// (in which case only the required length is returned).
#[no_mangle]
pub unsafe extern "C" fn bp_last_error_message(buffer: *mut c_char, length: usize) -> usize {
    LAST_ERROR.with(|slot| {
        let message = slot.borrow();
        let bytes = message.as_bytes_with_nul();
        if !buffer.is_null() && length > 0 {
            let n = bytes.len().min(length);
            std::ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buffer, n);
            // Ensure termination even when truncated.
            *buffer.add(n - 1) = 0;
        }
        bytes.len() - 1
    })
}

/// Ground-truth classical readout correlation for settings `a` and `b`
/// (quadrature oracle, no sampling).
///
/// # Safety
/// `out` must be a valid pointer to a writable f64.
#[no_mangle]
pub unsafe extern "C" fn bp_oracle_correlation(
    a_x: f64,
    a_y: f64,
    a_z: f64,
    b_x: f64,
    b_y: f64,
    b_z: f64,
    postselect: bool,
    flip_bob: bool,
    out: *mut f64,
) -> BpStatus {
    guard(|| {
        if out.is_null() {
            set_error("out pointer is null");
            return BpStatus::NullPointer;
        }
        let result = direction(a_x, a_y, a_z).and_then(|a| {
            let b = direction(b_x, b_y, b_z)?;
            bellpost::oracle::oracle_correlation(a, b, postselect, ReadoutConvention { flip_bob })
        });
        match result {
            Ok(value) => {
                *out = value;
                BpStatus::Ok
            }
            Err(err) => fail(err),
        }
    })
}

/// Monte Carlo classical correlation estimate for one setting pair.
///
/// # Safety
/// All four out-pointers must be valid writable locations.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn bp_classical_correlation(
    seed: u64,
    trials: u64,
    a_x: f64,
    a_y: f64,
    a_z: f64,
    b_x: f64,
    b_y: f64,
    b_z: f64,
    postselect: bool,
    flip_bob: bool,
    out_mean: *mut f64,
    out_std_error: *mut f64,
    out_n_total: *mut u64,
    out_n_kept: *mut u64,
) -> BpStatus {
    guard(|| {
        if out_mean.is_null()
            || out_std_error.is_null()
            || out_n_total.is_null()
            || out_n_kept.is_null()
        {
            set_error("out pointer is null");
            return BpStatus::NullPointer;
        }
        let result = direction(a_x, a_y, a_z).and_then(|a| {
            let b = direction(b_x, b_y, b_z)?;
            let records = bellpost::classical::run_block(
                &[a],
                &[b],
                trials,
                seed,
                ReadoutConvention { flip_bob },
            )?;
            bellpost::chsh::estimate_correlation(&records, (0, 0), postselect)
        });
        match result {
            Ok(estimate) => {
                *out_mean = estimate.mean;
                *out_std_error = estimate.std_error;
                *out_n_total = estimate.n_total;
                *out_n_kept = estimate.n_kept;
                BpStatus::Ok
            }
            Err(err) => fail(err),
        }
    })
}

fn state_out(kind: StateKind, out: *mut *mut BpState) -> BpStatus {
    if out.is_null() {
        set_error("out pointer is null");
        return BpStatus::NullPointer;
    }
    match make_state(kind) {
        Ok(inner) => {
            let handle = Box::new(BpState { inner });
            unsafe { *out = Box::into_raw(handle) };
            BpStatus::Ok
        }
        Err(err) => fail(err),
    }
}

/// New two-qubit singlet handle.
///
/// # Safety
/// `out` must be a valid pointer to a writable handle slot.
#[no_mangle]
pub unsafe extern "C" fn bp_state_singlet(out: *mut *mut BpState) -> BpStatus {
    guard(|| state_out(StateKind::Singlet, out))
}

/// New qubit Werner-state handle (equal mixture of noise and singlet).
///
/// # Safety
/// `out` must be a valid pointer to a writable handle slot.
#[no_mangle]
pub unsafe extern "C" fn bp_state_werner_qubit(out: *mut *mut BpState) -> BpStatus {
    guard(|| state_out(StateKind::WernerQubit, out))
}

/// New d-dimensional Werner-family handle with flip parameter `phi`.
///
/// # Safety
/// `out` must be a valid pointer to a writable handle slot.
#[no_mangle]
pub unsafe extern "C" fn bp_state_werner_family(
    d: usize,
    phi: f64,
    out: *mut *mut BpState,
) -> BpStatus {
    guard(|| state_out(StateKind::WernerFamily { d, phi }, out))
}

/// Release a state handle. Null is a no-op.
///
/// # Safety
/// `state` must be null or a pointer previously returned by a `bp_state_*`
/// constructor, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn bp_state_free(state: *mut BpState) {
    if !state.is_null() {
        drop(Box::from_raw(state));
    }
}

unsafe fn borrow_state<'a>(state: *const BpState) -> Option<&'a BpState> {
    state.as_ref()
}

/// Tr(rho (sigma.a x sigma.b)) for a two-qubit state handle.
///
/// # Safety
/// `state` must be a live handle; `out` a valid writable f64 pointer.
#[no_mangle]
pub unsafe extern "C" fn bp_spin_correlation(
    state: *const BpState,
    a_x: f64,
    a_y: f64,
    a_z: f64,
    b_x: f64,
    b_y: f64,
    b_z: f64,
    out: *mut f64,
) -> BpStatus {
    guard(|| {
        let Some(handle) = (unsafe { borrow_state(state) }) else {
            set_error("state handle is null");
            return BpStatus::NullPointer;
        };
        if out.is_null() {
            set_error("out pointer is null");
            return BpStatus::NullPointer;
        }
        let result = direction(a_x, a_y, a_z).and_then(|a| {
            let b = direction(b_x, b_y, b_z)?;
            bellpost::quantum::spin_correlation(&handle.inner, &a, &b)
        });
        match result {
            Ok(value) => {
                *out = value;
                BpStatus::Ok
            }
            Err(err) => fail(err),
        }
    })
}

/// Joint firing probability of rank-1 spin projectors along `a` and `b`.
///
/// # Safety
/// `state` must be a live handle; `out` a valid writable f64 pointer.
#[no_mangle]
pub unsafe extern "C" fn bp_joint_probability_spin(
    state: *const BpState,
    a_x: f64,
    a_y: f64,
    a_z: f64,
    b_x: f64,
    b_y: f64,
    b_z: f64,
    out: *mut f64,
) -> BpStatus {
    guard(|| {
        let Some(handle) = (unsafe { borrow_state(state) }) else {
            set_error("state handle is null");
            return BpStatus::NullPointer;
        };
        if out.is_null() {
            set_error("out pointer is null");
            return BpStatus::NullPointer;
        }
        let result = direction(a_x, a_y, a_z).and_then(|a| {
            let b = direction(b_x, b_y, b_z)?;
            bellpost::quantum::joint_probability(
                &handle.inner,
                &Projector::spin_up(&a),
                &Projector::spin_up(&b),
            )
        });
        match result {
            Ok(value) => {
                *out = value;
                BpStatus::Ok
            }
            Err(err) => fail(err),
        }
    })
}

/// Settings-optimal CHSH value of a two-qubit state handle.
///
/// # Safety
/// `state` must be a live handle; `out` a valid writable f64 pointer.
#[no_mangle]
pub unsafe extern "C" fn bp_chsh_quantum_max(state: *const BpState, out: *mut f64) -> BpStatus {
    guard(|| {
        let Some(handle) = (unsafe { borrow_state(state) }) else {
            set_error("state handle is null");
            return BpStatus::NullPointer;
        };
        if out.is_null() {
            set_error("out pointer is null");
            return BpStatus::NullPointer;
        }
        match bellpost::quantum::chsh_quantum_max(&handle.inner) {
            Ok(value) => {
                *out = value;
                BpStatus::Ok
            }
            Err(err) => fail(err),
        }
    })
}

/// Minimum eigenvalue of the partial transpose on the second factor.
///
/// # Safety
/// `state` must be a live handle; `out` a valid writable f64 pointer.
#[no_mangle]
pub unsafe extern "C" fn bp_ppt_min_eigenvalue(state: *const BpState, out: *mut f64) -> BpStatus {
    guard(|| {
        let Some(handle) = (unsafe { borrow_state(state) }) else {
            set_error("state handle is null");
            return BpStatus::NullPointer;
        };
        if out.is_null() {
            set_error("out pointer is null");
            return BpStatus::NullPointer;
        }
        match bellpost::quantum::ppt_min_eigenvalue(&handle.inner) {
            Ok(value) => {
                *out = value;
                BpStatus::Ok
            }
            Err(err) => fail(err),
        }
    })
}

/// Find a hidden vector for the 45-degree rotated basis pair whose direct
/// fine value of P_u is 1 while the coarse value of P_uv is 0. Writes the
/// three real components and the number of rejection samples used.
///
/// # Safety
/// `out_r` must point to three writable f64 slots; `out_attempts` to one
/// writable u64.
#[no_mangle]
pub unsafe extern "C" fn bp_find_paradox(
    seed: u64,
    out_r: *mut f64,
    out_attempts: *mut u64,
) -> BpStatus {
    guard(|| {
        if out_r.is_null() || out_attempts.is_null() {
            set_error("out pointer is null");
            return BpStatus::NullPointer;
        }
        let (uvz, xyz) = paradox_figure_bases();
        match find_paradox(&uvz, &xyz, seed) {
            Ok(found) => {
                for (i, z) in found.vector.components().iter().enumerate() {
                    *out_r.add(i) = z.re;
                }
                *out_attempts = found.attempts;
                BpStatus::Ok
            }
            Err(err) => fail(err),
        }
    })
}

/// Load a TOML experiment configuration and run it; CSV artifacts land in
/// the configured (or overridden) output directory.
///
/// # Safety
/// `config_path` must be a valid NUL-terminated UTF-8 path. `out_dir` may be
/// null to keep the configured directory.
#[no_mangle]
pub unsafe extern "C" fn bp_run_experiment(
    config_path: *const c_char,
    out_dir: *const c_char,
) -> BpStatus {
    guard(|| {
        if config_path.is_null() {
            set_error("config_path is null");
            return BpStatus::NullPointer;
        }
        let path = match CStr::from_ptr(config_path).to_str() {
            Ok(s) => PathBuf::from(s),
            Err(_) => {
                set_error("config_path is not valid UTF-8");
                return BpStatus::InvalidArgument;
            }
        };
        let mut config = match load_config(&path) {
            Ok(c) => c,
            Err(err) => return fail(err),
        };
        if !out_dir.is_null() {
            match CStr::from_ptr(out_dir).to_str() {
                Ok(s) => config.out_dir = PathBuf::from(s),
                Err(_) => {
                    set_error("out_dir is not valid UTF-8");
                    return BpStatus::InvalidArgument;
                }
            }
        }
        match run_experiment(&config) {
            Ok(_) => BpStatus::Ok,
            Err(err) => fail(err),
        }
    })
}
