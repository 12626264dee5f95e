//! C ABI for `quasitip`.
//!
//! Objects are opaque handles created by `qt_*_new`/`qt_*` constructors and
//! released with the matching `qt_*_free`. Every fallible call returns a
//! [`QtStatus`]; on failure `qt_last_error_message` returns a description of
//! the most recent error on the calling thread. Panics never cross the
//! boundary; they are reported as [`QtStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use quasitip::dynamics::{transport_run, TransportResult};
use quasitip::model::potential_at;
use quasitip::spectral::{self, DiagMode, DiagOptions, EigenSet};
use quasitip::{Boundary, Error, ModelParams};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QtStatus {
    Ok = 0,
    NullPointer = 1,
    Index = 2,
    Config = 3,
    Precondition = 4,
    Domain = 5,
    Convergence = 6,
    Accuracy = 7,
    Numerical = 8,
    Io = 9,
    BufferTooSmall = 10,
    Panic = 11,
}

/// Model parameters.
pub struct QtModel(ModelParams);

/// Eigenvalues with per-state PDFs and participation numbers.
pub struct QtEigenSet(EigenSet);

/// A two-particle spreading run.
pub struct QtTrace(TransportResult);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> QtStatus {
    match e {
        Error::Index { .. } => QtStatus::Index,
        Error::Config(_) | Error::Parse(_) | Error::ResumeMismatch(_) => QtStatus::Config,
        Error::Precondition(_) => QtStatus::Precondition,
        Error::Domain(_) | Error::ClassificationUnavailable(_) => QtStatus::Domain,
        Error::Convergence { .. } => QtStatus::Convergence,
        Error::Accuracy(_) => QtStatus::Accuracy,
        Error::SpectralBounds(_) => QtStatus::Numerical,
        Error::Io { .. } | Error::Json(_) => QtStatus::Io,
    }
}

/// Runs `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), QtStatusError>) -> QtStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => QtStatus::Ok,
        Ok(Err(QtStatusError(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            QtStatus::Panic
        }
    }
}

struct QtStatusError(QtStatus, String);

impl From<Error> for QtStatusError {
    fn from(e: Error) -> Self {
        QtStatusError(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> QtStatusError {
    QtStatusError(QtStatus::NullPointer, format!("{what} is NULL"))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, QtStatusError> {
    // SAFETY: the caller passes a handle obtained from this library or NULL.
    unsafe { p.as_ref() }.ok_or_else(|| null(what))
}

unsafe fn out_slot<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, QtStatusError> {
    // SAFETY: the caller passes a writable location or NULL.
    unsafe { p.as_mut() }.ok_or_else(|| null(what))
}

/// Copies `src` into a caller buffer of `len` elements.
unsafe fn copy_out(src: &[f64], buf: *mut f64, len: usize) -> Result<(), QtStatusError> {
    if buf.is_null() {
        return Err(null("buffer"));
    }
    if len < src.len() {
        return Err(QtStatusError(
            QtStatus::BufferTooSmall,
            format!("buffer holds {len} values, {} needed", src.len()),
        ));
    }
    // SAFETY: `buf` is non-null and the caller guarantees `len` writable elements.
    unsafe { ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len()) };
    Ok(())
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len` bytes) and returns the full message length without the
/// terminator; 0 if there is no error. `buf` may be NULL to query the length.
///
/// # Safety
/// `buf` must be NULL or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn qt_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else { return 0 };
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            // SAFETY: `buf` has `len` bytes and `n + 1 <= len`.
            unsafe {
                ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
                *buf.add(n) = 0;
            }
        }
        bytes.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn qt_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates model parameters; `periodic != 0` selects periodic boundaries.
///
/// # Safety
/// `out` must be a valid location for a handle pointer.
#[no_mangle]
pub unsafe extern "C" fn qt_model_new(
    n: usize,
    lambda: f64,
    u: f64,
    beta: f64,
    alpha: f64,
    periodic: i32,
    out: *mut *mut QtModel,
) -> QtStatus {
    guard(|| {
        // SAFETY: forwarded caller contract.
        let slot = unsafe { out_slot(out, "out")? };
        let boundary = if periodic != 0 { Boundary::Periodic } else { Boundary::Open };
        let params = ModelParams::new(n, lambda, u)
            .with_beta(beta)
            .with_alpha(alpha)
            .with_boundary(boundary);
        params.validate()?;
        *slot = Box::into_raw(Box::new(QtModel(params)));
        Ok(())
    })
}

/// # Safety
/// `model` must be NULL or a handle from [`qt_model_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qt_model_free(model: *mut QtModel) {
    if !model.is_null() {
        // SAFETY: created by Box::into_raw in qt_model_new.
        drop(unsafe { Box::from_raw(model) });
    }
}

/// Onsite energy of `site`.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn qt_model_potential_at(model: *const QtModel, site: usize, out: *mut f64) -> QtStatus {
    guard(|| {
        // SAFETY: forwarded caller contract.
        let (m, slot) = unsafe { (handle(model, "model")?, out_slot(out, "out")?) };
        *slot = potential_at(&m.0, site)?;
        Ok(())
    })
}

/// All single-particle eigenstates.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn qt_sp_eigenset(model: *const QtModel, out: *mut *mut QtEigenSet) -> QtStatus {
    guard(|| {
        // SAFETY: forwarded caller contract.
        let (m, slot) = unsafe { (handle(model, "model")?, out_slot(out, "out")?) };
        let mut set = spectral::sp_eigenset(&m.0)?;
        set.vectors = None;
        *slot = Box::into_raw(Box::new(QtEigenSet(set)));
        Ok(())
    })
}

/// Two-particle eigenstates: the whole spectrum when `full != 0`, otherwise
/// every state with energy in `[lower, upper)`.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn qt_tp_eigenset(
    model: *const QtModel,
    full: i32,
    lower: f64,
    upper: f64,
    out: *mut *mut QtEigenSet,
) -> QtStatus {
    guard(|| {
        // SAFETY: forwarded caller contract.
        let (m, slot) = unsafe { (handle(model, "model")?, out_slot(out, "out")?) };
        let mode = if full != 0 {
            DiagMode::Full
        } else {
            DiagMode::Window { lower, upper }
        };
        let set = spectral::tp_eigenset(&m.0, mode, &DiagOptions::default())?;
        *slot = Box::into_raw(Box::new(QtEigenSet(set)));
        Ok(())
    })
}

/// # Safety
/// `set` must be NULL or a live eigenset handle.
#[no_mangle]
pub unsafe extern "C" fn qt_eigenset_free(set: *mut QtEigenSet) {
    if !set.is_null() {
        // SAFETY: created by Box::into_raw in this library.
        drop(unsafe { Box::from_raw(set) });
    }
}

/// Number of states; 0 for a NULL handle.
///
/// # Safety
/// `set` must be NULL or a live eigenset handle.
#[no_mangle]
pub unsafe extern "C" fn qt_eigenset_len(set: *const QtEigenSet) -> usize {
    // SAFETY: forwarded caller contract.
    unsafe { set.as_ref() }.map_or(0, |s| s.0.len())
}

/// Number of lattice sites per PDF; 0 for a NULL handle.
///
/// # Safety
/// `set` must be NULL or a live eigenset handle.
#[no_mangle]
pub unsafe extern "C" fn qt_eigenset_lattice_size(set: *const QtEigenSet) -> usize {
    // SAFETY: forwarded caller contract.
    unsafe { set.as_ref() }.map_or(0, |s| s.0.lattice_size)
}

/// Copies the ascending eigenvalues into `buf` (at least `len` = states).
///
/// # Safety
/// `set` must be a live handle and `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn qt_eigenset_energies(set: *const QtEigenSet, buf: *mut f64, len: usize) -> QtStatus {
    guard(|| {
        // SAFETY: forwarded caller contract.
        unsafe { copy_out(&handle(set, "set")?.0.energies, buf, len) }
    })
}

/// Copies the participation numbers into `buf`.
///
/// # Safety
/// `set` must be a live handle and `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn qt_eigenset_participation(set: *const QtEigenSet, buf: *mut f64, len: usize) -> QtStatus {
    guard(|| {
        // SAFETY: forwarded caller contract.
        unsafe { copy_out(&handle(set, "set")?.0.participation, buf, len) }
    })
}

/// Copies the site PDF of state `q` into `buf`.
///
/// # Safety
/// `set` must be a live handle and `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn qt_eigenset_pdf(set: *const QtEigenSet, q: usize, buf: *mut f64, len: usize) -> QtStatus {
    guard(|| {
        // SAFETY: forwarded caller contract.
        let s = unsafe { handle(set, "set")? };
        if q >= s.0.len() {
            return Err(Error::Index {
                index: q,
                limit: s.0.len(),
            }
            .into());
        }
        // SAFETY: forwarded caller contract.
        unsafe { copy_out(s.0.pdf(q), buf, len) }
    })
}

/// Evolves an adjacent pair on sites `l0, l0+1` to `t_final`, sampling
/// `samples + 1` uniformly spaced times.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn qt_transport_run(
    model: *const QtModel,
    l0: usize,
    t_final: f64,
    samples: usize,
    out: *mut *mut QtTrace,
) -> QtStatus {
    guard(|| {
        // SAFETY: forwarded caller contract.
        let (m, slot) = unsafe { (handle(model, "model")?, out_slot(out, "out")?) };
        let run = transport_run(&m.0, l0, t_final, samples)?;
        *slot = Box::into_raw(Box::new(QtTrace(run)));
        Ok(())
    })
}

/// # Safety
/// `trace` must be NULL or a live trace handle.
#[no_mangle]
pub unsafe extern "C" fn qt_trace_free(trace: *mut QtTrace) {
    if !trace.is_null() {
        // SAFETY: created by Box::into_raw in qt_transport_run.
        drop(unsafe { Box::from_raw(trace) });
    }
}

/// Number of recorded samples; 0 for a NULL handle.
///
/// # Safety
/// `trace` must be NULL or a live trace handle.
#[no_mangle]
pub unsafe extern "C" fn qt_trace_len(trace: *const QtTrace) -> usize {
    // SAFETY: forwarded caller contract.
    unsafe { trace.as_ref() }.map_or(0, |t| t.0.trace.times.len())
}

/// Copies the sample times into `buf`.
///
/// # Safety
/// `trace` must be a live handle and `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn qt_trace_times(trace: *const QtTrace, buf: *mut f64, len: usize) -> QtStatus {
    guard(|| {
        // SAFETY: forwarded caller contract.
        unsafe { copy_out(&handle(trace, "trace")?.0.trace.times, buf, len) }
    })
}

/// Copies the second moment σ at each sample into `buf`.
///
/// # Safety
/// `trace` must be a live handle and `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn qt_trace_sigmas(trace: *const QtTrace, buf: *mut f64, len: usize) -> QtStatus {
    guard(|| {
        // SAFETY: forwarded caller contract.
        unsafe { copy_out(&handle(trace, "trace")?.0.trace.sigmas, buf, len) }
    })
}

/// Copies the norm at each sample into `buf`.
///
/// # Safety
/// `trace` must be a live handle and `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn qt_trace_norms(trace: *const QtTrace, buf: *mut f64, len: usize) -> QtStatus {
    guard(|| {
        // SAFETY: forwarded caller contract.
        unsafe { copy_out(&handle(trace, "trace")?.0.trace.norms, buf, len) }
    })
}

/// Spreading exponent γ of `σ ~ t^γ`. `*has_fit` is set to 0 when too few
/// samples precede boundary contact for a fit.
///
/// # Safety
/// `trace` must be a live handle; `gamma` and `has_fit` writable.
#[no_mangle]
pub unsafe extern "C" fn qt_trace_gamma(trace: *const QtTrace, gamma: *mut f64, has_fit: *mut i32) -> QtStatus {
    guard(|| {
        // SAFETY: forwarded caller contract.
        let (t, g, h) = unsafe { (handle(trace, "trace")?, out_slot(gamma, "gamma")?, out_slot(has_fit, "has_fit")?) };
        match t.0.fit {
            Some(f) => {
                *g = f.gamma;
                *h = 1;
            }
            None => {
                *g = f64::NAN;
                *h = 0;
            }
        }
        Ok(())
    })
}
