//! C interface to `pptp-core`.
//!
//! Handles are opaque and owned by the caller once returned; release them
//! with the matching `*_free`. Every fallible call returns a [`PptpStatus`];
//! on failure, [`pptp_last_error`] describes the most recent error on the
//! calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use pptp_core::cp::{failure_risk_vector, DEFAULT_GAMMA};
use pptp_core::model::{ModelInput, PptpModel as CoreModel, SignalMask};
use pptp_core::session::{frame_stream, load_session, Session, WindowingConfig, MAX_STEPS};
use pptp_core::Error;

/// Length of a failure-risk vector.
pub const PPTP_CP_LEN: usize = MAX_STEPS;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PptpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Validation = 5,
    Shape = 6,
    Checkpoint = 7,
    OutOfRange = 8,
    Panic = 98,
    Other = 99,
}

/// A loaded, validated session.
pub struct PptpSession {
    session: Session,
}

/// A trained model loaded from a checkpoint.
pub struct PptpModel {
    model: CoreModel,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).expect("no interior nul"));
}

fn status_of(e: &Error) -> PptpStatus {
    match e {
        Error::Io(_) | Error::SessionWrite { .. } => PptpStatus::Io,
        Error::Format { .. } | Error::Json(_) | Error::MissingChannel(_) => PptpStatus::Format,
        Error::Validation(_) | Error::NotEnoughSamples { .. } | Error::Config(_) => PptpStatus::Validation,
        Error::Shape(_) => PptpStatus::Shape,
        Error::Checkpoint(_) => PptpStatus::Checkpoint,
        _ => PptpStatus::Other,
    }
}

/// Runs `f`, converting errors and panics into a status plus message.
fn guard(f: impl FnOnce() -> Result<(), (PptpStatus, String)>) -> PptpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            PptpStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            PptpStatus::Panic
        }
    }
}

fn core(e: Error) -> (PptpStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (PptpStatus, String) {
    (PptpStatus::NullPointer, format!("{what} is null"))
}

unsafe fn path_arg(path: *const c_char) -> Result<String, (PptpStatus, String)> {
    if path.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(path)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| (PptpStatus::InvalidArgument, "path is not UTF-8".into()))
}

/// Message for the last failed call on this thread; empty after a success.
/// Valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn pptp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Loads and validates a session directory.
///
/// # Safety
/// `dir` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pptp_session_load(dir: *const c_char, out: *mut *mut PptpSession) -> PptpStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let dir = path_arg(dir)?;
        let session = load_session(dir).map_err(core)?;
        *out = Box::into_raw(Box::new(PptpSession { session }));
        Ok(())
    })
}

/// # Safety
/// `session` must come from [`pptp_session_load`] and not be freed yet, or be null.
#[no_mangle]
pub unsafe extern "C" fn pptp_session_free(session: *mut PptpSession) {
    if !session.is_null() {
        drop(Box::from_raw(session));
    }
}

/// Number of analysis frames under the default windowing.
///
/// # Safety
/// `session` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pptp_session_frame_count(session: *const PptpSession, out: *mut usize) -> PptpStatus {
    guard(|| {
        let s = session.as_ref().ok_or_else(|| null("session"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = frame_stream(&s.session, &WindowingConfig::default()).map_err(core)?.len();
        Ok(())
    })
}

/// Writes the failure-risk vector as of `at_ms` into `out[0..10]`. Pass
/// `gamma <= 0` for the default discount.
///
/// # Safety
/// `session` must be a live handle; `out` must hold `PPTP_CP_LEN` doubles.
#[no_mangle]
pub unsafe extern "C" fn pptp_session_failure_risk(
    session: *const PptpSession,
    at_ms: i64,
    gamma: f64,
    out: *mut f64,
) -> PptpStatus {
    guard(|| {
        let s = session.as_ref().ok_or_else(|| null("session"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let gamma = if gamma > 0.0 { gamma } else { DEFAULT_GAMMA };
        let f = failure_risk_vector(&s.session.placements, at_ms, gamma).map_err(core)?;
        std::slice::from_raw_parts_mut(out, PPTP_CP_LEN).copy_from_slice(&f.f);
        Ok(())
    })
}

/// Loads a checkpoint written by the training command.
///
/// # Safety
/// `path` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pptp_model_load(path: *const c_char, out: *mut *mut PptpModel) -> PptpStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let path = path_arg(path)?;
        let model = CoreModel::load(path).map_err(core)?;
        *out = Box::into_raw(Box::new(PptpModel { model }));
        Ok(())
    })
}

/// # Safety
/// `model` must come from [`pptp_model_load`] and not be freed yet, or be null.
#[no_mangle]
pub unsafe extern "C" fn pptp_model_free(model: *mut PptpModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of output classes (3 or 7).
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pptp_model_class_count(model: *const PptpModel, out: *mut usize) -> PptpStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = m.model.config().n_classes;
        Ok(())
    })
}

/// Classifies frame `frame_index` of `session` with every signal present.
/// Writes the class id (0-based) to `out_class` and, when `out_logits` is
/// not null, the logits to `out_logits[0..logits_len]`; `logits_len` must
/// then equal the class count.
///
/// # Safety
/// Handles must be live; `out_class` writable; `out_logits` null or
/// holding `logits_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn pptp_model_predict_frame(
    model: *const PptpModel,
    session: *const PptpSession,
    frame_index: usize,
    out_class: *mut usize,
    out_logits: *mut f64,
    logits_len: usize,
) -> PptpStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let s = session.as_ref().ok_or_else(|| null("session"))?;
        if out_class.is_null() {
            return Err(null("out_class"));
        }
        let n = m.model.config().n_classes;
        if !out_logits.is_null() && logits_len != n {
            return Err((PptpStatus::InvalidArgument, format!("logits buffer holds {logits_len}, model has {n} classes")));
        }
        let frames = frame_stream(&s.session, &WindowingConfig::default()).map_err(core)?;
        let frame = frames.get(frame_index).ok_or_else(|| {
            (PptpStatus::OutOfRange, format!("frame {frame_index} of {}", frames.len()))
        })?;
        let input = ModelInput::from_frame(frame, SignalMask::ALL).map_err(core)?;
        let logits = m.model.logits(&input).map_err(core)?;
        *out_class = pptp_core::model::predict(&logits);
        if !out_logits.is_null() {
            std::slice::from_raw_parts_mut(out_logits, n).copy_from_slice(&logits);
        }
        Ok(())
    })
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn pptp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
