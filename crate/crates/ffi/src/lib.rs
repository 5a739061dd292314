//! C ABI for capex.
//!
//! Sessions are opaque handles. Structured data crosses the boundary as
//! UTF-8 JSON strings owned by the library; release them with
//! `capex_string_free`. Every function returns a `CapexStatus`; on failure
//! `capex_last_error` describes what went wrong on the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use capex::bn::dirichlet_expected_kl;
use capex::learn::{LearnConfig, Mode};
use capex::scenario::Scenario;
use capex::session::{CreateSession, Observation, Session, SessionError};
use capex::sim::run_trial;
use capex::Error;
use serde::{Deserialize, Serialize};

/// Result of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CapexStatus {
    Ok = 0,
    /// Null pointer or non-UTF-8 string.
    InvalidArgument = 1,
    /// Input rejected: bad definition, binding or value.
    Validation = 2,
    /// Request not allowed in the session's current state.
    Conflict = 3,
    /// Runtime failure.
    Runtime = 4,
    /// The library panicked; the handle should not be used again.
    Panic = 5,
}

/// A learning session.
pub struct CapexSession {
    inner: Session,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

struct Fail(CapexStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let status = if e.is_validation() {
            CapexStatus::Validation
        } else {
            CapexStatus::Runtime
        };
        Fail(status, e.to_string())
    }
}

impl From<SessionError> for Fail {
    fn from(e: SessionError) -> Self {
        match e {
            SessionError::Conflict(m) => Fail(CapexStatus::Conflict, m),
            SessionError::Invalid(inner) => inner.into(),
        }
    }
}

impl From<serde_json::Error> for Fail {
    fn from(e: serde_json::Error) -> Self {
        Fail(CapexStatus::Validation, e.to_string())
    }
}

fn invalid(msg: &str) -> Fail {
    Fail(CapexStatus::InvalidArgument, msg.to_string())
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> CapexStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            CapexStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            CapexStatus::Panic
        }
    }
}

unsafe fn read_str<'a>(s: *const c_char) -> Result<&'a str, Fail> {
    if s.is_null() {
        return Err(invalid("null string"));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| invalid("string is not UTF-8"))
}

unsafe fn write_json<T: Serialize>(out: *mut *mut c_char, value: &T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(invalid("null output pointer"));
    }
    let json =
        serde_json::to_string(value).map_err(|e| Fail(CapexStatus::Runtime, e.to_string()))?;
    let c = CString::new(json).map_err(|e| Fail(CapexStatus::Runtime, e.to_string()))?;
    *out = c.into_raw();
    Ok(())
}

unsafe fn session_mut<'a>(s: *mut CapexSession) -> Result<&'a mut CapexSession, Fail> {
    s.as_mut().ok_or_else(|| invalid("null session"))
}

/// Message for the last failed call on this thread, or null. Valid until
/// the next call on the same thread.
#[no_mangle]
pub extern "C" fn capex_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn capex_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn capex_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Creates a session from a JSON request
/// (`{"scenario": "<bundled name>" | {...}, "seed": 0, "mode": "active", ...}`).
///
/// # Safety
/// `request_json` must be a valid C string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn capex_session_new(
    request_json: *const c_char,
    out: *mut *mut CapexSession,
) -> CapexStatus {
    guard(|| {
        if out.is_null() {
            return Err(invalid("null output pointer"));
        }
        let req: CreateSession = serde_json::from_str(read_str(request_json)?)?;
        let id = format!("ffi-{}", req.seed);
        let inner = Session::create(id, &req)?;
        *out = Box::into_raw(Box::new(CapexSession { inner }));
        Ok(())
    })
}

/// Restores a session from a snapshot produced by `capex_session_snapshot`.
///
/// # Safety
/// As for `capex_session_new`.
#[no_mangle]
pub unsafe extern "C" fn capex_session_restore(
    snapshot_json: *const c_char,
    out: *mut *mut CapexSession,
) -> CapexStatus {
    guard(|| {
        if out.is_null() {
            return Err(invalid("null output pointer"));
        }
        let inner: Session = serde_json::from_str(read_str(snapshot_json)?)?;
        *out = Box::into_raw(Box::new(CapexSession { inner }));
        Ok(())
    })
}

/// Destroys a session. Null is ignored.
///
/// # Safety
/// `s` must come from `capex_session_new`/`capex_session_restore` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn capex_session_free(s: *mut CapexSession) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Proposes the next experiment (or repeats the pending one) as JSON.
/// With `redraw` set while an experiment is pending, returns `Conflict`.
///
/// # Safety
/// `s` must be a live session; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn capex_session_next_query(
    s: *mut CapexSession,
    redraw: bool,
    out_json: *mut *mut c_char,
) -> CapexStatus {
    guard(|| {
        let s = session_mut(s)?;
        let q = s.inner.next_query(redraw)?;
        write_json(out_json, &q)
    })
}

/// Reports the outcome of the pending experiment
/// (`{"outcome": {...}, "situation": {...}, "attributes": {...}}`).
/// On failure the session is unchanged.
///
/// # Safety
/// As for `capex_session_next_query`; `observation_json` must be a valid C string.
#[no_mangle]
pub unsafe extern "C" fn capex_session_observe(
    s: *mut CapexSession,
    observation_json: *const c_char,
    out_json: *mut *mut c_char,
) -> CapexStatus {
    guard(|| {
        let s = session_mut(s)?;
        let obs: Observation = serde_json::from_str(read_str(observation_json)?)?;
        let mut next = s.inner.clone();
        let summary = next.post_observation(&obs)?;
        write_json(out_json, &summary)?;
        s.inner = next;
        Ok(())
    })
}

/// Full session state (model, trace, pending proposal, scores) as JSON.
///
/// # Safety
/// As for `capex_session_next_query`.
#[no_mangle]
pub unsafe extern "C" fn capex_session_state(
    s: *mut CapexSession,
    out_json: *mut *mut c_char,
) -> CapexStatus {
    guard(|| {
        let s = session_mut(s)?;
        write_json(out_json, &s.inner.state()?)
    })
}

/// Score report at `threshold` (NaN selects the session default).
///
/// # Safety
/// As for `capex_session_next_query`.
#[no_mangle]
pub unsafe extern "C" fn capex_session_scores(
    s: *mut CapexSession,
    threshold: f64,
    out_json: *mut *mut c_char,
) -> CapexStatus {
    guard(|| {
        let s = session_mut(s)?;
        let t = (!threshold.is_nan()).then_some(threshold);
        let report = s
            .inner
            .scores(t)?
            .ok_or_else(|| Fail(CapexStatus::Validation, "session has no reference".into()))?;
        write_json(out_json, &report)
    })
}

/// Serialized session, suitable for `capex_session_restore`.
///
/// # Safety
/// As for `capex_session_next_query`.
#[no_mangle]
pub unsafe extern "C" fn capex_session_snapshot(
    s: *mut CapexSession,
    out_json: *mut *mut c_char,
) -> CapexStatus {
    guard(|| {
        let s = session_mut(s)?;
        write_json(out_json, &s.inner)
    })
}

/// Current model error of the session.
///
/// # Safety
/// `s` must be a live session; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn capex_session_model_error(
    s: *mut CapexSession,
    out: *mut f64,
) -> CapexStatus {
    guard(|| {
        let s = session_mut(s)?;
        if out.is_null() {
            return Err(invalid("null output pointer"));
        }
        *out = s.inner.model_error();
        Ok(())
    })
}

/// Expected KL risk of a Dirichlet row with pseudo-counts `alpha[0..len]`.
///
/// # Safety
/// `alpha` must point to `len` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn capex_dirichlet_expected_kl(
    alpha: *const f64,
    len: usize,
    out: *mut f64,
) -> CapexStatus {
    guard(|| {
        if alpha.is_null() || out.is_null() {
            return Err(invalid("null pointer"));
        }
        let a = std::slice::from_raw_parts(alpha, len);
        *out = dirichlet_expected_kl(a)?;
        Ok(())
    })
}

#[derive(Deserialize)]
struct SimulateRequest {
    scenario: String,
    #[serde(default)]
    mode: Option<Mode>,
    iters: u64,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    random_truth: bool,
}

#[derive(Serialize)]
struct SimulateResponse<'a> {
    trace: &'a [capex::learn::TraceRecord],
    kl_to_truth: &'a [f64],
    model: capex::bn::ModelDocument,
}

/// Runs a simulated trial
/// (`{"scenario": "...", "mode": "active", "iters": 150, "seed": 0, "random_truth": false}`)
/// and returns `{"trace": [...], "kl_to_truth": [...], "model": {...}}`.
///
/// # Safety
/// `request_json` must be a valid C string; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn capex_simulate(
    request_json: *const c_char,
    out_json: *mut *mut c_char,
) -> CapexStatus {
    guard(|| {
        let req: SimulateRequest = serde_json::from_str(read_str(request_json)?)?;
        let mut scenario = Scenario::load(&req.scenario)?;
        if req.random_truth {
            scenario.truth_cpt = None;
        }
        let config = LearnConfig {
            max_iter: req.iters,
            mode: req.mode.unwrap_or(Mode::Active),
            seed: req.seed,
            refinement: scenario.refinement_config(),
        };
        let trial = run_trial(&scenario, &config)?;
        write_json(
            out_json,
            &SimulateResponse {
                trace: &trial.output.trace,
                kl_to_truth: &trial.kl,
                model: trial.output.learner.model.to_document(Some(req.seed)),
            },
        )
    })
}
