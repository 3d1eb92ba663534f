//! C ABI over the simulator and the chain analytics.
//!
//! Results travel as JSON strings owned by an opaque [`CrahnReport`]
//! handle; callers read them with [`crahn_report_json`] and release them
//! with [`crahn_report_free`]. Every entry point returns a [`CrahnStatus`];
//! on failure [`crahn_last_error`] yields a thread-local message that stays
//! valid until the next call on the same thread.
//!
//! The header `include/crahn.h` is generated by cbindgen at build time.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use crahn_core::analysis::{analyze, validation_grids, AnalyzeConfig};
use crahn_core::config::ScenarioConfig;
use crahn_core::engine::run_replications;

/// Status codes returned by every FFI entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrahnStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    /// The configuration failed validation; details via `crahn_last_error`.
    InvalidConfig = 3,
    RuntimeError = 4,
}

/// Opaque result handle owning a JSON document.
pub struct CrahnReport {
    json: CString,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: String) {
    let cleaned = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(cleaned).unwrap_or_default();
    });
}

/// Last error message for this thread; empty when the last call succeeded.
/// The pointer is valid until the next FFI call on the same thread.
#[no_mangle]
pub extern "C" fn crahn_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn crahn_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr().cast()
}

unsafe fn read_utf8<'a>(ptr: *const c_char) -> Result<&'a str, CrahnStatus> {
    if ptr.is_null() {
        set_error("null pointer argument".into());
        return Err(CrahnStatus::NullPointer);
    }
    CStr::from_ptr(ptr).to_str().map_err(|e| {
        set_error(format!("argument is not valid UTF-8: {e}"));
        CrahnStatus::InvalidUtf8
    })
}

fn deliver(out: *mut *mut CrahnReport, json: String) -> CrahnStatus {
    match CString::new(json) {
        Ok(json) => {
            let handle = Box::new(CrahnReport { json });
            unsafe { *out = Box::into_raw(handle) };
            set_error(String::new());
            CrahnStatus::Ok
        }
        Err(e) => {
            set_error(format!("result contains interior NUL: {e}"));
            CrahnStatus::RuntimeError
        }
    }
}

fn guarded(out: *mut *mut CrahnReport, body: impl FnOnce() -> Result<String, CrahnStatus>) -> CrahnStatus {
    if out.is_null() {
        set_error("null output pointer".into());
        return CrahnStatus::NullPointer;
    }
    unsafe { *out = ptr::null_mut() };
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(json)) => deliver(out, json),
        Ok(Err(status)) => status,
        Err(_) => {
            set_error("internal panic".into());
            CrahnStatus::RuntimeError
        }
    }
}

/// Runs a scenario described by a `ScenarioConfig` JSON document (missing
/// fields take their defaults) and returns `{"reports": [...],
/// "summary": {...}}`.
///
/// # Safety
/// `config_json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn crahn_run_scenario_json(
    config_json: *const c_char,
    out: *mut *mut CrahnReport,
) -> CrahnStatus {
    guarded(out, || {
        let text = read_utf8(config_json)?;
        let cfg = ScenarioConfig::from_json(text).map_err(|e| {
            set_error(e.to_string());
            CrahnStatus::InvalidConfig
        })?;
        if let Err(e) = cfg.resolve() {
            set_error(e.to_string());
            return Err(CrahnStatus::InvalidConfig);
        }
        let (reports, summary) = run_replications(&cfg).map_err(|e| {
            set_error(e.to_string());
            CrahnStatus::InvalidConfig
        })?;
        let doc = serde_json::json!({ "reports": reports, "summary": summary });
        Ok(doc.to_string())
    })
}

/// Solves the chain over an SU-load sweep described by an `AnalyzeConfig`
/// JSON document and returns the rows as a JSON array.
///
/// # Safety
/// `params_json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn crahn_analyze_json(
    params_json: *const c_char,
    out: *mut *mut CrahnReport,
) -> CrahnStatus {
    guarded(out, || {
        let text = read_utf8(params_json)?;
        let cfg: AnalyzeConfig = serde_json::from_str(text).map_err(|e| {
            set_error(format!("cannot parse analyze parameters: {e}"));
            CrahnStatus::InvalidConfig
        })?;
        let rows = analyze(&cfg).map_err(|e| {
            set_error(e.to_string());
            CrahnStatus::InvalidConfig
        })?;
        serde_json::to_string(&rows).map_err(|e| {
            set_error(e.to_string());
            CrahnStatus::RuntimeError
        })
    })
}

/// Runs the paired sim-vs-analytic validation grids. The returned JSON
/// carries per-grid maxima and the overall `pass` flag.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn crahn_validate(
    seed: u64,
    tolerance_pct: f64,
    out: *mut *mut CrahnReport,
) -> CrahnStatus {
    guarded(out, || {
        let outcome = validation_grids(seed, tolerance_pct).map_err(|e| {
            set_error(e.to_string());
            CrahnStatus::InvalidConfig
        })?;
        serde_json::to_string(&outcome).map_err(|e| {
            set_error(e.to_string());
            CrahnStatus::RuntimeError
        })
    })
}

/// Borrowed pointer to the handle's JSON document; valid until
/// `crahn_report_free`.
///
/// # Safety
/// `report` must be a handle produced by this library (or null).
#[no_mangle]
pub unsafe extern "C" fn crahn_report_json(report: *const CrahnReport) -> *const c_char {
    if report.is_null() {
        return ptr::null();
    }
    (*report).json.as_ptr()
}

/// Releases a result handle. Passing null is a no-op.
///
/// # Safety
/// `report` must be a handle produced by this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn crahn_report_free(report: *mut CrahnReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}
