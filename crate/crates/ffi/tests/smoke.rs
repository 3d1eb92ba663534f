//! Exercises the C ABI from Rust: handle lifecycle, status codes, and the
//! JSON payloads other languages would consume.

use std::ffi::{CStr, CString};
use std::ptr;

use crahn_ffi::{
    crahn_analyze_json, crahn_last_error, crahn_report_free, crahn_report_json,
    crahn_run_scenario_json, crahn_version, CrahnReport, CrahnStatus,
};

unsafe fn take_json(report: *mut CrahnReport) -> serde_json::Value {
    let text = CStr::from_ptr(crahn_report_json(report)).to_str().unwrap().to_owned();
    crahn_report_free(report);
    serde_json::from_str(&text).unwrap()
}

#[test]
fn version_is_a_static_string() {
    let v = unsafe { CStr::from_ptr(crahn_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn run_scenario_round_trips_json() {
    let cfg = CString::new(
        r#"{"num_su_pairs": 2, "duration_slots": 4000, "replications": 2,
            "su_traffic": {"arrival_prob": 0.05}, "seed": 3}"#,
    )
    .unwrap();
    let mut report: *mut CrahnReport = ptr::null_mut();
    let status = unsafe { crahn_run_scenario_json(cfg.as_ptr(), &mut report) };
    assert_eq!(status, CrahnStatus::Ok);
    assert!(!report.is_null());
    let doc = unsafe { take_json(report) };
    assert_eq!(doc["reports"].as_array().unwrap().len(), 2);
    assert!(doc["summary"]["throughput_pps"]["mean"].as_f64().unwrap() >= 0.0);
}

#[test]
fn invalid_config_reports_field_diagnostics() {
    let cfg = CString::new(r#"{"num_su_pairs": 0}"#).unwrap();
    let mut report: *mut CrahnReport = ptr::null_mut();
    let status = unsafe { crahn_run_scenario_json(cfg.as_ptr(), &mut report) };
    assert_eq!(status, CrahnStatus::InvalidConfig);
    assert!(report.is_null());
    let err = unsafe { CStr::from_ptr(crahn_last_error()) }.to_str().unwrap();
    assert!(err.contains("num_su_pairs"), "error message: {err}");
}

#[test]
fn null_and_non_utf8_arguments_are_rejected() {
    let mut report: *mut CrahnReport = ptr::null_mut();
    let status = unsafe { crahn_run_scenario_json(ptr::null(), &mut report) };
    assert_eq!(status, CrahnStatus::NullPointer);
    let status = unsafe { crahn_run_scenario_json(CString::new("{}").unwrap().as_ptr(), ptr::null_mut()) };
    assert_eq!(status, CrahnStatus::NullPointer);

    let bad = [0xffu8, 0xfe, 0x00];
    let status =
        unsafe { crahn_run_scenario_json(bad.as_ptr().cast(), &mut report) };
    assert_eq!(status, CrahnStatus::InvalidUtf8);
}

#[test]
fn analyze_returns_rows() {
    let cfg = CString::new(r#"{"p": 0.01, "v": 0.1, "s_values": [0.025, 0.05]}"#).unwrap();
    let mut report: *mut CrahnReport = ptr::null_mut();
    let status = unsafe { crahn_analyze_json(cfg.as_ptr(), &mut report) };
    assert_eq!(status, CrahnStatus::Ok);
    let rows = unsafe { take_json(report) };
    let rows = rows.as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows[0]["theta_analytic"].as_f64().unwrap() > 0.0);
    assert!(rows[1]["theta_analytic"].as_f64().unwrap() > rows[0]["theta_analytic"].as_f64().unwrap());
}

#[test]
fn report_free_tolerates_null() {
    unsafe { crahn_report_free(ptr::null_mut()) };
    assert!(unsafe { crahn_report_json(ptr::null()) }.is_null());
}
