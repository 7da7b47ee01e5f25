//! C ABI over scenario runs and basic torus maps.
//!
//! Handles are opaque and owned by the caller once returned; release them
//! with the matching `*_free`. Strings returned as `char *` are released
//! with `fs_string_free`. Every fallible call returns an `FsStatus`; the
//! message of the last failure on the calling thread is available through
//! `fs_last_error`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use foliashadow::error::FsError;
use foliashadow::map::ToralMap;
use foliashadow::scenario::{list_scenarios, run_scenario, Manifest, ScenarioConfig, Step};
use foliashadow::torus::{torus_dist, TorusPoint};

/// Status codes. `FS_STATUS_OK` and `FS_STATUS_VERIFICATION_FAILED` match
/// the CLI exit codes 0 and 1, `FS_STATUS_CONFIG_ERROR` matches 2.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FsStatus {
    Ok = 0,
    VerificationFailed = 1,
    ConfigError = 2,
    NullPointer = 3,
    InvalidUtf8 = 4,
    InvalidInput = 5,
    IoError = 6,
    ComputationError = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FsStep {
    CrSet = 0,
    Shadow = 1,
    Semiconj = 2,
    ExpansivityScan = 3,
    Quotient = 4,
    All = 5,
}

impl From<FsStep> for Step {
    fn from(s: FsStep) -> Self {
        match s {
            FsStep::CrSet => Step::CrSet,
            FsStep::Shadow => Step::Shadow,
            FsStep::Semiconj => Step::Semiconj,
            FsStep::ExpansivityScan => Step::ExpansivityScan,
            FsStep::Quotient => Step::Quotient,
            FsStep::All => Step::All,
        }
    }
}

/// A parsed and validated scenario.
pub struct FsScenario(ScenarioConfig);

/// The manifest of a finished run.
pub struct FsReport(Manifest);

/// A toral automorphism, optionally perturbed.
pub struct FsMap(ToralMap);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(e: &FsError) -> FsStatus {
    match e {
        FsError::Config(_) => FsStatus::ConfigError,
        FsError::Io(_) => FsStatus::IoError,
        FsError::InvalidInput(_) | FsError::EmptySet => FsStatus::InvalidInput,
        _ => FsStatus::ComputationError,
    }
}

fn fail(e: FsError) -> FsStatus {
    let s = status_of(&e);
    set_error(e.to_string());
    s
}

fn guard(f: impl FnOnce() -> FsStatus) -> FsStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            FsStatus::Panic
        }
    }
}

unsafe fn read_str<'a>(p: *const c_char) -> Result<&'a str, FsStatus> {
    if p.is_null() {
        set_error("null string argument");
        return Err(FsStatus::NullPointer);
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error("string argument is not valid UTF-8");
        FsStatus::InvalidUtf8
    })
}

fn to_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " "))
        .map(CString::into_raw)
        .unwrap_or(ptr::null_mut())
}

unsafe fn put<T>(out: *mut *mut T, value: T) {
    *out = Box::into_raw(Box::new(value));
}

/// Library version, a static string.
#[no_mangle]
pub extern "C" fn fs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn fs_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Releases a string returned by the library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn fs_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Built-in scenarios as a JSON array of `{"name", "description"}`.
#[no_mangle]
pub extern "C" fn fs_list_scenarios() -> *mut c_char {
    let items: Vec<serde_json::Value> = list_scenarios()
        .into_iter()
        .map(|(n, d)| serde_json::json!({ "name": n, "description": d }))
        .collect();
    to_c_string(serde_json::Value::Array(items).to_string())
}

unsafe fn scenario_from(
    text: *const c_char,
    out: *mut *mut FsScenario,
    parse: fn(&str) -> foliashadow::error::Result<ScenarioConfig>,
) -> FsStatus {
    guard(|| {
        if out.is_null() {
            set_error("null output pointer");
            return FsStatus::NullPointer;
        }
        *out = ptr::null_mut();
        let t = match read_str(text) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match parse(t) {
            Ok(c) => {
                put(out, FsScenario(c));
                FsStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Parses a TOML scenario.
///
/// # Safety
/// `text` must be a NUL-terminated string, `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fs_scenario_from_toml(text: *const c_char, out: *mut *mut FsScenario) -> FsStatus {
    scenario_from(text, out, ScenarioConfig::from_toml)
}

/// Parses a JSON scenario.
///
/// # Safety
/// `text` must be a NUL-terminated string, `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fs_scenario_from_json(text: *const c_char, out: *mut *mut FsScenario) -> FsStatus {
    scenario_from(text, out, ScenarioConfig::from_json)
}

/// Loads a scenario file (`.json` or TOML) or `builtin:<name>`.
///
/// # Safety
/// `path` must be a NUL-terminated string, `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fs_scenario_load(path: *const c_char, out: *mut *mut FsScenario) -> FsStatus {
    scenario_from(path, out, ScenarioConfig::load)
}

/// # Safety
/// `s` must be NULL or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn fs_scenario_free(s: *mut FsScenario) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// # Safety
/// `s` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn fs_scenario_set_seed(s: *mut FsScenario, seed: u64) -> FsStatus {
    guard(|| match s.as_mut() {
        Some(s) => {
            s.0.seed = seed;
            FsStatus::Ok
        }
        None => {
            set_error("null scenario");
            FsStatus::NullPointer
        }
    })
}

/// Runs `step` and writes reports into `out_dir`. On `FS_STATUS_OK` and
/// `FS_STATUS_VERIFICATION_FAILED` a report handle is stored in `out`.
///
/// # Safety
/// `s` must be a live handle, `out_dir` a NUL-terminated string and `out`
/// a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fs_run(
    s: *const FsScenario,
    step: FsStep,
    out_dir: *const c_char,
    out: *mut *mut FsReport,
) -> FsStatus {
    guard(|| {
        if out.is_null() {
            set_error("null output pointer");
            return FsStatus::NullPointer;
        }
        *out = ptr::null_mut();
        let Some(s) = s.as_ref() else {
            set_error("null scenario");
            return FsStatus::NullPointer;
        };
        let dir = match read_str(out_dir) {
            Ok(d) => d,
            Err(st) => return st,
        };
        match run_scenario(&s.0, step.into(), Path::new(dir)) {
            Ok(m) => {
                let pass = m.pass;
                put(out, FsReport(m));
                if pass {
                    FsStatus::Ok
                } else {
                    set_error("verification failed");
                    FsStatus::VerificationFailed
                }
            }
            Err(e) => fail(e),
        }
    })
}

/// 1 when every step passed, 0 otherwise or for NULL.
///
/// # Safety
/// `r` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fs_report_passed(r: *const FsReport) -> i32 {
    r.as_ref().map_or(0, |r| r.0.pass as i32)
}

/// Number of steps in the report.
///
/// # Safety
/// `r` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fs_report_step_count(r: *const FsReport) -> usize {
    r.as_ref().map_or(0, |r| r.0.steps.len())
}

/// The manifest as JSON, or NULL for a NULL handle.
///
/// # Safety
/// `r` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fs_report_manifest_json(r: *const FsReport) -> *mut c_char {
    match r.as_ref().map(|r| serde_json::to_string(&r.0)) {
        Some(Ok(s)) => to_c_string(s),
        _ => ptr::null_mut(),
    }
}

/// # Safety
/// `r` must be NULL or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn fs_report_free(r: *mut FsReport) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// A linear automorphism from a row-major `d × d` integer matrix.
///
/// # Safety
/// `matrix` must point to `d * d` values, `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn fs_map_new(matrix: *const i64, d: usize, out: *mut *mut FsMap) -> FsStatus {
    guard(|| {
        if out.is_null() || matrix.is_null() {
            set_error("null pointer argument");
            return FsStatus::NullPointer;
        }
        *out = ptr::null_mut();
        if d == 0 || d > 3 {
            set_error(format!("dimension {d} outside 1..=3"));
            return FsStatus::InvalidInput;
        }
        let flat = std::slice::from_raw_parts(matrix, d * d);
        let rows = flat.chunks(d).map(<[i64]>::to_vec).collect();
        match ToralMap::linear(rows) {
            Ok(m) => {
                put(out, FsMap(m));
                FsStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `m` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fs_map_dim(m: *const FsMap) -> usize {
    m.as_ref().map_or(0, |m| m.0.dim())
}

unsafe fn map_point(
    m: *const FsMap,
    x: *const f64,
    y: *mut f64,
    op: impl FnOnce(&ToralMap, &TorusPoint) -> foliashadow::error::Result<TorusPoint>,
) -> FsStatus {
    guard(|| {
        let Some(m) = m.as_ref() else {
            set_error("null map");
            return FsStatus::NullPointer;
        };
        if x.is_null() || y.is_null() {
            set_error("null point");
            return FsStatus::NullPointer;
        }
        let d = m.0.dim();
        let p = match TorusPoint::wrap(std::slice::from_raw_parts(x, d)) {
            Ok(p) => p,
            Err(e) => return fail(e),
        };
        match op(&m.0, &p) {
            Ok(q) => {
                std::slice::from_raw_parts_mut(y, d).copy_from_slice(q.coords());
                FsStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// `y = f(x)`; both arrays hold `fs_map_dim(m)` values.
///
/// # Safety
/// `m` must be a live handle and `x`, `y` valid for `d` doubles.
#[no_mangle]
pub unsafe extern "C" fn fs_map_apply(m: *const FsMap, x: *const f64, y: *mut f64) -> FsStatus {
    map_point(m, x, y, |f, p| Ok(f.apply(p)))
}

/// `y = f^{-1}(x)`.
///
/// # Safety
/// `m` must be a live handle and `x`, `y` valid for `d` doubles.
#[no_mangle]
pub unsafe extern "C" fn fs_map_apply_inverse(m: *const FsMap, x: *const f64, y: *mut f64) -> FsStatus {
    map_point(m, x, y, |f, p| f.apply_inverse(p))
}

/// # Safety
/// `m` must be NULL or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn fs_map_free(m: *mut FsMap) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Flat torus distance between two points of dimension `d`.
///
/// # Safety
/// `x`, `y` must be valid for `d` doubles and `out` for one.
#[no_mangle]
pub unsafe extern "C" fn fs_torus_dist(x: *const f64, y: *const f64, d: usize, out: *mut f64) -> FsStatus {
    guard(|| {
        if x.is_null() || y.is_null() || out.is_null() {
            set_error("null pointer argument");
            return FsStatus::NullPointer;
        }
        let a = TorusPoint::wrap(std::slice::from_raw_parts(x, d));
        let b = TorusPoint::wrap(std::slice::from_raw_parts(y, d));
        match a.and_then(|a| b.and_then(|b| torus_dist(&a, &b))) {
            Ok(v) => {
                *out = v;
                FsStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}
