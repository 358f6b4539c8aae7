//! C interface to the simulator and solver.
//!
//! Objects cross the boundary as opaque handles created by `*_new`/`*_from_*`
//! functions and released by the matching `*_free`. Every fallible call
//! returns a [`RicsStatus`]; on failure [`rics_last_error_message`] describes
//! the error for the calling thread. Panics are caught and reported as
//! [`RicsStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use rics_core::aioa::{default_init, run_aioa, AioaOptions, SolveReport};
use rics_core::channel::{draw_channels, ChannelSet};
use rics_core::scenario::{generate_scenario, parse_config, Config, Scenario};
use rics_core::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RicsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    Constraint = 4,
    Infeasible = 5,
    Numerical = 6,
    Io = 7,
    BufferTooSmall = 8,
    Panic = 9,
    Other = 10,
}

/// Validated experiment configuration.
pub struct RicsConfig(Config);

/// A scenario together with its channel realization.
pub struct RicsScenario {
    scenario: Scenario,
    channels: ChannelSet,
}

/// Outcome of a solve.
pub struct RicsReport(SolveReport);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> RicsStatus {
    match e {
        Error::Parse(_) | Error::InvalidSweep(_) | Error::Unknown { .. } | Error::Json(_) => RicsStatus::Parse,
        Error::Constraint { .. } | Error::CoincidentPositions(_) | Error::DegenerateTask(_) | Error::Dimension(_) | Error::TooFewTrials(_) => {
            RicsStatus::Constraint
        }
        Error::OutageInfeasible(_) | Error::InfeasibleSet(_) => RicsStatus::Infeasible,
        Error::NonFiniteSurrogate(_) | Error::NonFiniteGradient(_) | Error::NotHermitian(_) | Error::Empty(_) => RicsStatus::Numerical,
        Error::Io(_) | Error::Csv(_) => RicsStatus::Io,
    }
}

/// Runs `f`, translating errors and panics into a status.
fn guard<F: FnOnce() -> Result<(), (RicsStatus, String)>>(f: F) -> RicsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            RicsStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".to_string());
            set_error(&format!("internal panic: {msg}"));
            RicsStatus::Panic
        }
    }
}

fn core(e: Error) -> (RicsStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (RicsStatus, String) {
    (RicsStatus::NullPointer, format!("{what} is null"))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, (RicsStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut T, v: T, what: &str) -> Result<(), (RicsStatus, String)> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(v);
    Ok(())
}

/// Message of the last failed call on this thread, or an empty string. The
/// pointer stays valid until the next call into this library on the thread.
#[no_mangle]
pub extern "C" fn rics_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rics_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates a configuration with every parameter at its default.
///
/// # Safety
/// `out` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rics_config_default(out: *mut *mut RicsConfig) -> RicsStatus {
    guard(|| put(out, Box::into_raw(Box::new(RicsConfig(Config::default()))), "out"))
}

/// Parses and validates a JSON configuration.
///
/// # Safety
/// `json` must be null or a NUL-terminated string; `out` null or valid for
/// writes.
#[no_mangle]
pub unsafe extern "C" fn rics_config_from_json(json: *const c_char, out: *mut *mut RicsConfig) -> RicsStatus {
    guard(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        let text = CStr::from_ptr(json).to_str().map_err(|e| (RicsStatus::InvalidUtf8, e.to_string()))?;
        let cfg = parse_config(text).map_err(core)?;
        put(out, Box::into_raw(Box::new(RicsConfig(cfg))), "out")
    })
}

/// # Safety
/// `cfg` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rics_config_free(cfg: *mut RicsConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Draws placement, tasks and channels for one seed.
///
/// # Safety
/// `cfg` must be a live handle or null; `out` null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rics_scenario_new(cfg: *const RicsConfig, seed: u64, out: *mut *mut RicsScenario) -> RicsStatus {
    guard(|| {
        let cfg = &deref(cfg, "cfg")?.0;
        let scenario = generate_scenario(&cfg.system, &cfg.placement, seed);
        let channels = draw_channels(&scenario, seed).map_err(core)?;
        put(out, Box::into_raw(Box::new(RicsScenario { scenario, channels })), "out")
    })
}

/// Element, CV and V2V pair counts of a scenario.
///
/// # Safety
/// `sc` must be a live handle or null; each output null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rics_scenario_dims(sc: *const RicsScenario, l: *mut usize, m: *mut usize, n: *mut usize) -> RicsStatus {
    guard(|| {
        let p = &deref(sc, "sc")?.scenario.params;
        put(l, p.l, "l")?;
        put(m, p.m, "m")?;
        put(n, p.n, "n")
    })
}

/// # Safety
/// `sc` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rics_scenario_free(sc: *mut RicsScenario) {
    if !sc.is_null() {
        drop(Box::from_raw(sc));
    }
}

/// Runs the alternating optimizer from the default start.
///
/// # Safety
/// `sc` must be a live handle or null; `out` null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rics_solve(sc: *const RicsScenario, out: *mut *mut RicsReport) -> RicsStatus {
    guard(|| {
        let s = deref(sc, "sc")?;
        let init = default_init(&s.scenario, &s.channels).map_err(core)?;
        let rep = run_aioa(&s.scenario, &s.channels, &init, &AioaOptions::for_scenario(&s.scenario)).map_err(core)?;
        put(out, Box::into_raw(Box::new(RicsReport(rep))), "out")
    })
}

/// Final total safety coefficient.
///
/// # Safety
/// `rep` must be a live handle or null; `out` null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rics_report_objective(rep: *const RicsReport, out: *mut f64) -> RicsStatus {
    guard(|| put(out, deref(rep, "rep")?.0.final_objective(), "out"))
}

/// Outer iterations run and whether the stop rule fired.
///
/// # Safety
/// `rep` must be a live handle or null; outputs null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rics_report_status(rep: *const RicsReport, iterations: *mut usize, converged: *mut bool) -> RicsStatus {
    guard(|| {
        let r = &deref(rep, "rep")?.0;
        put(iterations, r.iterations, "iterations")?;
        put(converged, r.converged, "converged")
    })
}

/// Copies the objective trace into `buf`. `len` receives the trace length
/// even when `cap` is too small, in which case nothing is copied.
///
/// # Safety
/// `buf` must be valid for `cap` writes (or null with `cap = 0`); `len` null
/// or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rics_report_trace(rep: *const RicsReport, buf: *mut f64, cap: usize, len: *mut usize) -> RicsStatus {
    guard(|| {
        let trace = &deref(rep, "rep")?.0.objective_trace;
        put(len, trace.len(), "len")?;
        if cap < trace.len() {
            return Err((RicsStatus::BufferTooSmall, format!("trace has {} entries, buffer holds {cap}", trace.len())));
        }
        if buf.is_null() {
            return Err(null("buf"));
        }
        ptr::copy_nonoverlapping(trace.as_ptr(), buf, trace.len());
        Ok(())
    })
}

/// Serializes the full report as JSON. Release the string with
/// [`rics_string_free`].
///
/// # Safety
/// `rep` must be a live handle or null; `out` null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rics_report_to_json(rep: *const RicsReport, out: *mut *mut c_char) -> RicsStatus {
    guard(|| {
        let json = deref(rep, "rep")?.0.to_json().map_err(core)?;
        let c = CString::new(json).map_err(|e| (RicsStatus::Other, e.to_string()))?;
        put(out, c.into_raw(), "out")
    })
}

/// # Safety
/// `rep` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rics_report_free(rep: *mut RicsReport) {
    if !rep.is_null() {
        drop(Box::from_raw(rep));
    }
}

/// # Safety
/// `s` must be null or a string returned by this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rics_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_error_maps_to_a_failure_status() {
        let errors = [
            Error::Parse("x".into()),
            Error::Constraint { field: "P_out", bound: "(0,1)", value: 2.0 },
            Error::OutageInfeasible("x".into()),
            Error::NonFiniteGradient("x".into()),
            Error::Io(std::io::Error::other("x")),
        ];
        let codes: Vec<_> = errors.iter().map(status_of).collect();
        assert_eq!(codes, [RicsStatus::Parse, RicsStatus::Constraint, RicsStatus::Infeasible, RicsStatus::Numerical, RicsStatus::Io]);
    }

    #[test]
    fn panics_become_status_codes() {
        let s = guard(|| panic!("boom"));
        assert_eq!(s, RicsStatus::Panic);
        let msg = unsafe { CStr::from_ptr(rics_last_error_message()) }.to_str().unwrap();
        assert!(msg.contains("boom"));
    }
}
