//! C ABI for the `ftte` simulator.
//!
//! Every fallible function returns an [`FtteStatus`]. On failure the message
//! is kept per thread and can be read with [`ftte_last_error`]. Handles are
//! opaque and must be released with their matching `_free` function; strings
//! returned as `char *` are owned by the caller and released with
//! [`ftte_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use ftte::experiment::{apply_override, run_repeat, ExperimentConfig, RunOutput};
use ftte::protocol::staleness_weight;
use ftte::sim::EventKind;
use ftte::Error;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FtteStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Io = 4,
    InfeasibleBudget = 5,
    InfeasiblePartition = 6,
    OutOfRange = 7,
    Simulation = 8,
    Panic = 9,
}

/// Trace event kinds, matching the `event` column of the trace CSV.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FtteEvent {
    Dispatch = 0,
    ClientFinished = 1,
    Aggregation = 2,
    Eval = 3,
}

/// One trace row. `accuracy` and `loss` are NaN unless `event` is `Eval`.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct FtteTraceRecord {
    pub step: u64,
    pub sim_time_s: f64,
    pub event: FtteEvent,
    pub version: u64,
    pub accuracy: f64,
    pub loss: f64,
    pub upload_bytes_cum: u64,
    pub download_bytes_cum: u64,
}

/// Headline numbers of a finished run.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct FtteRunMetrics {
    pub reached: bool,
    pub oscillating: bool,
    /// Step at which the target was first met; 0 when not reached.
    pub steps_to_target: u64,
    /// Simulated seconds at that step; NaN when not reached.
    pub sim_time_to_target_s: f64,
    pub final_step: u64,
    pub final_sim_time_s: f64,
    /// Accuracy at the last evaluation; NaN if none ran.
    pub final_accuracy: f64,
    pub aggregations: u64,
    pub upload_bytes: u64,
    pub download_bytes: u64,
}

/// A validated experiment configuration.
pub struct FtteExperiment {
    config: ExperimentConfig,
}

/// The trace and summary of one simulated repeat.
pub struct FtteRun {
    output: RunOutput,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn clear_last_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Failure(FtteStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Config(_) | Error::Json(_) | Error::InvalidSpec(_) => FtteStatus::Config,
            Error::Io { .. } | Error::Csv(_) => FtteStatus::Io,
            Error::InfeasibleBudget { .. } => FtteStatus::InfeasibleBudget,
            Error::InfeasiblePartition(_) | Error::EmptyDataset => FtteStatus::InfeasiblePartition,
            _ => FtteStatus::Simulation,
        };
        Failure(status, e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> FtteStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            clear_last_error();
            FtteStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_last_error(format!("panic: {msg}"));
            FtteStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(FtteStatus::NullPointer, format!("`{what}` is null"))
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Failure(FtteStatus::InvalidUtf8, format!("`{what}`: {e}")))
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

fn into_c_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|e| Failure(FtteStatus::InvalidUtf8, e.to_string()))
}

unsafe fn write_out<T>(
    out: *mut T,
    make: impl FnOnce() -> Result<T, Failure>,
) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    out.write(make()?);
    Ok(())
}

/// Message of the last failed call on this thread, or NULL after a success.
/// The pointer stays valid until the next `ftte_*` call on the same thread.
#[no_mangle]
pub extern "C" fn ftte_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ftte_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from an `ftte_*` function and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn ftte_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// FTTE staleness weight `1 / (1 + age * variance)`.
#[no_mangle]
pub extern "C" fn ftte_staleness_weight(age: u64, variance: f64) -> f64 {
    staleness_weight(age, variance)
}

/// Parses and validates a JSON experiment configuration.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ftte_experiment_from_json(
    json: *const c_char,
    out: *mut *mut FtteExperiment,
) -> FtteStatus {
    guard(|| {
        let text = read_str(json, "json")?;
        write_out(out, || {
            let config = ExperimentConfig::from_json(text)?;
            Ok(Box::into_raw(Box::new(FtteExperiment { config })))
        })
    })
}

/// Reads a JSON experiment configuration from `path`.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ftte_experiment_load(
    path: *const c_char,
    out: *mut *mut FtteExperiment,
) -> FtteStatus {
    guard(|| {
        let path = read_str(path, "path")?;
        write_out(out, || {
            let config = ExperimentConfig::load(Path::new(path), &[])?;
            Ok(Box::into_raw(Box::new(FtteExperiment { config })))
        })
    })
}

/// Applies a dotted `key=value` override, e.g. `"dataset.dim=8"`. The
/// experiment is left unchanged if the result does not validate.
///
/// # Safety
/// `exp` must be a live handle; `assignment` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ftte_experiment_set(
    exp: *mut FtteExperiment,
    assignment: *const c_char,
) -> FtteStatus {
    guard(|| {
        let exp = exp.as_mut().ok_or_else(|| null("exp"))?;
        let assignment = read_str(assignment, "assignment")?;
        let mut doc: serde_json::Value =
            serde_json::from_str(&exp.config.to_json()).map_err(Error::from)?;
        apply_override(&mut doc, assignment)?;
        exp.config = ExperimentConfig::from_value(doc)?;
        Ok(())
    })
}

/// Resolved configuration as pretty JSON.
///
/// # Safety
/// `exp` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ftte_experiment_to_json(
    exp: *const FtteExperiment,
    out: *mut *mut c_char,
) -> FtteStatus {
    guard(|| {
        let exp = borrow(exp, "exp")?;
        write_out(out, || into_c_string(exp.config.to_json()))
    })
}

/// Number of repeats configured, or 0 for a NULL handle.
///
/// # Safety
/// `exp` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ftte_experiment_repeats(exp: *const FtteExperiment) -> usize {
    exp.as_ref().map_or(0, |e| e.config.repeats)
}

/// # Safety
/// `exp` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ftte_experiment_free(exp: *mut FtteExperiment) {
    if !exp.is_null() {
        drop(Box::from_raw(exp));
    }
}

/// Simulates repeat `repeat` in memory. Nothing is written to disk.
///
/// # Safety
/// `exp` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ftte_run(
    exp: *const FtteExperiment,
    repeat: usize,
    out: *mut *mut FtteRun,
) -> FtteStatus {
    guard(|| {
        let exp = borrow(exp, "exp")?;
        if repeat >= exp.config.repeats {
            return Err(Failure(
                FtteStatus::OutOfRange,
                format!(
                    "repeat {repeat} out of range (repeats = {})",
                    exp.config.repeats
                ),
            ));
        }
        write_out(out, || {
            let output = run_repeat(&exp.config, repeat)?;
            Ok(Box::into_raw(Box::new(FtteRun { output })))
        })
    })
}

/// # Safety
/// `run` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ftte_run_metrics(
    run: *const FtteRun,
    out: *mut FtteRunMetrics,
) -> FtteStatus {
    guard(|| {
        let m = &borrow(run, "run")?.output.summary.metrics;
        let metrics = FtteRunMetrics {
            reached: m.reached,
            oscillating: m.oscillating,
            steps_to_target: m.steps_to_target.unwrap_or(0),
            sim_time_to_target_s: m.sim_time_to_target_s.unwrap_or(f64::NAN),
            final_step: m.final_step,
            final_sim_time_s: m.final_sim_time_s,
            final_accuracy: m.final_accuracy.unwrap_or(f64::NAN),
            aggregations: m.aggregations as u64,
            upload_bytes: m.upload_bytes,
            download_bytes: m.download_bytes,
        };
        write_out(out, || Ok(metrics))
    })
}

/// Number of trace rows, or 0 for a NULL handle.
///
/// # Safety
/// `run` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ftte_run_trace_len(run: *const FtteRun) -> usize {
    run.as_ref().map_or(0, |r| r.output.trace.records.len())
}

/// # Safety
/// `run` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ftte_run_trace_record(
    run: *const FtteRun,
    index: usize,
    out: *mut FtteTraceRecord,
) -> FtteStatus {
    guard(|| {
        let records = &borrow(run, "run")?.output.trace.records;
        let r = records.get(index).ok_or_else(|| {
            Failure(
                FtteStatus::OutOfRange,
                format!("trace index {index} out of range (len = {})", records.len()),
            )
        })?;
        let event = match r.event {
            EventKind::Dispatch => FtteEvent::Dispatch,
            EventKind::ClientFinished => FtteEvent::ClientFinished,
            EventKind::Aggregation => FtteEvent::Aggregation,
            EventKind::Eval => FtteEvent::Eval,
        };
        let record = FtteTraceRecord {
            step: r.step,
            sim_time_s: r.sim_time_s,
            event,
            version: r.version,
            accuracy: r.accuracy.unwrap_or(f64::NAN),
            loss: r.loss.unwrap_or(f64::NAN),
            upload_bytes_cum: r.upload_bytes_cum,
            download_bytes_cum: r.download_bytes_cum,
        };
        write_out(out, || Ok(record))
    })
}

/// Trace in the same CSV form the CLI writes.
///
/// # Safety
/// `run` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ftte_run_trace_csv(
    run: *const FtteRun,
    out: *mut *mut c_char,
) -> FtteStatus {
    guard(|| {
        let run = borrow(run, "run")?;
        write_out(out, || into_c_string(run.output.trace.to_csv()))
    })
}

/// Run summary as JSON, one entry of the CLI's `summary.json` `runs` array.
///
/// # Safety
/// `run` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ftte_run_summary_json(
    run: *const FtteRun,
    out: *mut *mut c_char,
) -> FtteStatus {
    guard(|| {
        let run = borrow(run, "run")?;
        write_out(out, || {
            let json = serde_json::to_string_pretty(&run.output.summary).map_err(Error::from)?;
            into_c_string(json)
        })
    })
}

/// # Safety
/// `run` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ftte_run_free(run: *mut FtteRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}
