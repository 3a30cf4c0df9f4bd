//! C ABI over the dpilqr planner.
//!
//! Handles are opaque and owned by the caller once returned; free them with
//! the matching `*_free` function. Every fallible call returns a [`DpStatus`]
//! and, on failure, stores a message retrievable with
//! [`dp_last_error_message`] on the same thread.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use dpilqr::cli::ScenarioFile;
use dpilqr::dynamics::AgentModel;
use dpilqr::planner::{run_receding_horizon, PlannerKind, SimulationTrace, Termination};
use dpilqr::sim::{build_scenario, CampaignOptions, MetricsRecord};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    ParseError = 3,
    ValidationError = 4,
    RunError = 5,
    OutOfRange = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DpPlanner {
    Centralized = 0,
    Distributed = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DpTermination {
    GoalsReached = 0,
    StepLimit = 1,
    Diverged = 2,
}

/// A parsed scenario file: scenario, solver and planner settings.
pub struct DpScenario {
    file: ScenarioFile,
}

/// The result of one receding-horizon run.
pub struct DpTrace {
    trace: SimulationTrace,
    models: Vec<AgentModel>,
    record: MetricsRecord,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn fail(status: DpStatus, message: impl Into<String>) -> DpStatus {
    set_error(message);
    status
}

fn guard(f: impl FnOnce() -> DpStatus) -> DpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => fail(DpStatus::Panic, "internal panic"),
    }
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn dp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dp_version() -> *const c_char {
    static VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(s) => s,
        Err(_) => panic!("version contains NUL"),
    };
    VERSION.as_ptr()
}

/// Parses a scenario from TOML text in the `dpilqr solve` file format.
///
/// # Safety
/// `toml_text` must be a valid NUL-terminated string and `out` a valid
/// pointer to writable storage.
#[no_mangle]
pub unsafe extern "C" fn dp_scenario_from_toml(toml_text: *const c_char, out: *mut *mut DpScenario) -> DpStatus {
    guard(|| {
        if toml_text.is_null() || out.is_null() {
            return fail(DpStatus::NullPointer, "null argument");
        }
        let text = match CStr::from_ptr(toml_text).to_str() {
            Ok(t) => t,
            Err(e) => return fail(DpStatus::InvalidUtf8, e.to_string()),
        };
        let file: ScenarioFile = match toml::from_str(text) {
            Ok(f) => f,
            Err(e) => return fail(DpStatus::ParseError, e.to_string()),
        };
        if let Err(e) = file.solver.validate().and_then(|_| file.scenario.validate()) {
            return fail(DpStatus::ValidationError, e.to_string());
        }
        *out = Box::into_raw(Box::new(DpScenario { file }));
        DpStatus::Ok
    })
}

/// A scenario with every setting at its default.
#[no_mangle]
pub extern "C" fn dp_scenario_default() -> *mut DpScenario {
    Box::into_raw(Box::new(DpScenario {
        file: ScenarioFile::default(),
    }))
}

/// # Safety
/// `scenario` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dp_scenario_free(scenario: *mut DpScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

unsafe fn scenario_mut<'a>(scenario: *mut DpScenario) -> Result<&'a mut DpScenario, DpStatus> {
    scenario
        .as_mut()
        .ok_or_else(|| fail(DpStatus::NullPointer, "null scenario"))
}

/// # Safety
/// `scenario` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn dp_scenario_set_planner(scenario: *mut DpScenario, planner: DpPlanner) -> DpStatus {
    guard(|| match scenario_mut(scenario) {
        Ok(s) => {
            s.file.planner.kind = match planner {
                DpPlanner::Centralized => PlannerKind::Centralized,
                DpPlanner::Distributed => PlannerKind::Distributed,
            };
            DpStatus::Ok
        }
        Err(status) => status,
    })
}

/// # Safety
/// `scenario` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn dp_scenario_set_seed(scenario: *mut DpScenario, seed: u64) -> DpStatus {
    guard(|| match scenario_mut(scenario) {
        Ok(s) => {
            s.file.scenario.seed = seed;
            DpStatus::Ok
        }
        Err(status) => status,
    })
}

/// Sets the number of agents; explicit placements are cleared.
///
/// # Safety
/// `scenario` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn dp_scenario_set_n_agents(scenario: *mut DpScenario, n_agents: usize) -> DpStatus {
    guard(|| match scenario_mut(scenario) {
        Ok(s) => {
            s.file.scenario.n_agents = n_agents;
            s.file.scenario.agents.clear();
            DpStatus::Ok
        }
        Err(status) => status,
    })
}

/// # Safety
/// `scenario` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn dp_scenario_set_alpha(scenario: *mut DpScenario, alpha: f64) -> DpStatus {
    guard(|| match scenario_mut(scenario) {
        Ok(s) => {
            if !(alpha >= 1.0) {
                return fail(
                    DpStatus::ValidationError,
                    format!("alpha must be at least 1, got {alpha}"),
                );
            }
            s.file.scenario.alpha = alpha;
            DpStatus::Ok
        }
        Err(status) => status,
    })
}

/// Per-step wall-clock budget in seconds; zero or negative removes it.
///
/// # Safety
/// `scenario` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn dp_scenario_set_budget(scenario: *mut DpScenario, seconds: f64) -> DpStatus {
    guard(|| match scenario_mut(scenario) {
        Ok(s) => {
            s.file.scenario.budget = (seconds > 0.0).then_some(seconds);
            DpStatus::Ok
        }
        Err(status) => status,
    })
}

/// Runs the scenario to completion.
///
/// # Safety
/// `scenario` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dp_run(scenario: *const DpScenario, out: *mut *mut DpTrace) -> DpStatus {
    guard(|| {
        let Some(s) = scenario.as_ref() else {
            return fail(DpStatus::NullPointer, "null scenario");
        };
        if out.is_null() {
            return fail(DpStatus::NullPointer, "null output pointer");
        }
        let file = &s.file;
        let sc = match file.solver.validate().and_then(|_| build_scenario(&file.scenario)) {
            Ok(sc) => sc,
            Err(e) => return fail(DpStatus::ValidationError, e.to_string()),
        };
        let opts = CampaignOptions {
            solver: file.solver.clone(),
            budget_scope: file.planner.budget_scope,
            serial: !file.planner.parallel,
        }
        .planner_options(&file.scenario);
        match run_receding_horizon(&sc, file.planner.kind, file.scenario.n_steps, &opts) {
            Ok(trace) => {
                let record = MetricsRecord::from_trace(&file.scenario, &trace);
                *out = Box::into_raw(Box::new(DpTrace {
                    trace,
                    models: sc.models,
                    record,
                }));
                DpStatus::Ok
            }
            Err(e) => fail(DpStatus::RunError, e.to_string()),
        }
    })
}

/// # Safety
/// `trace` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dp_trace_free(trace: *mut DpTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}

unsafe fn trace_ref<'a>(trace: *const DpTrace) -> Result<&'a DpTrace, DpStatus> {
    trace.as_ref().ok_or_else(|| fail(DpStatus::NullPointer, "null trace"))
}

unsafe fn write_out<T>(out: *mut T, value: T) -> DpStatus {
    if out.is_null() {
        return fail(DpStatus::NullPointer, "null output pointer");
    }
    *out = value;
    DpStatus::Ok
}

/// Number of executed steps; the trace holds one more state than steps.
///
/// # Safety
/// `trace` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dp_trace_n_steps(trace: *const DpTrace, out: *mut usize) -> DpStatus {
    guard(|| match trace_ref(trace) {
        Ok(t) => write_out(out, t.trace.controls.len()),
        Err(status) => status,
    })
}

/// # Safety
/// `trace` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dp_trace_n_agents(trace: *const DpTrace, out: *mut usize) -> DpStatus {
    guard(|| match trace_ref(trace) {
        Ok(t) => write_out(out, t.models.len()),
        Err(status) => status,
    })
}

/// # Safety
/// `trace` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dp_trace_state_dim(trace: *const DpTrace, agent: usize, out: *mut usize) -> DpStatus {
    guard(|| match trace_ref(trace) {
        Ok(t) => match t.models.get(agent) {
            Some(m) => write_out(out, m.state_dim()),
            None => fail(DpStatus::OutOfRange, format!("agent {agent} out of range")),
        },
        Err(status) => status,
    })
}

/// # Safety
/// `trace` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dp_trace_control_dim(trace: *const DpTrace, agent: usize, out: *mut usize) -> DpStatus {
    guard(|| match trace_ref(trace) {
        Ok(t) => match t.models.get(agent) {
            Some(m) => write_out(out, m.control_dim()),
            None => fail(DpStatus::OutOfRange, format!("agent {agent} out of range")),
        },
        Err(status) => status,
    })
}

unsafe fn copy_to(values: &[f64], buffer: *mut f64, len: usize) -> DpStatus {
    if buffer.is_null() {
        return fail(DpStatus::NullPointer, "null buffer");
    }
    if len < values.len() {
        return fail(
            DpStatus::BufferTooSmall,
            format!("buffer holds {len} values, need {}", values.len()),
        );
    }
    ptr::copy_nonoverlapping(values.as_ptr(), buffer, values.len());
    DpStatus::Ok
}

/// Copies the state of `agent` at time index `step` (0 ..= n_steps).
///
/// # Safety
/// `trace` must be a live handle and `buffer` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn dp_trace_state(
    trace: *const DpTrace,
    step: usize,
    agent: usize,
    buffer: *mut f64,
    len: usize,
) -> DpStatus {
    guard(|| match trace_ref(trace) {
        Ok(t) => match t.trace.states.get(step).and_then(|s| s.per_agent.get(agent)) {
            Some(x) => copy_to(x.as_slice(), buffer, len),
            None => fail(DpStatus::OutOfRange, format!("state ({step}, {agent}) out of range")),
        },
        Err(status) => status,
    })
}

/// Copies the control executed by `agent` at step `step` (0 .. n_steps).
///
/// # Safety
/// `trace` must be a live handle and `buffer` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn dp_trace_control(
    trace: *const DpTrace,
    step: usize,
    agent: usize,
    buffer: *mut f64,
    len: usize,
) -> DpStatus {
    guard(|| match trace_ref(trace) {
        Ok(t) => match t.trace.controls.get(step).and_then(|u| u.get(agent)) {
            Some(u) => copy_to(u.as_slice(), buffer, len),
            None => fail(DpStatus::OutOfRange, format!("control ({step}, {agent}) out of range")),
        },
        Err(status) => status,
    })
}

/// Final position distance of `agent` to its goal, meters.
///
/// # Safety
/// `trace` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dp_trace_final_distance(trace: *const DpTrace, agent: usize, out: *mut f64) -> DpStatus {
    guard(|| match trace_ref(trace) {
        Ok(t) => match t.trace.final_distances.get(agent) {
            Some(&d) => write_out(out, d),
            None => fail(DpStatus::OutOfRange, format!("agent {agent} out of range")),
        },
        Err(status) => status,
    })
}

/// Smallest pairwise distance over the run, meters.
///
/// # Safety
/// `trace` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dp_trace_min_distance(trace: *const DpTrace, out: *mut f64) -> DpStatus {
    guard(|| match trace_ref(trace) {
        Ok(t) => write_out(out, t.trace.min_pairwise_distance),
        Err(status) => status,
    })
}

/// # Safety
/// `trace` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dp_trace_termination(trace: *const DpTrace, out: *mut DpTermination) -> DpStatus {
    guard(|| match trace_ref(trace) {
        Ok(t) => write_out(
            out,
            match t.trace.termination {
                Termination::GoalsReached => DpTermination::GoalsReached,
                Termination::StepLimit => DpTermination::StepLimit,
                Termination::Diverged => DpTermination::Diverged,
            },
        ),
        Err(status) => status,
    })
}

/// The run's metrics record as JSON. Free the string with [`dp_string_free`].
///
/// # Safety
/// `trace` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dp_trace_metrics_json(trace: *const DpTrace, out: *mut *mut c_char) -> DpStatus {
    guard(|| match trace_ref(trace) {
        Ok(t) => match serde_json::to_string(&t.record).map(CString::new) {
            Ok(Ok(s)) => write_out(out, s.into_raw()),
            _ => fail(DpStatus::RunError, "metrics could not be serialized"),
        },
        Err(status) => status,
    })
}

/// # Safety
/// `s` must be null or a string returned by this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
