//! C ABI over the nonlocal-flow solvers.
//!
//! A simulation is created from the JSON form of one experiment run spec,
//! run once, then queried snapshot by snapshot. Every call returns an
//! [`NfStatus`]; on failure [`nf_last_error`] describes what went wrong on the
//! calling thread. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use nonlocal_flow::diagnostics::{DiagnosticsOptions, DiagnosticsReport};
use nonlocal_flow::experiment::RunSpec;
use nonlocal_flow::grid::{total_variation, CellField, GridSpec};
use nonlocal_flow::solver::{simulate, Trajectory};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidConfig = 3,
    SolverError = 4,
    NotRun = 5,
    OutOfRange = 6,
    LengthMismatch = 7,
    Panic = 8,
}

/// Opaque simulation handle.
pub struct NfSimulation {
    spec: RunSpec,
    trajectory: Option<Trajectory>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn fail(status: NfStatus, msg: impl Into<String>) -> NfStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> NfStatus) -> NfStatus {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| fail(NfStatus::Panic, "internal panic"))
}

unsafe fn str_arg<'a>(s: *const c_char) -> Result<&'a str, NfStatus> {
    if s.is_null() {
        return Err(fail(NfStatus::NullPointer, "null string argument"));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|e| fail(NfStatus::InvalidUtf8, e.to_string()))
}

fn trajectory(sim: &NfSimulation) -> Result<&Trajectory, NfStatus> {
    sim.trajectory
        .as_ref()
        .ok_or_else(|| fail(NfStatus::NotRun, "simulation has not been run"))
}

macro_rules! try_status {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(s) => return s,
        }
    };
}

macro_rules! deref {
    ($p:expr) => {
        match unsafe { $p.as_ref() } {
            Some(v) => v,
            None => return fail(NfStatus::NullPointer, concat!("null ", stringify!($p))),
        }
    };
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn nf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn nf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses and validates a run spec; on success `*out` owns a new handle.
///
/// # Safety
/// `spec_json` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn nf_simulation_new(
    spec_json: *const c_char,
    out: *mut *mut NfSimulation,
) -> NfStatus {
    guard(|| {
        if out.is_null() {
            return fail(NfStatus::NullPointer, "null out");
        }
        *out = ptr::null_mut();
        let text = try_status!(str_arg(spec_json));
        let spec: RunSpec = match serde_json::from_str(text) {
            Ok(s) => s,
            Err(e) => return fail(NfStatus::InvalidConfig, e.to_string()),
        };
        if let Err(e) = spec.validate() {
            return fail(NfStatus::InvalidConfig, e.to_string());
        }
        *out = Box::into_raw(Box::new(NfSimulation {
            spec,
            trajectory: None,
        }));
        NfStatus::Ok
    })
}

/// Releases a handle; null is ignored.
///
/// # Safety
/// `sim` must come from [`nf_simulation_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn nf_simulation_free(sim: *mut NfSimulation) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

/// Runs the simulation to its final time, replacing any earlier result.
///
/// # Safety
/// `sim` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn nf_simulation_run(sim: *mut NfSimulation) -> NfStatus {
    guard(|| {
        let sim = match sim.as_mut() {
            Some(s) => s,
            None => return fail(NfStatus::NullPointer, "null sim"),
        };
        match simulate(&sim.spec.solver_config(&[]), &sim.spec.datum) {
            Ok(t) => {
                sim.trajectory = Some(t);
                NfStatus::Ok
            }
            Err(e) => fail(NfStatus::SolverError, e.to_string()),
        }
    })
}

/// Number of cells of the simulation grid.
///
/// # Safety
/// `sim` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn nf_simulation_cell_count(sim: *const NfSimulation, out: *mut usize) -> NfStatus {
    guard(|| {
        let sim = deref!(sim);
        let out = match out.as_mut() {
            Some(o) => o,
            None => return fail(NfStatus::NullPointer, "null out"),
        };
        *out = sim.spec.grid.n_cells();
        NfStatus::Ok
    })
}

/// Number of recorded snapshots, including `t = 0`.
///
/// # Safety
/// `sim` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn nf_simulation_snapshot_count(sim: *const NfSimulation, out: *mut usize) -> NfStatus {
    guard(|| {
        let traj = try_status!(trajectory(deref!(sim)));
        let out = match out.as_mut() {
            Some(o) => o,
            None => return fail(NfStatus::NullPointer, "null out"),
        };
        *out = traj.snapshots.len();
        NfStatus::Ok
    })
}

/// Copies snapshot `index`: its time into `*time`, the cell averages into
/// `q` (`n_cells` values) and the interface speeds into `w` (`n_cells + 1`
/// values). `w` may be null.
///
/// # Safety
/// `time` must be writable, `q` must hold `q_len` doubles and `w`, when not
/// null, `w_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn nf_simulation_copy_snapshot(
    sim: *const NfSimulation,
    index: usize,
    time: *mut f64,
    q: *mut f64,
    q_len: usize,
    w: *mut f64,
    w_len: usize,
) -> NfStatus {
    guard(|| {
        let traj = try_status!(trajectory(deref!(sim)));
        let Some(snap) = traj.snapshots.get(index) else {
            return fail(
                NfStatus::OutOfRange,
                format!("snapshot {index} of {}", traj.snapshots.len()),
            );
        };
        if time.is_null() || q.is_null() {
            return fail(NfStatus::NullPointer, "null time or q");
        }
        let qs = snap.q.values();
        if q_len != qs.len() {
            return fail(
                NfStatus::LengthMismatch,
                format!("q needs {} values, got {q_len}", qs.len()),
            );
        }
        let ws = snap.w.values();
        if !w.is_null() && w_len != ws.len() {
            return fail(
                NfStatus::LengthMismatch,
                format!("w needs {} values, got {w_len}", ws.len()),
            );
        }
        *time = snap.time;
        ptr::copy_nonoverlapping(qs.as_ptr(), q, qs.len());
        if !w.is_null() {
            ptr::copy_nonoverlapping(ws.as_ptr(), w, ws.len());
        }
        NfStatus::Ok
    })
}

/// Diagnostics report as JSON. `options_json` may be null for the defaults.
/// The returned string must be released with [`nf_string_free`].
///
/// # Safety
/// `sim` must be a live handle, `options_json` null or NUL-terminated, and
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn nf_simulation_report_json(
    sim: *const NfSimulation,
    options_json: *const c_char,
    out: *mut *mut c_char,
) -> NfStatus {
    guard(|| {
        if out.is_null() {
            return fail(NfStatus::NullPointer, "null out");
        }
        *out = ptr::null_mut();
        let traj = try_status!(trajectory(deref!(sim)));
        let opts: DiagnosticsOptions = if options_json.is_null() {
            DiagnosticsOptions::default()
        } else {
            match serde_json::from_str(try_status!(str_arg(options_json))) {
                Ok(o) => o,
                Err(e) => return fail(NfStatus::InvalidConfig, e.to_string()),
            }
        };
        let json = match DiagnosticsReport::evaluate(traj, &opts).and_then(|r| r.to_json()) {
            Ok(j) => j,
            Err(e) => return fail(NfStatus::SolverError, e.to_string()),
        };
        match CString::new(json) {
            Ok(s) => {
                *out = s.into_raw();
                NfStatus::Ok
            }
            Err(e) => fail(NfStatus::Panic, e.to_string()),
        }
    })
}

/// Releases a string returned by this library; null is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn nf_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Total variation of `len >= 2` cell values, counting the
/// jumps from the `left` and `right` extension values.
///
/// # Safety
/// `values` must hold `len` doubles and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn nf_total_variation(
    values: *const f64,
    len: usize,
    left: f64,
    right: f64,
    out: *mut f64,
) -> NfStatus {
    guard(|| {
        if values.is_null() || out.is_null() {
            return fail(NfStatus::NullPointer, "null values or out");
        }
        let vals = std::slice::from_raw_parts(values, len).to_vec();
        // the mesh geometry does not enter the variation
        let field = GridSpec::new(0.0, 1.0, len).and_then(|g| CellField::new(g, vals, (left, right)));
        match field {
            Ok(f) => {
                *out = total_variation(&f);
                NfStatus::Ok
            }
            Err(e) => fail(NfStatus::InvalidConfig, e.to_string()),
        }
    })
}
