//! C ABI over the simulator.
//!
//! Objects cross the boundary as opaque handles that the caller releases with
//! the matching `*_free` function. Every fallible call returns an
//! [`M2xStatus`]; on failure [`m2x_last_error`] describes what went wrong on
//! the calling thread. Strings and byte buffers returned to the caller are
//! owned by it and must be released with [`m2x_string_free`] and
//! [`m2x_bytes_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use m2x_core::auction::{settle_many, settle_one_to_one, Price, Settlement};
use m2x_core::identity::AgentId;
use m2x_core::ledger::{FileFault, Ledger};
use m2x_core::sim::{self, Scenario, SimError, SimOutcome};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum M2xStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidJson = 3,
    InvalidScenario = 4,
    SimulationFailed = 5,
    LedgerInvalid = 6,
    NoAgreement = 7,
    Panic = 99,
}

/// Parsed scenario.
pub struct M2xScenario(Scenario);

/// Metrics and ledger of a finished run.
pub struct M2xOutcome(SimOutcome);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn fail(status: M2xStatus, msg: impl Into<String>) -> M2xStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> M2xStatus) -> M2xStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(M2xStatus::Panic, "internal panic"),
    }
}

unsafe fn str_arg<'a>(p: *const c_char) -> Result<&'a str, M2xStatus> {
    if p.is_null() {
        return Err(fail(M2xStatus::NullPointer, "null string argument"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| fail(M2xStatus::InvalidUtf8, e.to_string()))
}

fn to_c_string(s: String) -> *mut c_char {
    CString::new(s).map(CString::into_raw).unwrap_or(ptr::null_mut())
}

/// Message for the last failed call on this thread, or null. The pointer is
/// valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn m2x_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Parses a scenario from JSON. `out` receives a handle on success.
///
/// # Safety
/// `json` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn m2x_scenario_from_json(json: *const c_char, out: *mut *mut M2xScenario) -> M2xStatus {
    guard(|| {
        if out.is_null() {
            return fail(M2xStatus::NullPointer, "null out pointer");
        }
        let text = match str_arg(json) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match serde_json::from_str::<Scenario>(text) {
            Ok(s) => {
                *out = Box::into_raw(Box::new(M2xScenario(s)));
                M2xStatus::Ok
            }
            Err(e) => fail(M2xStatus::InvalidJson, e.to_string()),
        }
    })
}

/// Checks scenario invariants. `count` receives the number of violations;
/// when there are any, the last error lists them one per line.
///
/// # Safety
/// `scenario` must come from [`m2x_scenario_from_json`]; `count` must be valid.
#[no_mangle]
pub unsafe extern "C" fn m2x_scenario_validate(scenario: *const M2xScenario, count: *mut usize) -> M2xStatus {
    guard(|| {
        if scenario.is_null() || count.is_null() {
            return fail(M2xStatus::NullPointer, "null argument");
        }
        let violations = (*scenario).0.validate();
        *count = violations.len();
        if violations.is_empty() {
            return M2xStatus::Ok;
        }
        let lines: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
        fail(M2xStatus::InvalidScenario, lines.join("\n"))
    })
}

/// # Safety
/// `scenario` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn m2x_scenario_free(scenario: *mut M2xScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Runs the scenario with `seed`.
///
/// # Safety
/// `scenario` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn m2x_run(scenario: *const M2xScenario, seed: u64, out: *mut *mut M2xOutcome) -> M2xStatus {
    guard(|| {
        if scenario.is_null() || out.is_null() {
            return fail(M2xStatus::NullPointer, "null argument");
        }
        match sim::run_with_seed(&(*scenario).0, seed) {
            Ok(o) => {
                *out = Box::into_raw(Box::new(M2xOutcome(o)));
                M2xStatus::Ok
            }
            Err(SimError::InvalidScenario(vs)) => {
                let lines: Vec<String> = vs.iter().map(|v| v.to_string()).collect();
                fail(M2xStatus::InvalidScenario, lines.join("\n"))
            }
            Err(e) => fail(M2xStatus::SimulationFailed, e.to_string()),
        }
    })
}

/// Metrics as a JSON string, released with [`m2x_string_free`].
///
/// # Safety
/// `outcome` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn m2x_outcome_metrics_json(outcome: *const M2xOutcome, out: *mut *mut c_char) -> M2xStatus {
    guard(|| {
        if outcome.is_null() || out.is_null() {
            return fail(M2xStatus::NullPointer, "null argument");
        }
        match serde_json::to_string(&(*outcome).0.metrics) {
            Ok(s) => {
                *out = to_c_string(s);
                M2xStatus::Ok
            }
            Err(e) => fail(M2xStatus::InvalidJson, e.to_string()),
        }
    })
}

/// Serialized ledger file contents, released with [`m2x_bytes_free`].
///
/// # Safety
/// `outcome` must be a live handle; `data` and `len` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn m2x_outcome_ledger_bytes(
    outcome: *const M2xOutcome,
    data: *mut *mut u8,
    len: *mut usize,
) -> M2xStatus {
    guard(|| {
        if outcome.is_null() || data.is_null() || len.is_null() {
            return fail(M2xStatus::NullPointer, "null argument");
        }
        let bytes = (*outcome).0.ledger.to_bytes().into_boxed_slice();
        *len = bytes.len();
        *data = Box::into_raw(bytes) as *mut u8;
        M2xStatus::Ok
    })
}

/// # Safety
/// `outcome` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn m2x_outcome_free(outcome: *mut M2xOutcome) {
    if !outcome.is_null() {
        drop(Box::from_raw(outcome));
    }
}

/// Verifies a ledger file image. On [`M2xStatus::LedgerInvalid`],
/// `bad_index` receives the first invalid block index.
///
/// # Safety
/// `data` must point to `len` readable bytes; `bad_index` must be valid.
#[no_mangle]
pub unsafe extern "C" fn m2x_ledger_verify(data: *const u8, len: usize, bad_index: *mut u64) -> M2xStatus {
    guard(|| {
        if data.is_null() || bad_index.is_null() {
            return fail(M2xStatus::NullPointer, "null argument");
        }
        let bytes = std::slice::from_raw_parts(data, len);
        match Ledger::verify_bytes(bytes) {
            Ok(()) => M2xStatus::Ok,
            Err(FileFault::Block(b)) => {
                *bad_index = b.index;
                fail(M2xStatus::LedgerInvalid, b.to_string())
            }
            Err(e) => {
                *bad_index = 0;
                fail(M2xStatus::LedgerInvalid, e.to_string())
            }
        }
    })
}

/// One buyer against one seller. Returns [`M2xStatus::NoAgreement`] when
/// the bid is below the reserve, otherwise writes the clearing price.
///
/// # Safety
/// `clearing_price` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn m2x_settle_one_to_one(bid: u32, reserve: u32, clearing_price: *mut u32) -> M2xStatus {
    guard(|| {
        if clearing_price.is_null() {
            return fail(M2xStatus::NullPointer, "null argument");
        }
        match settle_one_to_one(Price(bid), Price(reserve)) {
            Settlement::Agreement { clearing_price: p } => {
                *clearing_price = p.0;
                M2xStatus::Ok
            }
            Settlement::NoAgreement => M2xStatus::NoAgreement,
        }
    })
}

/// Settles a many-to-many market. Both sides are JSON arrays of
/// `[id, price]` pairs; the outcome is written as JSON.
///
/// # Safety
/// `buyers` and `sellers` must be nul-terminated strings; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn m2x_settle_many_json(
    buyers: *const c_char,
    sellers: *const c_char,
    out: *mut *mut c_char,
) -> M2xStatus {
    guard(|| {
        if out.is_null() {
            return fail(M2xStatus::NullPointer, "null out pointer");
        }
        let parse = |p| -> Result<Vec<(AgentId, Price)>, M2xStatus> {
            let text = str_arg(p)?;
            serde_json::from_str(text).map_err(|e| fail(M2xStatus::InvalidJson, e.to_string()))
        };
        let (b, s) = match (parse(buyers), parse(sellers)) {
            (Ok(b), Ok(s)) => (b, s),
            (Err(e), _) | (_, Err(e)) => return e,
        };
        match serde_json::to_string(&settle_many(&b, &s)) {
            Ok(json) => {
                *out = to_c_string(json);
                M2xStatus::Ok
            }
            Err(e) => fail(M2xStatus::InvalidJson, e.to_string()),
        }
    })
}

/// # Safety
/// `s` must be null or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn m2x_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// # Safety
/// `data`/`len` must be null or exactly as returned by this library.
#[no_mangle]
pub unsafe extern "C" fn m2x_bytes_free(data: *mut u8, len: usize) {
    if !data.is_null() {
        drop(Box::from_raw(ptr::slice_from_raw_parts_mut(data, len)));
    }
}
