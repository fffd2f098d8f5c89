//! C ABI for the harmflow simulator.
//!
//! Handles are opaque pointers created and freed by this library; every
//! fallible call returns an `HfStatus` and leaves a human-readable message
//! readable through `hf_last_error`. All calls on one handle must be
//! serialized by the caller; distinct handles are independent.
//!
//! The C header is generated into `include/harmflow.h` at build time.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use harmflow::config::RunConfig;
use harmflow::error::Error;
use harmflow::run::{run_scenario, Simulator};

/// Status codes mirroring the CLI exit codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HfStatus {
    Ok = 0,
    ConfigError = 2,
    EngineError = 3,
    Halted = 4,
    NullPointer = 5,
    InvalidUtf8 = 6,
    Panic = 7,
}

/// Opaque parsed configuration handle.
#[repr(C)]
pub struct HfConfig {
    _private: [u8; 0],
}

/// Opaque simulator handle (engine plus current state).
#[repr(C)]
pub struct HfSim {
    _private: [u8; 0],
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let sanitized: String = msg.chars().map(|c| if c == '\0' { ' ' } else { c }).collect();
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(sanitized).unwrap_or_default());
}

fn status_of(err: &Error) -> HfStatus {
    match err.exit_code() {
        2 => HfStatus::ConfigError,
        _ => HfStatus::EngineError,
    }
}

fn guard(f: impl FnOnce() -> HfStatus) -> HfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => {
            set_error("internal panic");
            HfStatus::Panic
        }
    }
}

unsafe fn cstr_arg<'a>(ptr: *const c_char) -> Result<&'a str, HfStatus> {
    if ptr.is_null() {
        set_error("null string argument");
        return Err(HfStatus::NullPointer);
    }
    unsafe { CStr::from_ptr(ptr) }.to_str().map_err(|_| {
        set_error("argument is not valid UTF-8");
        HfStatus::InvalidUtf8
    })
}

unsafe fn config_ref<'a>(cfg: *const HfConfig) -> Result<&'a RunConfig, HfStatus> {
    if cfg.is_null() {
        set_error("null config handle");
        return Err(HfStatus::NullPointer);
    }
    Ok(unsafe { &*(cfg as *const RunConfig) })
}

unsafe fn sim_mut<'a>(sim: *mut HfSim) -> Result<&'a mut Simulator, HfStatus> {
    if sim.is_null() {
        set_error("null simulator handle");
        return Err(HfStatus::NullPointer);
    }
    Ok(unsafe { &mut *(sim as *mut Simulator) })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn hf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Copy the last error message for this thread into `buf` (truncated to
/// `len - 1` bytes, always NUL-terminated when `len > 0`). Returns the full
/// message length in bytes, excluding the terminator.
///
/// # Safety
/// `buf` must point to at least `len` writable bytes, or be null.
#[no_mangle]
pub unsafe extern "C" fn hf_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            unsafe {
                std::ptr::copy_nonoverlapping(bytes.as_ptr(), buf as *mut u8, n);
                *buf.add(n) = 0;
            }
        }
        bytes.len()
    })
}

/// Parse a configuration document. On success writes a new handle to `out`.
///
/// # Safety
/// `text` must be a NUL-terminated string, `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hf_config_parse(text: *const c_char, out: *mut *mut HfConfig) -> HfStatus {
    guard(|| {
        if out.is_null() {
            set_error("null output pointer");
            return HfStatus::NullPointer;
        }
        let text = match unsafe { cstr_arg(text) } {
            Ok(t) => t,
            Err(s) => return s,
        };
        match harmflow::parse_config(text) {
            Ok(cfg) => {
                unsafe { *out = Box::into_raw(Box::new(cfg)) as *mut HfConfig };
                HfStatus::Ok
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}

/// Parse a configuration file from a path.
///
/// # Safety
/// `path` must be a NUL-terminated string, `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hf_config_parse_file(path: *const c_char, out: *mut *mut HfConfig) -> HfStatus {
    guard(|| {
        let path_str = match unsafe { cstr_arg(path) } {
            Ok(t) => t,
            Err(s) => return s,
        };
        let text = match std::fs::read_to_string(path_str) {
            Ok(t) => t,
            Err(e) => {
                set_error(&format!("{path_str}: {e}"));
                return HfStatus::EngineError;
            }
        };
        let c_text = match CString::new(text) {
            Ok(t) => t,
            Err(_) => {
                set_error("config file contains NUL bytes");
                return HfStatus::ConfigError;
            }
        };
        unsafe { hf_config_parse(c_text.as_ptr(), out) }
    })
}

/// Free a configuration handle; a null pointer is ignored.
///
/// # Safety
/// `cfg` must come from `hf_config_parse*` and not already be freed.
#[no_mangle]
pub unsafe extern "C" fn hf_config_free(cfg: *mut HfConfig) {
    if !cfg.is_null() {
        drop(unsafe { Box::from_raw(cfg as *mut RunConfig) });
    }
}

/// Create a simulator from a parsed configuration.
///
/// # Safety
/// `cfg` must be a live config handle, `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hf_sim_new(cfg: *const HfConfig, out: *mut *mut HfSim) -> HfStatus {
    guard(|| {
        if out.is_null() {
            set_error("null output pointer");
            return HfStatus::NullPointer;
        }
        let cfg = match unsafe { config_ref(cfg) } {
            Ok(c) => c,
            Err(s) => return s,
        };
        match Simulator::from_config(cfg) {
            Ok(sim) => {
                unsafe { *out = Box::into_raw(Box::new(sim)) as *mut HfSim };
                HfStatus::Ok
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}

/// Free a simulator handle; a null pointer is ignored.
///
/// # Safety
/// `sim` must come from `hf_sim_new` and not already be freed.
#[no_mangle]
pub unsafe extern "C" fn hf_sim_free(sim: *mut HfSim) {
    if !sim.is_null() {
        drop(unsafe { Box::from_raw(sim as *mut Simulator) });
    }
}

/// Advance up to `n` steps. Writes the number of steps actually taken to
/// `steps_done` (may be null). Returns `Halted` when the systole floor stops
/// the flow, `Ok` otherwise.
///
/// # Safety
/// `sim` must be a live simulator handle.
#[no_mangle]
pub unsafe extern "C" fn hf_sim_step(sim: *mut HfSim, n: u64, steps_done: *mut u64) -> HfStatus {
    guard(|| {
        let sim = match unsafe { sim_mut(sim) } {
            Ok(s) => s,
            Err(st) => return st,
        };
        let mut done = 0u64;
        let mut status = HfStatus::Ok;
        for _ in 0..n {
            if sim.halted() {
                status = HfStatus::Halted;
                break;
            }
            match sim.step() {
                Ok(_) => done += 1,
                Err(e) => {
                    set_error(&e.to_string());
                    status = status_of(&e);
                    break;
                }
            }
        }
        if sim.halted() {
            status = HfStatus::Halted;
        }
        if !steps_done.is_null() {
            unsafe { *steps_done = done };
        }
        status
    })
}

/// # Safety
/// `sim` must be a live simulator handle.
#[no_mangle]
pub unsafe extern "C" fn hf_sim_time(sim: *const HfSim) -> f64 {
    unsafe { sim_field(sim, |s| s.state.t) }
}

/// # Safety
/// `sim` must be a live simulator handle.
#[no_mangle]
pub unsafe extern "C" fn hf_sim_step_count(sim: *const HfSim) -> u64 {
    if sim.is_null() {
        return 0;
    }
    unsafe { &*(sim as *const Simulator) }.state.step
}

/// # Safety
/// `sim` must be a live simulator handle.
#[no_mangle]
pub unsafe extern "C" fn hf_sim_energy(sim: *const HfSim) -> f64 {
    unsafe { sim_field(sim, |s| s.state.energy) }
}

/// Squared L^2 norm of the tension field at the current state.
///
/// # Safety
/// `sim` must be a live simulator handle.
#[no_mangle]
pub unsafe extern "C" fn hf_sim_tension_l2sq(sim: *const HfSim) -> f64 {
    unsafe { sim_field(sim, |s| s.state.tension_l2sq) }
}

/// Squared L^2 norm of the horizontal part of the Hopf tensor.
///
/// # Safety
/// `sim` must be a live simulator handle.
#[no_mangle]
pub unsafe extern "C" fn hf_sim_horiz_hopf_l2sq(sim: *const HfSim) -> f64 {
    unsafe { sim_field(sim, |s| s.state.horiz_hopf_l2sq) }
}

unsafe fn sim_field(sim: *const HfSim, f: impl Fn(&Simulator) -> f64) -> f64 {
    if sim.is_null() {
        return f64::NAN;
    }
    f(unsafe { &*(sim as *const Simulator) })
}

/// Whether the flow has halted at the systole floor.
///
/// # Safety
/// `sim` must be a live simulator handle.
#[no_mangle]
pub unsafe extern "C" fn hf_sim_halted(sim: *const HfSim) -> bool {
    if sim.is_null() {
        return false;
    }
    unsafe { &*(sim as *const Simulator) }.state.halted()
}

/// Current Teichmueller parameters (a, b) and systole.
///
/// # Safety
/// `sim` must be a live simulator handle; out pointers may be null.
#[no_mangle]
pub unsafe extern "C" fn hf_sim_metric(sim: *const HfSim, a: *mut f64, b: *mut f64, systole: *mut f64) -> HfStatus {
    guard(|| {
        if sim.is_null() {
            set_error("null simulator handle");
            return HfStatus::NullPointer;
        }
        let s = unsafe { &*(sim as *const Simulator) };
        match s.state.metric.require_teich() {
            Ok(tp) => {
                unsafe {
                    if !a.is_null() {
                        *a = tp.a;
                    }
                    if !b.is_null() {
                        *b = tp.b;
                    }
                    if !systole.is_null() {
                        *systole = tp.systole();
                    }
                }
                HfStatus::Ok
            }
            Err(e) => {
                set_error(&e.to_string());
                HfStatus::EngineError
            }
        }
    })
}

/// Write a binary checkpoint of the current state.
///
/// # Safety
/// `sim` must be a live simulator handle, `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn hf_sim_write_checkpoint(sim: *const HfSim, path: *const c_char) -> HfStatus {
    guard(|| {
        if sim.is_null() {
            set_error("null simulator handle");
            return HfStatus::NullPointer;
        }
        let path = match unsafe { cstr_arg(path) } {
            Ok(p) => p,
            Err(s) => return s,
        };
        let s = unsafe { &*(sim as *const Simulator) };
        match harmflow::io::write_checkpoint(Path::new(path), &s.state) {
            Ok(()) => HfStatus::Ok,
            Err(e) => {
                set_error(&e.to_string());
                HfStatus::EngineError
            }
        }
    })
}

/// One-shot scenario run from a config file: emits the CSV series and JSON
/// summary into the configured output directory. Returns `Halted` when the
/// run stopped at the systole floor.
///
/// # Safety
/// `config_path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn hf_run(config_path: *const c_char) -> HfStatus {
    guard(|| {
        let path = match unsafe { cstr_arg(config_path) } {
            Ok(p) => p,
            Err(s) => return s,
        };
        let text = match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) => {
                set_error(&format!("{path}: {e}"));
                return HfStatus::EngineError;
            }
        };
        let cfg = match harmflow::parse_config(&text) {
            Ok(c) => c,
            Err(e) => {
                set_error(&e.to_string());
                return status_of(&e);
            }
        };
        match run_scenario(&cfg) {
            Ok(out) => {
                if out.summary.halted {
                    HfStatus::Halted
                } else {
                    HfStatus::Ok
                }
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}
