//! C ABI for the `ais` library.
//!
//! One replicate of a run configuration is executed behind an opaque handle;
//! scalar and vector results are read through accessor functions. Every entry
//! point returns an [`AisStatus`] code, and the message for the most recent
//! failure on the calling thread is available via [`ais_last_error`].
//!
//! The generated header lands in `include/ais.h` at build time.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use ais::config::RunConfig;
use ais::runner::{run_replicate, ReplicateOutput};

/// Result code of an FFI call. Zero means success.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AisStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// The configuration JSON did not parse or validate.
    InvalidConfig = 3,
    /// The run itself failed.
    RunFailed = 4,
    /// An output buffer was too small; the required length is reported
    /// through the length out-parameter.
    BufferTooSmall = 5,
    /// The requested value is not present in this result.
    NotAvailable = 6,
    /// A panic was caught at the FFI boundary.
    Panic = 7,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let cleaned: String = msg.chars().map(|c| if c == '\0' { ' ' } else { c }).collect();
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(cleaned).unwrap());
}

/// Completed single-replicate run. Opaque; free with [`ais_result_free`].
pub struct AisResult {
    output: ReplicateOutput,
}

fn guard<F: FnOnce() -> AisStatus>(f: F) -> AisStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic at FFI boundary".into());
            set_error(&msg);
            AisStatus::Panic
        }
    }
}

/// Message for the most recent failure on this thread. The pointer stays
/// valid until the next failing call on the same thread. Never null.
#[no_mangle]
pub extern "C" fn ais_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn ais_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Runs one replicate of the JSON run configuration with the given seed and
/// writes an owned result handle to `out`.
///
/// `config_json` must be a null-terminated UTF-8 string holding a single run
/// configuration object (the same format the CLI accepts).
///
/// # Safety
/// `config_json` must point to a valid null-terminated string and `out` to a
/// writable pointer slot.
#[no_mangle]
pub unsafe extern "C" fn ais_run_replicate(
    config_json: *const c_char,
    seed: u64,
    out: *mut *mut AisResult,
) -> AisStatus {
    guard(|| {
        if config_json.is_null() || out.is_null() {
            set_error("null pointer argument");
            return AisStatus::NullPointer;
        }
        let raw = unsafe { CStr::from_ptr(config_json) };
        let text = match raw.to_str() {
            Ok(t) => t,
            Err(e) => {
                set_error(&format!("config is not UTF-8: {e}"));
                return AisStatus::InvalidUtf8;
            }
        };
        let cfg: RunConfig = match serde_json::from_str(text) {
            Ok(c) => c,
            Err(e) => {
                set_error(&format!("config parse error: {e}"));
                return AisStatus::InvalidConfig;
            }
        };
        if let Err(e) = cfg.validate() {
            set_error(&format!("config invalid: {e}"));
            return AisStatus::InvalidConfig;
        }
        match run_replicate(&cfg, seed) {
            Ok(output) => {
                let handle = Box::new(AisResult { output });
                unsafe { *out = Box::into_raw(handle) };
                AisStatus::Ok
            }
            Err(e) => {
                set_error(&format!("run failed: {e}"));
                AisStatus::RunFailed
            }
        }
    })
}

/// Frees a result handle. A null handle is a no-op.
///
/// # Safety
/// `result` must be a pointer returned by [`ais_run_replicate`] that has not
/// been freed already.
#[no_mangle]
pub unsafe extern "C" fn ais_result_free(result: *mut AisResult) {
    if !result.is_null() {
        drop(unsafe { Box::from_raw(result) });
    }
}

unsafe fn with_result<F>(result: *const AisResult, out: *mut f64, f: F) -> AisStatus
where
    F: FnOnce(&ReplicateOutput) -> Option<f64>,
{
    guard(|| {
        if result.is_null() || out.is_null() {
            set_error("null pointer argument");
            return AisStatus::NullPointer;
        }
        let r = unsafe { &*result };
        match f(&r.output) {
            Some(v) => {
                unsafe { *out = v };
                AisStatus::Ok
            }
            None => {
                set_error("value not tracked for this run");
                AisStatus::NotAvailable
            }
        }
    })
}

/// Final normalization-constant estimate `Ẑ`.
///
/// # Safety
/// `result` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ais_result_z_hat(result: *const AisResult, out: *mut f64) -> AisStatus {
    unsafe { with_result(result, out, |o| Some(o.z_hat)) }
}

/// True normalization constant of the target, when known in closed form or by
/// quadrature. Fails with `NotAvailable` otherwise.
///
/// # Safety
/// `result` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ais_result_z_oracle(
    result: *const AisResult,
    out: *mut f64,
) -> AisStatus {
    unsafe { with_result(result, out, |o| o.z_oracle) }
}

/// Final cumulative regret. Fails with `NotAvailable` when regret tracking
/// was disabled in the configuration.
///
/// # Safety
/// `result` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ais_result_final_cum_regret(
    result: *const AisResult,
    out: *mut f64,
) -> AisStatus {
    unsafe { with_result(result, out, |o| o.final_cum_regret()) }
}

/// KL divergence from the final proposal to the target over the final
/// partition, when tracked.
///
/// # Safety
/// `result` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ais_result_final_full_kl(
    result: *const AisResult,
    out: *mut f64,
) -> AisStatus {
    unsafe { with_result(result, out, |o| o.final_full_kl) }
}

/// Number of cells in the final partition.
///
/// # Safety
/// `result` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ais_result_partition_count(
    result: *const AisResult,
    out: *mut usize,
) -> AisStatus {
    guard(|| {
        if result.is_null() || out.is_null() {
            set_error("null pointer argument");
            return AisStatus::NullPointer;
        }
        let r = unsafe { &*result };
        unsafe { *out = r.output.final_partition.len() };
        AisStatus::Ok
    })
}

/// Copies the final proposal weights into `buf`. On entry `*len` holds the
/// buffer capacity; on exit it holds the number of arms. When the capacity
/// is too small nothing is copied and `BufferTooSmall` is returned with the
/// required length in `*len`, so a null `buf` with `*len = 0` queries the
/// size.
///
/// # Safety
/// `len` must be writable, and `buf` must have capacity for `*len` doubles
/// unless `*len` is zero.
#[no_mangle]
pub unsafe extern "C" fn ais_result_final_q(
    result: *const AisResult,
    buf: *mut f64,
    len: *mut usize,
) -> AisStatus {
    guard(|| {
        if result.is_null() || len.is_null() {
            set_error("null pointer argument");
            return AisStatus::NullPointer;
        }
        let r = unsafe { &*result };
        let q = &r.output.final_q;
        let capacity = unsafe { *len };
        unsafe { *len = q.len() };
        if capacity < q.len() {
            set_error("output buffer too small");
            return AisStatus::BufferTooSmall;
        }
        if buf.is_null() {
            set_error("null pointer argument");
            return AisStatus::NullPointer;
        }
        unsafe { ptr::copy_nonoverlapping(q.as_ptr(), buf, q.len()) };
        AisStatus::Ok
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ffi::CString;

    fn config(regret: bool) -> CString {
        CString::new(format!(
            r#"{{
                "mode": "daisee",
                "target": {{"family": "exp-flat"}},
                "k": 4,
                "t": 2000,
                "seeds": [0],
                "regret_tracking": {regret}
            }}"#
        ))
        .unwrap()
    }

    #[test]
    fn run_and_read_results() {
        let cfg = config(true);
        let mut handle: *mut AisResult = ptr::null_mut();
        let status = unsafe { ais_run_replicate(cfg.as_ptr(), 7, &mut handle) };
        assert_eq!(status, AisStatus::Ok);
        assert!(!handle.is_null());

        let mut z = f64::NAN;
        assert_eq!(unsafe { ais_result_z_hat(handle, &mut z) }, AisStatus::Ok);
        assert!(z.is_finite() && z > 0.0);

        let mut z_true = f64::NAN;
        assert_eq!(unsafe { ais_result_z_oracle(handle, &mut z_true) }, AisStatus::Ok);
        assert!((z - z_true).abs() / z_true < 0.5);

        let mut regret = f64::NAN;
        assert_eq!(
            unsafe { ais_result_final_cum_regret(handle, &mut regret) },
            AisStatus::Ok
        );
        assert!(regret >= 0.0);

        let mut k = 0usize;
        assert_eq!(unsafe { ais_result_partition_count(handle, &mut k) }, AisStatus::Ok);
        assert_eq!(k, 4);

        let mut n = 0usize;
        let status = unsafe { ais_result_final_q(handle, ptr::null_mut(), &mut n) };
        assert_eq!(status, AisStatus::BufferTooSmall);
        assert_eq!(n, 4);
        let mut q = vec![0.0f64; n];
        assert_eq!(
            unsafe { ais_result_final_q(handle, q.as_mut_ptr(), &mut n) },
            AisStatus::Ok
        );
        assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-12);

        unsafe { ais_result_free(handle) };
    }

    #[test]
    fn deterministic_across_calls() {
        let cfg = config(true);
        let mut a: *mut AisResult = ptr::null_mut();
        let mut b: *mut AisResult = ptr::null_mut();
        unsafe {
            assert_eq!(ais_run_replicate(cfg.as_ptr(), 3, &mut a), AisStatus::Ok);
            assert_eq!(ais_run_replicate(cfg.as_ptr(), 3, &mut b), AisStatus::Ok);
            let (mut za, mut zb) = (0.0, 0.0);
            ais_result_z_hat(a, &mut za);
            ais_result_z_hat(b, &mut zb);
            assert_eq!(za.to_bits(), zb.to_bits());
            ais_result_free(a);
            ais_result_free(b);
        }
    }

    #[test]
    fn regret_unavailable_when_untracked() {
        let cfg = config(false);
        let mut handle: *mut AisResult = ptr::null_mut();
        assert_eq!(
            unsafe { ais_run_replicate(cfg.as_ptr(), 0, &mut handle) },
            AisStatus::Ok
        );
        let mut regret = f64::NAN;
        assert_eq!(
            unsafe { ais_result_final_cum_regret(handle, &mut regret) },
            AisStatus::NotAvailable
        );
        unsafe { ais_result_free(handle) };
    }

    #[test]
    fn error_paths_set_messages() {
        let mut handle: *mut AisResult = ptr::null_mut();
        assert_eq!(
            unsafe { ais_run_replicate(ptr::null(), 0, &mut handle) },
            AisStatus::NullPointer
        );

        let bad = CString::new("{not json").unwrap();
        assert_eq!(
            unsafe { ais_run_replicate(bad.as_ptr(), 0, &mut handle) },
            AisStatus::InvalidConfig
        );
        let msg = unsafe { CStr::from_ptr(ais_last_error()) }.to_str().unwrap();
        assert!(msg.contains("parse"), "unexpected message: {msg}");

        let invalid = CString::new(r#"{"mode": "daisee", "t": 0, "seeds": []}"#).unwrap();
        assert_eq!(
            unsafe { ais_run_replicate(invalid.as_ptr(), 0, &mut handle) },
            AisStatus::InvalidConfig
        );
        assert!(handle.is_null());
    }

    #[test]
    fn version_is_null_terminated() {
        let v = unsafe { CStr::from_ptr(ais_version()) };
        assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
    }
}
