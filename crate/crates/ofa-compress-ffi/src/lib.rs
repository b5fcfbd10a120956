//! C ABI for the once-for-all sequence compression library.
//!
//! Conventions: every function returns an [`OfaStatus`]; results go through
//! out-pointers. On any non-OK status, `ofa_last_error_message` returns a
//! thread-local, NUL-terminated description valid until the next call on the
//! same thread. Buffers are caller-allocated; required capacities are stated
//! per function. The student handle is opaque and must be released with
//! `ofa_student_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use ofa_compress::alphamod::modify_alpha;
use ofa_compress::cif::{integrate_and_fire, pool_segments, AlphaWeights, CifOptions};
use ofa_compress::diffmath::Matrix;
use ofa_compress::error::Error;
use ofa_compress::model::StudentModel;
use ofa_compress::profile::{frame_period, macs_reduction, transformer_macs, MacsConfig};

/// Result codes for every entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OfaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    NonFinite = 4,
    LambdaOutOfRange = 5,
    Io = 6,
    BadFormat = 7,
    Internal = 8,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(err: &Error) -> OfaStatus {
    match err {
        Error::Dimension(_) | Error::Length(_) | Error::Empty(_) => OfaStatus::DimensionMismatch,
        Error::NonFinite(_) => OfaStatus::NonFinite,
        Error::LambdaRange(_) => OfaStatus::LambdaOutOfRange,
        Error::Io(_) => OfaStatus::Io,
        Error::BadMagic { .. } | Error::UnsupportedVersion(_) | Error::Truncated(_) => {
            OfaStatus::BadFormat
        }
        Error::InvalidArg(_) | Error::Config(_) | Error::Json(_) => OfaStatus::InvalidArgument,
        _ => OfaStatus::Internal,
    }
}

fn fail(err: Error) -> OfaStatus {
    let status = status_of(&err);
    set_error(&err.to_string());
    status
}

fn guarded(body: impl FnOnce() -> OfaStatus) -> OfaStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic");
            OfaStatus::Internal
        }
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ofa_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message for the most recent failure on this thread. Never null; empty
/// when no failure has occurred. Valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn ofa_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

unsafe fn slice_arg<'a>(ptr: *const f64, len: usize) -> Option<&'a [f64]> {
    if ptr.is_null() {
        None
    } else {
        Some(std::slice::from_raw_parts(ptr, len))
    }
}

fn alpha_from(values: &[f64]) -> Result<AlphaWeights, Error> {
    AlphaWeights::new(values.to_vec())
}

/// Apply the lambda modification to `len` alpha weights in [0, 1].
/// `out` must hold `len` values; `lambda` must lie in [0, 2).
///
/// # Safety
/// `alpha` and `out` must be valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ofa_modify_alpha(
    alpha: *const f64,
    len: usize,
    lambda: f64,
    out: *mut f64,
) -> OfaStatus {
    guarded(|| {
        let (Some(values), false) = (slice_arg(alpha, len), out.is_null()) else {
            set_error("null pointer");
            return OfaStatus::NullPointer;
        };
        let a = match alpha_from(values) {
            Ok(a) => a,
            Err(e) => return fail(e),
        };
        match modify_alpha(&a, lambda) {
            Ok(m) => {
                std::slice::from_raw_parts_mut(out, len).copy_from_slice(m.values());
                OfaStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Number of fire events for `len` alpha weights under default thresholds.
///
/// # Safety
/// `alpha` must be valid for `len` doubles; `out_count` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ofa_fire_count(
    alpha: *const f64,
    len: usize,
    out_count: *mut usize,
) -> OfaStatus {
    guarded(|| {
        let (Some(values), false) = (slice_arg(alpha, len), out_count.is_null()) else {
            set_error("null pointer");
            return OfaStatus::NullPointer;
        };
        let a = match alpha_from(values) {
            Ok(a) => a,
            Err(e) => return fail(e),
        };
        match ofa_compress::cif::fire_count(&a) {
            Ok(n) => {
                *out_count = n;
                OfaStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Fire frame indices (0-based) for `len` alpha weights. `out_frames` must
/// hold at least `len` entries; the number written lands in `out_count`.
///
/// # Safety
/// Pointer arguments must be valid for the stated capacities.
#[no_mangle]
pub unsafe extern "C" fn ofa_segment_boundaries(
    alpha: *const f64,
    len: usize,
    out_frames: *mut usize,
    out_count: *mut usize,
) -> OfaStatus {
    guarded(|| {
        let (Some(values), false, false) =
            (slice_arg(alpha, len), out_frames.is_null(), out_count.is_null())
        else {
            set_error("null pointer");
            return OfaStatus::NullPointer;
        };
        let a = match alpha_from(values) {
            Ok(a) => a,
            Err(e) => return fail(e),
        };
        match integrate_and_fire(&a, &CifOptions::default()) {
            Ok(seg) => {
                let frames = std::slice::from_raw_parts_mut(out_frames, len);
                for (slot, ev) in frames.iter_mut().zip(&seg.events) {
                    *slot = ev.fire_frame;
                }
                *out_count = seg.events.len();
                OfaStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Integrate-and-fire pooling of a `frames` x `dim` row-major feature matrix
/// under `alpha` (length `frames`). `out` must hold `frames * dim` values;
/// the produced row count (at most `frames`) lands in `out_frames`.
///
/// # Safety
/// Pointer arguments must be valid for the stated capacities.
#[no_mangle]
pub unsafe extern "C" fn ofa_pool(
    features: *const f64,
    frames: usize,
    dim: usize,
    alpha: *const f64,
    out: *mut f64,
    out_frames: *mut usize,
) -> OfaStatus {
    guarded(|| {
        let (Some(feat), Some(av), false, false) = (
            slice_arg(features, frames * dim),
            slice_arg(alpha, frames),
            out.is_null(),
            out_frames.is_null(),
        ) else {
            set_error("null pointer");
            return OfaStatus::NullPointer;
        };
        let run = || -> Result<(Matrix, usize), Error> {
            let a = alpha_from(av)?;
            let m = Matrix::from_vec(frames, dim, feat.to_vec())?;
            let seg = integrate_and_fire(&a, &CifOptions::default())?;
            let pooled = pool_segments(&m, &a, &seg)?;
            let n = pooled.frames.rows();
            Ok((pooled.frames, n))
        };
        match run() {
            Ok((pooled, n)) => {
                std::slice::from_raw_parts_mut(out, n * dim).copy_from_slice(pooled.data());
                *out_frames = n;
                OfaStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Milliseconds of input represented by one output frame.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ofa_frame_period_ms(
    input_frames: usize,
    fires: usize,
    base_period_ms: f64,
    out: *mut f64,
) -> OfaStatus {
    guarded(|| {
        if out.is_null() {
            set_error("null pointer");
            return OfaStatus::NullPointer;
        }
        match frame_period(input_frames, fires, base_period_ms) {
            Ok(p) => {
                *out = p;
                OfaStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Total multiply-accumulates of the mixer stack plus alpha module at
/// sequence length `n`.
///
/// # Safety
/// `out_total` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ofa_transformer_macs(
    hidden_dim: u64,
    ffn_dim: u64,
    num_layers: u64,
    alpha_macs_per_frame: u64,
    n: u64,
    out_total: *mut u64,
) -> OfaStatus {
    guarded(|| {
        if out_total.is_null() {
            set_error("null pointer");
            return OfaStatus::NullPointer;
        }
        let cfg = MacsConfig {
            hidden_dim,
            ffn_dim,
            num_layers,
            alpha_macs_per_frame,
            base_period_ms: 20.0,
        };
        *out_total = transformer_macs(n, &cfg).total;
        OfaStatus::Ok
    })
}

/// Fraction of MACs saved running at `n_comp` instead of `n_base`, with the
/// alpha module still charged at `n_base`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ofa_macs_reduction(
    hidden_dim: u64,
    ffn_dim: u64,
    num_layers: u64,
    alpha_macs_per_frame: u64,
    n_base: u64,
    n_comp: u64,
    out: *mut f64,
) -> OfaStatus {
    guarded(|| {
        if out.is_null() {
            set_error("null pointer");
            return OfaStatus::NullPointer;
        }
        let cfg = MacsConfig {
            hidden_dim,
            ffn_dim,
            num_layers,
            alpha_macs_per_frame,
            base_period_ms: 20.0,
        };
        match macs_reduction(n_base, n_comp, &cfg) {
            Ok(r) => {
                *out = r;
                OfaStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Opaque handle to a loaded student model.
pub struct OfaStudent {
    student: StudentModel,
    lambda_low: f64,
    lambda_high: f64,
}

/// Load a student checkpoint from a NUL-terminated UTF-8 path.
/// On success `*out` owns the handle; release it with `ofa_student_free`.
///
/// # Safety
/// `path` must be NUL-terminated; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ofa_student_load(
    path: *const c_char,
    out: *mut *mut OfaStudent,
) -> OfaStatus {
    guarded(|| {
        if path.is_null() || out.is_null() {
            set_error("null pointer");
            return OfaStatus::NullPointer;
        }
        let Ok(path) = CStr::from_ptr(path).to_str() else {
            set_error("path is not UTF-8");
            return OfaStatus::InvalidArgument;
        };
        match StudentModel::load_checkpoint(Path::new(path)) {
            Ok((student, _, range)) => {
                let handle = Box::new(OfaStudent {
                    student,
                    lambda_low: range.low,
                    lambda_high: range.high,
                });
                *out = Box::into_raw(handle);
                OfaStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Release a handle returned by `ofa_student_load`. Null is a no-op.
///
/// # Safety
/// `handle` must be null or a pointer from `ofa_student_load`, passed once.
#[no_mangle]
pub unsafe extern "C" fn ofa_student_free(handle: *mut OfaStudent) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Input feature width the model expects.
///
/// # Safety
/// `handle` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn ofa_student_input_dim(
    handle: *const OfaStudent,
    out: *mut usize,
) -> OfaStatus {
    guarded(|| {
        if handle.is_null() || out.is_null() {
            set_error("null pointer");
            return OfaStatus::NullPointer;
        }
        *out = (*handle).student.cfg.input_dim;
        OfaStatus::Ok
    })
}

/// Width of the compressed representation rows.
///
/// # Safety
/// `handle` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn ofa_student_model_dim(
    handle: *const OfaStudent,
    out: *mut usize,
) -> OfaStatus {
    guarded(|| {
        if handle.is_null() || out.is_null() {
            set_error("null pointer");
            return OfaStatus::NullPointer;
        }
        *out = (*handle).student.cfg.model_dim;
        OfaStatus::Ok
    })
}

/// Lambda range the checkpoint was pre-trained on.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ofa_student_lambda_range(
    handle: *const OfaStudent,
    out_low: *mut f64,
    out_high: *mut f64,
) -> OfaStatus {
    guarded(|| {
        if handle.is_null() || out_low.is_null() || out_high.is_null() {
            set_error("null pointer");
            return OfaStatus::NullPointer;
        }
        *out_low = (*handle).lambda_low;
        *out_high = (*handle).lambda_high;
        OfaStatus::Ok
    })
}

/// Run the inference path (heads discarded) on a `frames` x `dim` row-major
/// feature matrix at compression control `lambda`. `out` must hold
/// `frames * model_dim` values; the produced row count lands in `out_rows`
/// and the row width in `out_cols`.
///
/// # Safety
/// Pointer arguments must be valid for the stated capacities.
#[no_mangle]
pub unsafe extern "C" fn ofa_student_compress(
    handle: *const OfaStudent,
    features: *const f64,
    frames: usize,
    dim: usize,
    lambda: f64,
    out: *mut f64,
    out_rows: *mut usize,
    out_cols: *mut usize,
) -> OfaStatus {
    guarded(|| {
        let (false, Some(feat), false, false, false) = (
            handle.is_null(),
            slice_arg(features, frames * dim),
            out.is_null(),
            out_rows.is_null(),
            out_cols.is_null(),
        ) else {
            set_error("null pointer");
            return OfaStatus::NullPointer;
        };
        let run = || -> Result<Matrix, Error> {
            let m = Matrix::from_vec(frames, dim, feat.to_vec())?;
            let (compressed, _) = (*handle).student.compress(&m, lambda)?;
            Ok(compressed)
        };
        match run() {
            Ok(compressed) => {
                let n = compressed.numel();
                std::slice::from_raw_parts_mut(out, n).copy_from_slice(compressed.data());
                *out_rows = compressed.rows();
                *out_cols = compressed.cols();
                OfaStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}
