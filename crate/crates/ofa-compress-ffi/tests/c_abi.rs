//! Exercise the C ABI through the exported symbols, exactly as a foreign
//! caller would: raw pointers, caller-allocated buffers, status codes.

use std::ffi::{c_char, CStr, CString};

use ofa_compress::alphamod::SampleRange;
use ofa_compress::diffmath::Matrix;
use ofa_compress::model::{StudentConfig, StudentModel, TeacherConfig, TeacherModel};
use ofa_compress_ffi::*;

fn last_error() -> String {
    unsafe {
        CStr::from_ptr(ofa_last_error_message())
            .to_string_lossy()
            .into_owned()
    }
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(ofa_version()) };
    assert!(!v.to_str().unwrap().is_empty());
}

#[test]
fn modify_alpha_matches_library() {
    let alpha = [0.2f64, 0.8];
    let mut out = [0.0f64; 2];
    let status = unsafe { ofa_modify_alpha(alpha.as_ptr(), 2, 0.5, out.as_mut_ptr()) };
    assert_eq!(status, OfaStatus::Ok);
    assert!((out[0] - 0.6).abs() < 1e-15);
    assert!((out[1] - 0.9).abs() < 1e-15);
}

#[test]
fn modify_alpha_rejects_bad_lambda_and_null() {
    let alpha = [0.5f64];
    let mut out = [0.0f64; 1];
    let status = unsafe { ofa_modify_alpha(alpha.as_ptr(), 1, 2.5, out.as_mut_ptr()) };
    assert_eq!(status, OfaStatus::LambdaOutOfRange);
    assert!(last_error().contains("2.5"));

    let status = unsafe { ofa_modify_alpha(std::ptr::null(), 1, 0.5, out.as_mut_ptr()) };
    assert_eq!(status, OfaStatus::NullPointer);
}

#[test]
fn fire_count_and_boundaries() {
    let alpha = [0.4f64, 0.5, 0.3, 0.6];
    let mut count = 0usize;
    let status = unsafe { ofa_fire_count(alpha.as_ptr(), 4, &mut count) };
    assert_eq!(status, OfaStatus::Ok);
    assert_eq!(count, 2);

    let mut frames = [0usize; 4];
    let mut n = 0usize;
    let status =
        unsafe { ofa_segment_boundaries(alpha.as_ptr(), 4, frames.as_mut_ptr(), &mut n) };
    assert_eq!(status, OfaStatus::Ok);
    assert_eq!(&frames[..n], &[2, 3]);
}

#[test]
fn pool_matches_hand_case() {
    let features = [1.0f64, 2.0, 3.0, 4.0]; // 4 x 1
    let alpha = [0.4f64, 0.5, 0.3, 0.6];
    let mut out = [0.0f64; 4];
    let mut rows = 0usize;
    let status = unsafe {
        ofa_pool(
            features.as_ptr(),
            4,
            1,
            alpha.as_ptr(),
            out.as_mut_ptr(),
            &mut rows,
        )
    };
    assert_eq!(status, OfaStatus::Ok);
    assert_eq!(rows, 2);
    assert!((out[0] - 1.7).abs() < 1e-12);
    assert!((out[1] - 3.0).abs() < 1e-12);
}

#[test]
fn profile_functions() {
    let mut period = 0.0f64;
    let status = unsafe { ofa_frame_period_ms(500, 111, 20.0, &mut period) };
    assert_eq!(status, OfaStatus::Ok);
    assert!((period - 90.09009009009009).abs() < 1e-9);

    let status = unsafe { ofa_frame_period_ms(500, 0, 20.0, &mut period) };
    assert_eq!(status, OfaStatus::InvalidArgument);

    let mut total = 0u64;
    let status = unsafe { ofa_transformer_macs(1, 1, 1, 0, 1, &mut total) };
    assert_eq!(status, OfaStatus::Ok);
    assert_eq!(total, 8);

    let mut reduction = 0.0f64;
    let status =
        unsafe { ofa_macs_reduction(768, 3072, 2, 3 * 768 * 768, 500, 111, &mut reduction) };
    assert_eq!(status, OfaStatus::Ok);
    assert!((reduction - 0.687).abs() < 0.05);
}

#[test]
fn student_handle_lifecycle() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ofac");
    let cfg = StudentConfig::default();
    let student = StudentModel::new_seeded(cfg, 5);
    let teacher = TeacherModel::new_seeded(
        TeacherConfig {
            input_dim: cfg.input_dim,
            dim: cfg.teacher_dim,
            layers: cfg.distill_heads,
        },
        6,
    );
    student
        .save_checkpoint(&path, &teacher, &SampleRange::extended())
        .unwrap();

    let cpath = CString::new(path.to_str().unwrap()).unwrap();
    let mut handle: *mut OfaStudent = std::ptr::null_mut();
    let status = unsafe { ofa_student_load(cpath.as_ptr(), &mut handle) };
    assert_eq!(status, OfaStatus::Ok);
    assert!(!handle.is_null());

    let mut input_dim = 0usize;
    let mut model_dim = 0usize;
    unsafe {
        assert_eq!(ofa_student_input_dim(handle, &mut input_dim), OfaStatus::Ok);
        assert_eq!(ofa_student_model_dim(handle, &mut model_dim), OfaStatus::Ok);
    }
    assert_eq!(input_dim, cfg.input_dim);
    assert_eq!(model_dim, cfg.model_dim);

    let (mut low, mut high) = (0.0f64, 0.0f64);
    unsafe {
        assert_eq!(
            ofa_student_lambda_range(handle, &mut low, &mut high),
            OfaStatus::Ok
        );
    }
    assert_eq!((low, high), (0.0, 1.5));

    let t = 10usize;
    let feats = Matrix::from_fn(t, cfg.input_dim, |r, c| ((r * 3 + c) as f64 * 0.21).sin());
    let mut out = vec![0.0f64; t * cfg.model_dim];
    let (mut rows, mut cols) = (0usize, 0usize);
    let status = unsafe {
        ofa_student_compress(
            handle,
            feats.data().as_ptr(),
            t,
            cfg.input_dim,
            1.2,
            out.as_mut_ptr(),
            &mut rows,
            &mut cols,
        )
    };
    assert_eq!(status, OfaStatus::Ok, "{}", last_error());
    assert_eq!(cols, cfg.model_dim);
    assert!(rows >= 1 && rows <= t);

    // Matches the library path exactly.
    let (expected, _) = student.compress(&feats, 1.2).unwrap();
    assert_eq!(expected.rows(), rows);
    assert_eq!(&out[..rows * cols], expected.data());

    // Bad lambda surfaces as a status, not a crash.
    let status = unsafe {
        ofa_student_compress(
            handle,
            feats.data().as_ptr(),
            t,
            cfg.input_dim,
            2.0,
            out.as_mut_ptr(),
            &mut rows,
            &mut cols,
        )
    };
    assert_eq!(status, OfaStatus::LambdaOutOfRange);

    unsafe {
        ofa_student_free(handle);
        ofa_student_free(std::ptr::null_mut());
    }
}

#[test]
fn load_rejects_missing_and_malformed_files() {
    let dir = tempfile::tempdir().unwrap();
    let missing = CString::new(dir.path().join("nope.ofac").to_str().unwrap()).unwrap();
    let mut handle: *mut OfaStudent = std::ptr::null_mut();
    let status = unsafe { ofa_student_load(missing.as_ptr(), &mut handle) };
    assert_eq!(status, OfaStatus::Io);

    let bad = dir.path().join("bad.ofac");
    std::fs::write(&bad, b"not a checkpoint").unwrap();
    let cbad = CString::new(bad.to_str().unwrap()).unwrap();
    let status = unsafe { ofa_student_load(cbad.as_ptr(), &mut handle) };
    assert_eq!(status, OfaStatus::BadFormat);
    assert!(!last_error().is_empty());
}

#[test]
fn generated_header_exists_and_declares_the_abi() {
    let header = std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("include")
        .join("ofa_compress.h");
    let text = std::fs::read_to_string(header).unwrap();
    for symbol in [
        "ofa_version",
        "ofa_last_error_message",
        "ofa_modify_alpha",
        "ofa_fire_count",
        "ofa_segment_boundaries",
        "ofa_pool",
        "ofa_frame_period_ms",
        "ofa_transformer_macs",
        "ofa_macs_reduction",
        "ofa_student_load",
        "ofa_student_free",
        "ofa_student_compress",
        "typedef struct OfaStudent OfaStudent",
        "OFA_STATUS_OK",
    ] {
        assert!(text.contains(symbol), "header is missing {symbol}");
    }
    let _unused: *const c_char = std::ptr::null();
}
