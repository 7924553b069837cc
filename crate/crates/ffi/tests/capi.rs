use std::ffi::{CStr, CString};
use std::process::Command;
use std::ptr;

use cotrain::storage::write_mdsf;
use cotrain::synth::GaussianStream;
use cotrain_ffi::*;

fn cstr(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> Option<String> {
    let p = ct_last_error_message();
    if p.is_null() {
        return None;
    }
    let s = unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned();
    unsafe { ct_string_free(p) };
    Some(s)
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(ct_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn register_and_read_back() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.mdsf");
    let records: Vec<(i64, Vec<u8>)> = (0..5).map(|i| (i * 10, vec![i as u8; 4])).collect();
    write_mdsf(&path, 12, records.iter().map(|(l, p)| (*l, p.as_slice()))).unwrap();

    let store = ct_store_new();
    let offsets = [0i64, 1, 2, 3, 4];
    let (mut first, mut end) = (0u64, 0u64);
    let p = cstr(path.to_str().unwrap());
    let st = unsafe { ct_store_register_binary(store, p.as_ptr(), 12, 100, offsets.as_ptr(), 5, &mut first, &mut end) };
    assert_eq!(st, CtStatus::Ok);
    assert_eq!((first, end), (0, 5));
    let mut n = 0u64;
    assert_eq!(unsafe { ct_store_len(store, &mut n) }, CtStatus::Ok);
    assert_eq!(n, 5);

    let (mut label, mut ts, mut len) = (0i64, 0i64, 0usize);
    let mut buf = [0u8; 4];
    let st = unsafe { ct_store_get_payload(store, 3, &mut label, &mut ts, buf.as_mut_ptr(), 4, &mut len) };
    assert_eq!(st, CtStatus::Ok);
    assert_eq!((label, ts, len, buf), (30, 103, 4, [3; 4]));

    let st = unsafe { ct_store_get_payload(store, 3, ptr::null_mut(), ptr::null_mut(), buf.as_mut_ptr(), 2, &mut len) };
    assert_eq!(st, CtStatus::BufferTooSmall);
    assert_eq!(len, 4);

    let st = unsafe { ct_store_get_payload(store, 99, ptr::null_mut(), ptr::null_mut(), buf.as_mut_ptr(), 4, &mut len) };
    assert_eq!(st, CtStatus::Storage);
    assert!(last_error().unwrap().contains("99"));

    // registering the same file twice is refused
    let st = unsafe { ct_store_register_binary(store, p.as_ptr(), 12, 0, ptr::null(), 0, ptr::null_mut(), ptr::null_mut()) };
    assert_eq!(st, CtStatus::Storage);

    let saved = cstr(dir.path().join("saved").to_str().unwrap());
    std::fs::create_dir_all(dir.path().join("saved")).unwrap();
    assert_eq!(unsafe { ct_store_save(store, saved.as_ptr()) }, CtStatus::Ok);
    let mut reopened = ptr::null_mut();
    assert_eq!(unsafe { ct_store_open(saved.as_ptr(), &mut reopened) }, CtStatus::Ok);
    assert_eq!(unsafe { ct_store_len(reopened, &mut n) }, CtStatus::Ok);
    assert_eq!(n, 5);
    unsafe {
        ct_store_free(reopened);
        ct_store_free(store);
    }
}

#[test]
fn null_arguments_are_reported() {
    let mut n = 0u64;
    assert_eq!(unsafe { ct_store_len(ptr::null(), &mut n) }, CtStatus::NullPointer);
    assert_eq!(last_error().as_deref(), Some("store is null"));
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { ct_store_open(ptr::null(), &mut out) }, CtStatus::NullPointer);
    assert!(out.is_null());
    unsafe { ct_store_free(ptr::null_mut()) };
    unsafe { ct_string_free(ptr::null_mut()) };
}

#[test]
fn success_clears_the_error() {
    let mut n = 0u64;
    unsafe { ct_store_len(ptr::null(), &mut n) };
    assert!(last_error().is_some());
    let store = ct_store_new();
    assert_eq!(unsafe { ct_store_len(store, &mut n) }, CtStatus::Ok);
    assert!(last_error().is_none());
    unsafe { ct_store_free(store) };
}

#[test]
fn mmd_of_identical_sets_is_zero() {
    let x = [0.0, 1.0, 2.0, 0.5, -1.0, 3.0];
    let y = [5.0, 5.0, 6.0, 5.5, 4.0, 7.0];
    let mut v = f64::NAN;
    assert_eq!(unsafe { ct_mmd2(x.as_ptr(), 3, x.as_ptr(), 3, 2, 1.0, &mut v) }, CtStatus::Ok);
    assert_eq!(v, 0.0);
    assert_eq!(unsafe { ct_mmd2(x.as_ptr(), 3, y.as_ptr(), 3, 2, 0.0, &mut v) }, CtStatus::Ok);
    assert!(v > 0.1);
    assert_eq!(unsafe { ct_mmd2(x.as_ptr(), 3, y.as_ptr(), 3, 0, 1.0, &mut v) }, CtStatus::InvalidArgument);
}

#[test]
fn composite_mapping_through_the_abi() {
    let ends = [3i64, 6, 10, 17, 21];
    let anchors = [0i64, 4, 8, 12, 16, 20];
    let mut out = [0i64; 6];
    let st = unsafe { ct_composite_mapping(ends.as_ptr(), 5, anchors.as_ptr(), 6, false, false, out.as_mut_ptr()) };
    assert_eq!(st, CtStatus::Ok);
    assert_eq!(out, [-1, 0, 1, 2, 2, 3]);
    let st = unsafe { ct_composite_mapping(ends.as_ptr(), 5, anchors.as_ptr(), 6, true, true, out.as_mut_ptr()) };
    assert_eq!(st, CtStatus::Ok);
    assert_eq!(out, [4, 1, 2, 3, 3, 4]);
    let unordered = [5i64, 1];
    let st = unsafe { ct_composite_mapping(unordered.as_ptr(), 2, anchors.as_ptr(), 6, false, false, out.as_mut_ptr()) };
    assert_eq!(st, CtStatus::InvalidArgument);
}

fn run_config(trigger: &str) -> CString {
    cstr(&format!(
        "model:\n  id: LogisticRegression\n  config: {{num_classes: 2, feature_dim: 4}}\n\
         trigger: {trigger}\nevaluation:\n  intervals: {{length: 100}}\nseed: 3\n"
    ))
}

#[test]
fn pipeline_runs_and_reports() {
    let dir = tempfile::tempdir().unwrap();
    let spec = GaussianStream { samples: 600, dim: 4, seed: 1, ..GaussianStream::default() };
    let store = spec.materialize(&dir.path().join("data.mdsf")).unwrap();
    store.save(dir.path()).unwrap();
    let mut handle = ptr::null_mut();
    let d = cstr(dir.path().to_str().unwrap());
    assert_eq!(unsafe { ct_store_open(d.as_ptr(), &mut handle) }, CtStatus::Ok);

    let out = dir.path().join("out");
    let o = cstr(out.to_str().unwrap());
    let mut score = f64::NAN;
    let cfg = run_config("{id: DataAmountTrigger, num_samples: 100}");
    assert_eq!(unsafe { ct_run_pipeline(cfg.as_ptr(), handle, o.as_ptr(), &mut score) }, CtStatus::Ok, "{:?}", last_error());
    assert!(score > 0.8, "score {score}");
    assert!(out.join("score.json").is_file());

    let never = run_config("{id: DataAmountTrigger, num_samples: 100000}");
    assert_eq!(unsafe { ct_run_pipeline(never.as_ptr(), handle, o.as_ptr(), &mut score) }, CtStatus::NoTriggers);
    assert!(score.is_nan());

    let bad = cstr("model: {id: Nope}\n");
    assert_eq!(unsafe { ct_run_pipeline(bad.as_ptr(), handle, o.as_ptr(), ptr::null_mut()) }, CtStatus::Config);
    assert!(last_error().unwrap().contains("model"));
    unsafe { ct_store_free(handle) };
}

#[test]
fn header_compiles_as_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/cotrain.h");
    let Ok(out) = Command::new("cc").args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c", header]).output() else {
        eprintln!("no C compiler; skipping");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
