//! C interface to the cotrain core.
//!
//! Every fallible call returns a [`CtStatus`]; on failure the message is
//! available from [`ct_last_error_message`] on the same thread. Handles are
//! opaque and must be released with their `_free` function. Panics never
//! cross the boundary; they surface as [`CtStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;
use std::slice;
use std::sync::Arc;

use cotrain::config::parse_config;
use cotrain::drift::{mmd2, Bandwidth};
use cotrain::evaluator::{composite_mapping, CompositeVariant, EvaluationInterval, UndefinedTrained};
use cotrain::report::write_reports;
use cotrain::storage::{FileRecordSpec, SampleStore};
use cotrain::supervisor::{run_pipeline, RunStatus};
use cotrain::Matrix;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CtStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    /// The caller's buffer is too small; the required length was written.
    BufferTooSmall = 4,
    Storage = 5,
    Config = 6,
    Runtime = 7,
    /// The pipeline ran but its policy never fired.
    NoTriggers = 8,
    Panic = 99,
}

/// A sample store: registered files plus the key index.
pub struct CtStore {
    inner: Arc<SampleStore>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl ToString) {
    let c = CString::new(msg.to_string().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(CtStatus, String);

impl Failure {
    fn new(status: CtStatus, msg: impl ToString) -> Self {
        Self(status, msg.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> CtStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CtStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            CtStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::new(CtStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure::new(CtStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn store_ref<'a>(store: *const CtStore) -> Result<&'a CtStore, Failure> {
    store.as_ref().ok_or_else(|| Failure::new(CtStatus::NullPointer, "store is null"))
}

fn out_ptr<T>(p: *mut T, what: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(Failure::new(CtStatus::NullPointer, format!("{what} is null")))
    } else {
        Ok(())
    }
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    match (p.is_null(), len) {
        (_, 0) => Ok(&[]),
        (true, _) => Err(Failure::new(CtStatus::NullPointer, format!("{what} is null"))),
        (false, n) => Ok(slice::from_raw_parts(p, n)),
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ct_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copy of the last error message on this thread, or NULL when the last call
/// succeeded. Free with [`ct_string_free`].
#[no_mangle]
pub extern "C" fn ct_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null_mut(), |c| c.clone().into_raw()))
}

/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn ct_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// An empty store.
#[no_mangle]
pub extern "C" fn ct_store_new() -> *mut CtStore {
    Box::into_raw(Box::new(CtStore { inner: Arc::new(SampleStore::new()) }))
}

/// Loads a store saved in `dir` (as written by `cotrain register` or
/// `cotrain synth`) into `*out`.
///
/// # Safety
/// `dir` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ct_store_open(dir: *const c_char, out: *mut *mut CtStore) -> CtStatus {
    guard(|| {
        out_ptr(out, "out")?;
        let dir = str_arg(dir, "dir")?;
        let store = SampleStore::load(&PathBuf::from(dir)).map_err(|e| Failure::new(CtStatus::Storage, e))?;
        *out = Box::into_raw(Box::new(CtStore { inner: Arc::new(store) }));
        Ok(())
    })
}

/// Writes the store index to `dir`.
///
/// # Safety
/// `store` must be a live handle and `dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ct_store_save(store: *const CtStore, dir: *const c_char) -> CtStatus {
    guard(|| {
        let s = store_ref(store)?;
        let dir = str_arg(dir, "dir")?;
        s.inner.save(&PathBuf::from(dir)).map_err(|e| Failure::new(CtStatus::Storage, e))
    })
}

/// # Safety
/// `store` must be NULL or a handle from this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn ct_store_free(store: *mut CtStore) {
    if !store.is_null() {
        drop(Box::from_raw(store));
    }
}

/// Number of registered samples.
///
/// # Safety
/// `store` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ct_store_len(store: *const CtStore, out: *mut u64) -> CtStatus {
    guard(|| {
        out_ptr(out, "out")?;
        *out = store_ref(store)?.inner.len() as u64;
        Ok(())
    })
}

/// Registers an MDSF file of fixed `record_bytes` records. Sample `i` gets
/// timestamp `base_timestamp + offsets[i]`, or `base_timestamp` when
/// `offsets` is NULL. The first and one-past-last assigned keys are written
/// to `first_key` / `end_key` when those are non-NULL.
///
/// # Safety
/// `store` must be a live handle not used concurrently, `path` a
/// NUL-terminated string, and `offsets` NULL or `num_offsets` readable values.
#[no_mangle]
pub unsafe extern "C" fn ct_store_register_binary(
    store: *mut CtStore,
    path: *const c_char,
    record_bytes: u32,
    base_timestamp: i64,
    offsets: *const i64,
    num_offsets: usize,
    first_key: *mut u64,
    end_key: *mut u64,
) -> CtStatus {
    guard(|| {
        let s = store.as_mut().ok_or_else(|| Failure::new(CtStatus::NullPointer, "store is null"))?;
        let path = str_arg(path, "path")?;
        let offsets = if offsets.is_null() { None } else { Some(slice_arg(offsets, num_offsets, "offsets")?) };
        let inner = Arc::get_mut(&mut s.inner)
            .ok_or_else(|| Failure::new(CtStatus::InvalidArgument, "store is in use by a running pipeline"))?;
        let keys = inner
            .register_file(&PathBuf::from(path), FileRecordSpec::BinaryFixedRecord { record_bytes }, base_timestamp, offsets)
            .map_err(|e| Failure::new(CtStatus::Storage, e))?;
        if let Some(k) = first_key.as_mut() {
            *k = keys.start;
        }
        if let Some(k) = end_key.as_mut() {
            *k = keys.end;
        }
        Ok(())
    })
}

/// Copies the payload of `key` into `buf`. `*payload_len` always receives the
/// payload length; when it exceeds `buf_len` nothing is copied and
/// `BufferTooSmall` is returned. `label` and `timestamp` may be NULL.
///
/// # Safety
/// `store` must be a live handle, `buf` NULL or `buf_len` writable bytes, and
/// the out-pointers writable when non-NULL.
#[no_mangle]
pub unsafe extern "C" fn ct_store_get_payload(
    store: *const CtStore,
    key: u64,
    label: *mut i64,
    timestamp: *mut i64,
    buf: *mut u8,
    buf_len: usize,
    payload_len: *mut usize,
) -> CtStatus {
    guard(|| {
        out_ptr(payload_len, "payload_len")?;
        let sample = store_ref(store)?.inner.read_sample(key).map_err(|e| Failure::new(CtStatus::Storage, e))?;
        *payload_len = sample.payload.len();
        if let Some(l) = label.as_mut() {
            *l = sample.label;
        }
        if let Some(t) = timestamp.as_mut() {
            *t = sample.timestamp;
        }
        if sample.payload.len() > buf_len {
            return Err(Failure::new(
                CtStatus::BufferTooSmall,
                format!("payload of {} bytes, buffer holds {buf_len}", sample.payload.len()),
            ));
        }
        if !sample.payload.is_empty() {
            out_ptr(buf, "buf")?;
            ptr::copy_nonoverlapping(sample.payload.as_ptr(), buf, sample.payload.len());
        }
        Ok(())
    })
}

/// Squared MMD between the row sets `x` (`n x dim`) and `y` (`m x dim`),
/// both row-major. A `bandwidth` of 0 or less selects the median heuristic.
///
/// # Safety
/// `x` and `y` must hold `n*dim` and `m*dim` readable doubles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ct_mmd2(
    x: *const f64,
    n: usize,
    y: *const f64,
    m: usize,
    dim: usize,
    bandwidth: f64,
    out: *mut f64,
) -> CtStatus {
    guard(|| {
        out_ptr(out, "out")?;
        if dim == 0 {
            return Err(Failure::new(CtStatus::InvalidArgument, "dim must be positive"));
        }
        let xs = Matrix::from_vec(n, dim, slice_arg(x, n * dim, "x")?.to_vec());
        let ys = Matrix::from_vec(m, dim, slice_arg(y, m * dim, "y")?.to_vec());
        let bw = if bandwidth > 0.0 { Bandwidth::Fixed(bandwidth) } else { Bandwidth::MedianHeuristic };
        *out = mmd2(&xs, &ys, bw).map_err(|e| Failure::new(CtStatus::InvalidArgument, e))?;
        Ok(())
    })
}

/// Composite-model mapping for intervals given by their anchors. Writes one
/// model index per anchor to `out`, or -1 where no model applies.
/// `trained` selects the currently-trained variant; `undefined_last` picks
/// the last model for trained lookups before any model finished.
///
/// # Safety
/// `model_ends` must hold `num_models` and `anchors` / `out` `num_anchors`
/// values.
#[no_mangle]
pub unsafe extern "C" fn ct_composite_mapping(
    model_ends: *const i64,
    num_models: usize,
    anchors: *const i64,
    num_anchors: usize,
    trained: bool,
    undefined_last: bool,
    out: *mut i64,
) -> CtStatus {
    guard(|| {
        let ends = slice_arg(model_ends, num_models, "model_ends")?;
        let anchors = slice_arg(anchors, num_anchors, "anchors")?;
        if num_anchors > 0 {
            out_ptr(out, "out")?;
        }
        let ivs: Vec<EvaluationInterval> =
            anchors.iter().map(|&a| EvaluationInterval { start: a, anchor: a, end: a, closed: true }).collect();
        let variant = if trained { CompositeVariant::CurrentlyTrained } else { CompositeVariant::CurrentlyActive };
        let undefined = if undefined_last { UndefinedTrained::Last } else { UndefinedTrained::First };
        let mapping = composite_mapping(ends, &ivs, variant, undefined)
            .map_err(|e| Failure::new(CtStatus::InvalidArgument, e))?;
        for (j, m) in mapping.into_iter().enumerate() {
            *out.add(j) = m.map_or(-1, |i| i as i64);
        }
        Ok(())
    })
}

/// Runs the pipeline described by the YAML document `config` over `store`,
/// working in `out_dir/work` and writing the reports to `out_dir`. When
/// `score` is non-NULL it receives the accuracy score of the currently
/// active composite model, or NaN if there is none.
///
/// # Safety
/// `config` and `out_dir` must be NUL-terminated strings and `store` a live
/// handle.
#[no_mangle]
pub unsafe extern "C" fn ct_run_pipeline(
    config: *const c_char,
    store: *const CtStore,
    out_dir: *const c_char,
    score: *mut f64,
) -> CtStatus {
    guard(|| {
        let cfg = parse_config(str_arg(config, "config")?).map_err(|e| Failure::new(CtStatus::Config, e))?;
        let store = Arc::clone(&store_ref(store)?.inner);
        let out = PathBuf::from(str_arg(out_dir, "out_dir")?);
        let work = out.join("work");
        if work.exists() {
            std::fs::remove_dir_all(&work).map_err(|e| Failure::new(CtStatus::Runtime, format!("{}: {e}", work.display())))?;
        }
        let outcome = run_pipeline(&cfg, store, &work).map_err(|e| Failure::new(CtStatus::Runtime, e))?;
        write_reports(&outcome, &out).map_err(|e| Failure::new(CtStatus::Runtime, e))?;
        if let Some(s) = score.as_mut() {
            *s = outcome
                .eval
                .as_ref()
                .and_then(|e| e.composite("accuracy", CompositeVariant::CurrentlyActive))
                .and_then(|c| c.score)
                .unwrap_or(f64::NAN);
        }
        if outcome.run.status == RunStatus::NoTriggers {
            return Err(Failure::new(CtStatus::NoTriggers, "the trigger policy never fired"));
        }
        Ok(())
    })
}
