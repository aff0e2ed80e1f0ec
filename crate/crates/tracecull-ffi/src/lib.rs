//! C ABI over the trace reduction pipeline.
//!
//! The streaming eliminator is the piece meant for embedding: an
//! instrumentation agent on a server node can feed raw log lines through
//! [`tc_eliminator_step`] and ship only the surviving tuple lines. One-shot
//! file helpers cover threshold learning, whole-file transformation, and
//! correlation. Every function returns a [`TcStatus`]; details of the last
//! failure on the current thread come from [`tc_last_error`].

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use libc::{c_char, size_t};

use tracecull::codec;
use tracecull::correlate::{correlate, write_paths_jsonl};
use tracecull::eliminate::{step, transform_stream, Action, EliminationConfig, StateMap};
use tracecull::threshold::{extract_first_sizes, kmeans2};
use tracecull::TupleRecord;

/// Result of a tracecull call.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum TcStatus {
    Ok = 0,
    InvalidArgument = 1,
    ParseError = 2,
    IoError = 3,
    /// No usable samples or records in the input.
    EmptyInput = 4,
    /// The output buffer is too small; the required size is in `out_len`.
    BufferTooSmall = 5,
    InternalError = 6,
}

/// Counters of one transform run.
#[repr(C)]
#[derive(Clone, Copy, Default)]
pub struct TcTransformStats {
    pub records_in: u64,
    pub tuples_out: u64,
    pub dropped: u64,
    pub unmapped_emits: u64,
}

/// Counters of one correlation run.
#[repr(C)]
#[derive(Clone, Copy, Default)]
pub struct TcCorrelateStats {
    pub paths: u64,
    pub simple: u64,
    pub complex: u64,
    pub degenerate_dropped: u64,
    pub orphans: u64,
}

/// Streaming eliminator handle. Opaque; create with [`tc_eliminator_new`],
/// release with [`tc_eliminator_free`].
pub struct TcEliminator {
    config: EliminationConfig,
    states: StateMap,
    next_seq: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: impl std::fmt::Display) {
    let text = message.to_string();
    let sanitized = CString::new(text).unwrap_or_else(|_| CString::new("invalid error").unwrap());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = sanitized);
}

fn fail(status: TcStatus, message: impl std::fmt::Display) -> TcStatus {
    set_error(message);
    status
}

/// Copies the last error message of this thread into `buf` (NUL terminated,
/// truncated to `cap`); returns the full message length in bytes.
///
/// # Safety
/// `buf` must point to `cap` writable bytes, or be NULL (then only the
/// length is returned).
#[no_mangle]
pub unsafe extern "C" fn tc_last_error(buf: *mut c_char, cap: size_t) -> size_t {
    LAST_ERROR.with(|slot| {
        let message = slot.borrow();
        let bytes = message.as_bytes();
        if !buf.is_null() && cap > 0 {
            let n = bytes.len().min(cap - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

unsafe fn path_arg(ptr: *const c_char, name: &str) -> Result<PathBuf, TcStatus> {
    if ptr.is_null() {
        return Err(fail(TcStatus::InvalidArgument, format!("{name} is NULL")));
    }
    match CStr::from_ptr(ptr).to_str() {
        Ok(s) => Ok(PathBuf::from(s)),
        Err(_) => Err(fail(
            TcStatus::InvalidArgument,
            format!("{name} is not valid UTF-8"),
        )),
    }
}

fn guarded(body: impl FnOnce() -> TcStatus) -> TcStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => fail(TcStatus::InternalError, "internal panic"),
    }
}

/// Creates a streaming eliminator for a first-tier node stream.
///
/// `threshold` is the first-message size boundary (strictly-over survives as
/// complex); `first_tier_port` is the service port clients hit. Returns NULL
/// when `threshold` is not a finite number.
#[no_mangle]
pub extern "C" fn tc_eliminator_new(threshold: f64, first_tier_port: u16) -> *mut TcEliminator {
    if !threshold.is_finite() {
        set_error("threshold must be finite");
        return std::ptr::null_mut();
    }
    Box::into_raw(Box::new(TcEliminator {
        config: EliminationConfig::with_port(threshold, first_tier_port),
        states: StateMap::new(),
        next_seq: 0,
    }))
}

/// Releases an eliminator. NULL is a no-op.
///
/// # Safety
/// `handle` must have come from [`tc_eliminator_new`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn tc_eliminator_free(handle: *mut TcEliminator) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Feeds one raw log line (no newline) through the eliminator.
///
/// On TC_STATUS_OK, `*emitted` says whether the record survived; when it
/// did, the tuple line (no newline) is written NUL-terminated into `out` and
/// its length into `*out_len`. With a too-small buffer the required length
/// lands in `*out_len` and TC_STATUS_BUFFER_TOO_SMALL is returned; retrying
/// the same line with a bigger buffer yields the same record (the state
/// transitions of emitted records are idempotent, and the sequence number is
/// only consumed on success).
///
/// # Safety
/// `handle` must be a live eliminator; `raw_line` a NUL-terminated string;
/// `emitted` and `out_len` writable; `out` must point to `out_cap` writable
/// bytes when `out_cap > 0`.
#[no_mangle]
pub unsafe extern "C" fn tc_eliminator_step(
    handle: *mut TcEliminator,
    raw_line: *const c_char,
    emitted: *mut bool,
    out: *mut c_char,
    out_cap: size_t,
    out_len: *mut size_t,
) -> TcStatus {
    if handle.is_null() || raw_line.is_null() || emitted.is_null() || out_len.is_null() {
        return fail(TcStatus::InvalidArgument, "NULL argument");
    }
    let line = match CStr::from_ptr(raw_line).to_str() {
        Ok(s) => s,
        Err(_) => return fail(TcStatus::InvalidArgument, "raw_line is not valid UTF-8"),
    };
    let eliminator = &mut *handle;
    guarded(|| {
        let record = match codec::parse_raw_line(line) {
            Ok(r) => r,
            Err(e) => return fail(TcStatus::ParseError, e),
        };
        match step(&mut eliminator.states, &record, &eliminator.config) {
            Action::Drop => {
                *emitted = false;
                *out_len = 0;
                TcStatus::Ok
            }
            Action::Emit => {
                let tuple = TupleRecord::new(eliminator.next_seq, record);
                let line = codec::serialize_tuple(&tuple);
                let needed = line.len() + 1;
                if out.is_null() || out_cap < needed {
                    *out_len = needed;
                    return fail(
                        TcStatus::BufferTooSmall,
                        format!("need {needed} bytes for the tuple line"),
                    );
                }
                let bytes = line.as_bytes();
                std::ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, out, bytes.len());
                *out.add(bytes.len()) = 0;
                *out_len = bytes.len();
                *emitted = true;
                eliminator.next_seq += 1;
                TcStatus::Ok
            }
        }
    })
}

/// Learns the first-message size threshold from a raw first-tier log.
///
/// # Safety
/// `path` must be a NUL-terminated string and `threshold_out` writable.
#[no_mangle]
pub unsafe extern "C" fn tc_threshold_file(
    path: *const c_char,
    first_tier_port: u16,
    max_iters: u32,
    threshold_out: *mut f64,
) -> TcStatus {
    if threshold_out.is_null() {
        return fail(TcStatus::InvalidArgument, "threshold_out is NULL");
    }
    let path = match path_arg(path, "path") {
        Ok(p) => p,
        Err(status) => return status,
    };
    guarded(|| {
        let records = match codec::read_raw_file(&path) {
            Ok(r) => r,
            Err(codec::CodecError::Io(e)) => return fail(TcStatus::IoError, e),
            Err(codec::CodecError::Parse(e)) => return fail(TcStatus::ParseError, e),
        };
        let sizes: Vec<f64> = extract_first_sizes(&records, first_tier_port)
            .into_iter()
            .map(|s| s as f64)
            .collect();
        if sizes.is_empty() {
            return fail(
                TcStatus::EmptyInput,
                format!("no first messages on port {first_tier_port}"),
            );
        }
        match kmeans2(&sizes, max_iters) {
            Ok(clusters) => {
                *threshold_out = (clusters.c_low + clusters.c_high) / 2.0;
                TcStatus::Ok
            }
            Err(e) => fail(TcStatus::EmptyInput, e),
        }
    })
}

/// Transforms a raw log file into a tuple file, optionally eliminating.
///
/// # Safety
/// `input` and `output` must be NUL-terminated strings; `stats_out` may be
/// NULL when the counters are not wanted.
#[no_mangle]
pub unsafe extern "C" fn tc_transform_file(
    input: *const c_char,
    output: *const c_char,
    eliminate: bool,
    threshold: f64,
    first_tier_port: u16,
    stats_out: *mut TcTransformStats,
) -> TcStatus {
    let input = match path_arg(input, "input") {
        Ok(p) => p,
        Err(status) => return status,
    };
    let output = match path_arg(output, "output") {
        Ok(p) => p,
        Err(status) => return status,
    };
    if eliminate && !threshold.is_finite() {
        return fail(TcStatus::InvalidArgument, "threshold must be finite");
    }
    guarded(|| {
        let records = match codec::read_raw_file(&input) {
            Ok(r) => r,
            Err(codec::CodecError::Io(e)) => return fail(TcStatus::IoError, e),
            Err(codec::CodecError::Parse(e)) => return fail(TcStatus::ParseError, e),
        };
        let config = eliminate.then(|| EliminationConfig::with_port(threshold, first_tier_port));
        let (tuples, stats) = transform_stream(records, config.as_ref());
        let file = match File::create(output) {
            Ok(f) => f,
            Err(e) => return fail(TcStatus::IoError, e),
        };
        let mut w = BufWriter::new(file);
        if let Err(e) = codec::write_tuples(&mut w, &tuples).and_then(|_| w.flush()) {
            return fail(TcStatus::IoError, e);
        }
        if !stats_out.is_null() {
            *stats_out = TcTransformStats {
                records_in: stats.records_in,
                tuples_out: stats.tuples_out,
                dropped: stats.dropped,
                unmapped_emits: stats.unmapped_emits,
            };
        }
        TcStatus::Ok
    })
}

/// Correlates tuple files into causal paths, written as JSON lines.
///
/// # Safety
/// `inputs` must point to `n_inputs` NUL-terminated strings; `output` must
/// be a NUL-terminated string; `stats_out` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn tc_correlate_files(
    inputs: *const *const c_char,
    n_inputs: size_t,
    output: *const c_char,
    drop_degenerate: bool,
    stats_out: *mut TcCorrelateStats,
) -> TcStatus {
    if inputs.is_null() || n_inputs == 0 {
        return fail(TcStatus::InvalidArgument, "no input files");
    }
    let output = match path_arg(output, "output") {
        Ok(p) => p,
        Err(status) => return status,
    };
    let mut paths = Vec::with_capacity(n_inputs);
    for i in 0..n_inputs {
        match path_arg(*inputs.add(i), "input") {
            Ok(p) => paths.push(p),
            Err(status) => return status,
        }
    }
    guarded(|| {
        let mut tuples = Vec::new();
        let mut input_bytes = 0u64;
        for path in paths {
            match codec::read_tuple_file(&path) {
                Ok(t) => tuples.extend(t),
                Err(codec::CodecError::Io(e)) => return fail(TcStatus::IoError, e),
                Err(codec::CodecError::Parse(e)) => return fail(TcStatus::ParseError, e),
            }
            match std::fs::metadata(&path) {
                Ok(m) => input_bytes += m.len(),
                Err(e) => return fail(TcStatus::IoError, e),
            }
        }
        let set = match correlate(&tuples, drop_degenerate) {
            Ok(s) => s,
            Err(e) => return fail(TcStatus::InternalError, e),
        };
        let file = match File::create(output) {
            Ok(f) => f,
            Err(e) => return fail(TcStatus::IoError, e),
        };
        let mut w = BufWriter::new(file);
        if let Err(e) = write_paths_jsonl(&mut w, &set, input_bytes).and_then(|_| w.flush()) {
            return fail(TcStatus::IoError, e);
        }
        if !stats_out.is_null() {
            let summary = set.summary(input_bytes);
            *stats_out = TcCorrelateStats {
                paths: summary.paths,
                simple: summary.simple,
                complex: summary.complex,
                degenerate_dropped: summary.degenerate_dropped,
                orphans: summary.orphans,
            };
        }
        TcStatus::Ok
    })
}
