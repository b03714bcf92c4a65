//! C ABI over the `twohmm` library.
//!
//! Models and streams are opaque heap handles created and destroyed by this
//! library. Every fallible call returns a [`TwohmmStatus`]; on failure a
//! message for the calling thread is available from
//! [`twohmm_last_error_message`]. States are written as `0` for `a` and `1`
//! for `b`. Panics never cross the boundary.

use std::cell::RefCell;
use std::collections::VecDeque;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use twohmm::model::{ModelDocument, Observation};
use twohmm::stream::{Segment, StreamDecoder, StreamError};
use twohmm::viterbi::{decode_batch, ViterbiError};
use twohmm::{CaseLabel, State, TwoStateHmm};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TwohmmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    ParseError = 3,
    InvalidModel = 4,
    InvalidObservation = 5,
    ImpossibleObservation = 6,
    EmptyInput = 7,
    BufferTooSmall = 8,
    NoSegment = 9,
    StreamFinalized = 10,
    StreamPoisoned = 11,
    Panic = 12,
}

/// Opaque model handle.
pub struct TwohmmModel {
    inner: TwoStateHmm,
}

/// Opaque streaming decoder handle with its queue of committed segments.
pub struct TwohmmStream {
    decoder: StreamDecoder,
    pending: VecDeque<Segment>,
    /// Set by flush, including a flush with nothing buffered.
    finished: bool,
}

/// Header of a committed segment; `node_state` is -1 for a flushed tail.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TwohmmSegmentInfo {
    pub start: u64,
    pub end: u64,
    pub len: usize,
    pub node_state: i32,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn fail(status: TwohmmStatus, msg: impl Into<String>) -> TwohmmStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> TwohmmStatus) -> TwohmmStatus {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| fail(TwohmmStatus::Panic, "internal panic"))
}

fn state_code(s: State) -> u8 {
    s.index() as u8
}

fn segment_info(seg: &Segment) -> TwohmmSegmentInfo {
    TwohmmSegmentInfo {
        start: seg.start as u64,
        end: seg.end as u64,
        len: seg.states.len(),
        node_state: seg.node_state.map_or(-1, |n| n.index() as i32),
    }
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next call on the same thread.
#[no_mangle]
pub extern "C" fn twohmm_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |m| m.as_ptr()))
}

/// Parses and validates a JSON model document.
///
/// # Safety
/// `json` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn twohmm_model_from_json(json: *const c_char, out: *mut *mut TwohmmModel) -> TwohmmStatus {
    guard(|| {
        if json.is_null() || out.is_null() {
            return fail(TwohmmStatus::NullPointer, "null argument");
        }
        let Ok(text) = unsafe { CStr::from_ptr(json) }.to_str() else {
            return fail(TwohmmStatus::InvalidUtf8, "model text is not UTF-8");
        };
        let doc = match ModelDocument::from_json(text) {
            Ok(d) => d,
            Err(e) => return fail(TwohmmStatus::ParseError, e.to_string()),
        };
        match doc.into_model() {
            Ok(m) => {
                unsafe { *out = Box::into_raw(Box::new(TwohmmModel { inner: m })) };
                TwohmmStatus::Ok
            }
            Err(e) => fail(TwohmmStatus::InvalidModel, e.to_string()),
        }
    })
}

/// # Safety
/// `model` must come from [`twohmm_model_from_json`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn twohmm_model_free(model: *mut TwohmmModel) {
    if !model.is_null() {
        drop(unsafe { Box::from_raw(model) });
    }
}

/// Writes the case label as 1, 2 or 3.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn twohmm_model_case(model: *const TwohmmModel, out_case: *mut i32) -> TwohmmStatus {
    guard(|| {
        let (Some(m), false) = (unsafe { model.as_ref() }, out_case.is_null()) else {
            return fail(TwohmmStatus::NullPointer, "null argument");
        };
        let case = match m.inner.classify_case() {
            CaseLabel::Case1 => 1,
            CaseLabel::Case2 => 2,
            CaseLabel::Case3 => 3,
        };
        unsafe { *out_case = case };
        TwohmmStatus::Ok
    })
}

/// Writes the stationary distribution `(pi_a, pi_b)` to `out[0..2]`.
///
/// # Safety
/// `out` must hold two doubles.
#[no_mangle]
pub unsafe extern "C" fn twohmm_model_stationary(model: *const TwohmmModel, out: *mut f64) -> TwohmmStatus {
    guard(|| {
        let (Some(m), false) = (unsafe { model.as_ref() }, out.is_null()) else {
            return fail(TwohmmStatus::NullPointer, "null argument");
        };
        let pi = m.inner.stationary();
        unsafe { ptr::copy_nonoverlapping(pi.as_ptr(), out, 2) };
        TwohmmStatus::Ok
    })
}

fn symbols_to_obs(model: &TwoStateHmm, xs: &[u32]) -> Result<Vec<Observation>, TwohmmStatus> {
    let Some(alphabet) = model.alphabet() else {
        return Err(fail(TwohmmStatus::InvalidObservation, "model has real-valued emissions"));
    };
    xs.iter()
        .map(|&x| {
            if (x as usize) < alphabet.len() {
                Ok(Observation::Symbol(x))
            } else {
                Err(fail(TwohmmStatus::InvalidObservation, format!("symbol index {x} outside the alphabet")))
            }
        })
        .collect()
}

fn reals_to_obs(model: &TwoStateHmm, xs: &[f64]) -> Result<Vec<Observation>, TwohmmStatus> {
    if model.is_categorical() {
        return Err(fail(TwohmmStatus::InvalidObservation, "model has categorical emissions"));
    }
    xs.iter()
        .map(|&x| {
            if x.is_finite() {
                Ok(Observation::Real(x))
            } else {
                Err(fail(TwohmmStatus::InvalidObservation, "observation is not finite"))
            }
        })
        .collect()
}

fn viterbi_status(e: ViterbiError) -> TwohmmStatus {
    let status = match e {
        ViterbiError::EmptyObservations => TwohmmStatus::EmptyInput,
        ViterbiError::ImpossibleObservation { .. } => TwohmmStatus::ImpossibleObservation,
        _ => TwohmmStatus::InvalidObservation,
    };
    fail(status, e.to_string())
}

unsafe fn decode_into(
    model: *const TwohmmModel,
    convert: impl FnOnce(&TwoStateHmm) -> Result<Vec<Observation>, TwohmmStatus>,
    len: usize,
    out_states: *mut u8,
    out_log_likelihood: *mut f64,
) -> TwohmmStatus {
    let Some(m) = (unsafe { model.as_ref() }) else {
        return fail(TwohmmStatus::NullPointer, "null model");
    };
    if out_states.is_null() && len > 0 {
        return fail(TwohmmStatus::NullPointer, "null output buffer");
    }
    let obs = match convert(&m.inner) {
        Ok(o) => o,
        Err(s) => return s,
    };
    match decode_batch(&m.inner, &obs) {
        Ok(a) => {
            let out = unsafe { std::slice::from_raw_parts_mut(out_states, len) };
            for (o, s) in out.iter_mut().zip(&a.states) {
                *o = state_code(*s);
            }
            if !out_log_likelihood.is_null() {
                unsafe { *out_log_likelihood = a.log_likelihood };
            }
            TwohmmStatus::Ok
        }
        Err(e) => viterbi_status(e),
    }
}

/// Batch MAP decoding of `len` symbol indices into `out_states[0..len]`.
/// `out_log_likelihood` may be null.
///
/// # Safety
/// `symbols` and `out_states` must hold `len` elements.
#[no_mangle]
pub unsafe extern "C" fn twohmm_decode_symbols(
    model: *const TwohmmModel,
    symbols: *const u32,
    len: usize,
    out_states: *mut u8,
    out_log_likelihood: *mut f64,
) -> TwohmmStatus {
    guard(|| {
        if symbols.is_null() && len > 0 {
            return fail(TwohmmStatus::NullPointer, "null input");
        }
        let xs: &[u32] = if len == 0 { &[] } else { unsafe { std::slice::from_raw_parts(symbols, len) } };
        unsafe { decode_into(model, |m| symbols_to_obs(m, xs), len, out_states, out_log_likelihood) }
    })
}

/// Batch MAP decoding of `len` real observations.
///
/// # Safety
/// `values` and `out_states` must hold `len` elements.
#[no_mangle]
pub unsafe extern "C" fn twohmm_decode_reals(
    model: *const TwohmmModel,
    values: *const f64,
    len: usize,
    out_states: *mut u8,
    out_log_likelihood: *mut f64,
) -> TwohmmStatus {
    guard(|| {
        if values.is_null() && len > 0 {
            return fail(TwohmmStatus::NullPointer, "null input");
        }
        let xs: &[f64] = if len == 0 { &[] } else { unsafe { std::slice::from_raw_parts(values, len) } };
        unsafe { decode_into(model, |m| reals_to_obs(m, xs), len, out_states, out_log_likelihood) }
    })
}

/// New streaming decoder over a copy of `model`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn twohmm_stream_new(model: *const TwohmmModel, out: *mut *mut TwohmmStream) -> TwohmmStatus {
    guard(|| {
        let (Some(m), false) = (unsafe { model.as_ref() }, out.is_null()) else {
            return fail(TwohmmStatus::NullPointer, "null argument");
        };
        let stream = TwohmmStream { decoder: StreamDecoder::new(m.inner.clone()), pending: VecDeque::new(), finished: false };
        unsafe { *out = Box::into_raw(Box::new(stream)) };
        TwohmmStatus::Ok
    })
}

/// # Safety
/// `stream` must come from [`twohmm_stream_new`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn twohmm_stream_free(stream: *mut TwohmmStream) {
    if !stream.is_null() {
        drop(unsafe { Box::from_raw(stream) });
    }
}

fn stream_status(e: StreamError) -> TwohmmStatus {
    let status = match e {
        StreamError::ImpossibleObservation { .. } => TwohmmStatus::ImpossibleObservation,
        StreamError::Poisoned => TwohmmStatus::StreamPoisoned,
        StreamError::Finalized => TwohmmStatus::StreamFinalized,
        StreamError::EmptyBuffer => TwohmmStatus::EmptyInput,
    };
    fail(status, e.to_string())
}

unsafe fn push(
    stream: *mut TwohmmStream,
    convert: impl FnOnce(&TwoStateHmm) -> Result<Vec<Observation>, TwohmmStatus>,
) -> TwohmmStatus {
    let Some(s) = (unsafe { stream.as_mut() }) else {
        return fail(TwohmmStatus::NullPointer, "null stream");
    };
    if s.finished {
        return stream_status(StreamError::Finalized);
    }
    let x = match convert(s.decoder.model()) {
        Ok(mut v) => v.remove(0),
        Err(status) => return status,
    };
    match s.decoder.push(&x) {
        Ok(seg) => {
            s.pending.extend(seg);
            TwohmmStatus::Ok
        }
        Err(e) => stream_status(e),
    }
}

/// Feeds one symbol index; a committed segment is queued for
/// [`twohmm_stream_take_segment`].
///
/// # Safety
/// `stream` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn twohmm_stream_push_symbol(stream: *mut TwohmmStream, symbol: u32) -> TwohmmStatus {
    guard(|| unsafe { push(stream, |m| symbols_to_obs(m, &[symbol])) })
}

/// Feeds one real observation.
///
/// # Safety
/// `stream` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn twohmm_stream_push_real(stream: *mut TwohmmStream, value: f64) -> TwohmmStatus {
    guard(|| unsafe { push(stream, |m| reals_to_obs(m, &[value])) })
}

/// Describes the oldest queued segment without removing it. Returns
/// `NoSegment` when the queue is empty.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn twohmm_stream_peek_segment(
    stream: *const TwohmmStream,
    out_info: *mut TwohmmSegmentInfo,
) -> TwohmmStatus {
    guard(|| {
        let (Some(s), false) = (unsafe { stream.as_ref() }, out_info.is_null()) else {
            return fail(TwohmmStatus::NullPointer, "null argument");
        };
        let Some(seg) = s.pending.front() else {
            return fail(TwohmmStatus::NoSegment, "no committed segment is queued");
        };
        unsafe { *out_info = segment_info(seg) };
        TwohmmStatus::Ok
    })
}

/// Removes the oldest queued segment, copying its states to
/// `out_states[0..capacity]`. Fails with `BufferTooSmall`, leaving the
/// segment queued, if `capacity` is below its length.
///
/// # Safety
/// `out_states` must hold `capacity` bytes; `out_info` may be null.
#[no_mangle]
pub unsafe extern "C" fn twohmm_stream_take_segment(
    stream: *mut TwohmmStream,
    out_states: *mut u8,
    capacity: usize,
    out_info: *mut TwohmmSegmentInfo,
) -> TwohmmStatus {
    guard(|| {
        let Some(s) = (unsafe { stream.as_mut() }) else {
            return fail(TwohmmStatus::NullPointer, "null stream");
        };
        let Some(seg) = s.pending.front() else {
            return fail(TwohmmStatus::NoSegment, "no committed segment is queued");
        };
        if capacity < seg.states.len() {
            return fail(
                TwohmmStatus::BufferTooSmall,
                format!("segment has {} states, buffer holds {capacity}", seg.states.len()),
            );
        }
        if out_states.is_null() {
            return fail(TwohmmStatus::NullPointer, "null output buffer");
        }
        let seg = s.pending.pop_front().expect("front exists");
        let out = unsafe { std::slice::from_raw_parts_mut(out_states, seg.states.len()) };
        for (o, st) in out.iter_mut().zip(&seg.states) {
            *o = state_code(*st);
        }
        if !out_info.is_null() {
            unsafe { *out_info = segment_info(&seg) };
        }
        TwohmmStatus::Ok
    })
}

/// Ends the stream, queueing the uncommitted tail. An empty tail queues
/// nothing and still finalizes the stream.
///
/// # Safety
/// `stream` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn twohmm_stream_flush(stream: *mut TwohmmStream) -> TwohmmStatus {
    guard(|| {
        let Some(s) = (unsafe { stream.as_mut() }) else {
            return fail(TwohmmStatus::NullPointer, "null stream");
        };
        if s.finished {
            return stream_status(StreamError::Finalized);
        }
        match s.decoder.flush() {
            Ok(seg) => {
                s.pending.push_back(seg);
                s.finished = true;
                TwohmmStatus::Ok
            }
            Err(StreamError::EmptyBuffer) => {
                s.finished = true;
                TwohmmStatus::Ok
            }
            Err(e) => stream_status(e),
        }
    })
}
