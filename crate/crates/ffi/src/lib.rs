//! C ABI over the streaming detector.
//!
//! Handles are opaque and owned by the caller once returned; free them with
//! the matching `*_free`. Every fallible call returns a [`WlStatus`]; on
//! failure a message is available from [`wl_last_error`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;

use wakeloc::audio::{mfcc, AudioBuffer, NUM_COEFFS};
use wakeloc::model::Model;
use wakeloc::stream::StreamState;
use wakeloc::Error;

/// Number of MFCC coefficients per frame.
pub const WL_NUM_COEFFS: usize = 16;
const _: () = assert!(WL_NUM_COEFFS == NUM_COEFFS);

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Config = 5,
    Shape = 6,
    BufferTooSmall = 7,
    Internal = 8,
}

/// A loaded model. Thread-safe to share between streams.
pub struct WlModel {
    inner: Arc<Model>,
}

/// Per-stream state. Not safe to use from two threads at once.
pub struct WlStream {
    inner: StreamState,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(err: &Error) -> WlStatus {
    match err {
        Error::Io { .. } => WlStatus::Io,
        Error::Format(_) | Error::Unsupported(_) => WlStatus::Format,
        Error::Config(_) => WlStatus::Config,
        Error::Shape(_) | Error::InputTooShort { .. } => WlStatus::Shape,
        Error::Precondition(_) | Error::Usage(_) => WlStatus::InvalidArgument,
        _ => WlStatus::Internal,
    }
}

/// Runs `f`, recording any error or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), (WlStatus, String)>) -> WlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => WlStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            WlStatus::Internal
        }
    }
}

fn lib_err(e: Error) -> (WlStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (WlStatus, String) {
    (WlStatus::NullPointer, format!("{what} is null"))
}

unsafe fn path_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (WlStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (WlStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

/// Message for the last failed call on this thread; empty if none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn wl_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Loads a weights file. `config` is a preset name or JSON path; pass NULL
/// to use the `<weights>.json` sidecar.
///
/// # Safety
/// `weights_path` and a non-NULL `config` must be NUL-terminated strings;
/// `out` must be valid for one pointer write.
#[no_mangle]
pub unsafe extern "C" fn wl_model_load(
    weights_path: *const c_char,
    config: *const c_char,
    out: *mut *mut WlModel,
) -> WlStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let weights = path_arg(weights_path, "weights_path")?;
        let config = if config.is_null() {
            None
        } else {
            Some(path_arg(config, "config")?)
        };
        let model = Model::load_resolved(Path::new(weights), config).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(WlModel {
            inner: Arc::new(model),
        }));
        Ok(())
    })
}

/// # Safety
/// `model` must come from [`wl_model_load`] and not have been freed. NULL is
/// ignored.
#[no_mangle]
pub unsafe extern "C" fn wl_model_free(model: *mut WlModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Receptive field in frames; 0 for a NULL handle.
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn wl_model_receptive_field(model: *const WlModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.receptive_field())
}

/// Number of frames [`wl_mfcc`] produces for `num_samples` samples.
#[no_mangle]
pub extern "C" fn wl_mfcc_frame_count(num_samples: usize) -> usize {
    wakeloc::audio::frame_count(num_samples)
}

/// MFCC features of 16 kHz mono audio, written frame by frame: frame `t`
/// occupies `out[t * WL_NUM_COEFFS .. (t + 1) * WL_NUM_COEFFS]`.
/// `out_frames` receives the frame count even when the buffer is too small.
///
/// # Safety
/// `samples` must point to `num_samples` floats, `out` to `out_capacity`
/// floats, and `out_frames` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wl_mfcc(
    samples: *const f32,
    num_samples: usize,
    sample_rate: u32,
    out: *mut f32,
    out_capacity: usize,
    out_frames: *mut usize,
) -> WlStatus {
    guard(|| {
        if out_frames.is_null() {
            return Err(null("out_frames"));
        }
        if samples.is_null() && num_samples > 0 {
            return Err(null("samples"));
        }
        let pcm = if num_samples == 0 {
            Vec::new()
        } else {
            std::slice::from_raw_parts(samples, num_samples).to_vec()
        };
        let feats = mfcc(&AudioBuffer::new(pcm, sample_rate).map_err(lib_err)?).map_err(lib_err)?;
        *out_frames = feats.cols();
        let need = feats.cols() * NUM_COEFFS;
        if need > out_capacity {
            return Err((
                WlStatus::BufferTooSmall,
                format!("need {need} floats, buffer holds {out_capacity}"),
            ));
        }
        if need > 0 && out.is_null() {
            return Err(null("out"));
        }
        for t in 0..feats.cols() {
            let col = feats.column(t);
            std::ptr::copy_nonoverlapping(col.as_ptr(), out.add(t * NUM_COEFFS), NUM_COEFFS);
        }
        Ok(())
    })
}

/// Creates a fresh stream over `model`. The model may be freed afterwards;
/// the stream keeps its own reference.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn wl_stream_new(model: *const WlModel, out: *mut *mut WlStream) -> WlStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = StreamState::new(Arc::clone(&model.inner)).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(WlStream { inner }));
        Ok(())
    })
}

/// Pushes one feature frame of [`WL_NUM_COEFFS`] values. `has_output` is set
/// to 1 when a score was produced (after the warm-up of R - 1 frames), in
/// which case `prob` and `offset` receive it; otherwise it is set to 0.
///
/// # Safety
/// `stream` must be a live handle, `frame` must point to `WL_NUM_COEFFS`
/// floats, and the out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn wl_stream_push(
    stream: *mut WlStream,
    frame: *const f32,
    has_output: *mut i32,
    prob: *mut f32,
    offset: *mut f32,
) -> WlStatus {
    guard(|| {
        let stream = stream.as_mut().ok_or_else(|| null("stream"))?;
        if frame.is_null() {
            return Err(null("frame"));
        }
        if has_output.is_null() || prob.is_null() || offset.is_null() {
            return Err(null("output pointer"));
        }
        let col = std::slice::from_raw_parts(frame, NUM_COEFFS);
        match stream.inner.push_frame(col).map_err(lib_err)? {
            Some(s) => {
                *has_output = 1;
                *prob = s.prob;
                *offset = s.offset;
            }
            None => *has_output = 0,
        }
        Ok(())
    })
}

/// Frames pushed since creation or the last reset; 0 for NULL.
///
/// # Safety
/// `stream` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn wl_stream_frames_consumed(stream: *const WlStream) -> usize {
    stream.as_ref().map_or(0, |s| s.inner.frames_consumed())
}

/// # Safety
/// `stream` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn wl_stream_reset(stream: *mut WlStream) -> WlStatus {
    guard(|| {
        stream.as_mut().ok_or_else(|| null("stream"))?.inner.reset();
        Ok(())
    })
}

/// # Safety
/// `stream` must come from [`wl_stream_new`] and not have been freed. NULL
/// is ignored.
#[no_mangle]
pub unsafe extern "C" fn wl_stream_free(stream: *mut WlStream) {
    if !stream.is_null() {
        drop(Box::from_raw(stream));
    }
}
