//! C interface to the `sskcf` tracker.
//!
//! Handles are opaque. Every fallible call returns an [`SskcfStatus`]; the
//! message of the last failure on the calling thread is available through
//! [`sskcf_last_error`]. Boxes use 0-based pixel coordinates with `(x, y)`
//! at the top-left corner.

use std::cell::RefCell;
use std::ffi::CStr;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use libc::{c_char, size_t};
use sskcf::harness::{apply_entry, center_error, config_entries, iou};
use sskcf::{BoundingBox, Error, ImageView, Tracker, TrackerConfig};

/// Result code of a fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SskcfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    UnknownKey = 3,
    InvalidBuffer = 4,
    BoxOutsideFrame = 5,
    BoxTooSmall = 6,
    IndexOutOfRange = 7,
    Internal = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SskcfBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl From<BoundingBox> for SskcfBox {
    fn from(b: BoundingBox) -> Self {
        SskcfBox {
            x: b.x,
            y: b.y,
            w: b.w,
            h: b.h,
        }
    }
}

impl From<SskcfBox> for BoundingBox {
    fn from(b: SskcfBox) -> Self {
        BoundingBox::new(b.x, b.y, b.w, b.h)
    }
}

/// Per-part status after the latest frame.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SskcfPart {
    /// Part region centered on its current position.
    pub region: SskcfBox,
    pub psr: f64,
    pub similarity: f64,
    pub weight: f64,
    pub reliable: bool,
}

/// Parameter set used to create trackers.
pub struct SskcfConfig {
    inner: TrackerConfig,
}

pub struct SskcfTracker {
    inner: Tracker,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn fail(status: SskcfStatus, msg: impl Into<String>) -> SskcfStatus {
    set_error(msg);
    status
}

fn status_of(err: &Error) -> SskcfStatus {
    match err {
        Error::InvalidBuffer(_) | Error::EmptyRegion => SskcfStatus::InvalidBuffer,
        Error::BoxOutsideFrame(..) => SskcfStatus::BoxOutsideFrame,
        Error::BoxTooSmall(_) | Error::RegionTooSmall { .. } => SskcfStatus::BoxTooSmall,
        Error::InvalidParameter { .. } => SskcfStatus::InvalidArgument,
        _ => SskcfStatus::Internal,
    }
}

fn guard(f: impl FnOnce() -> SskcfStatus) -> SskcfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(SskcfStatus::Panic, "internal panic"),
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, SskcfStatus> {
    if p.is_null() {
        return Err(fail(SskcfStatus::NullPointer, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(SskcfStatus::InvalidArgument, format!("{name} is not UTF-8")))
}

/// Copies `text` into `buf` (NUL-terminated, truncated to fit) and returns
/// the buffer size needed for the whole string.
unsafe fn copy_out(text: &str, buf: *mut c_char, len: size_t) -> size_t {
    if !buf.is_null() && len > 0 {
        let n = text.len().min(len - 1);
        ptr::copy_nonoverlapping(text.as_ptr(), buf as *mut u8, n);
        *buf.add(n) = 0;
    }
    text.len() + 1
}

unsafe fn image_arg<'a>(
    pixels: *const u8,
    width: size_t,
    height: size_t,
    stride: size_t,
    channels: size_t,
) -> Result<ImageView<'a>, SskcfStatus> {
    if pixels.is_null() {
        return Err(fail(SskcfStatus::NullPointer, "pixels is null"));
    }
    if width == 0 || height == 0 {
        return Err(fail(SskcfStatus::InvalidBuffer, "empty image"));
    }
    let len = stride
        .checked_mul(height - 1)
        .and_then(|n| n.checked_add(width.checked_mul(channels)?))
        .ok_or_else(|| fail(SskcfStatus::InvalidBuffer, "image size overflows"))?;
    let data = std::slice::from_raw_parts(pixels, len);
    ImageView::new(data, width, height, stride, channels).map_err(|e| fail(status_of(&e), e.to_string()))
}

/// Copies the last error message of this thread into `buf` and returns the
/// size (including the terminating NUL) needed to hold all of it.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn sskcf_last_error(buf: *mut c_char, len: size_t) -> size_t {
    LAST_ERROR.with(|e| copy_out(&e.borrow(), buf, len))
}

/// Static, NUL-terminated version string.
#[no_mangle]
pub extern "C" fn sskcf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// New parameter set holding the defaults. Free with [`sskcf_config_free`].
#[no_mangle]
pub extern "C" fn sskcf_config_new() -> *mut SskcfConfig {
    Box::into_raw(Box::new(SskcfConfig {
        inner: TrackerConfig::default(),
    }))
}

/// # Safety
/// `config` must be null or a pointer returned by [`sskcf_config_new`] that
/// has not been freed.
#[no_mangle]
pub unsafe extern "C" fn sskcf_config_free(config: *mut SskcfConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Sets one parameter from text, using the same keys and value syntax as
/// the command-line config file (`psr_threshold`, `kernel`, ...).
///
/// # Safety
/// `config` must be a live config handle; `key` and `value` must be
/// NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn sskcf_config_set(
    config: *mut SskcfConfig,
    key: *const c_char,
    value: *const c_char,
) -> SskcfStatus {
    guard(|| {
        let Some(config) = config.as_mut() else {
            return fail(SskcfStatus::NullPointer, "config is null");
        };
        let key = match str_arg(key, "key") {
            Ok(k) => k,
            Err(s) => return s,
        };
        let value = match str_arg(value, "value") {
            Ok(v) => v,
            Err(s) => return s,
        };
        if !config_entries(&config.inner).iter().any(|(k, _)| *k == key) {
            return fail(SskcfStatus::UnknownKey, format!("unknown key `{key}`"));
        }
        let mut next = config.inner.clone();
        if let Err(msg) = apply_entry(&mut next, key, value) {
            return fail(SskcfStatus::InvalidArgument, msg);
        }
        if let Err(e) = next.validate() {
            return fail(status_of(&e), e.to_string());
        }
        config.inner = next;
        SskcfStatus::Ok
    })
}

/// Writes the current value of `key` into `buf` and the needed buffer size
/// into `needed` (may be null).
///
/// # Safety
/// `config` must be a live config handle, `key` a NUL-terminated string,
/// `buf` null or `len` writable bytes, `needed` null or writable.
#[no_mangle]
pub unsafe extern "C" fn sskcf_config_get(
    config: *const SskcfConfig,
    key: *const c_char,
    buf: *mut c_char,
    len: size_t,
    needed: *mut size_t,
) -> SskcfStatus {
    guard(|| {
        let Some(config) = config.as_ref() else {
            return fail(SskcfStatus::NullPointer, "config is null");
        };
        let key = match str_arg(key, "key") {
            Ok(k) => k,
            Err(s) => return s,
        };
        let entries = config_entries(&config.inner);
        let Some((_, value)) = entries.iter().find(|(k, _)| *k == key) else {
            return fail(SskcfStatus::UnknownKey, format!("unknown key `{key}`"));
        };
        let n = copy_out(value, buf, len);
        if let Some(needed) = needed.as_mut() {
            *needed = n;
        }
        SskcfStatus::Ok
    })
}

/// Initializes a tracker on the first frame. `config` may be null for the
/// defaults. `channels` is 1 (gray) or 3 (RGB); `stride` is in bytes.
///
/// # Safety
/// `pixels` must point to `stride * (height - 1) + width * channels`
/// readable bytes, `config` must be null or a live config handle, and `out`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn sskcf_tracker_new(
    config: *const SskcfConfig,
    pixels: *const u8,
    width: size_t,
    height: size_t,
    stride: size_t,
    channels: size_t,
    initial: SskcfBox,
    out: *mut *mut SskcfTracker,
) -> SskcfStatus {
    guard(|| {
        if out.is_null() {
            return fail(SskcfStatus::NullPointer, "out is null");
        }
        *out = ptr::null_mut();
        let cfg = config
            .as_ref()
            .map(|c| c.inner.clone())
            .unwrap_or_default();
        let view = match image_arg(pixels, width, height, stride, channels) {
            Ok(v) => v,
            Err(s) => return s,
        };
        match Tracker::init(&view, initial.into(), cfg) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(SskcfTracker { inner }));
                SskcfStatus::Ok
            }
            Err(e) => fail(status_of(&e), e.to_string()),
        }
    })
}

/// # Safety
/// `tracker` must be null or a handle from [`sskcf_tracker_new`] that has
/// not been freed.
#[no_mangle]
pub unsafe extern "C" fn sskcf_tracker_free(tracker: *mut SskcfTracker) {
    if !tracker.is_null() {
        drop(Box::from_raw(tracker));
    }
}

/// Tracks into the next frame and writes the new target box to `out`.
///
/// # Safety
/// As for [`sskcf_tracker_new`]; `tracker` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn sskcf_tracker_step(
    tracker: *mut SskcfTracker,
    pixels: *const u8,
    width: size_t,
    height: size_t,
    stride: size_t,
    channels: size_t,
    out: *mut SskcfBox,
) -> SskcfStatus {
    guard(|| {
        let Some(tracker) = tracker.as_mut() else {
            return fail(SskcfStatus::NullPointer, "tracker is null");
        };
        if out.is_null() {
            return fail(SskcfStatus::NullPointer, "out is null");
        }
        let view = match image_arg(pixels, width, height, stride, channels) {
            Ok(v) => v,
            Err(s) => return s,
        };
        match tracker.inner.step(&view) {
            Ok(b) => {
                *out = b.into();
                SskcfStatus::Ok
            }
            Err(e) => fail(status_of(&e), e.to_string()),
        }
    })
}

/// Current target box.
///
/// # Safety
/// `tracker` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sskcf_tracker_box(
    tracker: *const SskcfTracker,
    out: *mut SskcfBox,
) -> SskcfStatus {
    let (Some(tracker), Some(out)) = (tracker.as_ref(), out.as_mut()) else {
        return fail(SskcfStatus::NullPointer, "null argument");
    };
    *out = tracker.inner.bounding_box().into();
    SskcfStatus::Ok
}

/// Accumulated scale factor relative to the initial box.
///
/// # Safety
/// `tracker` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sskcf_tracker_scale(
    tracker: *const SskcfTracker,
    out: *mut f64,
) -> SskcfStatus {
    let (Some(tracker), Some(out)) = (tracker.as_ref(), out.as_mut()) else {
        return fail(SskcfStatus::NullPointer, "null argument");
    };
    *out = tracker.inner.state().scale;
    SskcfStatus::Ok
}

/// Number of parts (3 or 4), or 0 for a null handle.
///
/// # Safety
/// `tracker` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sskcf_tracker_part_count(tracker: *const SskcfTracker) -> size_t {
    tracker
        .as_ref()
        .map_or(0, |t| t.inner.state().parts.len())
}

/// # Safety
/// `tracker` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sskcf_tracker_part(
    tracker: *const SskcfTracker,
    index: size_t,
    out: *mut SskcfPart,
) -> SskcfStatus {
    let (Some(tracker), Some(out)) = (tracker.as_ref(), out.as_mut()) else {
        return fail(SskcfStatus::NullPointer, "null argument");
    };
    let parts = &tracker.inner.state().parts;
    let Some(p) = parts.get(index) else {
        return fail(
            SskcfStatus::IndexOutOfRange,
            format!("part {index} of {}", parts.len()),
        );
    };
    *out = SskcfPart {
        region: BoundingBox::from_center(p.position, p.size).into(),
        psr: p.psr,
        similarity: p.similarity,
        weight: p.weight,
        reliable: p.reliable,
    };
    SskcfStatus::Ok
}

/// Intersection over union of two boxes.
#[no_mangle]
pub extern "C" fn sskcf_iou(a: SskcfBox, b: SskcfBox) -> f64 {
    iou(&a.into(), &b.into())
}

/// Distance between box centers in pixels.
#[no_mangle]
pub extern "C" fn sskcf_center_error(a: SskcfBox, b: SskcfBox) -> f64 {
    center_error(&a.into(), &b.into())
}
