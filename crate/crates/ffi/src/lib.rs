//! C ABI over the tracker.
//!
//! Every fallible call returns an [`RgbdStatus`]; on failure the message is
//! available from [`rgbd_last_error`] on the same thread. Trackers are opaque
//! handles created by [`rgbd_tracker_new`] and released by
//! [`rgbd_tracker_free`]. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use rgbd_tracker::config::RunConfig;
use rgbd_tracker::eval::{auc, iou, success_curve};
use rgbd_tracker::frames::{BBox, Raster, RgbdFrame};
use rgbd_tracker::pipeline::{TrackState, Tracker};
use rgbd_tracker::strategy::MgState;
use rgbd_tracker::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RgbdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Config = 4,
    Tracking = 5,
    NotInitialized = 6,
    Panic = 7,
}

/// Axis-aligned box in pixels; `left`/`top` is the top-left corner.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RgbdBox {
    pub left: f64,
    pub top: f64,
    pub width: f64,
    pub height: f64,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RgbdStepResult {
    pub bbox: RgbdBox,
    pub score: f64,
    /// 1 while depth masking is active, 0 while it is stopped.
    pub mask_active: u8,
    /// Target depth estimate in meters.
    pub target_depth: f64,
    /// 1 when the frame failed and the previous box was repeated.
    pub coasted: u8,
}

/// Opaque tracker handle.
pub struct RgbdTracker {
    tracker: Tracker,
    state: Option<TrackState>,
    next_index: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: &str) {
    let clean = message.replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(clean).expect("NULs replaced"));
}

fn status_of(e: &Error) -> RgbdStatus {
    match e.category() {
        "io" => RgbdStatus::Io,
        "config" | "weights" => RgbdStatus::Config,
        "argument" | "parse" => RgbdStatus::InvalidArgument,
        _ => RgbdStatus::Tracking,
    }
}

struct Failure(RgbdStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

/// Runs `f`, records any failure for [`rgbd_last_error`] and converts panics.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> RgbdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            RgbdStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_error(&message);
            status
        }
        Err(payload) => {
            let text = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(&format!("panic: {text}"));
            RgbdStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(RgbdStatus::NullPointer, format!("{what} is null"))
}

unsafe fn opt_path(p: *const c_char, what: &str) -> Result<Option<PathBuf>, Failure> {
    if p.is_null() {
        return Ok(None);
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(RgbdStatus::InvalidArgument, format!("{what} is not UTF-8")))?;
    Ok(Some(PathBuf::from(s)))
}

fn to_bbox(b: &RgbdBox) -> Result<BBox, Failure> {
    Ok(BBox::new(b.left, b.top, b.width, b.height)?)
}

fn from_bbox(b: &BBox) -> RgbdBox {
    RgbdBox {
        left: b.left(),
        top: b.top(),
        width: b.width(),
        height: b.height(),
    }
}

/// Copies interleaved RGB (`3 * width * height` bytes) and depth in
/// millimeters (`width * height` values, 0 = missing) into a frame.
unsafe fn make_frame(
    color: *const u8,
    depth: *const u16,
    width: usize,
    height: usize,
    index: usize,
) -> Result<RgbdFrame, Failure> {
    if color.is_null() {
        return Err(null("color"));
    }
    if depth.is_null() {
        return Err(null("depth"));
    }
    let n = width
        .checked_mul(height)
        .filter(|&n| n > 0 && n <= isize::MAX as usize / 3)
        .ok_or_else(|| Failure(RgbdStatus::InvalidArgument, format!("bad frame size {width}x{height}")))?;
    let rgb = std::slice::from_raw_parts(color, 3 * n);
    let pixels = rgb.chunks_exact(3).map(|p| [p[0], p[1], p[2]]).collect();
    let depth = std::slice::from_raw_parts(depth, n).to_vec();
    Ok(RgbdFrame::new(
        Raster::new(width, height, pixels)?,
        Raster::new(width, height, depth)?,
        index,
    )?)
}

/// Creates a tracker. `config_path` may be null for the defaults;
/// `weights_path`, when not null, replaces the config's refiner weights.
/// Masking and refinement run only when both the config and the flag enable
/// them. The `TSDM_SEED` environment variable overrides the seed.
///
/// # Safety
/// Non-null strings must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rgbd_tracker_new(
    config_path: *const c_char,
    weights_path: *const c_char,
    enable_mg: bool,
    enable_dr: bool,
    out: *mut *mut RgbdTracker,
) -> RgbdStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let mut cfg = match opt_path(config_path, "config path")? {
            Some(p) => RunConfig::load(&p)?,
            None => RunConfig::default(),
        }
        .with_env_seed()?;
        if let Some(w) = opt_path(weights_path, "weights path")? {
            cfg.weights = Some(w);
        }
        cfg.enable_mg &= enable_mg;
        cfg.enable_dr &= enable_dr;
        let tracker = Tracker::from_config(cfg)?;
        *out = Box::into_raw(Box::new(RgbdTracker {
            tracker,
            state: None,
            next_index: 1,
        }));
        Ok(())
    })
}

/// Releases a tracker; null is ignored.
///
/// # Safety
/// `tracker` must come from [`rgbd_tracker_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rgbd_tracker_free(tracker: *mut RgbdTracker) {
    if !tracker.is_null() {
        drop(Box::from_raw(tracker));
    }
}

/// Starts (or restarts) tracking `target` in the first frame.
///
/// # Safety
/// `tracker` must be live; `color` and `depth` must hold a full frame.
#[no_mangle]
pub unsafe extern "C" fn rgbd_tracker_init(
    tracker: *mut RgbdTracker,
    color: *const u8,
    depth: *const u16,
    width: usize,
    height: usize,
    target: RgbdBox,
) -> RgbdStatus {
    guard(|| {
        let t = tracker.as_mut().ok_or_else(|| null("tracker"))?;
        let frame = make_frame(color, depth, width, height, 1)?;
        let state = t.tracker.init(&frame, &to_bbox(&target)?)?;
        t.state = Some(state);
        t.next_index = 2;
        Ok(())
    })
}

/// Tracks the next frame. A frame the pipeline cannot process repeats the
/// previous box with `coasted = 1` and still returns `Ok`.
///
/// # Safety
/// `tracker` must be live; `color` and `depth` must hold a full frame;
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rgbd_tracker_step(
    tracker: *mut RgbdTracker,
    color: *const u8,
    depth: *const u16,
    width: usize,
    height: usize,
    out: *mut RgbdStepResult,
) -> RgbdStatus {
    guard(|| {
        let t = tracker.as_mut().ok_or_else(|| null("tracker"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let state = t
            .state
            .as_mut()
            .ok_or_else(|| Failure(RgbdStatus::NotInitialized, "tracker is not initialized".into()))?;
        let frame = make_frame(color, depth, width, height, t.next_index)?;
        let step = t.tracker.step(state, &frame, false);
        t.next_index += 1;
        *out = RgbdStepResult {
            bbox: from_bbox(&step.bbox),
            score: step.score,
            mask_active: u8::from(step.mg_state == MgState::Active),
            target_depth: step.target_depth,
            coasted: u8::from(step.diagnostics.error.is_some()),
        };
        Ok(())
    })
}

/// Intersection over union; 0 for degenerate input.
#[no_mangle]
pub extern "C" fn rgbd_iou(a: RgbdBox, b: RgbdBox) -> f64 {
    match (to_bbox(&a), to_bbox(&b)) {
        (Ok(a), Ok(b)) => iou(&a, &b),
        _ => 0.0,
    }
}

/// Area under the success curve of `n` per-frame IOU values.
///
/// # Safety
/// `ious` must point to `n` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rgbd_success_auc(ious: *const f64, n: usize, out: *mut f64) -> RgbdStatus {
    guard(|| {
        if ious.is_null() {
            return Err(null("ious"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let values = std::slice::from_raw_parts(ious, n);
        *out = auc(&success_curve(values)?)?;
        Ok(())
    })
}

/// Message of the last failed call on this thread, empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn rgbd_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}
