//! C interface. Every object crosses the boundary as an opaque handle that
//! the caller releases with the matching `*_free`. Functions return an
//! [`NlosStatus`]; on failure `nlos_last_error` describes the cause for the
//! calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use nlos_core::cli::{self, RunConfig};
use nlos_core::dataset::{read_dataset, write_dataset, Dataset};
use nlos_core::lct::AlbedoVolume;
use nlos_core::localization::{localize, LocalizationResult};
use nlos_core::tracking::{track, TrackResult};
use nlos_core::{Error, ErrorCategory};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NlosStatus {
    Ok = 0,
    NullPointer = 1,
    Config = 2,
    Data = 3,
    Numerical = 4,
    OutOfRange = 5,
    Panic = 6,
}

/// Parsed scene file.
pub struct NlosScene(RunConfig);
/// Sequence of sensor frames with optional ground truth.
pub struct NlosDataset(Dataset);
pub struct NlosTrack(TrackResult);
/// Camera `(x, y)` in world coordinates plus height per estimated frame.
pub struct NlosLocalization {
    result: LocalizationResult,
    origin: [f64; 2],
}
pub struct NlosVolume(AlbedoVolume);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn fail(e: &Error) -> NlosStatus {
    set_error(&e.to_string());
    match e.category() {
        ErrorCategory::Config => NlosStatus::Config,
        ErrorCategory::Data => NlosStatus::Data,
        ErrorCategory::Numerical => NlosStatus::Numerical,
    }
}

fn guard(f: impl FnOnce() -> Result<(), NlosStatus>) -> NlosStatus {
    set_error("");
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => NlosStatus::Ok,
        Ok(Err(s)) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(&format!("panic: {msg}"));
            NlosStatus::Panic
        }
    }
}

fn null(what: &str) -> NlosStatus {
    set_error(&format!("{what} is null"));
    NlosStatus::NullPointer
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, NlosStatus> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, NlosStatus> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error(&format!("{what} is not valid UTF-8"));
        NlosStatus::Config
    })
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), NlosStatus> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn release<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Message of the last failed call on this thread, empty after a success.
/// Valid until the next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn nlos_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version, static storage.
#[no_mangle]
pub extern "C" fn nlos_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses a scene from TOML text. Relative paths in it are kept as written.
///
/// # Safety
/// `toml` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nlos_scene_from_toml(
    toml: *const c_char,
    out: *mut *mut NlosScene,
) -> NlosStatus {
    guard(|| {
        let t = text(toml, "toml")?;
        let cfg = RunConfig::from_toml(t).map_err(|e| fail(&e))?;
        put(out, NlosScene(cfg))
    })
}

/// Loads a scene file, resolving its paths against its directory.
///
/// # Safety
/// `path` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nlos_scene_load(
    path: *const c_char,
    out: *mut *mut NlosScene,
) -> NlosStatus {
    guard(|| {
        let p = text(path, "path")?;
        let cfg = RunConfig::load(Path::new(p)).map_err(|e| fail(&e))?;
        put(out, NlosScene(cfg))
    })
}

/// Replaces the scene seed.
///
/// # Safety
/// `scene` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn nlos_scene_set_seed(scene: *mut NlosScene, seed: u64) -> NlosStatus {
    guard(|| {
        let s = scene.as_mut().ok_or_else(|| null("scene"))?;
        s.0.seed = seed;
        Ok(())
    })
}

/// # Safety
/// `scene` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn nlos_scene_free(scene: *mut NlosScene) {
    release(scene);
}

/// Renders the scene.
///
/// # Safety
/// `scene` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nlos_simulate(
    scene: *const NlosScene,
    out: *mut *mut NlosDataset,
) -> NlosStatus {
    guard(|| {
        let s = borrow(scene, "scene")?;
        let ds = cli::simulate(&s.0).map_err(|e| fail(&e))?;
        put(out, NlosDataset(ds))
    })
}

/// # Safety
/// `path` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nlos_dataset_read(
    path: *const c_char,
    out: *mut *mut NlosDataset,
) -> NlosStatus {
    guard(|| {
        let p = text(path, "path")?;
        let ds = read_dataset(Path::new(p)).map_err(|e| fail(&e))?;
        put(out, NlosDataset(ds))
    })
}

/// # Safety
/// `dataset` must be a live handle; `path` a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn nlos_dataset_write(
    dataset: *const NlosDataset,
    path: *const c_char,
) -> NlosStatus {
    guard(|| {
        let d = borrow(dataset, "dataset")?;
        let p = text(path, "path")?;
        write_dataset(&d.0, Path::new(p)).map_err(|e| fail(&e))
    })
}

/// Number of frames; 0 for a null handle.
///
/// # Safety
/// `dataset` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn nlos_dataset_frame_count(dataset: *const NlosDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.0.len())
}

/// # Safety
/// `dataset` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn nlos_dataset_free(dataset: *mut NlosDataset) {
    release(dataset);
}

/// Tracks the scene objects, computing their STIRs on the fly.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nlos_track(
    scene: *const NlosScene,
    dataset: *const NlosDataset,
    out: *mut *mut NlosTrack,
) -> NlosStatus {
    guard(|| {
        let s = borrow(scene, "scene")?;
        let d = borrow(dataset, "dataset")?;
        let run = || -> nlos_core::Result<TrackResult> {
            let stirs = cli::precompute_stirs(&s.0)?;
            track(&d.0, &stirs, &s.0.track_config()?)
        };
        let r = run().map_err(|e| fail(&e))?;
        put(out, NlosTrack(r))
    })
}

/// Number of estimated frames.
///
/// # Safety
/// `track` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn nlos_track_len(track: *const NlosTrack) -> usize {
    track.as_ref().map_or(0, |t| t.0.frames.len())
}

/// Number of tracked objects.
///
/// # Safety
/// `track` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn nlos_track_objects(track: *const NlosTrack) -> usize {
    track
        .as_ref()
        .and_then(|t| t.0.estimates.first())
        .map_or(0, Vec::len)
}

/// Estimate `i` of object `object`: its frame index and world position.
///
/// # Safety
/// `track` must be a live handle; `frame` and `xyz` (3 doubles) writable.
#[no_mangle]
pub unsafe extern "C" fn nlos_track_get(
    track: *const NlosTrack,
    i: usize,
    object: usize,
    frame: *mut usize,
    xyz: *mut f64,
) -> NlosStatus {
    guard(|| {
        let t = borrow(track, "track")?;
        if frame.is_null() || xyz.is_null() {
            return Err(null("output pointer"));
        }
        let p =
            t.0.estimates
                .get(i)
                .and_then(|e| e.get(object))
                .ok_or_else(|| {
                    set_error(&format!("estimate {i} of object {object} does not exist"));
                    NlosStatus::OutOfRange
                })?;
        *frame = t.0.frames[i];
        std::slice::from_raw_parts_mut(xyz, 3).copy_from_slice(p.as_slice());
        Ok(())
    })
}

/// # Safety
/// `track` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn nlos_track_free(track: *mut NlosTrack) {
    release(track);
}

/// Localizes the camera against the scene's landmark. Poses stored in the
/// dataset are ignored.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nlos_localize(
    scene: *const NlosScene,
    dataset: *const NlosDataset,
    out: *mut *mut NlosLocalization,
) -> NlosStatus {
    guard(|| {
        let s = borrow(scene, "scene")?;
        let d = borrow(dataset, "dataset")?;
        let run = || -> nlos_core::Result<NlosLocalization> {
            let cfg = s.0.localize_config()?;
            let landmark = s.0.landmark()?;
            let stir = cli::landmark_stir(&s.0, None)?;
            let result = localize(&d.0.without_poses(), &stir, &cfg)?;
            Ok(NlosLocalization {
                result,
                origin: [landmark.x, landmark.y],
            })
        };
        let r = run().map_err(|e| fail(&e))?;
        put(out, r)
    })
}

/// Number of estimated frames.
///
/// # Safety
/// `loc` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn nlos_localization_len(loc: *const NlosLocalization) -> usize {
    loc.as_ref().map_or(0, |l| l.result.frames.len())
}

/// Estimate `i`: frame index, world `(x, y)` and camera height.
///
/// # Safety
/// `loc` must be a live handle; `frame`, `xy` (2 doubles) and `z` writable.
#[no_mangle]
pub unsafe extern "C" fn nlos_localization_get(
    loc: *const NlosLocalization,
    i: usize,
    frame: *mut usize,
    xy: *mut f64,
    z: *mut f64,
) -> NlosStatus {
    guard(|| {
        let l = borrow(loc, "localization")?;
        if frame.is_null() || xy.is_null() || z.is_null() {
            return Err(null("output pointer"));
        }
        let e = l.result.estimates.get(i).ok_or_else(|| {
            set_error(&format!("estimate {i} does not exist"));
            NlosStatus::OutOfRange
        })?;
        let t = l.result.frames[i];
        *frame = t;
        let dst = std::slice::from_raw_parts_mut(xy, 2);
        dst[0] = e[0] + l.origin[0];
        dst[1] = e[1] + l.origin[1];
        *z = l.result.z[t];
        Ok(())
    })
}

/// # Safety
/// `loc` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn nlos_localization_free(loc: *mut NlosLocalization) {
    release(loc);
}

/// Fuses every posed frame and backprojects onto the scene's volume grid.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nlos_reconstruct(
    scene: *const NlosScene,
    dataset: *const NlosDataset,
    out: *mut *mut NlosVolume,
) -> NlosStatus {
    guard(|| {
        let s = borrow(scene, "scene")?;
        let d = borrow(dataset, "dataset")?;
        let v = cli::reconstruct(&s.0, &d.0).map_err(|e| fail(&e))?;
        put(out, NlosVolume(v))
    })
}

/// Writes `(n_x, n_y, n_z)` into `shape` and the voxel-centre bounds
/// `(x_min, x_max, y_min, y_max, z_min, z_max)` into `bounds` when non-null.
///
/// # Safety
/// `volume` must be a live handle; `shape` holds 3 values, `bounds` 6.
#[no_mangle]
pub unsafe extern "C" fn nlos_volume_shape(
    volume: *const NlosVolume,
    shape: *mut usize,
    bounds: *mut f64,
) -> NlosStatus {
    guard(|| {
        let v = borrow(volume, "volume")?;
        if shape.is_null() {
            return Err(null("shape"));
        }
        let (a, b, c) = v.0.values.dim();
        std::slice::from_raw_parts_mut(shape, 3).copy_from_slice(&[a, b, c]);
        if !bounds.is_null() {
            let g = &v.0.grid;
            std::slice::from_raw_parts_mut(bounds, 6)
                .copy_from_slice(&[g.x.min, g.x.max, g.y.min, g.y.max, g.v.min, g.v.max]);
        }
        Ok(())
    })
}

/// Copies the voxels, `z` fastest, into `out[0..len]`. `len` must equal
/// `n_x * n_y * n_z`.
///
/// # Safety
/// `volume` must be a live handle; `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn nlos_volume_copy(
    volume: *const NlosVolume,
    out: *mut f64,
    len: usize,
) -> NlosStatus {
    guard(|| {
        let v = borrow(volume, "volume")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let n = v.0.values.len();
        if len != n {
            set_error(&format!("buffer holds {len} values, volume has {n}"));
            return Err(NlosStatus::OutOfRange);
        }
        let dst = std::slice::from_raw_parts_mut(out, n);
        for (d, s) in dst.iter_mut().zip(v.0.values.iter()) {
            *d = *s;
        }
        Ok(())
    })
}

/// # Safety
/// `volume` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn nlos_volume_free(volume: *mut NlosVolume) {
    release(volume);
}
