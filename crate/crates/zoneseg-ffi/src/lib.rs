//! C ABI for the zoneseg engine: opaque handles, integer status codes and a
//! thread-local last-error message. The header `include/zoneseg.h` is
//! generated by cbindgen at build time.
//!
//! Conventions: every function returns `ZsStatus`; output parameters are
//! written only on `Ok`; every `*mut` handle returned through an out
//! parameter must be released with the matching `_free` function. Strings
//! are NUL-terminated UTF-8.

use libc::c_char;
use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use zoneseg::model::{load_model, Model};
use zoneseg::train::{dice_coefficient, evaluate_volume};
use zoneseg::volume::phantom::{synth_phantom, LabelMode};
use zoneseg::volume::{read_volume, write_volume, Volume};
use zoneseg::Error;

/// Status codes mirroring the CLI exit-code convention: usage and
/// configuration problems map to `Usage`, malformed or inconsistent inputs
/// to `Data`.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ZsStatus {
    Ok = 0,
    Usage = 1,
    Data = 2,
    NullPointer = 3,
    Panic = 4,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(err: &Error) -> ZsStatus {
    match err.exit_code() {
        1 => ZsStatus::Usage,
        _ => ZsStatus::Data,
    }
}

/// Message for the most recent failure on this thread; valid until the next
/// failing call. Never NULL.
#[no_mangle]
pub extern "C" fn zs_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// An image or label volume.
pub struct ZsVolume(Volume);

/// A trained network checkpoint.
pub struct ZsModel(Model<f32>);

fn run(body: impl FnOnce() -> Result<(), (ZsStatus, String)>) -> ZsStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => ZsStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            ZsStatus::Panic
        }
    }
}

fn err_of(e: Error) -> (ZsStatus, String) {
    (status_of(&e), e.to_string())
}

unsafe fn path_arg(ptr: *const c_char) -> Result<&'static Path, (ZsStatus, String)> {
    if ptr.is_null() {
        return Err((ZsStatus::NullPointer, "NULL path".into()));
    }
    let s = CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| (ZsStatus::Usage, "path is not valid UTF-8".to_string()))?;
    Ok(Path::new(s))
}

macro_rules! nonnull {
    ($ptr:expr, $what:expr) => {
        if $ptr.is_null() {
            return Err((ZsStatus::NullPointer, concat!("NULL ", $what).into()));
        }
    };
}

/// Reads a `.zvol` file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn zs_volume_read(path: *const c_char, out: *mut *mut ZsVolume) -> ZsStatus {
    run(|| {
        nonnull!(out, "out pointer");
        let vol = read_volume(path_arg(path)?).map_err(err_of)?;
        *out = Box::into_raw(Box::new(ZsVolume(vol)));
        Ok(())
    })
}

/// Writes a volume as `.zvol`.
///
/// # Safety
/// `vol` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn zs_volume_write(vol: *const ZsVolume, path: *const c_char) -> ZsStatus {
    run(|| {
        nonnull!(vol, "volume");
        write_volume(&(*vol).0, path_arg(path)?).map_err(err_of)
    })
}

/// Releases a volume handle; NULL is a no-op.
///
/// # Safety
/// `vol` must have come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn zs_volume_free(vol: *mut ZsVolume) {
    if !vol.is_null() {
        drop(Box::from_raw(vol));
    }
}

/// Extents in voxels, x/y/z.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn zs_volume_dims(
    vol: *const ZsVolume,
    nx: *mut u64,
    ny: *mut u64,
    nz: *mut u64,
) -> ZsStatus {
    run(|| {
        nonnull!(vol, "volume");
        nonnull!(nx, "nx");
        nonnull!(ny, "ny");
        nonnull!(nz, "nz");
        let header = match &(*vol).0 {
            Volume::Image(v) => &v.header,
            Volume::Labels(v) => &v.header,
        };
        *nx = header.dims.0 as u64;
        *ny = header.dims.1 as u64;
        *nz = header.dims.2 as u64;
        Ok(())
    })
}

/// 1 if the volume holds labels, 0 if it is an image.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn zs_volume_is_labels(vol: *const ZsVolume, out: *mut i32) -> ZsStatus {
    run(|| {
        nonnull!(vol, "volume");
        nonnull!(out, "out pointer");
        *out = matches!((*vol).0, Volume::Labels(_)) as i32;
        Ok(())
    })
}

/// Generates a deterministic synthetic phantom pair. `n_labels` is 3 or 6,
/// `difficulty` in [0,1].
///
/// # Safety
/// Output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn zs_phantom(
    seed: u64,
    nx: u64,
    ny: u64,
    nz: u64,
    sx: f64,
    sy: f64,
    sz: f64,
    n_labels: u32,
    difficulty: f64,
    out_image: *mut *mut ZsVolume,
    out_labels: *mut *mut ZsVolume,
) -> ZsStatus {
    run(|| {
        nonnull!(out_image, "out image pointer");
        nonnull!(out_labels, "out labels pointer");
        let mode = match n_labels {
            3 => LabelMode::TwoLabel,
            6 => LabelMode::SixLabel,
            other => return Err((ZsStatus::Usage, format!("n_labels must be 3 or 6, got {other}"))),
        };
        let (image, labels) = synth_phantom(
            seed,
            (nx as usize, ny as usize, nz as usize),
            (sx, sy, sz),
            mode,
            difficulty,
        )
        .map_err(err_of)?;
        *out_image = Box::into_raw(Box::new(ZsVolume(Volume::Image(image))));
        *out_labels = Box::into_raw(Box::new(ZsVolume(Volume::Labels(labels))));
        Ok(())
    })
}

/// Loads a checkpoint written by the trainer.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn zs_model_load(path: *const c_char, out: *mut *mut ZsModel) -> ZsStatus {
    run(|| {
        nonnull!(out, "out pointer");
        let model = load_model(path_arg(path)?).map_err(err_of)?;
        *out = Box::into_raw(Box::new(ZsModel(model)));
        Ok(())
    })
}

/// Releases a model handle; NULL is a no-op.
///
/// # Safety
/// `model` must have come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn zs_model_free(model: *mut ZsModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Segments an image volume; the result is a label volume of the same dims.
///
/// # Safety
/// All pointers must be valid handles from this library.
#[no_mangle]
pub unsafe extern "C" fn zs_model_predict(
    model: *const ZsModel,
    image: *const ZsVolume,
    out: *mut *mut ZsVolume,
) -> ZsStatus {
    run(|| {
        nonnull!(model, "model");
        nonnull!(image, "image");
        nonnull!(out, "out pointer");
        let Volume::Image(img) = &(*image).0 else {
            return Err((ZsStatus::Usage, "predict needs an image volume, got labels".into()));
        };
        let (pred, _) = evaluate_volume(&(*model).0, img).map_err(err_of)?;
        *out = Box::into_raw(Box::new(ZsVolume(Volume::Labels(pred))));
        Ok(())
    })
}

/// Dice overlap of one label value between two label volumes of equal dims;
/// 1.0 when the label is absent from both.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn zs_dice(
    pred: *const ZsVolume,
    truth: *const ZsVolume,
    label: u8,
    out: *mut f64,
) -> ZsStatus {
    run(|| {
        nonnull!(pred, "prediction");
        nonnull!(truth, "truth");
        nonnull!(out, "out pointer");
        let (Volume::Labels(p), Volume::Labels(t)) = (&(*pred).0, &(*truth).0) else {
            return Err((ZsStatus::Usage, "dice needs two label volumes".into()));
        };
        *out = dice_coefficient(&p.voxels, &t.voxels, label).map_err(err_of)?;
        Ok(())
    })
}
