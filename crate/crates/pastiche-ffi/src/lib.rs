//! C ABI over the pipeline: opaque dataset handles, status codes, and the
//! mask codecs on raw buffers, so other languages can drive the pipeline
//! or just borrow the COCO-compatible RLE implementation.
//!
//! Conventions:
//! - every fallible call returns [`PasticheStatus`]; on anything but `Ok`,
//!   [`pastiche_last_error_message`] holds a thread-local description;
//! - dense mask buffers are one byte per pixel in column-major (Fortran)
//!   order, the same layout as the RLE stream;
//! - buffers and strings returned by this library must be released with
//!   [`pastiche_buffer_free`] / [`pastiche_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use pastiche_core::coco::{parse_dataset, serialize_dataset, validate_dataset, Dataset};
use pastiche_core::config::deserialize_config;
use pastiche_core::mask::{Bitmap, RleMask};
use pastiche_core::pipeline::run_compose;
use pastiche_core::Error;

/// Result codes for every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PasticheStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    ParseError = 3,
    MaskError = 4,
    IntegrityError = 5,
    ValidationError = 6,
    ConfigError = 7,
    IoError = 8,
    /// A panic crossed the boundary; state is still consistent but the
    /// operation did nothing.
    InternalError = 9,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn remember(status: PasticheStatus, message: String) -> PasticheStatus {
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
    status
}

fn remember_error(err: &Error) -> PasticheStatus {
    let status = match err {
        Error::JsonParse { .. } => PasticheStatus::ParseError,
        Error::MaskFormat(_) => PasticheStatus::MaskError,
        Error::Integrity(_) | Error::Manifest(_) | Error::EmptyPool | Error::EmptyDataset => {
            PasticheStatus::IntegrityError
        }
        Error::Validation(_) => PasticheStatus::ValidationError,
        Error::Config { .. } => PasticheStatus::ConfigError,
        Error::Image { .. } | Error::Io(_) => PasticheStatus::IoError,
    };
    remember(status, err.to_string())
}

fn guarded(f: impl FnOnce() -> PasticheStatus) -> PasticheStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            remember(PasticheStatus::InternalError, msg)
        }
    }
}

/// Message describing the most recent failure on this thread. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn pastiche_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pastiche_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

/// Opaque handle to a parsed dataset.
pub struct PasticheDataset(Dataset);

/// Parses COCO/LVIS JSON bytes into a dataset handle.
///
/// # Safety
/// `bytes` must point to `len` readable bytes; `out` must be a valid
/// pointer to receive the handle. Free the handle with
/// [`pastiche_dataset_free`].
#[no_mangle]
pub unsafe extern "C" fn pastiche_dataset_parse(
    bytes: *const u8,
    len: usize,
    out: *mut *mut PasticheDataset,
) -> PasticheStatus {
    guarded(|| {
        if bytes.is_null() || out.is_null() {
            return remember(PasticheStatus::NullArgument, "null argument".into());
        }
        let slice = std::slice::from_raw_parts(bytes, len);
        match parse_dataset(slice) {
            Ok(ds) => {
                *out = Box::into_raw(Box::new(PasticheDataset(ds)));
                PasticheStatus::Ok
            }
            Err(err) => remember_error(&err),
        }
    })
}

/// Reads and parses a dataset JSON file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn pastiche_dataset_parse_file(
    path: *const c_char,
    out: *mut *mut PasticheDataset,
) -> PasticheStatus {
    guarded(|| {
        if path.is_null() || out.is_null() {
            return remember(PasticheStatus::NullArgument, "null argument".into());
        }
        let Ok(path) = CStr::from_ptr(path).to_str() else {
            return remember(PasticheStatus::InvalidUtf8, "path is not UTF-8".into());
        };
        let bytes = match std::fs::read(path) {
            Ok(bytes) => bytes,
            Err(err) => return remember(PasticheStatus::IoError, err.to_string()),
        };
        match parse_dataset(&bytes) {
            Ok(ds) => {
                *out = Box::into_raw(Box::new(PasticheDataset(ds)));
                PasticheStatus::Ok
            }
            Err(err) => remember_error(&err),
        }
    })
}

/// Serializes the dataset to canonical JSON. The buffer is allocated by
/// the library; release it with [`pastiche_buffer_free`].
///
/// # Safety
/// `dataset`, `out_bytes` and `out_len` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn pastiche_dataset_serialize(
    dataset: *const PasticheDataset,
    out_bytes: *mut *mut u8,
    out_len: *mut usize,
) -> PasticheStatus {
    guarded(|| {
        if dataset.is_null() || out_bytes.is_null() || out_len.is_null() {
            return remember(PasticheStatus::NullArgument, "null argument".into());
        }
        let bytes = serialize_dataset(&(*dataset).0).into_boxed_slice();
        *out_len = bytes.len();
        *out_bytes = Box::into_raw(bytes) as *mut u8;
        PasticheStatus::Ok
    })
}

/// Element counts of a dataset. Null out-pointers are skipped.
///
/// # Safety
/// `dataset` must be a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn pastiche_dataset_counts(
    dataset: *const PasticheDataset,
    out_images: *mut u64,
    out_annotations: *mut u64,
    out_categories: *mut u64,
) -> PasticheStatus {
    guarded(|| {
        if dataset.is_null() {
            return remember(PasticheStatus::NullArgument, "null dataset".into());
        }
        let ds = &(*dataset).0;
        if !out_images.is_null() {
            *out_images = ds.images.len() as u64;
        }
        if !out_annotations.is_null() {
            *out_annotations = ds.annotations.len() as u64;
        }
        if !out_categories.is_null() {
            *out_categories = ds.categories.len() as u64;
        }
        PasticheStatus::Ok
    })
}

/// Runs the invariant validator; `Ok` means the dataset is clean,
/// `ValidationError` puts the violation list into the error message.
///
/// # Safety
/// `dataset` must be a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn pastiche_dataset_validate(
    dataset: *const PasticheDataset,
) -> PasticheStatus {
    guarded(|| {
        if dataset.is_null() {
            return remember(PasticheStatus::NullArgument, "null dataset".into());
        }
        match validate_dataset(&(*dataset).0) {
            Ok(()) => PasticheStatus::Ok,
            Err(err) => remember_error(&err),
        }
    })
}

/// Releases a dataset handle. Null is a no-op.
///
/// # Safety
/// `dataset` must have come from this library and not been freed before.
#[no_mangle]
pub unsafe extern "C" fn pastiche_dataset_free(dataset: *mut PasticheDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Releases a buffer returned by this library.
///
/// # Safety
/// `(bytes, len)` must match a buffer handed out by this library.
#[no_mangle]
pub unsafe extern "C" fn pastiche_buffer_free(bytes: *mut u8, len: usize) {
    if !bytes.is_null() {
        drop(Box::from_raw(std::ptr::slice_from_raw_parts_mut(
            bytes, len,
        )));
    }
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must have come from this library and not been freed before.
#[no_mangle]
pub unsafe extern "C" fn pastiche_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

// ---------------------------------------------------------------------------
// Masks
// ---------------------------------------------------------------------------

/// Encodes a dense column-major binary mask (`width * height` bytes, any
/// nonzero byte is foreground) into a compressed counts string. Release the
/// string with [`pastiche_string_free`].
///
/// # Safety
/// `pixels` must point to `width * height` readable bytes and `out_counts`
/// must be valid.
#[no_mangle]
pub unsafe extern "C" fn pastiche_mask_encode(
    pixels: *const u8,
    width: u32,
    height: u32,
    out_counts: *mut *mut c_char,
) -> PasticheStatus {
    guarded(|| {
        if pixels.is_null() || out_counts.is_null() {
            return remember(PasticheStatus::NullArgument, "null argument".into());
        }
        if width == 0 || height == 0 {
            return remember(PasticheStatus::MaskError, "zero mask dimensions".into());
        }
        let data = std::slice::from_raw_parts(pixels, width as usize * height as usize);
        let mask = RleMask::encode(&Bitmap::from_raw(width, height, data.to_vec()));
        let counts = CString::new(mask.to_compressed()).expect("counts are printable ASCII");
        *out_counts = counts.into_raw();
        PasticheStatus::Ok
    })
}

/// Decodes a compressed counts string into a caller-provided dense buffer
/// of `width * height` bytes (column-major, 0/1).
///
/// # Safety
/// `counts` must be NUL-terminated; `out_pixels` must point to
/// `width * height` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn pastiche_mask_decode(
    counts: *const c_char,
    width: u32,
    height: u32,
    out_pixels: *mut u8,
) -> PasticheStatus {
    guarded(|| {
        if counts.is_null() || out_pixels.is_null() {
            return remember(PasticheStatus::NullArgument, "null argument".into());
        }
        let Ok(counts) = CStr::from_ptr(counts).to_str() else {
            return remember(PasticheStatus::InvalidUtf8, "counts are not UTF-8".into());
        };
        match RleMask::from_compressed(counts, height, width) {
            Ok(mask) => {
                let bitmap = mask.decode();
                let out =
                    std::slice::from_raw_parts_mut(out_pixels, width as usize * height as usize);
                out.copy_from_slice(bitmap.as_bytes());
                PasticheStatus::Ok
            }
            Err(err) => remember_error(&err),
        }
    })
}

/// Tight bounding box (`out_bbox = [x, y, w, h]`) and foreground pixel
/// count of a compressed mask. Null out-pointers are skipped.
///
/// # Safety
/// `counts` must be NUL-terminated; `out_bbox`, when given, must point to
/// four writable `uint32_t`s.
#[no_mangle]
pub unsafe extern "C" fn pastiche_mask_stats(
    counts: *const c_char,
    width: u32,
    height: u32,
    out_bbox: *mut u32,
    out_area: *mut u64,
) -> PasticheStatus {
    guarded(|| {
        if counts.is_null() {
            return remember(PasticheStatus::NullArgument, "null counts".into());
        }
        let Ok(counts) = CStr::from_ptr(counts).to_str() else {
            return remember(PasticheStatus::InvalidUtf8, "counts are not UTF-8".into());
        };
        match RleMask::from_compressed(counts, height, width) {
            Ok(mask) => {
                if !out_bbox.is_null() {
                    let bbox = mask.bbox();
                    let out = std::slice::from_raw_parts_mut(out_bbox, 4);
                    out.copy_from_slice(&[bbox.x, bbox.y, bbox.w, bbox.h]);
                }
                if !out_area.is_null() {
                    *out_area = mask.area();
                }
                PasticheStatus::Ok
            }
            Err(err) => remember_error(&err),
        }
    })
}

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

/// Runs the compose stage from a pipeline-config JSON string (same schema
/// as the CLI config file; environment overrides are not consulted).
/// Images, plan traces and `dataset.json` land in the configured
/// `output_dir`.
///
/// # Safety
/// `config_json` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn pastiche_compose_run(config_json: *const c_char) -> PasticheStatus {
    guarded(|| {
        if config_json.is_null() {
            return remember(PasticheStatus::NullArgument, "null config".into());
        }
        let Ok(config_json) = CStr::from_ptr(config_json).to_str() else {
            return remember(PasticheStatus::InvalidUtf8, "config is not UTF-8".into());
        };
        let value: serde_json::Value = match serde_json::from_str(config_json) {
            Ok(value) => value,
            Err(err) => return remember(PasticheStatus::ConfigError, err.to_string()),
        };
        let cfg = match deserialize_config(value) {
            Ok(cfg) => cfg,
            Err(err) => return remember_error(&err),
        };
        match run_compose(&cfg) {
            Ok(_) => PasticheStatus::Ok,
            Err(err) => remember_error(&err),
        }
    })
}
