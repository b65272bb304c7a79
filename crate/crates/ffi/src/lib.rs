//! C interface to `jointinv`.
//!
//! Grids and trained models are opaque handles created and released by this
//! library. Every fallible call returns a [`JliStatus`]; on failure the
//! message is available from [`jli_last_error`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use jointinv::checkpoint::Checkpoint;
use jointinv::data::{ricker, SectionGrid};
use jointinv::eval::{predict_section, r2};
use jointinv::Error;

/// Result codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JliStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ShapeMismatch = 3,
    Degenerate = 4,
    Format = 5,
    Io = 6,
    Config = 7,
    ArchitectureMismatch = 8,
    Panic = 9,
}

/// Depth × trace section.
pub struct JliGrid(SectionGrid);

/// Trained network with its scalers.
pub struct JliModel(Checkpoint);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> JliStatus {
    match e {
        Error::ShapeMismatch { .. } | Error::NotScalar(_) => JliStatus::ShapeMismatch,
        Error::InvalidArgument(_) => JliStatus::InvalidArgument,
        Error::ArchitectureMismatch(_) => JliStatus::ArchitectureMismatch,
        Error::Degenerate(_) => JliStatus::Degenerate,
        Error::Format { .. } => JliStatus::Format,
        Error::Config(_) => JliStatus::Config,
        Error::Io { .. } => JliStatus::Io,
    }
}

struct Fail(JliStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(JliStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> JliStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            JliStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            JliStatus::Panic
        }
    }
}

unsafe fn path_arg<'a>(p: *const c_char) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(JliStatus::InvalidArgument, "path is not valid UTF-8".into()))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

/// Message of the last failed call on this thread (empty after success).
/// The pointer stays valid until the next call into this library.
#[no_mangle]
pub extern "C" fn jli_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn jli_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates a grid from `depth * n_traces` trace-major values.
///
/// # Safety
/// `values` must point to `depth * n_traces` readable doubles and `out` must
/// be writable.
#[no_mangle]
pub unsafe extern "C" fn jli_grid_new(
    depth: u32,
    n_traces: u32,
    dz: f64,
    values: *const f64,
    out: *mut *mut JliGrid,
) -> JliStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let n = (depth as usize)
            .checked_mul(n_traces as usize)
            .ok_or_else(|| Fail(JliStatus::InvalidArgument, "grid too large".into()))?;
        let vals = slice_arg(values, n, "values")?.to_vec();
        let grid = SectionGrid::new(depth as usize, n_traces as usize, dz, vals)?;
        *out = Box::into_raw(Box::new(JliGrid(grid)));
        Ok(())
    })
}

/// Reads an SGRD1 file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn jli_grid_read(path: *const c_char, out: *mut *mut JliGrid) -> JliStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let grid = SectionGrid::load(path_arg(path)?)?;
        *out = Box::into_raw(Box::new(JliGrid(grid)));
        Ok(())
    })
}

/// Writes a grid as SGRD1.
///
/// # Safety
/// `grid` must come from this library; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn jli_grid_write(grid: *const JliGrid, path: *const c_char) -> JliStatus {
    guard(|| {
        let grid = grid.as_ref().ok_or_else(|| null("grid"))?;
        grid.0.save(path_arg(path)?)?;
        Ok(())
    })
}

/// Dimensions of a grid; any output pointer may be null.
///
/// # Safety
/// `grid` must come from this library; non-null outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn jli_grid_dims(
    grid: *const JliGrid,
    depth: *mut u32,
    n_traces: *mut u32,
    dz: *mut f64,
) -> JliStatus {
    guard(|| {
        let g = &grid.as_ref().ok_or_else(|| null("grid"))?.0;
        if let Some(d) = depth.as_mut() {
            *d = g.depth() as u32;
        }
        if let Some(n) = n_traces.as_mut() {
            *n = g.n_traces() as u32;
        }
        if let Some(z) = dz.as_mut() {
            *z = g.dz();
        }
        Ok(())
    })
}

/// Copies the trace-major values into `out`, which must hold exactly
/// `depth * n_traces` doubles.
///
/// # Safety
/// `grid` must come from this library; `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn jli_grid_values(grid: *const JliGrid, out: *mut f64, len: usize) -> JliStatus {
    guard(|| {
        let g = &grid.as_ref().ok_or_else(|| null("grid"))?.0;
        if len != g.values().len() {
            return Err(Fail(
                JliStatus::ShapeMismatch,
                format!("buffer holds {len} values, grid has {}", g.values().len()),
            ));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(g.values());
        Ok(())
    })
}

/// Releases a grid; null is ignored.
///
/// # Safety
/// `grid` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn jli_grid_free(grid: *mut JliGrid) {
    if !grid.is_null() {
        drop(Box::from_raw(grid));
    }
}

/// Loads a JLCK1 checkpoint.
///
/// # Safety
/// `path` must be NUL-terminated and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn jli_model_load(path: *const c_char, out: *mut *mut JliModel) -> JliStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let ck = Checkpoint::load(path_arg(path)?)?;
        *out = Box::into_raw(Box::new(JliModel(ck)));
        Ok(())
    })
}

/// Releases a model; null is ignored.
///
/// # Safety
/// `model` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn jli_model_free(model: *mut JliModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Predicts a property section from a seismic section.
///
/// # Safety
/// Handles must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn jli_model_predict_section(
    model: *const JliModel,
    seismic: *const JliGrid,
    out: *mut *mut JliGrid,
) -> JliStatus {
    guard(|| {
        let m = &model.as_ref().ok_or_else(|| null("model"))?.0;
        let s = &seismic.as_ref().ok_or_else(|| null("seismic"))?.0;
        let out = out_arg(out, "out")?;
        let pred = predict_section(&m.network, s, &m.scaler_x, &m.scaler_y)?;
        *out = Box::into_raw(Box::new(JliGrid(pred)));
        Ok(())
    })
}

/// Coefficient of determination of `y_hat` against `y`.
///
/// # Safety
/// `y` and `y_hat` must point to `len` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn jli_r2(y: *const f64, y_hat: *const f64, len: usize, out: *mut f64) -> JliStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = r2(slice_arg(y, len, "y")?, slice_arg(y_hat, len, "y_hat")?)?;
        Ok(())
    })
}

/// Ricker wavelet of `2 * half_len + 1` samples written to `out`.
///
/// # Safety
/// `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn jli_ricker(freq: f64, dt: f64, half_len: usize, out: *mut f64, len: usize) -> JliStatus {
    guard(|| {
        let w = ricker(freq, dt, half_len)?;
        if len != w.len() {
            return Err(Fail(
                JliStatus::ShapeMismatch,
                format!("buffer holds {len} values, wavelet has {}", w.len()),
            ));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(&w);
        Ok(())
    })
}
