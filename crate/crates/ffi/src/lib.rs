//! C ABI over the mldbfm toolkit.
//!
//! Every fallible call returns an [`MldStatus`]; on failure the message is
//! available from [`mld_last_error_message`] on the same thread. Handles are
//! opaque, created by `*_new`/`*_fit`/`extract` calls and released with the
//! matching `*_free`. Matrices cross the boundary as row-major `double`
//! buffers.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use mldbfm::baseline::extract_rms;
use mldbfm::blocks::{plan_blocks, plan_windows_seconds};
use mldbfm::filter::{apply, FilterSpec};
use mldbfm::metrics::r2_vw;
use mldbfm::mld::{descriptors, extract_mld_bfm};
use mldbfm::regression::{fit_ridge, LinearModel};
use mldbfm::signal::{crop, GridLayout, SignalMatrix};
use mldbfm::tensor::FeatureTensor;
use mldbfm::Error;
use ndarray::{Array2, ArrayView2};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MldStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidSpec = 2,
    InvalidInput = 3,
    InvalidRange = 4,
    OutOfRange = 5,
    Alignment = 6,
    ShapeMismatch = 7,
    TrainingDiverged = 8,
    Numerical = 9,
    Config = 10,
    Io = 11,
    BufferTooSmall = 12,
    Panic = 13,
}

impl From<&Error> for MldStatus {
    fn from(e: &Error) -> Self {
        match e.root() {
            Error::InvalidSpec(_) => MldStatus::InvalidSpec,
            Error::InvalidInput(_) => MldStatus::InvalidInput,
            Error::InvalidRange(_) => MldStatus::InvalidRange,
            Error::OutOfRange(_) => MldStatus::OutOfRange,
            Error::Alignment(_) => MldStatus::Alignment,
            Error::ShapeMismatch(_) => MldStatus::ShapeMismatch,
            Error::TrainingDiverged(_) => MldStatus::TrainingDiverged,
            Error::Numerical(_) => MldStatus::Numerical,
            Error::Config(_) | Error::Json(_) => MldStatus::Config,
            Error::Io(_) => MldStatus::Io,
            Error::Stage { .. } => unreachable!("root strips stage tags"),
        }
    }
}

/// Recording plus its electrode layout.
pub struct MldSignal {
    inner: SignalMatrix,
}

/// Feature rows with their column names.
pub struct MldFeatures {
    inner: FeatureTensor,
    names: Vec<CString>,
}

/// Fitted multi-output ridge regression.
pub struct MldRidge {
    inner: LinearModel,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn fail(status: MldStatus, msg: impl Into<String>) -> MldStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> Result<(), MldStatus>) -> MldStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            MldStatus::Ok
        }
        Ok(Err(s)) => s,
        Err(_) => fail(MldStatus::Panic, "internal panic"),
    }
}

fn check(e: Error) -> MldStatus {
    let s = MldStatus::from(&e);
    fail(s, e.to_string())
}

fn non_null<T>(p: *const T, what: &str) -> Result<(), MldStatus> {
    if p.is_null() {
        Err(fail(MldStatus::NullPointer, format!("{what} is null")))
    } else {
        Ok(())
    }
}

/// # Safety
/// `p` must be null-checked and point to `rows * cols` readable doubles.
unsafe fn matrix<'a>(p: *const f64, rows: usize, cols: usize, what: &str) -> Result<ArrayView2<'a, f64>, MldStatus> {
    non_null(p, what)?;
    let len = rows
        .checked_mul(cols)
        .ok_or_else(|| fail(MldStatus::InvalidInput, format!("{what} dimensions overflow")))?;
    let slice = std::slice::from_raw_parts(p, len);
    Ok(ArrayView2::from_shape((rows, cols), slice).expect("length matches"))
}

/// # Safety
/// `out` must point to `len` writable doubles.
unsafe fn write_out(values: &Array2<f64>, out: *mut f64, len: usize) -> Result<(), MldStatus> {
    non_null(out, "output buffer")?;
    if len < values.len() {
        return Err(fail(
            MldStatus::BufferTooSmall,
            format!("output holds {len} values, {} needed", values.len()),
        ));
    }
    let dst = std::slice::from_raw_parts_mut(out, values.len());
    for (d, v) in dst.iter_mut().zip(values.iter()) {
        *d = *v;
    }
    Ok(())
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn mld_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mld_version() -> *const c_char {
    static VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(v) => v,
        Err(_) => panic!("version string"),
    };
    VERSION.as_ptr()
}

/// Copy a row-major `n_samples x n_channels` recording. Grids `g` occupy
/// consecutive channels, `grid_rows[g] x grid_cols[g]` each, row-major.
///
/// # Safety
/// `data` must hold `n_samples * n_channels` doubles, `grid_rows` and
/// `grid_cols` `n_grids` entries each, and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mld_signal_new(
    data: *const f64,
    n_samples: usize,
    n_channels: usize,
    fs: f64,
    grid_rows: *const usize,
    grid_cols: *const usize,
    n_grids: usize,
    out: *mut *mut MldSignal,
) -> MldStatus {
    guard(|| {
        non_null(out, "out")?;
        non_null(grid_rows, "grid_rows")?;
        non_null(grid_cols, "grid_cols")?;
        let x = matrix(data, n_samples, n_channels, "data")?;
        let rows = std::slice::from_raw_parts(grid_rows, n_grids);
        let cols = std::slice::from_raw_parts(grid_cols, n_grids);
        let mut offset = 0;
        let grids = rows
            .iter()
            .zip(cols)
            .enumerate()
            .map(|(g, (&r, &c))| {
                let layout = GridLayout::new(format!("grid{g}"), r, c, offset);
                offset += r * c;
                layout
            })
            .collect();
        let inner = SignalMatrix::new(x.to_owned(), fs, grids).map_err(check)?;
        *out = Box::into_raw(Box::new(MldSignal { inner }));
        Ok(())
    })
}

/// # Safety
/// `signal` must come from this library and not be freed twice; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn mld_signal_free(signal: *mut MldSignal) {
    if !signal.is_null() {
        drop(Box::from_raw(signal));
    }
}

/// # Safety
/// `signal` must be a live handle; the outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn mld_signal_shape(signal: *const MldSignal, n_samples: *mut usize, n_channels: *mut usize) -> MldStatus {
    guard(|| {
        non_null(signal, "signal")?;
        non_null(n_samples, "n_samples")?;
        non_null(n_channels, "n_channels")?;
        *n_samples = (*signal).inner.n_samples();
        *n_channels = (*signal).inner.n_channels();
        Ok(())
    })
}

/// Copy the samples into `out` (row-major, `len` doubles available).
///
/// # Safety
/// `signal` must be a live handle and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn mld_signal_data(signal: *const MldSignal, out: *mut f64, len: usize) -> MldStatus {
    guard(|| {
        non_null(signal, "signal")?;
        write_out(&(*signal).inner.data().to_owned(), out, len)
    })
}

/// Zero-phase band-pass of `order`, optional notch (skipped when
/// `notch_hz <= 0`), then crop to `[crop_start_s, crop_end_s)`.
///
/// # Safety
/// `signal` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mld_signal_preprocess(
    signal: *const MldSignal,
    low_hz: f64,
    high_hz: f64,
    order: usize,
    notch_hz: f64,
    notch_q: f64,
    crop_start_s: f64,
    crop_end_s: f64,
    out: *mut *mut MldSignal,
) -> MldStatus {
    guard(|| {
        non_null(signal, "signal")?;
        non_null(out, "out")?;
        let mut x = apply(&(*signal).inner, &FilterSpec::bandpass(order, low_hz, high_hz)).map_err(check)?;
        if notch_hz > 0.0 {
            x = apply(&x, &FilterSpec::notch(notch_hz, notch_q)).map_err(check)?;
        }
        let inner = crop(&x, crop_start_s, crop_end_s).map_err(check)?;
        *out = Box::into_raw(Box::new(MldSignal { inner }));
        Ok(())
    })
}

fn features_handle(inner: FeatureTensor) -> *mut MldFeatures {
    let names = inner
        .columns()
        .iter()
        .map(|c| CString::new(c.to_string()).expect("tags contain no NUL"))
        .collect();
    Box::into_raw(Box::new(MldFeatures { inner, names }))
}

/// Block-wise Σ, Φ, Ω features over `block_size` blocks moved by `step`.
///
/// # Safety
/// `signal` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mld_extract_mld_bfm(
    signal: *const MldSignal,
    block_size: usize,
    step: usize,
    window_s: f64,
    overlap_s: f64,
    out: *mut *mut MldFeatures,
) -> MldStatus {
    guard(|| {
        non_null(signal, "signal")?;
        non_null(out, "out")?;
        let x = &(*signal).inner;
        let windows = plan_windows_seconds(x.n_samples(), window_s, overlap_s, x.fs()).map_err(check)?;
        let blocks = plan_blocks(x.grids(), block_size, step).map_err(check)?;
        *out = features_handle(extract_mld_bfm(x, &blocks, &windows).map_err(check)?);
        Ok(())
    })
}

/// Per-channel RMS features.
///
/// # Safety
/// `signal` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mld_extract_rms(
    signal: *const MldSignal,
    window_s: f64,
    overlap_s: f64,
    out: *mut *mut MldFeatures,
) -> MldStatus {
    guard(|| {
        non_null(signal, "signal")?;
        non_null(out, "out")?;
        let x = &(*signal).inner;
        let windows = plan_windows_seconds(x.n_samples(), window_s, overlap_s, x.fs()).map_err(check)?;
        *out = features_handle(extract_rms(x, &windows).map_err(check)?);
        Ok(())
    })
}

/// # Safety
/// `features` must come from this library and not be freed twice; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn mld_features_free(features: *mut MldFeatures) {
    if !features.is_null() {
        drop(Box::from_raw(features));
    }
}

/// # Safety
/// `features` must be a live handle; the outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn mld_features_shape(features: *const MldFeatures, rows: *mut usize, cols: *mut usize) -> MldStatus {
    guard(|| {
        non_null(features, "features")?;
        non_null(rows, "rows")?;
        non_null(cols, "cols")?;
        *rows = (*features).inner.n_rows();
        *cols = (*features).inner.n_cols();
        Ok(())
    })
}

/// # Safety
/// `features` must be a live handle and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn mld_features_data(features: *const MldFeatures, out: *mut f64, len: usize) -> MldStatus {
    guard(|| {
        non_null(features, "features")?;
        write_out(&(*features).inner.values().to_owned(), out, len)
    })
}

/// Provenance tag of column `index` such as `b3:omega`, or null when out of
/// range. Owned by the handle.
///
/// # Safety
/// `features` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn mld_features_column_name(features: *const MldFeatures, index: usize) -> *const c_char {
    if features.is_null() {
        return ptr::null();
    }
    let f = &*features;
    f.names.get(index).map_or(ptr::null(), |n| n.as_ptr())
}

/// Σ, Φ, Ω of one row-major `len x k` segment, written to `out[0..3]`.
///
/// # Safety
/// `segment` must hold `len * k` doubles and `out` three.
#[no_mangle]
pub unsafe extern "C" fn mld_descriptors(segment: *const f64, len: usize, k: usize, fs: f64, out: *mut f64) -> MldStatus {
    guard(|| {
        non_null(out, "out")?;
        let seg = matrix(segment, len, k, "segment")?;
        let t = descriptors(seg, fs).map_err(check)?;
        *out = t.sigma;
        *out.add(1) = t.phi;
        *out.add(2) = t.omega;
        Ok(())
    })
}

/// Variance-weighted R² of `n x d` predictions.
///
/// # Safety
/// `y` and `yhat` must hold `n * d` doubles and `out` one.
#[no_mangle]
pub unsafe extern "C" fn mld_r2_vw(y: *const f64, yhat: *const f64, n: usize, d: usize, out: *mut f64) -> MldStatus {
    guard(|| {
        non_null(out, "out")?;
        let y = matrix(y, n, d, "y")?;
        let yhat = matrix(yhat, n, d, "yhat")?;
        *out = r2_vw(y, yhat).map_err(check)?;
        Ok(())
    })
}

/// Ridge with an unpenalized intercept on `n x p` inputs and `n x d` targets.
///
/// # Safety
/// `x` must hold `n * p` doubles, `y` `n * d`, and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mld_ridge_fit(
    x: *const f64,
    y: *const f64,
    n: usize,
    p: usize,
    d: usize,
    alpha: f64,
    out: *mut *mut MldRidge,
) -> MldStatus {
    guard(|| {
        non_null(out, "out")?;
        let x = matrix(x, n, p, "x")?;
        let y = matrix(y, n, d, "y")?;
        let inner = fit_ridge(x, y, alpha).map_err(check)?;
        *out = Box::into_raw(Box::new(MldRidge { inner }));
        Ok(())
    })
}

/// Predict `n` rows into `out` (`n x d`, row-major, `len` doubles available).
///
/// # Safety
/// `model` must be a live handle, `x` must hold `n * p` doubles and `out` `len`.
#[no_mangle]
pub unsafe extern "C" fn mld_ridge_predict(
    model: *const MldRidge,
    x: *const f64,
    n: usize,
    p: usize,
    out: *mut f64,
    len: usize,
) -> MldStatus {
    guard(|| {
        non_null(model, "model")?;
        let x = matrix(x, n, p, "x")?;
        let pred = (*model).inner.predict(x).map_err(check)?;
        write_out(&pred, out, len)
    })
}

/// # Safety
/// `model` must come from this library and not be freed twice; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn mld_ridge_free(model: *mut MldRidge) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}
