//! C ABI over [`cgp_core`].
//!
//! Models are opaque handles created by [`cgp_model_build`] and released by
//! [`cgp_model_free`]. Every fallible call returns a [`CgpStatus`]; on failure
//! [`cgp_last_error_message`] describes the error on the calling thread.
//!
//! Points are passed row-major, `n_points × dim`, in the units of the
//! configured domain.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use cgp_core::{CgpError, Emulator, ErrorClass, KernelFamily, KernelSpec, RunConfig};

/// Status codes. The nonzero values for config, infeasible and numerical
/// errors match the `cgp` command's exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CgpStatus {
    Ok = 0,
    NullPointer = 1,
    Config = 2,
    Infeasible = 3,
    Numerical = 4,
    Panic = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CgpKernelFamily {
    Gaussian = 0,
    Matern52 = 1,
    Matern32 = 2,
    Exponential = 3,
}

impl From<CgpKernelFamily> for KernelFamily {
    fn from(f: CgpKernelFamily) -> Self {
        match f {
            CgpKernelFamily::Gaussian => KernelFamily::Gaussian,
            CgpKernelFamily::Matern52 => KernelFamily::Matern52,
            CgpKernelFamily::Matern32 => KernelFamily::Matern32,
            CgpKernelFamily::Exponential => KernelFamily::Exponential,
        }
    }
}

/// A fitted emulator.
pub struct CgpModel {
    emulator: Emulator,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

enum Failure {
    Null(&'static str),
    Core(CgpError),
}

impl From<CgpError> for Failure {
    fn from(e: CgpError) -> Self {
        Failure::Core(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> CgpStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CgpStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_error(&format!("null pointer: {what}"));
            CgpStatus::NullPointer
        }
        Ok(Err(Failure::Core(e))) => {
            set_error(&e.to_string());
            match e.class() {
                ErrorClass::Config => CgpStatus::Config,
                ErrorClass::Infeasible => CgpStatus::Infeasible,
                ErrorClass::Numerical => CgpStatus::Numerical,
            }
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(&format!("panic: {msg}"));
            CgpStatus::Panic
        }
    }
}

unsafe fn slice_in<'a>(p: *const f64, len: usize, what: &'static str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn slice_out<'a>(p: *mut f64, len: usize, what: &'static str) -> Result<&'a mut [f64], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

unsafe fn model_ref<'a>(model: *const CgpModel) -> Result<&'a CgpModel, Failure> {
    model.as_ref().ok_or(Failure::Null("model"))
}

fn rows(flat: &[f64], dim: usize) -> Vec<Vec<f64>> {
    flat.chunks(dim).map(<[f64]>::to_vec).collect()
}

fn points_of(model: &CgpModel, points: *const f64, n_points: usize) -> Result<Vec<Vec<f64>>, Failure> {
    let d = model.emulator.config().dim();
    let flat = unsafe { slice_in(points, n_points * d, "points")? };
    Ok(rows(flat, d))
}

/// Fits an emulator.
///
/// `config_json` is a NUL-terminated JSON run configuration. `inputs` holds
/// `n × dim` values row-major, where `dim` must equal the kernel's input
/// dimension; `outputs` holds `n` values. On success `*out` receives a handle
/// owned by the caller.
///
/// # Safety
/// Pointers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn cgp_model_build(
    config_json: *const c_char,
    inputs: *const f64,
    outputs: *const f64,
    n: usize,
    dim: usize,
    out: *mut *mut CgpModel,
) -> CgpStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        *out = ptr::null_mut();
        if config_json.is_null() {
            return Err(Failure::Null("config_json"));
        }
        let text = CStr::from_ptr(config_json)
            .to_str()
            .map_err(|e| CgpError::Config(format!("config is not UTF-8: {e}")))?;
        let config = RunConfig::from_json(text)?;
        if dim != config.dim() {
            return Err(CgpError::Config(format!(
                "inputs have {dim} columns but the kernel has {} length-scales",
                config.dim()
            ))
            .into());
        }
        if dim == 0 {
            return Err(CgpError::Config("dimension must be positive".into()).into());
        }
        let x = rows(slice_in(inputs, n * dim, "inputs")?, dim);
        let y = slice_in(outputs, n, "outputs")?.to_vec();
        let emulator = Emulator::fit(config, x, y)?;
        *out = Box::into_raw(Box::new(CgpModel { emulator }));
        Ok(())
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `model` must come from [`cgp_model_build`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cgp_model_free(model: *mut CgpModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Input dimension, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cgp_model_dim(model: *const CgpModel) -> usize {
    model.as_ref().map_or(0, |m| m.emulator.config().dim())
}

/// Length of the coefficient vector, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cgp_model_num_coefficients(model: *const CgpModel) -> usize {
    model.as_ref().map_or(0, |m| m.emulator.model().n_coefficients())
}

/// Writes the constrained mode at `n_points` points into `out`.
///
/// # Safety
/// `points` must hold `n_points × dim` values and `out` room for `n_points`.
#[no_mangle]
pub unsafe extern "C" fn cgp_model_mode(
    model: *const CgpModel,
    points: *const f64,
    n_points: usize,
    out: *mut f64,
) -> CgpStatus {
    guard(|| {
        let m = model_ref(model)?;
        let pts = points_of(m, points, n_points)?;
        let dst = slice_out(out, n_points, "out")?;
        dst.copy_from_slice(&m.emulator.mode_at(&pts)?);
        Ok(())
    })
}

/// Writes the unconstrained kriging mean at `n_points` points into `out`.
///
/// # Safety
/// As for [`cgp_model_mode`].
#[no_mangle]
pub unsafe extern "C" fn cgp_model_kriging_mean(
    model: *const CgpModel,
    points: *const f64,
    n_points: usize,
    out: *mut f64,
) -> CgpStatus {
    guard(|| {
        let m = model_ref(model)?;
        let pts = points_of(m, points, n_points)?;
        let dst = slice_out(out, n_points, "out")?;
        dst.copy_from_slice(&m.emulator.kriging_mean_at(&pts)?);
        Ok(())
    })
}

/// Draws `n_samples` constrained sample paths and evaluates them at
/// `n_points` points. `out` receives `n_samples × n_points` values, one
/// path per row. The same seed gives the same paths.
///
/// # Safety
/// `points` must hold `n_points × dim` values and `out` room for
/// `n_samples × n_points`.
#[no_mangle]
pub unsafe extern "C" fn cgp_model_sample(
    model: *const CgpModel,
    seed: u64,
    n_samples: usize,
    points: *const f64,
    n_points: usize,
    out: *mut f64,
) -> CgpStatus {
    guard(|| {
        let m = model_ref(model)?;
        let pts = points_of(m, points, n_points)?;
        let dst = slice_out(out, n_samples * n_points, "out")?;
        let op = m.emulator.operator(&m.emulator.unit_points(&pts)?)?;
        let batch = m.emulator.sample(seed, n_samples)?;
        for (row, draw) in dst.chunks_mut(n_points.max(1)).zip(&batch.draws) {
            row.copy_from_slice(&op.apply(draw.as_slice())?);
        }
        Ok(())
    })
}

/// Evaluates `∂^{p+q} K / ∂x^p ∂x'^q` for a one-dimensional kernel, or the
/// kernel itself in `dim` dimensions when `p = q = 0`.
///
/// # Safety
/// `lengthscales`, `x` and `xp` must hold `dim` values; `out` one.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn cgp_kernel_eval(
    family: CgpKernelFamily,
    variance: f64,
    lengthscales: *const f64,
    dim: usize,
    x: *const f64,
    xp: *const f64,
    p: u32,
    q: u32,
    out: *mut f64,
) -> CgpStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let theta = slice_in(lengthscales, dim, "lengthscales")?.to_vec();
        let a = slice_in(x, dim, "x")?;
        let b = slice_in(xp, dim, "xp")?;
        let k = KernelSpec::new(family.into(), variance, theta)?;
        *out = if p == 0 && q == 0 {
            k.eval(a, b)?
        } else if dim == 1 {
            k.eval_deriv(a[0], b[0], p, q)?
        } else {
            return Err(CgpError::Config("derivatives need a one-dimensional kernel".into()).into());
        };
        Ok(())
    })
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn cgp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}
