//! C interface to `hmmlab`.
//!
//! Models live behind an opaque [`HmmlabModel`] handle created from a TOML
//! model description and released with [`hmmlab_model_free`]. Every fallible
//! call returns an [`HmmlabStatus`]; on failure the message is kept per
//! thread and read with [`hmmlab_last_error`]. Panics never cross the
//! boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use hmmlab::concentration::mixing_coefficient;
use hmmlab::experiments::{run, Command, ExperimentConfig};
use hmmlab::model::simulate_path;
use hmmlab::{Error, HmmSpec, TransitionMatrix};

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HmmlabStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Dimension = 4,
    OutsideSpace = 5,
    Numerical = 6,
    Io = 7,
    Panic = 8,
}

/// Opaque model handle.
pub struct HmmlabModel {
    spec: HmmSpec,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let text = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(text));
}

fn status_of(err: &Error) -> HmmlabStatus {
    match err {
        Error::InvalidArgument(_) => HmmlabStatus::InvalidArgument,
        Error::Config { .. } => HmmlabStatus::Config,
        Error::Dimension { .. } => HmmlabStatus::Dimension,
        Error::OutsideSpace(_) => HmmlabStatus::OutsideSpace,
        Error::Io { .. } | Error::Csv(_) | Error::Json(_) => HmmlabStatus::Io,
        _ => HmmlabStatus::Numerical,
    }
}

/// Runs `body`, translating errors and panics into a status.
fn guard<F>(body: F) -> HmmlabStatus
where
    F: FnOnce() -> Result<(), Failure>,
{
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            HmmlabStatus::Ok
        }
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            HmmlabStatus::NullPointer
        }
        Ok(Err(Failure::Lib(err))) => {
            set_error(err.to_string());
            status_of(&err)
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            HmmlabStatus::Panic
        }
    }
}

enum Failure {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(err: Error) -> Self {
        Failure::Lib(err)
    }
}

unsafe fn text<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure::Lib(Error::InvalidArgument(format!("{what} is not valid UTF-8"))))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &'static str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn handle<'a>(p: *const HmmlabModel) -> Result<&'a HmmlabModel, Failure> {
    p.as_ref().ok_or(Failure::Null("model"))
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn hmmlab_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn hmmlab_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses a model description (the `[model]` table of a scenario file,
/// without the header) and stores a new handle in `*out`.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hmmlab_model_from_toml(toml: *const c_char, out: *mut *mut HmmlabModel) -> HmmlabStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let spec = HmmSpec::from_toml(text(toml, "toml")?)?;
        *out = Box::into_raw(Box::new(HmmlabModel { spec }));
        Ok(())
    })
}

/// Loads the model of a scenario file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hmmlab_model_from_config(path: *const c_char, out: *mut *mut HmmlabModel) -> HmmlabStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let cfg = ExperimentConfig::load(Path::new(text(path, "path")?))?;
        *out = Box::into_raw(Box::new(HmmlabModel { spec: cfg.spec().clone() }));
        Ok(())
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `model` must come from one of the constructors and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn hmmlab_model_free(model: *mut HmmlabModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Parameter dimension, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hmmlab_model_dim(model: *const HmmlabModel) -> usize {
    model.as_ref().map_or(0, |m| m.spec.dim())
}

/// Number of hidden states, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hmmlab_model_states(model: *const HmmlabModel) -> usize {
    model.as_ref().map_or(0, |m| m.spec.states())
}

/// Log-likelihood of `ys[0..n]` at `theta[0..dim]`.
///
/// # Safety
/// Pointers must reference arrays of the stated lengths; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn hmmlab_log_likelihood(
    model: *const HmmlabModel,
    theta: *const f64,
    dim: usize,
    ys: *const f64,
    n: usize,
    out: *mut f64,
) -> HmmlabStatus {
    guard(|| {
        let m = handle(model)?;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let theta = slice(theta, dim, "theta")?;
        let ys = slice(ys, n, "ys")?;
        *out = hmmlab::log_likelihood(&m.spec, theta, ys)?;
        Ok(())
    })
}

/// Simulates `n` steps at `theta`; fills `states` (0-based, may be null) and
/// `observations`.
///
/// # Safety
/// Pointers must reference arrays of the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn hmmlab_simulate(
    model: *const HmmlabModel,
    theta: *const f64,
    dim: usize,
    n: usize,
    seed: u64,
    states: *mut usize,
    observations: *mut f64,
) -> HmmlabStatus {
    guard(|| {
        let m = handle(model)?;
        let theta = slice(theta, dim, "theta")?;
        let obs = slice_mut(observations, n, "observations")?;
        let path = simulate_path(&m.spec, theta, n, seed)?;
        obs.copy_from_slice(&path.observations);
        if !states.is_null() {
            slice_mut(states, n, "states")?.copy_from_slice(&path.states);
        }
        Ok(())
    })
}

/// Mixing coefficient `D` of a row-major `s x s` transition matrix.
///
/// # Safety
/// `matrix` must hold `s * s` values; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn hmmlab_mixing_coefficient(
    matrix: *const f64,
    s: usize,
    tol: f64,
    out: *mut f64,
) -> HmmlabStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let values = slice(matrix, s * s, "matrix")?;
        let rows = values.chunks(s.max(1)).map(<[f64]>::to_vec).collect();
        let q = TransitionMatrix::new(rows)?;
        *out = mixing_coefficient(&q, tol)?.d_theta;
        Ok(())
    })
}

/// Runs one command (`simulate`, `constants`, `tests` or `posterior`) on a
/// scenario file, writing its outputs under `out_dir`.
///
/// # Safety
/// All three arguments must be NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn hmmlab_run(
    command: *const c_char,
    config_path: *const c_char,
    out_dir: *const c_char,
) -> HmmlabStatus {
    guard(|| {
        let name = text(command, "command")?;
        let command =
            Command::from_name(name).ok_or_else(|| Error::InvalidArgument(format!("unknown command {name:?}")))?;
        let cfg = ExperimentConfig::load(Path::new(text(config_path, "config_path")?))?;
        run(command, &cfg, Path::new(text(out_dir, "out_dir")?))?;
        Ok(())
    })
}
