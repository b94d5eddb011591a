//! C ABI over the sivism library.
//!
//! Objects are opaque handles created by `*_new` and released by `*_free`.
//! Every fallible call returns a [`SivismStatus`]; on failure the message is
//! available from [`sivism_last_error`] on the same thread. Panics never
//! cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::slice;

use sivism::cli::{Method, PreparedRun, RunConfig, TargetSpec};
use sivism::metrics::{cov_rmse, knn_kl, sm_diagnostics, SampleSet};
use sivism::rng;
use sivism::targets::TargetPosterior;
use sivism::trainer::{train, TrainConfig, TrainState};
use sivism::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SivismStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidConfig = 3,
    Numerical = 4,
    Io = 5,
    Runtime = 6,
    Panic = 7,
}

/// A target posterior.
pub struct SivismTarget {
    inner: Box<dyn TargetPosterior>,
}

/// A minimax score-matching training session.
pub struct SivismTrainer {
    target: Box<dyn TargetPosterior>,
    config: TrainConfig,
    state: TrainState,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).ok());
}

fn status_of(e: &Error) -> SivismStatus {
    match e {
        Error::InvalidConfig { .. } | Error::InvalidSpec(_) | Error::Dataset(_) | Error::Json(_) => SivismStatus::InvalidConfig,
        Error::DimensionMismatch { .. } | Error::Invalid(_) => SivismStatus::InvalidArgument,
        Error::Io(_) => SivismStatus::Io,
        e if e.is_numerical() => SivismStatus::Numerical,
        _ => SivismStatus::Runtime,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (SivismStatus, String)>) -> SivismStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SivismStatus::Ok,
        Ok(Err((s, m))) => {
            set_error(m);
            s
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            SivismStatus::Panic
        }
    }
}

fn lib(e: Error) -> (SivismStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (SivismStatus, String) {
    (SivismStatus::NullPointer, format!("{what} is null"))
}

fn bad(msg: impl Into<String>) -> (SivismStatus, String) {
    (SivismStatus::InvalidArgument, msg.into())
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, (SivismStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| bad(format!("{what} is not UTF-8")))
}

unsafe fn read_slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], (SivismStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn write_slice<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], (SivismStatus, String)> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn sivism_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sivism_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Builds a target from its JSON description, e.g. `{"name": "banana"}`.
///
/// # Safety
/// `spec_json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sivism_target_new(spec_json: *const c_char, out: *mut *mut SivismTarget) -> SivismStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let s = read_str(spec_json, "spec_json")?;
        let spec: TargetSpec =
            serde_json::from_str(s).map_err(|e| (SivismStatus::InvalidConfig, format!("target spec: {e}")))?;
        let inner = spec.build().map_err(lib)?;
        *out = Box::into_raw(Box::new(SivismTarget { inner }));
        Ok(())
    })
}

/// # Safety
/// `target` must come from [`sivism_target_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sivism_target_free(target: *mut SivismTarget) {
    if !target.is_null() {
        drop(Box::from_raw(target));
    }
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sivism_target_dim(target: *const SivismTarget, out: *mut usize) -> SivismStatus {
    guard(|| {
        let t = target.as_ref().ok_or_else(|| null("target"))?;
        *out.as_mut().ok_or_else(|| null("out"))? = t.inner.dim();
        Ok(())
    })
}

/// Unnormalised log-density at `x` of length `dim`.
///
/// # Safety
/// `x` must hold `len` doubles; other pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sivism_target_log_density(
    target: *const SivismTarget,
    x: *const f64,
    len: usize,
    out: *mut f64,
) -> SivismStatus {
    guard(|| {
        let t = target.as_ref().ok_or_else(|| null("target"))?;
        let x = read_slice(x, len, "x")?;
        if len != t.inner.dim() {
            return Err(bad(format!("x has length {len}, target dimension is {}", t.inner.dim())));
        }
        *out.as_mut().ok_or_else(|| null("out"))? = t.inner.log_density(x);
        Ok(())
    })
}

/// Score `grad log p(x)` for `n` row-major points; `x` and `out` hold
/// `n * dim` doubles.
///
/// # Safety
/// Buffers must hold `n * dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn sivism_target_score(
    target: *const SivismTarget,
    x: *const f64,
    n: usize,
    out: *mut f64,
) -> SivismStatus {
    guard(|| {
        let t = target.as_ref().ok_or_else(|| null("target"))?;
        let len = n * t.inner.dim();
        let xs = read_slice(x, len, "x")?;
        let o = write_slice(out, len, "out")?;
        t.inner.score_batch(xs, o);
        Ok(())
    })
}

/// Creates a training session from a run config with `"method": "sivi_sm"`.
/// The config is resolved exactly as the CLI resolves it.
///
/// # Safety
/// `config_json` must be NUL-terminated; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sivism_trainer_new(config_json: *const c_char, out: *mut *mut SivismTrainer) -> SivismStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let s = read_str(config_json, "config_json")?;
        let rc = RunConfig::from_json(s).map_err(lib)?;
        if rc.method != Method::SiviSm {
            return Err((SivismStatus::InvalidConfig, "trainer handles require method sivi_sm".into()));
        }
        let p = PreparedRun::new(rc).map_err(lib)?;
        let config = p.config.train.clone().expect("resolved");
        let fam = p.config.family.clone().expect("resolved");
        let state = TrainState::init(&fam, p.target.dim(), &config).map_err(lib)?;
        *out = Box::into_raw(Box::new(SivismTrainer {
            target: p.target,
            config,
            state,
        }));
        Ok(())
    })
}

/// # Safety
/// `trainer` must come from [`sivism_trainer_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sivism_trainer_free(trainer: *mut SivismTrainer) {
    if !trainer.is_null() {
        drop(Box::from_raw(trainer));
    }
}

/// Runs `iterations` further training iterations. Splitting a run into
/// several calls gives the same result as one call.
///
/// # Safety
/// `trainer` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sivism_trainer_step(trainer: *mut SivismTrainer, iterations: usize) -> SivismStatus {
    guard(|| {
        let t = trainer.as_mut().ok_or_else(|| null("trainer"))?;
        let cfg = TrainConfig {
            iterations,
            ..t.config.clone()
        };
        train(t.target.as_ref(), &cfg, &mut t.state).map_err(lib)
    })
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sivism_trainer_iteration(trainer: *const SivismTrainer, out: *mut usize) -> SivismStatus {
    guard(|| {
        let t = trainer.as_ref().ok_or_else(|| null("trainer"))?;
        *out.as_mut().ok_or_else(|| null("out"))? = t.state.iteration;
        Ok(())
    })
}

/// Dimension of the samples produced by [`sivism_trainer_sample`].
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sivism_trainer_dim(trainer: *const SivismTrainer, out: *mut usize) -> SivismStatus {
    guard(|| {
        let t = trainer.as_ref().ok_or_else(|| null("trainer"))?;
        *out.as_mut().ok_or_else(|| null("out"))? = t.state.family.x_dim();
        Ok(())
    })
}

/// Draws `n` samples from the current variational distribution into `out`
/// (`n * dim` doubles, row-major) using its own stream of `seed`.
///
/// # Safety
/// `out` must hold `n * dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn sivism_trainer_sample(
    trainer: *const SivismTrainer,
    n: usize,
    seed: u64,
    out: *mut f64,
) -> SivismStatus {
    guard(|| {
        let t = trainer.as_ref().ok_or_else(|| null("trainer"))?;
        let d = t.state.family.x_dim();
        let o = write_slice(out, n * d, "out")?;
        let x = t
            .state
            .family
            .draw(n, &mut rng::stream(seed, rng::STREAM_OUTPUT))
            .map_err(lib)?;
        o.copy_from_slice(&x);
        Ok(())
    })
}

/// Monte-Carlo SM loss and f-net norm over `n` fresh samples.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sivism_trainer_diagnostics(
    trainer: *const SivismTrainer,
    n: usize,
    seed: u64,
    sm_loss: *mut f64,
    fnet_norm: *mut f64,
) -> SivismStatus {
    guard(|| {
        let t = trainer.as_ref().ok_or_else(|| null("trainer"))?;
        if n == 0 {
            return Err(bad("n must be at least 1"));
        }
        let mut r = rng::stream(seed, rng::STREAM_EVAL);
        let (sm, norm) =
            sm_diagnostics(&t.state.family, &t.state.f_net, t.target.as_ref(), n, &mut r).map_err(lib)?;
        *sm_loss.as_mut().ok_or_else(|| null("sm_loss"))? = sm;
        *fnet_norm.as_mut().ok_or_else(|| null("fnet_norm"))? = norm;
        Ok(())
    })
}

/// Writes `family.json` and `fnet.json` into the existing directory `dir`.
///
/// # Safety
/// `dir` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn sivism_trainer_save(trainer: *const SivismTrainer, dir: *const c_char) -> SivismStatus {
    guard(|| {
        let t = trainer.as_ref().ok_or_else(|| null("trainer"))?;
        let d = read_str(dir, "dir")?;
        t.state.save_checkpoint(Path::new(d)).map_err(lib)
    })
}

unsafe fn sample_set(p: *const f64, n: usize, d: usize, what: &str) -> Result<SampleSet, (SivismStatus, String)> {
    if d == 0 {
        return Err(bad("dimension must be positive"));
    }
    let s = read_slice(p, n * d, what)?;
    SampleSet::new(s.to_vec(), d, what, 0).map_err(lib)
}

/// k-NN estimate of `KL(p || q)` from row-major samples of dimension `d`.
///
/// # Safety
/// `p` holds `n * d` doubles and `q` holds `m * d`.
#[no_mangle]
pub unsafe extern "C" fn sivism_knn_kl(
    p: *const f64,
    n: usize,
    q: *const f64,
    m: usize,
    d: usize,
    k: usize,
    out: *mut f64,
) -> SivismStatus {
    guard(|| {
        let ps = sample_set(p, n, d, "p")?;
        let qs = sample_set(q, m, d, "q")?;
        *out.as_mut().ok_or_else(|| null("out"))? = knn_kl(&ps, &qs, k).map_err(lib)?;
        Ok(())
    })
}

/// RMSE over the upper-triangular sample-covariance entries of two sets.
///
/// # Safety
/// `a` holds `n * d` doubles and `b` holds `m * d`.
#[no_mangle]
pub unsafe extern "C" fn sivism_cov_rmse(
    a: *const f64,
    n: usize,
    b: *const f64,
    m: usize,
    d: usize,
    out: *mut f64,
) -> SivismStatus {
    guard(|| {
        let sa = sample_set(a, n, d, "a")?;
        let sb = sample_set(b, m, d, "b")?;
        *out.as_mut().ok_or_else(|| null("out"))? = cov_rmse(&sa, &sb).map_err(lib)?;
        Ok(())
    })
}
