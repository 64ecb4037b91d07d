//! C interface to riskfield.
//!
//! Every fallible call returns an [`RfStatus`]; on failure the message is
//! available from [`rf_last_error`] on the same thread. Handles are opaque
//! and owned by the caller until passed to the matching `_free` function.
//! Panics are caught at the boundary and reported as `RF_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use riskfield::cli::{self, ScenarioConfig, Workspace};
use riskfield::evaluation::{roc_curve, RocThresholds};
use riskfield::inference::FitResult;
use riskfield::spde::{matern_covariance, MaternHyper};
use riskfield::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Numerical = 4,
    Io = 5,
    Panic = 6,
}

impl From<&Error> for RfStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Config(_) | Error::Parse { .. } | Error::Serde(_) => RfStatus::Config,
            Error::Io { .. } => RfStatus::Io,
            Error::NotPositiveDefinite { .. } | Error::SingularConstraints | Error::NonConvergence { .. } => {
                RfStatus::Numerical
            }
            _ => RfStatus::InvalidArgument,
        }
    }
}

/// Study region with population, partition, evaluation grid and mesh.
pub struct RfWorkspace {
    inner: Workspace,
}

/// Posterior summaries of one fitted replicate.
pub struct RfFit {
    inner: FitResult,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).unwrap_or_default());
}

struct Fail(RfStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(RfStatus::from(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(RfStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> RfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            RfStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            RfStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(RfStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, n: usize, what: &str) -> Result<&'a [T], Fail> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next riskfield call on this thread.
#[no_mangle]
pub extern "C" fn rf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

fn build_workspace(cfg: ScenarioConfig, out: *mut *mut RfWorkspace) -> Result<(), Fail> {
    let ws = Workspace::build(&cfg)?;
    // SAFETY: checked non-null by the caller of this helper
    unsafe { *out = Box::into_raw(Box::new(RfWorkspace { inner: ws })) };
    Ok(())
}

/// Builds a workspace from a TOML configuration file, or from the built-in
/// defaults when `config_path` is null.
///
/// # Safety
/// `config_path` is null or a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn rf_workspace_new(config_path: *const c_char, out: *mut *mut RfWorkspace) -> RfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let cfg = if config_path.is_null() {
            ScenarioConfig::default()
        } else {
            ScenarioConfig::load(PathBuf::from(str_arg(config_path, "config_path")?))?
        };
        build_workspace(cfg, out)
    })
}

/// Builds a workspace from TOML text.
///
/// # Safety
/// `toml` is a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn rf_workspace_from_toml(toml: *const c_char, out: *mut *mut RfWorkspace) -> RfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let cfg = ScenarioConfig::from_toml(str_arg(toml, "toml")?)?;
        build_workspace(cfg, out)
    })
}

/// # Safety
/// `ws` is null or a handle from `rf_workspace_new`, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rf_workspace_free(ws: *mut RfWorkspace) {
    if !ws.is_null() {
        drop(Box::from_raw(ws));
    }
}

/// Overrides the base simulation seed.
///
/// # Safety
/// `ws` is a live workspace handle.
#[no_mangle]
pub unsafe extern "C" fn rf_workspace_set_seed(ws: *mut RfWorkspace, seed: u64) -> RfStatus {
    guard(|| {
        let ws = out_arg(ws, "ws")?;
        ws.inner.cfg.simulation.seed = seed;
        Ok(())
    })
}

/// Number of evaluation-grid cells.
///
/// # Safety
/// `ws` is a live workspace handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn rf_workspace_grid_len(ws: *const RfWorkspace, out: *mut usize) -> RfStatus {
    guard(|| {
        let ws = ws.as_ref().ok_or_else(|| null("ws"))?;
        *out_arg(out, "out")? = ws.inner.grid.len();
        Ok(())
    })
}

/// Number of areal units in the partition.
///
/// # Safety
/// `ws` is a live workspace handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn rf_workspace_unit_count(ws: *const RfWorkspace, out: *mut usize) -> RfStatus {
    guard(|| {
        let ws = ws.as_ref().ok_or_else(|| null("ws"))?;
        *out_arg(out, "out")? = ws.inner.icar.n();
        Ok(())
    })
}

/// Reference rate of the configured scenario.
///
/// # Safety
/// `ws` is a live workspace handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn rf_workspace_reference_rate(ws: *const RfWorkspace, out: *mut f64) -> RfStatus {
    guard(|| {
        let ws = ws.as_ref().ok_or_else(|| null("ws"))?;
        *out_arg(out, "out")? = ws.inner.reference_rate(&ws.inner.cfg.scenario);
        Ok(())
    })
}

/// Simulates the configured scenario into `out_dir`; `n_datasets` (may be
/// null) receives the number of replicate files written.
///
/// # Safety
/// `ws` is a live workspace handle; `out_dir` is a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn rf_simulate(ws: *const RfWorkspace, out_dir: *const c_char, n_datasets: *mut usize) -> RfStatus {
    guard(|| {
        let ws = &ws.as_ref().ok_or_else(|| null("ws"))?.inner;
        let dir = PathBuf::from(str_arg(out_dir, "out_dir")?);
        ws.write_domain(&dir)?;
        let m = cli::simulate(ws, &ws.cfg.scenario, &dir)?;
        if let Some(n) = n_datasets.as_mut() {
            *n = m.datasets.len();
        }
        Ok(())
    })
}

/// Fits every simulated dataset with every configured model using `jobs`
/// threads (0 means all cores); `n_failed` (may be null) receives the
/// number of fits that failed.
///
/// # Safety
/// `ws` is a live workspace handle; `out_dir` is a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn rf_fit(ws: *const RfWorkspace, out_dir: *const c_char, jobs: usize, n_failed: *mut usize) -> RfStatus {
    guard(|| {
        let ws = &ws.as_ref().ok_or_else(|| null("ws"))?.inner;
        let dir = PathBuf::from(str_arg(out_dir, "out_dir")?);
        let jobs = if jobs == 0 {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        } else {
            jobs
        };
        let recs = cli::fit(ws, &ws.cfg.scenario, &dir, jobs)?;
        if let Some(n) = n_failed.as_mut() {
            *n = recs.iter().filter(|r| !r.converged).count();
        }
        Ok(())
    })
}

/// Computes replicate metrics and the scenario summary under `out_dir`.
///
/// # Safety
/// `ws` is a live workspace handle; `out_dir` is a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn rf_evaluate(ws: *const RfWorkspace, out_dir: *const c_char) -> RfStatus {
    guard(|| {
        let ws = &ws.as_ref().ok_or_else(|| null("ws"))?.inner;
        let dir = PathBuf::from(str_arg(out_dir, "out_dir")?);
        cli::evaluate(ws, &ws.cfg.scenario, &dir)?;
        Ok(())
    })
}

/// Loads a fit result CSV.
///
/// # Safety
/// `path` is a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn rf_fit_read(path: *const c_char, out: *mut *mut RfFit) -> RfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let fit = FitResult::read_csv(str_arg(path, "path")?)?;
        *out = Box::into_raw(Box::new(RfFit { inner: fit }));
        Ok(())
    })
}

/// # Safety
/// `fit` is null or a handle from `rf_fit_read`, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rf_fit_free(fit: *mut RfFit) {
    if !fit.is_null() {
        drop(Box::from_raw(fit));
    }
}

/// Number of targets in the fit; 0 for a null handle.
///
/// # Safety
/// `fit` is null or a live fit handle.
#[no_mangle]
pub unsafe extern "C" fn rf_fit_len(fit: *const RfFit) -> usize {
    fit.as_ref().map_or(0, |f| f.inner.len())
}

/// Number of exceedance thresholds in the fit; 0 for a null handle.
///
/// # Safety
/// `fit` is null or a live fit handle.
#[no_mangle]
pub unsafe extern "C" fn rf_fit_threshold_count(fit: *const RfFit) -> usize {
    fit.as_ref().map_or(0, |f| f.inner.thresholds.len())
}

unsafe fn copy_out(src: &[f64], buf: *mut f64, len: usize) -> Result<(), Fail> {
    if len != src.len() {
        return Err(Fail(
            RfStatus::InvalidArgument,
            format!("buffer holds {len} values, fit has {}", src.len()),
        ));
    }
    if len > 0 {
        if buf.is_null() {
            return Err(null("buf"));
        }
        ptr::copy_nonoverlapping(src.as_ptr(), buf, len);
    }
    Ok(())
}

/// Copies the posterior mean risk of every target into `buf`, which must
/// hold exactly `rf_fit_len` values.
///
/// # Safety
/// `fit` is a live fit handle; `buf` points to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn rf_fit_mean_risk(fit: *const RfFit, buf: *mut f64, len: usize) -> RfStatus {
    guard(|| {
        let fit = fit.as_ref().ok_or_else(|| null("fit"))?;
        copy_out(&fit.inner.mean_risk, buf, len)
    })
}

/// Copies the exceedance probabilities for threshold number `column`.
///
/// # Safety
/// `fit` is a live fit handle; `buf` points to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn rf_fit_exceedance(fit: *const RfFit, column: usize, buf: *mut f64, len: usize) -> RfStatus {
    guard(|| {
        let fit = fit.as_ref().ok_or_else(|| null("fit"))?;
        let col = fit.inner.exceedance.get(column).ok_or_else(|| {
            Fail(
                RfStatus::InvalidArgument,
                format!("threshold column {column} out of range ({} columns)", fit.inner.exceedance.len()),
            )
        })?;
        copy_out(col, buf, len)
    })
}

/// Matérn (smoothness 1) covariance at distance `h` for range `rho` and
/// marginal sd `sigma`.
///
/// # Safety
/// `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn rf_matern_covariance(h: f64, rho: f64, sigma: f64, out: *mut f64) -> RfStatus {
    guard(|| {
        let hyper = MaternHyper { rho, sigma };
        hyper.validate()?;
        if !(h >= 0.0) {
            return Err(Fail(RfStatus::InvalidArgument, format!("distance must be non-negative, got {h}")));
        }
        *out_arg(out, "out")? = matern_covariance(h, &hyper);
        Ok(())
    })
}

/// Weighted ROC area of `scores` against the 0/1 labels in `truth`, with
/// every distinct score as a cut.
///
/// # Safety
/// `truth`, `scores` and `weights` point to `n` readable values; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn rf_roc_auc(
    truth: *const u8,
    scores: *const f64,
    weights: *const f64,
    n: usize,
    out: *mut f64,
) -> RfStatus {
    guard(|| {
        let truth: Vec<bool> = slice_arg(truth, n, "truth")?.iter().map(|&t| t != 0).collect();
        let scores = slice_arg(scores, n, "scores")?;
        let weights = slice_arg(weights, n, "weights")?;
        let roc = roc_curve(&truth, scores, weights, RocThresholds::Empirical)?;
        *out_arg(out, "out")? = roc.auc;
        Ok(())
    })
}
