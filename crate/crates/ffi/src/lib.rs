//! C ABI over the phasebench library.
//!
//! Objects cross the boundary as opaque handles created by `pb_config_parse`
//! and `pb_run` and released with the matching `pb_*_free`. Every fallible call
//! returns a [`PbStatus`]; the message for the most recent failure on the
//! calling thread is available from [`pb_last_error`]. Panics are caught at
//! the boundary and reported as [`PbStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use phasebench::config::{load, RunConfig};
use phasebench::io::{run, run_methods, MethodResult};
use phasebench::model::Method;
use phasebench::oracle::{evolve_master, DensityMatrix, OracleConfig};
use phasebench::{Error, C64};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Io = 4,
    Truncation = 5,
    AllDiverged = 6,
    NotFound = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PbMethod {
    Ppr = 0,
    Twa = 1,
}

impl From<PbMethod> for Method {
    fn from(m: PbMethod) -> Self {
        match m {
            PbMethod::Ppr => Method::Ppr,
            PbMethod::Twa => Method::Twa,
        }
    }
}

/// Parsed run configuration.
pub struct PbConfig {
    inner: RunConfig,
}

/// In-memory ensemble results of one propagation run.
pub struct PbRun {
    results: Vec<MethodResult>,
}

thread_local! {
    static LAST_ERROR: RefCell<Vec<u8>> = const { RefCell::new(Vec::new()) };
}

fn set_error(msg: &str) {
    LAST_ERROR.with(|e| {
        let mut v = msg.as_bytes().to_vec();
        v.retain(|&b| b != 0);
        *e.borrow_mut() = v;
    });
}

fn status_of(err: &Error) -> PbStatus {
    match err {
        Error::InvalidArgument(_) => PbStatus::InvalidArgument,
        Error::Config(_) => PbStatus::Config,
        Error::Io(_) | Error::Json(_) => PbStatus::Io,
        Error::Truncation { .. } => PbStatus::Truncation,
        Error::AllDiverged(_) => PbStatus::AllDiverged,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (PbStatus, String)>) -> PbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            PbStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(&format!("panic: {msg}"));
            PbStatus::Panic
        }
    }
}

fn lib(e: Error) -> (PbStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (PbStatus, String) {
    (PbStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (PbStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (PbStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, (PbStatus, String)> {
    p.as_mut().ok_or_else(|| null(what))
}

/// Copy the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length without the NUL.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn pb_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr(), buf as *mut u8, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pb_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Parse a TOML configuration document.
///
/// # Safety
/// `document` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pb_config_parse(document: *const c_char, out: *mut *mut PbConfig) -> PbStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = std::ptr::null_mut();
        let text = str_arg(document, "document")?;
        let cfg = load(text).map_err(lib)?;
        *out = Box::into_raw(Box::new(PbConfig { inner: cfg }));
        Ok(())
    })
}

/// # Safety
/// `cfg` must be null or come from [`pb_config_parse`], and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn pb_config_free(cfg: *mut PbConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Override trajectory count (both methods), master seed and worker count.
/// Zero leaves a field unchanged.
///
/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn pb_config_override(cfg: *mut PbConfig, trajectories: u64, seed: u64, workers: u32) -> PbStatus {
    guard(|| {
        let cfg = &mut out_arg(cfg, "cfg")?.inner;
        if trajectories == 1 {
            return Err((PbStatus::InvalidArgument, "trajectories must be ≥ 2".into()));
        }
        if trajectories > 0 {
            cfg.trajectories = trajectories as usize;
            cfg.twa_trajectories = None;
        }
        if seed > 0 {
            cfg.seed = seed;
        }
        if workers > 0 {
            cfg.workers = workers as usize;
        }
        Ok(())
    })
}

/// Run the configured propagation in memory.
///
/// # Safety
/// `cfg` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pb_run(cfg: *const PbConfig, out: *mut *mut PbRun) -> PbStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = std::ptr::null_mut();
        let cfg = &cfg.as_ref().ok_or_else(|| null("cfg"))?.inner;
        let sim = cfg.simulation().map_err(lib)?;
        let results = run_methods(cfg, &sim).map_err(lib)?;
        *out = Box::into_raw(Box::new(PbRun { results }));
        Ok(())
    })
}

/// # Safety
/// `run` must be null or come from [`pb_run`], and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn pb_run_free(run: *mut PbRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

unsafe fn method_result<'a>(run: *const PbRun, method: PbMethod) -> Result<&'a MethodResult, (PbStatus, String)> {
    let run = run.as_ref().ok_or_else(|| null("run"))?;
    let m = Method::from(method);
    run.results
        .iter()
        .find(|r| r.method == m)
        .ok_or_else(|| (PbStatus::NotFound, format!("run has no {} results", m.as_str())))
}

/// Number of recorded z slices for `method`.
///
/// # Safety
/// `run` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pb_run_slices(run: *const PbRun, method: PbMethod, out: *mut usize) -> PbStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = method_result(run, method)?.table.len();
        Ok(())
    })
}

/// Optimal-angle squeezing at slice `index`.
///
/// # Safety
/// `run` must be a live handle; the four output pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn pb_run_squeezing(
    run: *const PbRun,
    method: PbMethod,
    index: usize,
    z: *mut f64,
    theta_star: *mut f64,
    s_min: *mut f64,
    s_err: *mut f64,
) -> PbStatus {
    guard(|| {
        let r = method_result(run, method)?;
        let row = r
            .table
            .get(index)
            .ok_or_else(|| (PbStatus::InvalidArgument, format!("slice {index} out of range ({})", r.table.len())))?;
        *out_arg(z, "z")? = row.z;
        *out_arg(theta_star, "theta_star")? = row.theta_star;
        *out_arg(s_min, "s_min")? = row.s_min;
        *out_arg(s_err, "s_err")? = row.s_min_error;
        Ok(())
    })
}

/// Mean photon number and its standard error at slice `index`.
///
/// # Safety
/// `run` must be a live handle; output pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn pb_run_photon_number(
    run: *const PbRun,
    method: PbMethod,
    index: usize,
    mean: *mut f64,
    err: *mut f64,
) -> PbStatus {
    guard(|| {
        let r = method_result(run, method)?;
        let f = r
            .flux
            .get(index)
            .ok_or_else(|| (PbStatus::InvalidArgument, format!("slice {index} out of range ({})", r.flux.len())))?;
        *out_arg(mean, "mean")? = f.mean;
        *out_arg(err, "err")? = f.std_error;
        Ok(())
    })
}

/// Fraction of trajectories excluded by the divergence monitor.
///
/// # Safety
/// `run` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pb_run_diverged_fraction(run: *const PbRun, method: PbMethod, out: *mut f64) -> PbStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = method_result(run, method)?.stats.diverged_fraction();
        Ok(())
    })
}

/// Run in the configured mode and write the output files under `dir`.
/// `passed` receives 1 when quality and comparison checks passed, else 0.
///
/// # Safety
/// `cfg` must be a live handle, `dir` a NUL-terminated path, `passed` writable.
#[no_mangle]
pub unsafe extern "C" fn pb_run_to_dir(cfg: *const PbConfig, dir: *const c_char, passed: *mut i32) -> PbStatus {
    guard(|| {
        let passed = out_arg(passed, "passed")?;
        *passed = 0;
        let cfg = &cfg.as_ref().ok_or_else(|| null("cfg"))?.inner;
        let dir = str_arg(dir, "dir")?;
        let outcome = run(cfg, Path::new(dir)).map_err(lib)?;
        *passed = outcome.pass() as i32;
        Ok(())
    })
}

/// Exact ⟨n⟩ of the single-mode oracle (coherent α₀, ground-state atom) at `t`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pb_oracle_photon_number(
    g: f64,
    gamma: f64,
    n_bar: f64,
    alpha_re: f64,
    alpha_im: f64,
    t: f64,
    out: *mut f64,
) -> PbStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let a0 = C64::new(alpha_re, alpha_im);
        let cfg = OracleConfig::new(g, gamma, n_bar, a0, t).with_outputs(1);
        let traj = evolve_master(&cfg, &DensityMatrix::coherent(a0, cfg.n_max, false)).map_err(lib)?;
        *out = traj
            .samples
            .last()
            .ok_or_else(|| (PbStatus::InvalidArgument, "oracle produced no samples".to_string()))?
            .expectations
            .n;
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ffi::CString;

    const DOC: &str = r#"
        method = "both"
        trajectories = 8
        [physical]
        g_phi = "100 s^-1/2"
        rho_1d = "1e4 m^-1"
        v_g = "3e8 m/s"
        z_max = "1 mm"
        [physical.lineshape]
        kind = "sharp"
        center_wavelength = "794 nm"
        [physical.pulse]
        duration = "1 ps"
        [lattice]
        n_tau = 32
        n_z = 2
        n_out = 2
        [options]
        noise = false
        n_theta = 8
    "#;

    fn last_error() -> String {
        let n = unsafe { pb_last_error(std::ptr::null_mut(), 0) };
        let mut buf = vec![1 as c_char; n + 1];
        assert_eq!(unsafe { pb_last_error(buf.as_mut_ptr(), buf.len()) }, n);
        let s = unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap().to_string();
        assert_eq!(s.len(), n);
        s
    }

    #[test]
    fn error_message_truncates() {
        let bad = CString::new("seed = \"x\"").unwrap();
        let mut cfg = std::ptr::null_mut();
        unsafe {
            assert_eq!(pb_config_parse(bad.as_ptr(), &mut cfg), PbStatus::Config);
            let mut small = [1 as c_char; 5];
            let n = pb_last_error(small.as_mut_ptr(), small.len());
            assert!(n > 4);
            assert_eq!(CStr::from_ptr(small.as_ptr()).to_bytes().len(), 4);
        }
    }

    #[test]
    fn run_through_handles() {
        let doc = CString::new(DOC).unwrap();
        let mut cfg = std::ptr::null_mut();
        unsafe {
            assert_eq!(pb_config_parse(doc.as_ptr(), &mut cfg), PbStatus::Ok);
            assert_eq!(pb_config_override(cfg, 4, 9, 1), PbStatus::Ok);
            let mut run = std::ptr::null_mut();
            assert_eq!(pb_run(cfg, &mut run), PbStatus::Ok);
            let mut n = 0;
            assert_eq!(pb_run_slices(run, PbMethod::Twa, &mut n), PbStatus::Ok);
            assert_eq!(n, 3);
            let (mut z, mut th, mut s, mut e) = (0.0, 0.0, 0.0, 0.0);
            assert_eq!(pb_run_squeezing(run, PbMethod::Ppr, 2, &mut z, &mut th, &mut s, &mut e), PbStatus::Ok);
            assert!((z - 1e-3).abs() < 1e-15 && (s - 1.0).abs() < 1e-12);
            assert_eq!(pb_run_squeezing(run, PbMethod::Ppr, 3, &mut z, &mut th, &mut s, &mut e), PbStatus::InvalidArgument);
            assert!(last_error().contains("out of range"));
            let mut f = 1.0;
            assert_eq!(pb_run_diverged_fraction(run, PbMethod::Ppr, &mut f), PbStatus::Ok);
            assert_eq!(f, 0.0);
            let (mut m, mut me) = (0.0, 0.0);
            assert_eq!(pb_run_photon_number(run, PbMethod::Twa, 0, &mut m, &mut me), PbStatus::Ok);
            assert!(m > 0.0);
            pb_run_free(run);
            pb_config_free(cfg);
        }
    }

    #[test]
    fn errors_carry_messages() {
        let bad = CString::new("[physical]\nkappa = \"-1 m^-1\"").unwrap();
        let mut cfg = std::ptr::null_mut();
        unsafe {
            assert_eq!(pb_config_parse(bad.as_ptr(), &mut cfg), PbStatus::Config);
            assert!(cfg.is_null());
            assert!(last_error().contains("kappa must be ≥ 0"));
            assert_eq!(pb_config_parse(std::ptr::null(), &mut cfg), PbStatus::NullPointer);
            assert_eq!(pb_run(std::ptr::null(), &mut std::ptr::null_mut()), PbStatus::NullPointer);
            let mut out = 0.0;
            assert_eq!(pb_oracle_photon_number(1.0, 0.0, 0.0, 3.0, 0.0, 0.3, &mut out), PbStatus::Ok);
            assert_eq!(last_error(), "");
            // photon number is conserved with the atom excitation: n + p_e = |α|²
            assert!(out < 9.0 && out > 8.0, "{out}");
        }
    }

    #[test]
    fn version_is_a_c_string() {
        let v = unsafe { CStr::from_ptr(pb_version()) };
        assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
    }
}
