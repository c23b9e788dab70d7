//! C ABI over `mcfdd`.
//!
//! Every fallible function returns an [`McfddStatus`]; on failure the message
//! is kept per thread and can be copied out with [`mcfdd_last_error`].
//! Systems are opaque handles created by `mcfdd_system_*` and released with
//! [`mcfdd_system_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use mcfdd::detection::{fdd_bep, tdd_bep};
use mcfdd::harness::{self, Prepared};
use mcfdd::spectral::total_psd;
use mcfdd::{load_config, load_config_file, Error, SystemConfig};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum McfddStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ParseError = 3,
    ValidationError = 4,
    DomainError = 5,
    NumericalError = 6,
    NotIdentifiable = 7,
    IoError = 8,
    Panic = 9,
}

/// Opaque configured system.
pub struct McfddSystem {
    prepared: Prepared,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct McfddDerived {
    pub k_d_m: f64,
    pub k_d_i: f64,
    pub debye_length: f64,
    pub effective_charge: f64,
    pub graphene_area: f64,
    pub channel_length: f64,
    pub double_layer_capacitance: f64,
    pub quantum_capacitance: f64,
    pub gate_capacitance: f64,
    pub zeta: f64,
    pub effective_diffusion: f64,
    pub channel_area: f64,
    pub transit_time: f64,
    pub c_m0: f64,
    pub c_m1: f64,
    pub interferer_mean: f64,
    pub interferer_std: f64,
    pub flicker_variance: f64,
}

/// Thresholds and analytic error probabilities. FDD fields that need the
/// two-ligand information are NaN when it is singular.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct McfddAnalytic {
    pub gamma_td: f64,
    pub tdd_bep: f64,
    pub gamma_fd: f64,
    pub fdd_bep: f64,
    pub fdd_var_single: [f64; 2],
    pub fdd_var_full: [f64; 2],
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct McfddEstimate {
    pub c_m: f64,
    pub c_i: f64,
    pub objective: f64,
    pub iterations: u32,
    pub converged: u8,
    /// 1 if the frequency-domain detector decides bit 1.
    pub decision: u8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct McfddBepReport {
    pub trials: u64,
    pub tdd_errors: u64,
    pub tdd_bep: f64,
    pub tdd_ci_low: f64,
    pub tdd_ci_high: f64,
    pub fdd_errors: u64,
    pub fdd_bep: f64,
    pub fdd_ci_low: f64,
    pub fdd_ci_high: f64,
    pub analytic_tdd: f64,
    /// NaN when unavailable.
    pub analytic_fdd: f64,
    pub fdd_nonconverged: u64,
    pub master_seed: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> McfddStatus {
    match e {
        Error::Parse { .. } => McfddStatus::ParseError,
        Error::Validation { .. } => McfddStatus::ValidationError,
        Error::Domain(_) => McfddStatus::DomainError,
        Error::Numerical(_) => McfddStatus::NumericalError,
        Error::NonIdentifiable { .. } => McfddStatus::NotIdentifiable,
        Error::Io { .. } => McfddStatus::IoError,
    }
}

enum Failure {
    Status(McfddStatus, String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn null(what: &str) -> Failure {
    Failure::Status(McfddStatus::NullPointer, format!("`{what}` is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> McfddStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            McfddStatus::Ok
        }
        Ok(Err(Failure::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Ok(Err(Failure::Status(s, msg))) => {
            set_error(msg);
            s
        }
        Err(_) => {
            set_error("internal panic".into());
            McfddStatus::Panic
        }
    }
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Status(McfddStatus::InvalidArgument, format!("`{what}` is not UTF-8")))
}

unsafe fn handle<'a>(p: *const McfddSystem) -> Result<&'a McfddSystem, Failure> {
    p.as_ref().ok_or_else(|| null("system"))
}

unsafe fn emit<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

fn boxed(cfg: &SystemConfig) -> Result<*mut McfddSystem, Failure> {
    let prepared = harness::prepare(cfg)?;
    Ok(Box::into_raw(Box::new(McfddSystem { prepared })))
}

/// Create a system with the default parameters.
///
/// # Safety
/// `out` must be null or valid for writing one pointer.
#[no_mangle]
pub unsafe extern "C" fn mcfdd_system_new_default(out: *mut *mut McfddSystem) -> McfddStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        *out = boxed(&SystemConfig::default())?;
        Ok(())
    })
}

/// Create a system from `key = value` configuration text.
///
/// # Safety
/// `text` must be null or a NUL-terminated string; `out` must be null or
/// valid for writing one pointer.
#[no_mangle]
pub unsafe extern "C" fn mcfdd_system_from_config(text: *const c_char, out: *mut *mut McfddSystem) -> McfddStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let cfg = load_config(read_str(text, "text")?)?;
        *out = boxed(&cfg)?;
        Ok(())
    })
}

/// Create a system from a configuration file.
///
/// # Safety
/// As for [`mcfdd_system_from_config`], with `path` a file path.
#[no_mangle]
pub unsafe extern "C" fn mcfdd_system_from_file(path: *const c_char, out: *mut *mut McfddSystem) -> McfddStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let cfg = load_config_file(Path::new(read_str(path, "path")?))?;
        *out = boxed(&cfg)?;
        Ok(())
    })
}

/// Release a system. Null is ignored.
///
/// # Safety
/// `system` must be null or a handle from `mcfdd_system_*` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mcfdd_system_free(system: *mut McfddSystem) {
    if !system.is_null() {
        drop(Box::from_raw(system));
    }
}

/// # Safety
/// `system` must be a live handle or null; `out` null or writable.
#[no_mangle]
pub unsafe extern "C" fn mcfdd_derived(system: *const McfddSystem, out: *mut McfddDerived) -> McfddStatus {
    guard(|| {
        let d = &handle(system)?.prepared.derived;
        let value = McfddDerived {
            k_d_m: d.k_d_m,
            k_d_i: d.k_d_i,
            debye_length: d.debye_length,
            effective_charge: d.effective_charge,
            graphene_area: d.graphene_area,
            channel_length: d.channel_length,
            double_layer_capacitance: d.double_layer_capacitance,
            quantum_capacitance: d.quantum_capacitance,
            gate_capacitance: d.gate_capacitance,
            zeta: d.zeta,
            effective_diffusion: d.effective_diffusion,
            channel_area: d.channel_area,
            transit_time: d.transit_time,
            c_m0: d.c_m0,
            c_m1: d.c_m1,
            interferer_mean: d.interferer_mean,
            interferer_std: d.interferer_std,
            flicker_variance: d.flicker_variance,
        };
        emit(out, value, "out")
    })
}

/// Model current-noise PSD (A²/Hz) at `f` Hz for concentrations in molecules/m³.
///
/// # Safety
/// `system` must be a live handle or null; `out` null or writable.
#[no_mangle]
pub unsafe extern "C" fn mcfdd_total_psd(
    system: *const McfddSystem,
    f: f64,
    c_m: f64,
    c_i: f64,
    out: *mut f64,
) -> McfddStatus {
    guard(|| {
        let s = handle(system)?;
        let v = total_psd(f, c_m, c_i, &s.prepared.psd)?;
        emit(out, v, "out")
    })
}

/// # Safety
/// `system` must be a live handle or null; `out` null or writable.
#[no_mangle]
pub unsafe extern "C" fn mcfdd_analytic(system: *const McfddSystem, out: *mut McfddAnalytic) -> McfddStatus {
    guard(|| {
        let p = &handle(system)?.prepared;
        let tdd = tdd_bep(&p.config, &p.derived)?;
        let mut value = McfddAnalytic {
            gamma_td: tdd.threshold.value,
            tdd_bep: tdd.bep,
            gamma_fd: p.fdd_threshold.value,
            fdd_bep: f64::NAN,
            fdd_var_single: [f64::NAN; 2],
            fdd_var_full: [f64::NAN; 2],
        };
        match fdd_bep(&p.config, &p.derived) {
            Ok(a) => {
                value.fdd_bep = a.bep;
                value.fdd_var_single = a.var_single;
                value.fdd_var_full = a.var_full;
            }
            Err(Error::NonIdentifiable { .. }) => {}
            Err(e) => return Err(e.into()),
        }
        emit(out, value, "out")
    })
}

/// Estimate `[c_m, c_i]` from `n` samples of received current (A) taken at
/// the configured sampling period, and apply the frequency-domain threshold.
///
/// # Safety
/// `current` must be null or point to `n` readable doubles.
#[no_mangle]
pub unsafe extern "C" fn mcfdd_estimate(
    system: *const McfddSystem,
    current: *const f64,
    n: usize,
    out: *mut McfddEstimate,
) -> McfddStatus {
    guard(|| {
        let p = &handle(system)?.prepared;
        if current.is_null() {
            return Err(null("current"));
        }
        let samples = std::slice::from_raw_parts(current, n);
        let est = harness::estimate_window(p, samples)?;
        let value = McfddEstimate {
            c_m: est.lambda[0],
            c_i: est.lambda[1],
            objective: est.objective,
            iterations: est.iterations as u32,
            converged: u8::from(est.converged),
            decision: mcfdd::detection::fdd_decide(est.c_m(), &p.fdd_threshold),
        };
        emit(out, value, "out")
    })
}

/// Monte Carlo error probabilities over `trials` symbols. `threads` = 0 uses
/// every core; results do not depend on it.
///
/// # Safety
/// `system` must be a live handle or null; `out` null or writable.
#[no_mangle]
pub unsafe extern "C" fn mcfdd_monte_carlo(
    system: *const McfddSystem,
    trials: usize,
    seed: u64,
    threads: usize,
    out: *mut McfddBepReport,
) -> McfddStatus {
    guard(|| {
        let p = &handle(system)?.prepared;
        if out.is_null() {
            return Err(null("out"));
        }
        if trials < harness::MIN_TRIALS {
            return Err(Failure::Status(
                McfddStatus::InvalidArgument,
                format!("at least {} trials are required, got {trials}", harness::MIN_TRIALS),
            ));
        }
        let records = harness::with_threads(threads, || harness::run_trials(p, trials, seed))??;
        let r = harness::BepReport::from_trials(p, &records, seed);
        emit(
            out,
            McfddBepReport {
                trials: r.trials,
                tdd_errors: r.tdd_errors,
                tdd_bep: r.tdd_bep,
                tdd_ci_low: r.tdd_interval.0,
                tdd_ci_high: r.tdd_interval.1,
                fdd_errors: r.fdd_errors,
                fdd_bep: r.fdd_bep,
                fdd_ci_low: r.fdd_interval.0,
                fdd_ci_high: r.fdd_interval.1,
                analytic_tdd: r.analytic_tdd,
                analytic_fdd: r.analytic_fdd.unwrap_or(f64::NAN),
                fdd_nonconverged: r.fdd_nonconverged,
                master_seed: r.master_seed,
            },
            "out",
        )
    })
}

/// Copy the calling thread's last error message into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length excluding the NUL,
/// so a caller can size the buffer with a first call using `len` = 0.
///
/// # Safety
/// `buf` must be null or valid for writing `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn mcfdd_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mcfdd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
