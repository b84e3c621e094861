//! C interface to the kerrchaos solvers.
//!
//! Objects are opaque handles created by `kc_*_new` / run functions and
//! released with the matching `kc_*_free`. Every fallible call returns a
//! [`KcStatus`]; after a failure, `kc_last_error_message` describes it for
//! the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use kerrchaos::harness::fixture;
use kerrchaos::lindblad::{evolve, DensityMatrix, EvolutionConfig};
use kerrchaos::observables::{thermal_purity_oracle, ObservableRecord};
use kerrchaos::qsd::{run_ensemble, EnsembleConfig};
use kerrchaos::semiclassical::{lyapunov_max, LyapunovConfig, MeanField};
use kerrchaos::{DriveSpec, Error, FockBasis, SystemParams};
use num_complex::Complex64;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    TruncationOverflow = 3,
    NonFiniteState = 4,
    NoPeriod = 5,
    Internal = 6,
}

/// Observables at one sample time.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KcRecord {
    pub t: f64,
    pub excitation: f64,
    pub purity: f64,
    pub linear_entropy: f64,
    pub von_neumann: f64,
}

impl From<&ObservableRecord> for KcRecord {
    fn from(r: &ObservableRecord) -> Self {
        KcRecord {
            t: r.t,
            excitation: r.excitation,
            purity: r.purity,
            linear_entropy: r.linear_entropy,
            von_neumann: r.von_neumann,
        }
    }
}

/// System parameters (detuning, Kerr strength, bath, drive).
pub struct KcSystem {
    params: SystemParams,
}

/// Time series of observables.
pub struct KcSeries {
    records: Vec<KcRecord>,
}

thread_local! {
    static LAST_ERROR: RefCell<Vec<u8>> = const { RefCell::new(Vec::new()) };
}

fn set_error(msg: &str) {
    LAST_ERROR.with(|e| {
        let mut e = e.borrow_mut();
        e.clear();
        e.extend(msg.bytes().filter(|&b| b != 0));
    });
}

fn status_of(err: &Error) -> KcStatus {
    match err {
        Error::InvalidParameter(_) | Error::DimensionMismatch { .. } | Error::Config(_) => KcStatus::InvalidArgument,
        Error::TruncationOverflow { .. } => KcStatus::TruncationOverflow,
        Error::NonFiniteState { .. } | Error::Unstable { .. } => KcStatus::NonFiniteState,
        Error::Trajectory { source, .. } => status_of(source),
        Error::NoPeriod => KcStatus::NoPeriod,
        _ => KcStatus::Internal,
    }
}

enum Fail {
    Null(&'static str),
    Core(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Core(e)
    }
}

/// Runs `body`, turning errors and panics into a status plus message.
fn guard(body: impl FnOnce() -> Result<(), Fail>) -> KcStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            set_error("");
            KcStatus::Ok
        }
        Ok(Err(Fail::Null(what))) => {
            set_error(&format!("{what} is null"));
            KcStatus::NullPointer
        }
        Ok(Err(Fail::Core(e))) => {
            set_error(&e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic");
            KcStatus::Internal
        }
    }
}

fn non_null<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    // SAFETY: callers pass handles obtained from this library or null
    unsafe { p.as_ref() }.ok_or(Fail::Null(what))
}

fn publish<T>(out: *mut *mut T, value: T) {
    // SAFETY: `out` was checked non-null by the caller
    unsafe { *out = Box::into_raw(Box::new(value)) };
}

fn new_system(params: SystemParams, out: *mut *mut KcSystem) -> KcStatus {
    guard(|| {
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        params.validate()?;
        publish(out, KcSystem { params });
        Ok(())
    })
}

/// Bichromatic drive `f0 + f1 exp(-i delta_mod t)`.
#[no_mangle]
pub extern "C" fn kc_system_new_bichromatic(
    delta: f64,
    chi: f64,
    nbar: f64,
    f0: f64,
    f1: f64,
    delta_mod: f64,
    out: *mut *mut KcSystem,
) -> KcStatus {
    new_system(SystemParams { delta, chi, nbar, drive: DriveSpec::Bichromatic { f0, f1, delta_mod } }, out)
}

/// Gaussian pulse train of amplitude `amp`, width `width`, spacing `period`.
#[no_mangle]
pub extern "C" fn kc_system_new_gaussian(
    delta: f64,
    chi: f64,
    nbar: f64,
    amp: f64,
    width: f64,
    period: f64,
    offset: f64,
    out: *mut *mut KcSystem,
) -> KcStatus {
    new_system(SystemParams { delta, chi, nbar, drive: DriveSpec::GaussianTrain { amp, width, period, offset } }, out)
}

#[no_mangle]
pub extern "C" fn kc_system_new_constant(delta: f64, chi: f64, nbar: f64, amp: f64, out: *mut *mut KcSystem) -> KcStatus {
    new_system(SystemParams { delta, chi, nbar, drive: DriveSpec::Constant { amp } }, out)
}

/// Figure parameter set by name ("fig1" .. "fig6").
///
/// # Safety
/// `name` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn kc_system_from_fixture(name: *const c_char, out: *mut *mut KcSystem) -> KcStatus {
    guard(|| {
        if name.is_null() {
            return Err(Fail::Null("name"));
        }
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        let name = CStr::from_ptr(name)
            .to_str()
            .map_err(|_| Error::InvalidParameter("fixture name is not UTF-8".into()))?;
        let params = fixture(name).map_err(|e| Error::InvalidParameter(e.to_string()))?.params;
        publish(out, KcSystem { params });
        Ok(())
    })
}

/// # Safety
/// `system` must come from a `kc_system_*` constructor and not be used again.
#[no_mangle]
pub unsafe extern "C" fn kc_system_free(system: *mut KcSystem) {
    if !system.is_null() {
        drop(Box::from_raw(system));
    }
}

/// Master-equation evolution from the vacuum in a basis of `dim` levels.
///
/// # Safety
/// `system` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kc_lindblad_run(
    system: *const KcSystem,
    dim: usize,
    dt: f64,
    t_end: f64,
    record_every: usize,
    out: *mut *mut KcSeries,
) -> KcStatus {
    guard(|| {
        let sys = non_null(system, "system")?;
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        let basis = FockBasis::new(dim)?;
        let cfg = EvolutionConfig { dt, t_end, record_every, ..Default::default() };
        let ev = evolve(&sys.params, &DensityMatrix::vacuum(basis), &cfg, &mut [])?;
        publish(out, KcSeries { records: ev.records.iter().map(KcRecord::from).collect() });
        Ok(())
    })
}

/// State-diffusion ensemble mean from the vacuum.
///
/// # Safety
/// `system` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kc_qsd_run(
    system: *const KcSystem,
    dim: usize,
    n_traj: usize,
    seed: u64,
    dt: f64,
    t_end: f64,
    record_every: usize,
    out: *mut *mut KcSeries,
) -> KcStatus {
    guard(|| {
        let sys = non_null(system, "system")?;
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        let basis = FockBasis::new(dim)?;
        let cfg = EnsembleConfig { n_traj, seed, dt, t_end, record_every, ..Default::default() };
        let run = run_ensemble(&sys.params, basis, &cfg, &mut [])?;
        publish(out, KcSeries { records: run.records.iter().map(KcRecord::from).collect() });
        Ok(())
    })
}

/// Number of records; 0 for a null handle.
///
/// # Safety
/// `series` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn kc_series_len(series: *const KcSeries) -> usize {
    series.as_ref().map_or(0, |s| s.records.len())
}

/// # Safety
/// `series` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kc_series_get(series: *const KcSeries, index: usize, out: *mut KcRecord) -> KcStatus {
    guard(|| {
        let s = non_null(series, "series")?;
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        let r = s.records.get(index).ok_or_else(|| {
            Error::InvalidParameter(format!("index {index} out of range for {} records", s.records.len()))
        })?;
        *out = *r;
        Ok(())
    })
}

/// # Safety
/// `series` must come from a run function and not be used again.
#[no_mangle]
pub unsafe extern "C" fn kc_series_free(series: *mut KcSeries) {
    if !series.is_null() {
        drop(Box::from_raw(series));
    }
}

/// Largest Lyapunov exponent of the mean-amplitude equation started at the
/// origin, averaged over `[t_transient, t_total]`.
///
/// # Safety
/// `system` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kc_lyapunov(
    system: *const KcSystem,
    t_transient: f64,
    t_total: f64,
    dt: f64,
    out: *mut f64,
) -> KcStatus {
    guard(|| {
        let sys = non_null(system, "system")?;
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        let cfg = LyapunovConfig { t_transient, t_total, dt, ..Default::default() };
        *out = lyapunov_max(&MeanField::new(sys.params), &cfg, Complex64::new(0.0, 0.0))?;
        Ok(())
    })
}

/// `1 / (2 nbar + 1)`; NaN for negative `nbar`.
#[no_mangle]
pub extern "C" fn kc_thermal_purity(nbar: f64) -> f64 {
    if nbar >= 0.0 {
        thermal_purity_oracle(nbar)
    } else {
        f64::NAN
    }
}

/// Copies the calling thread's last error message into `buf` (truncated,
/// always NUL-terminated when `len > 0`) and returns its full length.
///
/// # Safety
/// `buf` must be writable for `len` bytes, or null with `len == 0`.
#[no_mangle]
pub unsafe extern "C" fn kc_last_error_message(buf: *mut c_char, len: usize) -> usize {
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
pub extern "C" fn kc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
