//! C interface to `floqres`.
//!
//! Three opaque handles cross the boundary: an experiment (a parsed
//! config), a design (the resolved effective model and cavity settings) and
//! a time series. Every fallible call returns an [`FqStatus`]; the message
//! of the last failure on the calling thread is available through
//! [`fq_last_error`]. Handles are released with their `_free` function and
//! are not thread-safe.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use floqres::cli::config::ExperimentConfig;
use floqres::cli::presets;
use floqres::cli::runner::{check_regime, evolve, prepare, Prepared, TimeSeries};
use floqres::error::Error;

/// Result codes. Zero is success.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FqStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Domain = 4,
    Oversize = 5,
    Resonance = 6,
    Regime = 7,
    Integration = 8,
    EmptySector = 9,
    Numerical = 10,
    Io = 11,
    OutOfRange = 12,
    Panic = 13,
}

impl From<&Error> for FqStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Config(_) => FqStatus::Config,
            Error::Domain(_) | Error::UnsupportedFrame(_) => FqStatus::Domain,
            Error::Oversize { .. } => FqStatus::Oversize,
            Error::Resonance { .. } => FqStatus::Resonance,
            Error::Regime(_) => FqStatus::Regime,
            Error::Integration { .. } => FqStatus::Integration,
            Error::EmptySector(_) => FqStatus::EmptySector,
            Error::Numerical(_) => FqStatus::Numerical,
            Error::Io(_) => FqStatus::Io,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(code: FqStatus, msg: impl Into<String>) -> FqStatus {
    set_error(msg.into());
    code
}

fn guard(f: impl FnOnce() -> FqStatus) -> FqStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(FqStatus::Panic, msg)
        }
    }
}

fn lift<T>(r: floqres::error::Result<T>) -> Result<T, FqStatus> {
    r.map_err(|e| fail(FqStatus::from(&e), e.to_string()))
}

unsafe fn text<'a>(s: *const c_char) -> Result<&'a str, FqStatus> {
    if s.is_null() {
        return Err(fail(FqStatus::NullPointer, "null string"));
    }
    CStr::from_ptr(s).to_str().map_err(|_| fail(FqStatus::InvalidUtf8, "string is not UTF-8"))
}

macro_rules! tri {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(s) => return s,
        }
    };
}

macro_rules! nonnull {
    ($($p:ident),+) => {
        $(if $p.is_null() {
            return fail(FqStatus::NullPointer, concat!("null argument: ", stringify!($p)));
        })+
    };
}

/// A parsed experiment config.
pub struct FqExperiment {
    cfg: ExperimentConfig,
}

/// A designed experiment: effective spectrum and resolved cavities.
pub struct FqDesign {
    p: Prepared,
}

/// Sampled observables of one run.
pub struct FqSeries {
    ts: TimeSeries,
    names: Vec<CString>,
}

/// Message of the last failure on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn fq_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fq_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parse a JSON config (or emitted manifest).
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fq_experiment_from_json(json: *const c_char, out: *mut *mut FqExperiment) -> FqStatus {
    nonnull!(out);
    guard(|| {
        let s = tri!(text(json));
        let cfg = tri!(lift(ExperimentConfig::from_json(s, "json")));
        *out = Box::into_raw(Box::new(FqExperiment { cfg }));
        FqStatus::Ok
    })
}

/// Load a built-in preset by id.
///
/// # Safety
/// `id` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fq_experiment_from_preset(id: *const c_char, out: *mut *mut FqExperiment) -> FqStatus {
    nonnull!(out);
    guard(|| {
        let s = tri!(text(id));
        let cfg = tri!(lift(presets::preset(s)));
        *out = Box::into_raw(Box::new(FqExperiment { cfg }));
        FqStatus::Ok
    })
}

/// # Safety
/// `exp` must come from an `fq_experiment_from_*` call, or be null.
#[no_mangle]
pub unsafe extern "C" fn fq_experiment_free(exp: *mut FqExperiment) {
    if !exp.is_null() {
        drop(Box::from_raw(exp));
    }
}

/// Override one scalar parameter, using the scan-axis names
/// (`u`, `omega`, `flux`, `t_final`, `seed`, `delta`, `cavity1.kappa`, ...).
///
/// # Safety
/// `exp` must be a live handle and `name` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn fq_experiment_set(exp: *mut FqExperiment, name: *const c_char, value: f64) -> FqStatus {
    nonnull!(exp);
    guard(|| {
        let n = tri!(text(name));
        let e = &mut *exp;
        tri!(lift(e.cfg.set_param(n, value)));
        tri!(lift(e.cfg.validate()));
        FqStatus::Ok
    })
}

/// Serialize the config back to JSON. The returned string is released with
/// [`fq_string_free`].
///
/// # Safety
/// `exp` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fq_experiment_to_json(exp: *const FqExperiment, out: *mut *mut c_char) -> FqStatus {
    nonnull!(exp, out);
    guard(|| {
        let s = (*exp).cfg.to_json();
        *out = CString::new(s).unwrap_or_default().into_raw();
        FqStatus::Ok
    })
}

/// # Safety
/// `s` must come from this library, or be null.
#[no_mangle]
pub unsafe extern "C" fn fq_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Build the effective model and design the cavities. Fails with
/// `Regime` when validation fails and `force` is zero.
///
/// # Safety
/// `exp` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fq_design(exp: *const FqExperiment, force: i32, out: *mut *mut FqDesign) -> FqStatus {
    nonnull!(exp, out);
    guard(|| {
        let p = tri!(lift(prepare(&(*exp).cfg)));
        tri!(lift(check_regime(&p, force != 0)));
        *out = Box::into_raw(Box::new(FqDesign { p }));
        FqStatus::Ok
    })
}

/// # Safety
/// `d` must come from [`fq_design`], or be null.
#[no_mangle]
pub unsafe extern "C" fn fq_design_free(d: *mut FqDesign) {
    if !d.is_null() {
        drop(Box::from_raw(d));
    }
}

/// Number of effective eigenstates in the excitation sector.
///
/// # Safety
/// `d` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn fq_design_n_states(d: *const FqDesign) -> usize {
    if d.is_null() {
        return 0;
    }
    (*d).p.spectrum.len()
}

/// Number of cavities.
///
/// # Safety
/// `d` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn fq_design_n_cavities(d: *const FqDesign) -> usize {
    if d.is_null() {
        return 0;
    }
    (*d).p.model.cavities.len()
}

/// Copy the sorted effective energies into `buf`, which holds `len` values.
///
/// # Safety
/// `d` must be a live handle and `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn fq_design_energies(d: *const FqDesign, buf: *mut f64, len: usize) -> FqStatus {
    nonnull!(d, buf);
    let e = &(*d).p.spectrum.energies;
    if len < e.len() {
        return fail(FqStatus::OutOfRange, format!("buffer holds {len} values, need {}", e.len()));
    }
    ptr::copy_nonoverlapping(e.as_ptr(), buf, e.len());
    FqStatus::Ok
}

/// Designed detuning and mean photon number of one cavity.
///
/// # Safety
/// `d` must be a live handle; `detuning` and `nbar` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn fq_design_cavity(d: *const FqDesign, cavity: usize, detuning: *mut f64, nbar: *mut f64) -> FqStatus {
    nonnull!(d, detuning, nbar);
    let Some(c) = (*d).p.design.cavities.iter().find(|c| c.cavity == cavity) else {
        return fail(FqStatus::OutOfRange, format!("no designed cavity {cavity}"));
    };
    *detuning = c.detuning;
    *nbar = c.nbar;
    FqStatus::Ok
}

/// Propagate the experiment. `force` has the same meaning as in
/// [`fq_design`].
///
/// # Safety
/// `exp` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fq_run(exp: *const FqExperiment, force: i32, out: *mut *mut FqSeries) -> FqStatus {
    nonnull!(exp, out);
    guard(|| {
        let cfg = &(*exp).cfg;
        let p = tri!(lift(prepare(cfg)));
        tri!(lift(check_regime(&p, force != 0)));
        let ts = tri!(lift(evolve(cfg, &p)));
        let names = ts.columns.iter().map(|c| CString::new(c.as_str()).unwrap_or_default()).collect();
        *out = Box::into_raw(Box::new(FqSeries { ts, names }));
        FqStatus::Ok
    })
}

/// # Safety
/// `s` must come from [`fq_run`], or be null.
#[no_mangle]
pub unsafe extern "C" fn fq_series_free(s: *mut FqSeries) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// # Safety
/// `s` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn fq_series_n_times(s: *const FqSeries) -> usize {
    if s.is_null() {
        return 0;
    }
    (*s).ts.times.len()
}

/// # Safety
/// `s` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn fq_series_n_columns(s: *const FqSeries) -> usize {
    if s.is_null() {
        return 0;
    }
    (*s).ts.columns.len()
}

/// Column name, owned by the series handle; null when out of range.
///
/// # Safety
/// `s` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn fq_series_column_name(s: *const FqSeries, col: usize) -> *const c_char {
    if s.is_null() {
        return ptr::null();
    }
    let s = &*s;
    s.names.get(col).map_or(ptr::null(), |c| c.as_ptr())
}

/// Copy the sample times into `buf` (`len` values).
///
/// # Safety
/// `s` must be a live handle and `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn fq_series_times(s: *const FqSeries, buf: *mut f64, len: usize) -> FqStatus {
    nonnull!(s, buf);
    let t = &(*s).ts.times;
    if len < t.len() {
        return fail(FqStatus::OutOfRange, format!("buffer holds {len} values, need {}", t.len()));
    }
    ptr::copy_nonoverlapping(t.as_ptr(), buf, t.len());
    FqStatus::Ok
}

/// Copy one column, and optionally its standard errors, over all sample
/// times. `se` may be null.
///
/// # Safety
/// `s` must be a live handle; `values` and non-null `se` valid for `len`
/// writes.
#[no_mangle]
pub unsafe extern "C" fn fq_series_column(s: *const FqSeries, col: usize, values: *mut f64, se: *mut f64, len: usize) -> FqStatus {
    nonnull!(s, values);
    let ts = &(*s).ts;
    if col >= ts.columns.len() {
        return fail(FqStatus::OutOfRange, format!("column {col} of {}", ts.columns.len()));
    }
    if len < ts.times.len() {
        return fail(FqStatus::OutOfRange, format!("buffer holds {len} values, need {}", ts.times.len()));
    }
    for (i, (v, e)) in ts.values.iter().zip(&ts.std_err).enumerate() {
        *values.add(i) = v[col];
        if !se.is_null() {
            *se.add(i) = e[col];
        }
    }
    FqStatus::Ok
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_mapping() {
        assert_eq!(FqStatus::from(&Error::Regime("x".into())), FqStatus::Regime);
        assert_eq!(FqStatus::from(&Error::Oversize { count: 3, limit: 2 }), FqStatus::Oversize);
        assert_eq!(FqStatus::Ok as i32, 0);
    }
}
