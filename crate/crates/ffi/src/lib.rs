//! C ABI over the uniweb engine.
//!
//! Every function returns a [`UwStatus`]. On failure the message is kept in
//! a thread-local slot readable through [`uw_last_error_message`]. Strings
//! handed out by this library must be released with [`uw_string_free`] and
//! registries with [`uw_registry_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use uniweb::aggregation::{internal_general_ratio, ConsistencyFlag};
use uniweb::analysis::correlation::spearman_values;
use uniweb::analysis::pca::{pca_two_vars, PcaMode};
use uniweb::analysis::AnalysisError;
use uniweb::indicators::{growth_rate, wif, IndicatorError};
use uniweb::measurement::snapshot::{read_snapshots, SnapshotError};
use uniweb::registry::{load_registry, Registry, RegistryError, RegistryFormat};
use uniweb::report::export::write_report;
use uniweb::report::{build_report, ReportError, ReportOptions};

/// Result code of every exported function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UwStatus {
    Ok = 0,
    /// A null pointer, bad UTF-8 or an out-of-range option.
    InvalidArgument = 1,
    /// Input data failed validation.
    Validation = 2,
    Io = 3,
    /// The value is mathematically undefined for these inputs.
    Undefined = 4,
    Panic = 5,
}

/// Flag attached to an internal/general ratio.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UwConsistency {
    Consistent = 0,
    Inconsistent = 1,
    UndefinedRatio = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UwPcaMode {
    Correlation = 0,
    Covariance = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UwPca {
    /// Row-major: `components[2 * k + j]` is loading j of component k.
    pub components: [f64; 4],
    pub eigenvalues: [f64; 2],
    pub explained_variance: [f64; 2],
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct UwRegistrySummary {
    pub universities: usize,
    pub units: usize,
    pub excluded_units: usize,
    pub admitted_urls: usize,
    pub rejected_urls: usize,
}

/// Opaque registry handle.
pub struct UwRegistry(Registry);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(UwStatus, String);

impl Failure {
    fn invalid(msg: impl Into<String>) -> Failure {
        Failure(UwStatus::InvalidArgument, msg.into())
    }
}

impl From<RegistryError> for Failure {
    fn from(e: RegistryError) -> Self {
        let status = match e {
            RegistryError::Io(_) => UwStatus::Io,
            _ => UwStatus::Validation,
        };
        Failure(status, e.to_string())
    }
}

impl From<SnapshotError> for Failure {
    fn from(e: SnapshotError) -> Self {
        let status = match e {
            SnapshotError::Io { .. } => UwStatus::Io,
            _ => UwStatus::Validation,
        };
        Failure(status, e.to_string())
    }
}

impl From<ReportError> for Failure {
    fn from(e: ReportError) -> Self {
        let status = match e {
            ReportError::Io { .. } => UwStatus::Io,
            _ => UwStatus::Validation,
        };
        Failure(status, e.to_string())
    }
}

impl From<AnalysisError> for Failure {
    fn from(e: AnalysisError) -> Self {
        Failure(UwStatus::Validation, e.to_string())
    }
}

impl From<IndicatorError> for Failure {
    fn from(e: IndicatorError) -> Self {
        Failure(UwStatus::InvalidArgument, e.to_string())
    }
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> UwStatus {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => UwStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".to_string());
            set_last_error(&format!("internal panic: {msg}"));
            UwStatus::Panic
        }
    }
}

unsafe fn out_ref<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    p.as_mut()
        .ok_or_else(|| Failure::invalid(format!("`{name}` is null")))
}

unsafe fn path_arg(p: *const c_char, name: &str) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(Failure::invalid(format!("`{name}` is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(PathBuf::from)
        .map_err(|_| Failure::invalid(format!("`{name}` is not UTF-8")))
}

unsafe fn slice_arg<'a>(p: *const f64, n: usize, name: &str) -> Result<&'a [f64], Failure> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::invalid(format!("`{name}` is null")));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

fn to_c_string(s: &str) -> *mut c_char {
    CString::new(s.replace('\0', " "))
        .map(CString::into_raw)
        .unwrap_or(ptr::null_mut())
}

/// Copy of the last error message on this thread, or null when the last
/// call succeeded. Free it with `uw_string_free`.
#[no_mangle]
pub extern "C" fn uw_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|slot| match &*slot.borrow() {
        Some(msg) => msg.clone().into_raw(),
        None => ptr::null_mut(),
    })
}

/// # Safety
/// `s` must be null or a string returned by this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn uw_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Compound per-period growth in percent. `UW_STATUS_UNDEFINED` when `first` is 0.
///
/// # Safety
/// `out` must point to writable memory for one double.
#[no_mangle]
pub unsafe extern "C" fn uw_growth_rate(
    first: f64,
    last: f64,
    periods: u32,
    out: *mut f64,
) -> UwStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        match growth_rate(first, last, periods)? {
            Some(g) => {
                *out = g;
                Ok(())
            }
            None => Err(Failure(
                UwStatus::Undefined,
                "growth from a zero first value is undefined".into(),
            )),
        }
    })
}

/// Visibility per page. `UW_STATUS_UNDEFINED` when size is zero.
///
/// # Safety
/// `out` must point to writable memory for one double.
#[no_mangle]
pub unsafe extern "C" fn uw_wif(size: f64, visibility: f64, out: *mut f64) -> UwStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        if !(size >= 0.0 && visibility >= 0.0) {
            return Err(Failure::invalid("size and visibility must be non-negative"));
        }
        match wif(size, visibility) {
            Some(w) => {
                *out = w;
                Ok(())
            }
            None => Err(Failure(UwStatus::Undefined, "size is zero".into())),
        }
    })
}

/// Internal over general size in percent, with its consistency flag.
/// When general is zero the ratio is left untouched and the status is
/// `UW_STATUS_UNDEFINED`; the flag is still written.
///
/// # Safety
/// `out_percent` and `out_flag` must point to writable memory.
#[no_mangle]
pub unsafe extern "C" fn uw_internal_general_ratio(
    internal: f64,
    general: f64,
    out_percent: *mut f64,
    out_flag: *mut UwConsistency,
) -> UwStatus {
    guard(|| {
        let out_percent = out_ref(out_percent, "out_percent")?;
        let out_flag = out_ref(out_flag, "out_flag")?;
        let check = internal_general_ratio(internal, general);
        *out_flag = match check.flag {
            None => UwConsistency::Consistent,
            Some(ConsistencyFlag::Inconsistent) => UwConsistency::Inconsistent,
            Some(ConsistencyFlag::UndefinedRatio) => UwConsistency::UndefinedRatio,
        };
        match check.ratio_percent {
            Some(r) => {
                *out_percent = r;
                Ok(())
            }
            None => Err(Failure(UwStatus::Undefined, "general size is zero".into())),
        }
    })
}

/// Spearman rank correlation of two equal-length arrays (average ranks for
/// ties). `UW_STATUS_UNDEFINED` when either array is constant.
///
/// # Safety
/// `x` and `y` must each point to `n` readable doubles.
#[no_mangle]
pub unsafe extern "C" fn uw_spearman(
    x: *const f64,
    y: *const f64,
    n: usize,
    out: *mut f64,
) -> UwStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let (x, y) = (slice_arg(x, n, "x")?, slice_arg(y, n, "y")?);
        match spearman_values(x, y)? {
            Some(rho) => {
                *out = rho;
                Ok(())
            }
            None => Err(Failure(
                UwStatus::Undefined,
                "a variable is constant".into(),
            )),
        }
    })
}

/// Two-variable principal components of the points `(x[i], y[i])`.
///
/// # Safety
/// `x` and `y` must each point to `n` readable doubles; `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn uw_pca(
    x: *const f64,
    y: *const f64,
    n: usize,
    mode: UwPcaMode,
    out: *mut UwPca,
) -> UwStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let (x, y) = (slice_arg(x, n, "x")?, slice_arg(y, n, "y")?);
        let points: Vec<(f64, f64)> = x.iter().copied().zip(y.iter().copied()).collect();
        let mode = match mode {
            UwPcaMode::Correlation => PcaMode::Correlation,
            UwPcaMode::Covariance => PcaMode::Covariance,
        };
        let r = pca_two_vars(&points, mode)?;
        *out = UwPca {
            components: [
                r.components[0][0],
                r.components[0][1],
                r.components[1][0],
                r.components[1][1],
            ],
            eigenvalues: r.eigenvalues,
            explained_variance: r.explained_variance,
        };
        Ok(())
    })
}

/// Loads and validates a registry file (`.json` as JSON, anything else as
/// CSV). On success `*out` owns a handle to release with `uw_registry_free`.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn uw_registry_load(
    path: *const c_char,
    out: *mut *mut UwRegistry,
) -> UwStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = ptr::null_mut();
        let path = path_arg(path, "path")?;
        let registry = load_registry(&path, RegistryFormat::from_path(&path))?;
        *out = Box::into_raw(Box::new(UwRegistry(registry)));
        Ok(())
    })
}

/// # Safety
/// `registry` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn uw_registry_summary(
    registry: *const UwRegistry,
    out: *mut UwRegistrySummary,
) -> UwStatus {
    guard(|| {
        let registry = registry
            .as_ref()
            .ok_or_else(|| Failure::invalid("`registry` is null"))?;
        let out = out_ref(out, "out")?;
        let s = registry.0.summary();
        *out = UwRegistrySummary {
            universities: s.universities,
            units: s.units,
            excluded_units: s.excluded_units,
            admitted_urls: s.admitted_urls,
            rejected_urls: s.rejected_urls,
        };
        Ok(())
    })
}

/// Content hash of the registry as a new string.
///
/// # Safety
/// `registry` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn uw_registry_hash(
    registry: *const UwRegistry,
    out: *mut *mut c_char,
) -> UwStatus {
    guard(|| {
        let registry = registry
            .as_ref()
            .ok_or_else(|| Failure::invalid("`registry` is null"))?;
        let out = out_ref(out, "out")?;
        *out = to_c_string(registry.0.hash());
        Ok(())
    })
}

/// # Safety
/// `registry` must be null or a handle from `uw_registry_load`, freed once.
#[no_mangle]
pub unsafe extern "C" fn uw_registry_free(registry: *mut UwRegistry) {
    if !registry.is_null() {
        drop(Box::from_raw(registry));
    }
}

/// Builds the full report with default options from the snapshots found at
/// `snapshots` (a file or directory) and writes it to `out_dir`. The run
/// hash is returned through `out_run_hash` when that pointer is not null.
///
/// # Safety
/// `registry` must be a live handle; the paths must be NUL-terminated
/// strings; `out_run_hash` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn uw_report_run(
    registry: *const UwRegistry,
    snapshots: *const c_char,
    out_dir: *const c_char,
    out_run_hash: *mut *mut c_char,
) -> UwStatus {
    guard(|| {
        let registry = registry
            .as_ref()
            .ok_or_else(|| Failure::invalid("`registry` is null"))?;
        let snapshots = path_arg(snapshots, "snapshots")?;
        let out_dir = path_arg(out_dir, "out_dir")?;
        let snaps = read_snapshots(&[snapshots])?;
        let report = build_report(&registry.0, &snaps, &ReportOptions::default())?;
        let manifest = write_report(&report, registry.0.version(), &out_dir)?;
        if let Some(out) = out_run_hash.as_mut() {
            *out = to_c_string(&manifest.run_hash);
        }
        Ok(())
    })
}
