//! C interface. Objects cross the boundary as opaque handles that the caller
//! releases with the matching `*_free`. Every fallible call returns an
//! [`HrcStatus`]; on failure `hrc_last_error` describes the problem until the
//! next call on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use hrc::dataset::{load_observations, CsvFormat, Dataset, EmpiricalChoiceRule};
use hrc::hypothesis::{bootstrap_pvalue, Model, TauRule, TestReport, TestSpec};
use hrc::linkfn::{calibrate_eta, calibrate_m, well_defined, Link};
use hrc::orders::Restriction;
use hrc::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HrcStatus {
    Ok = 0,
    /// Null pointer or unparsable argument.
    InvalidArgument = 1,
    /// Unreadable or inconsistent input data.
    InputError = 2,
    /// The analysis itself failed (calibration, solver).
    ComputationError = 3,
    /// A bug surfaced as a panic; the handle arguments are left untouched.
    Panic = 4,
}

pub struct HrcDataset(Dataset);
pub struct HrcRule(EmpiricalChoiceRule);
pub struct HrcReport(TestReport);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).ok());
}

fn fail(e: Error) -> HrcStatus {
    let status = if e.is_input_error() { HrcStatus::InputError } else { HrcStatus::ComputationError };
    set_error(e.to_string());
    status
}

fn guard(f: impl FnOnce() -> HrcStatus) -> HrcStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => {
            set_error("internal panic");
            HrcStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char) -> Result<&'a str, HrcStatus> {
    if p.is_null() {
        set_error("null string argument");
        return Err(HrcStatus::InvalidArgument);
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error("string argument is not UTF-8");
        HrcStatus::InvalidArgument
    })
}

unsafe fn optional_text<'a>(p: *const c_char) -> Result<Option<&'a str>, HrcStatus> {
    if p.is_null() {
        Ok(None)
    } else {
        text(p).map(Some)
    }
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).map(CString::into_raw).unwrap_or(ptr::null_mut())
}

macro_rules! try_status {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(s) => return s,
        }
    };
}

macro_rules! non_null {
    ($($p:ident),+) => {
        $(if $p.is_null() {
            set_error(concat!("null argument `", stringify!($p), "`"));
            return HrcStatus::InvalidArgument;
        })+
    };
}

/// Library version, a static string.
#[no_mangle]
pub extern "C" fn hrc_version() -> *const c_char {
    static V: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    V.as_ptr().cast()
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn hrc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Reads an observation CSV. `n_items` of 0 infers the item count.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hrc_dataset_load(path: *const c_char, n_items: usize, out: *mut *mut HrcDataset) -> HrcStatus {
    guard(|| {
        non_null!(out);
        let path = try_status!(text(path));
        let fmt = CsvFormat { n_items: (n_items > 0).then_some(n_items), treatments: None };
        match load_observations(path, &fmt) {
            Ok(ds) => {
                *out = Box::into_raw(Box::new(HrcDataset(ds)));
                HrcStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `ds` must come from [`hrc_dataset_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hrc_dataset_free(ds: *mut HrcDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Number of observations.
///
/// # Safety
/// `ds` must be a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn hrc_dataset_len(ds: *const HrcDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.observations.len())
}

/// Tabulates one treatment; a null `treatment` pools all of them.
///
/// # Safety
/// `ds` must be a live dataset handle, `treatment` null or NUL-terminated,
/// `out` valid.
#[no_mangle]
pub unsafe extern "C" fn hrc_dataset_rule(
    ds: *const HrcDataset,
    treatment: *const c_char,
    out: *mut *mut HrcRule,
) -> HrcStatus {
    guard(|| {
        non_null!(ds, out);
        let t = try_status!(optional_text(treatment));
        let ds = &(*ds).0;
        if let Some(t) = t.filter(|t| *t != hrc::dataset::POOLED) {
            if !ds.treatments().iter().any(|x| x == t) {
                return fail(Error::UnknownTreatment { line: 0, treatment: t.to_string() });
            }
        }
        match ds.rule(t) {
            Ok(r) => {
                *out = Box::into_raw(Box::new(HrcRule(r)));
                HrcStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `rule` must come from [`hrc_dataset_rule`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hrc_rule_free(rule: *mut HrcRule) {
    if !rule.is_null() {
        drop(Box::from_raw(rule));
    }
}

/// Number of items (the default excluded).
///
/// # Safety
/// `rule` must be a live rule handle.
#[no_mangle]
pub unsafe extern "C" fn hrc_rule_items(rule: *const HrcRule) -> usize {
    rule.as_ref().map_or(0, |r| r.0.universe().len())
}

/// Observed share of `alternative` in the menu given by bit mask `menu`
/// (bit `i` is item `i`); `alternative == items` is the default.
///
/// # Safety
/// `rule` must be a live rule handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn hrc_rule_frequency(
    rule: *const HrcRule,
    alternative: usize,
    menu: u32,
    out: *mut f64,
) -> HrcStatus {
    guard(|| {
        non_null!(rule, out);
        let r = &(*rule).0;
        let n = r.universe().len();
        if menu == 0 || menu > r.universe().full_mask() || alternative > n || (alternative < n && menu >> alternative & 1 == 0) {
            set_error(format!("no cell for alternative {alternative} in menu {menu:#b}"));
            return HrcStatus::InvalidArgument;
        }
        *out = r.frequency(alternative, menu);
        HrcStatus::Ok
    })
}

/// Calibrated attention index, consideration rule and well-definedness as a
/// JSON string released with [`hrc_string_free`].
///
/// # Safety
/// `rule` must be a live rule handle, `link` NUL-terminated, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn hrc_calibrate_json(rule: *const HrcRule, link: *const c_char, out: *mut *mut c_char) -> HrcStatus {
    guard(|| {
        non_null!(rule, out);
        let link: Link = match try_status!(text(link)).parse() {
            Ok(l) => l,
            Err(e) => {
                set_error(e.to_string());
                return HrcStatus::InvalidArgument;
            }
        };
        let p = (*rule).0.rule();
        let res = calibrate_eta(&p, link).and_then(|eta| {
            let m = calibrate_m(&p, link)?;
            Ok(serde_json::json!({
                "link": link,
                "attention_index": eta.to_export(),
                "consideration": m.to_export(),
                "well_definedness": well_defined(&m, link),
            }))
        });
        match res {
            Ok(v) => {
                *out = into_c_string(v.to_string());
                HrcStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Runs the bootstrap test. `model` is rum, eu-rum, la, mm, rcg or fc;
/// `prefs` is all, eu or crra; a negative `tau` selects the default rule.
///
/// # Safety
/// `rule` must be a live rule handle, strings NUL-terminated, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn hrc_test_run(
    rule: *const HrcRule,
    model: *const c_char,
    prefs: *const c_char,
    tau: f64,
    replications: usize,
    seed: u64,
    out: *mut *mut HrcReport,
) -> HrcStatus {
    guard(|| {
        non_null!(rule, out);
        let parsed = (|| -> Result<TestSpec, Error> {
            let model: Model = text(model).map_err(|_| Error::Config("model".into()))?.parse()?;
            let prefs: Restriction = text(prefs).map_err(|_| Error::Config("prefs".into()))?.parse()?;
            let mut spec = TestSpec::new(model, prefs);
            spec.tau = if tau < 0.0 { TauRule::Ks } else { TauRule::Fixed(tau) };
            spec.replications = replications;
            spec.seed = seed;
            spec.validate()?;
            Ok(spec)
        })();
        let spec = match parsed {
            Ok(s) => s,
            Err(e) => {
                set_error(e.to_string());
                return HrcStatus::InvalidArgument;
            }
        };
        match bootstrap_pvalue(&spec, &(*rule).0, None) {
            Ok(r) => {
                *out = Box::into_raw(Box::new(HrcReport(r)));
                HrcStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `report` must be a live report handle.
#[no_mangle]
pub unsafe extern "C" fn hrc_report_statistic(report: *const HrcReport) -> f64 {
    report.as_ref().map_or(f64::NAN, |r| r.0.statistic)
}

/// # Safety
/// `report` must be a live report handle.
#[no_mangle]
pub unsafe extern "C" fn hrc_report_p_value(report: *const HrcReport) -> f64 {
    report.as_ref().map_or(f64::NAN, |r| r.0.p_value)
}

/// Full report as JSON, released with [`hrc_string_free`]; null on failure.
///
/// # Safety
/// `report` must be a live report handle.
#[no_mangle]
pub unsafe extern "C" fn hrc_report_to_json(report: *const HrcReport) -> *mut c_char {
    match report.as_ref().map(|r| serde_json::to_string(&r.0)) {
        Some(Ok(s)) => into_c_string(s),
        _ => ptr::null_mut(),
    }
}

/// # Safety
/// `report` must come from [`hrc_test_run`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hrc_report_free(report: *mut HrcReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// # Safety
/// `s` must be a string returned by this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hrc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
