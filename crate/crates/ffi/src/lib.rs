//! C ABI over the `covloop` library.
//!
//! Every fallible function returns a [`CovloopStatus`]; on failure the
//! message is available from [`covloop_last_error`] on the same thread.
//! Objects are opaque handles released with their `*_free` function, and
//! strings returned through `char **` are released with
//! [`covloop_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::ptr;
use std::time::Duration;

use covloop::analyzer::{detect_language, extract_input_signature, SignatureAnalysis};
use covloop::cache::TestSuiteCache;
use covloop::coverage::{emit_artifact, parse_artifact, parse_dynamic_coverage, parse_gcov, render_artifact};
use covloop::driver::{run_loop, RunResult, Termination};
use covloop::model::{
    total_coverage, BackendKind, CoverageReport, FeedbackMode, InputKind, RunConfig, TargetLanguage, TestCase,
};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovloopStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    ContractViolation = 3,
    ParseError = 4,
    UnsupportedLanguage = 5,
    IoError = 6,
    RunError = 7,
    OutOfRange = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovloopLanguage {
    C = 0,
    Python = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovloopInputKind {
    Integer = 0,
    Float = 1,
    String = 2,
    Char = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovloopFeedback {
    Dual = 0,
    Line = 1,
    Branch = 2,
    None = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovloopBackend {
    Stub = 0,
    Http = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovloopTermination {
    ThresholdMet = 0,
    KMaxReached = 1,
    BackendFailure = 2,
}

/// Loop parameters. Start from `covloop_run_options_default()`. String
/// fields may be NULL.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct CovloopRunOptions {
    pub threshold: f64,
    pub k_max: u32,
    pub timeout_ms: u64,
    pub feedback: CovloopFeedback,
    pub backend: CovloopBackend,
    pub model_id: *const c_char,
    pub endpoint: *const c_char,
    pub endpoint_profile: *const c_char,
    pub bound: *const c_char,
}

pub struct CovloopSignature {
    inner: SignatureAnalysis,
}

pub struct CovloopReport {
    inner: CoverageReport,
}

pub struct CovloopCache {
    inner: TestSuiteCache,
}

pub struct CovloopRunResult {
    inner: RunResult,
    report: CovloopReport,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(CovloopStatus, String);

impl Failure {
    fn new(status: CovloopStatus, msg: impl ToString) -> Self {
        Failure(status, msg.to_string())
    }
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

/// Runs `f`, recording any error or panic for `covloop_last_error`.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> CovloopStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            CovloopStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            CovloopStatus::Panic
        }
    }
}

unsafe fn read_str<'a>(p: *const c_char) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::new(CovloopStatus::NullPointer, "string argument is NULL"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Failure::new(CovloopStatus::InvalidUtf8, e))
}

unsafe fn read_opt_str(p: *const c_char) -> Result<Option<String>, Failure> {
    if p.is_null() {
        Ok(None)
    } else {
        read_str(p).map(|s| Some(s.to_owned()))
    }
}

unsafe fn out_ptr<'a, T>(p: *mut T) -> Result<&'a mut T, Failure> {
    p.as_mut()
        .ok_or_else(|| Failure::new(CovloopStatus::NullPointer, "output pointer is NULL"))
}

unsafe fn handle<'a, T>(p: *const T) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure::new(CovloopStatus::NullPointer, "handle is NULL"))
}

fn to_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).unwrap_or_default().into_raw()
}

fn language_from(l: CovloopLanguage) -> TargetLanguage {
    match l {
        CovloopLanguage::C => TargetLanguage::C,
        CovloopLanguage::Python => TargetLanguage::Python,
    }
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn covloop_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `s` must be NULL or a string returned by this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn covloop_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn covloop_total_coverage(line_pct: f64, branch_pct: f64, out: *mut f64) -> CovloopStatus {
    guard(|| {
        let out = out_ptr(out)?;
        *out = total_coverage(line_pct, branch_pct).map_err(|e| Failure::new(CovloopStatus::OutOfRange, e))?;
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn covloop_detect_language(path: *const c_char, out: *mut CovloopLanguage) -> CovloopStatus {
    guard(|| {
        let path = read_str(path)?;
        let out = out_ptr(out)?;
        *out = match detect_language(Path::new(path))
            .map_err(|e| Failure::new(CovloopStatus::UnsupportedLanguage, e))?
        {
            TargetLanguage::C => CovloopLanguage::C,
            TargetLanguage::Python => CovloopLanguage::Python,
        };
        Ok(())
    })
}

/// # Safety
/// `source` must be a NUL-terminated string; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn covloop_signature_extract(
    source: *const c_char,
    language: CovloopLanguage,
    out: *mut *mut CovloopSignature,
) -> CovloopStatus {
    guard(|| {
        let source = read_str(source)?;
        let out = out_ptr(out)?;
        let inner = extract_input_signature(source, language_from(language));
        *out = Box::into_raw(Box::new(CovloopSignature { inner }));
        Ok(())
    })
}

/// # Safety
/// `sig` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn covloop_signature_count(sig: *const CovloopSignature) -> usize {
    sig.as_ref().map_or(0, |s| s.inner.signature.count())
}

/// # Safety
/// `sig` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn covloop_signature_warning_count(sig: *const CovloopSignature) -> usize {
    sig.as_ref().map_or(0, |s| s.inner.warnings.len())
}

/// # Safety
/// `sig` must be a live handle; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn covloop_signature_kind(
    sig: *const CovloopSignature,
    index: usize,
    out: *mut CovloopInputKind,
) -> CovloopStatus {
    guard(|| {
        let sig = handle(sig)?;
        let out = out_ptr(out)?;
        let kind = sig.inner.signature.kinds().get(index).ok_or_else(|| {
            Failure::new(CovloopStatus::OutOfRange, format!("input index {index} out of range"))
        })?;
        *out = match kind {
            InputKind::Integer => CovloopInputKind::Integer,
            InputKind::Float => CovloopInputKind::Float,
            InputKind::String => CovloopInputKind::String,
            InputKind::Char => CovloopInputKind::Char,
        };
        Ok(())
    })
}

/// # Safety
/// `sig` must be NULL or a handle from `covloop_signature_extract`.
#[no_mangle]
pub unsafe extern "C" fn covloop_signature_free(sig: *mut CovloopSignature) {
    if !sig.is_null() {
        drop(Box::from_raw(sig));
    }
}

unsafe fn new_report(
    text: *const c_char,
    out: *mut *mut CovloopReport,
    parse: impl FnOnce(&str) -> Result<CoverageReport, covloop::coverage::CoverageError>,
) -> CovloopStatus {
    guard(|| {
        let text = read_str(text)?;
        let out = out_ptr(out)?;
        let inner = parse(text).map_err(|e| Failure::new(CovloopStatus::ParseError, e))?;
        *out = Box::into_raw(Box::new(CovloopReport { inner }));
        Ok(())
    })
}

/// Parses annotated `gcov -b -c` output.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn covloop_report_parse_gcov(text: *const c_char, out: *mut *mut CovloopReport) -> CovloopStatus {
    new_report(text, out, parse_gcov)
}

/// Parses a single-file coverage.py JSON export.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn covloop_report_parse_dynamic(
    text: *const c_char,
    out: *mut *mut CovloopReport,
) -> CovloopStatus {
    new_report(text, out, parse_dynamic_coverage)
}

/// Parses a coverage artifact as written by `covloop_report_to_json`.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn covloop_report_from_json(text: *const c_char, out: *mut *mut CovloopReport) -> CovloopStatus {
    new_report(text, out, parse_artifact)
}

/// # Safety
/// `report` must be a live handle; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn covloop_report_to_json(report: *const CovloopReport, out: *mut *mut c_char) -> CovloopStatus {
    guard(|| {
        let report = handle(report)?;
        let out = out_ptr(out)?;
        *out = to_c_string(render_artifact(&report.inner));
        Ok(())
    })
}

/// # Safety
/// `report` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn covloop_report_emit(report: *const CovloopReport, path: *const c_char) -> CovloopStatus {
    guard(|| {
        let report = handle(report)?;
        let path = read_str(path)?;
        emit_artifact(&report.inner, Path::new(path)).map_err(|e| Failure::new(CovloopStatus::IoError, e))
    })
}

/// # Safety
/// `report` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn covloop_report_line_coverage(report: *const CovloopReport) -> f64 {
    report.as_ref().map_or(f64::NAN, |r| r.inner.line_coverage())
}

/// # Safety
/// `report` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn covloop_report_branch_coverage(report: *const CovloopReport) -> f64 {
    report.as_ref().map_or(f64::NAN, |r| r.inner.branch_coverage())
}

/// # Safety
/// `report` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn covloop_report_total_coverage(report: *const CovloopReport) -> f64 {
    report.as_ref().map_or(f64::NAN, |r| r.inner.total_coverage())
}

/// # Safety
/// `report` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn covloop_report_missing_branch_count(report: *const CovloopReport) -> usize {
    report.as_ref().map_or(0, |r| r.inner.missing_branches().len())
}

/// # Safety
/// `report` must be NULL or a handle returned by a `covloop_report_*`
/// constructor. Reports borrowed from a run result must not be freed.
#[no_mangle]
pub unsafe extern "C" fn covloop_report_free(report: *mut CovloopReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

#[no_mangle]
pub extern "C" fn covloop_cache_new() -> *mut CovloopCache {
    Box::into_raw(Box::new(CovloopCache {
        inner: TestSuiteCache::new(),
    }))
}

/// Inserts the case `values[0..count]`; `inserted` reports whether it was
/// novel.
///
/// # Safety
/// `cache` must be a live handle; `values` must hold `count` NUL-terminated
/// strings (it may be NULL when `count` is 0); `inserted` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn covloop_cache_insert(
    cache: *mut CovloopCache,
    values: *const *const c_char,
    count: usize,
    inserted: *mut bool,
) -> CovloopStatus {
    guard(|| {
        let cache = cache
            .as_mut()
            .ok_or_else(|| Failure::new(CovloopStatus::NullPointer, "handle is NULL"))?;
        let mut owned = Vec::with_capacity(count);
        if count > 0 {
            if values.is_null() {
                return Err(Failure::new(CovloopStatus::NullPointer, "values is NULL"));
            }
            for i in 0..count {
                owned.push(read_str(*values.add(i))?.to_owned());
            }
        }
        let tc = TestCase::new(owned).map_err(|e| Failure::new(CovloopStatus::ContractViolation, e))?;
        let novel = cache.inner.insert_if_novel(tc);
        if let Some(flag) = inserted.as_mut() {
            *flag = novel;
        }
        Ok(())
    })
}

/// # Safety
/// `cache` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn covloop_cache_len(cache: *const CovloopCache) -> usize {
    cache.as_ref().map_or(0, |c| c.inner.len())
}

/// # Safety
/// `cache` must be a live handle; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn covloop_cache_summary(
    cache: *const CovloopCache,
    limit: usize,
    out: *mut *mut c_char,
) -> CovloopStatus {
    guard(|| {
        let cache = handle(cache)?;
        let out = out_ptr(out)?;
        *out = to_c_string(cache.inner.summary_for_prompt(limit));
        Ok(())
    })
}

/// Writes cases from `since_index` on as `test_NNNN.txt` files in `dir`.
///
/// # Safety
/// `cache` must be a live handle; `dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn covloop_cache_persist(
    cache: *const CovloopCache,
    dir: *const c_char,
    since_index: usize,
) -> CovloopStatus {
    guard(|| {
        let cache = handle(cache)?;
        let dir = read_str(dir)?;
        cache
            .inner
            .persist_novel(Path::new(dir), since_index)
            .map(drop)
            .map_err(|e| Failure::new(CovloopStatus::IoError, e))
    })
}

/// # Safety
/// `cache` must be NULL or a handle from `covloop_cache_new`.
#[no_mangle]
pub unsafe extern "C" fn covloop_cache_free(cache: *mut CovloopCache) {
    if !cache.is_null() {
        drop(Box::from_raw(cache));
    }
}

#[no_mangle]
pub extern "C" fn covloop_run_options_default() -> CovloopRunOptions {
    let d = RunConfig::default();
    CovloopRunOptions {
        threshold: d.threshold,
        k_max: d.k_max,
        timeout_ms: d.per_test_timeout.as_millis() as u64,
        feedback: CovloopFeedback::Dual,
        backend: CovloopBackend::Stub,
        model_id: ptr::null(),
        endpoint: ptr::null(),
        endpoint_profile: ptr::null(),
        bound: ptr::null(),
    }
}

/// Runs the full loop on `source_path` inside `workdir`.
///
/// # Safety
/// `source_path` and `workdir` must be NUL-terminated strings; `options`
/// may be NULL for defaults; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn covloop_run_loop(
    source_path: *const c_char,
    workdir: *const c_char,
    options: *const CovloopRunOptions,
    out: *mut *mut CovloopRunResult,
) -> CovloopStatus {
    guard(|| {
        let source = read_str(source_path)?;
        let workdir = read_str(workdir)?;
        let out = out_ptr(out)?;
        let opts = options.as_ref().copied().unwrap_or_else(|| covloop_run_options_default());
        let mut config = RunConfig {
            threshold: opts.threshold,
            k_max: opts.k_max,
            per_test_timeout: Duration::from_millis(opts.timeout_ms),
            backend: match opts.backend {
                CovloopBackend::Stub => BackendKind::Stub,
                CovloopBackend::Http => BackendKind::Http,
            },
            workdir: PathBuf::from(workdir),
            bound: read_opt_str(opts.bound)?,
            feedback: match opts.feedback {
                CovloopFeedback::Dual => FeedbackMode::Dual,
                CovloopFeedback::Line => FeedbackMode::Line,
                CovloopFeedback::Branch => FeedbackMode::Branch,
                CovloopFeedback::None => FeedbackMode::None,
            },
            endpoint: read_opt_str(opts.endpoint)?,
            ..RunConfig::default()
        };
        if let Some(m) = read_opt_str(opts.model_id)? {
            config.model_id = m;
        }
        if let Some(p) = read_opt_str(opts.endpoint_profile)? {
            config.endpoint_profile = p;
        }
        let result = run_loop(&config, Path::new(source))
            .map_err(|e| Failure::new(CovloopStatus::RunError, e))?;
        let report = CovloopReport {
            inner: result.final_report.clone(),
        };
        *out = Box::into_raw(Box::new(CovloopRunResult { inner: result, report }));
        Ok(())
    })
}

/// # Safety
/// `result` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn covloop_run_result_termination(result: *const CovloopRunResult) -> CovloopTermination {
    match result.as_ref().map(|r| r.inner.termination) {
        Some(Termination::ThresholdMet) => CovloopTermination::ThresholdMet,
        Some(Termination::KMaxReached) | None => CovloopTermination::KMaxReached,
        Some(Termination::BackendFailure) => CovloopTermination::BackendFailure,
    }
}

/// # Safety
/// `result` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn covloop_run_result_iterations(result: *const CovloopRunResult) -> usize {
    result.as_ref().map_or(0, |r| r.inner.iterations.len())
}

/// Final coverage, borrowed from `result`; do not free.
///
/// # Safety
/// `result` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn covloop_run_result_report(result: *const CovloopRunResult) -> *const CovloopReport {
    result.as_ref().map_or(ptr::null(), |r| &r.report as *const CovloopReport)
}

/// # Safety
/// `result` must be a live handle; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn covloop_run_result_to_json(
    result: *const CovloopRunResult,
    out: *mut *mut c_char,
) -> CovloopStatus {
    guard(|| {
        let result = handle(result)?;
        let out = out_ptr(out)?;
        let text = serde_json_string(&result.inner)?;
        *out = to_c_string(text);
        Ok(())
    })
}

fn serde_json_string(r: &RunResult) -> Result<String, Failure> {
    covloop::driver::result_json(r).map_err(|e| Failure::new(CovloopStatus::IoError, e))
}

/// # Safety
/// `result` must be NULL or a handle from `covloop_run_loop`.
#[no_mangle]
pub unsafe extern "C" fn covloop_run_result_free(result: *mut CovloopRunResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}
