//! C ABI for the hostrep pipeline.
//!
//! Every function returns a [`HostrepStatus`]. On failure a message describing the error
//! is kept per thread and can be read with [`hostrep_last_error`]. Handles are opaque and
//! must be released with their matching `_free` function. Strings passed in must be
//! NUL-terminated UTF-8.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::net::IpAddr;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use hostrep::config::PipelineConfig;
use hostrep::fixture::{generate_fixture, FixtureParams};
use hostrep::ingest::{load_routing_snapshot, RoutingTable};
use hostrep::model::Asn;
use hostrep::pipeline::{run_pipeline, RunReport};
use hostrep::report::write_report;
use hostrep::suffix::SuffixRuleSet;
use hostrep::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HostrepStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    ConfigError = 3,
    DataError = 4,
    IoError = 5,
    NotFound = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

/// Parsed pipeline configuration.
pub struct HostrepConfig {
    config: PipelineConfig,
    text: String,
}

/// Result of a pipeline run.
pub struct HostrepReport {
    report: RunReport,
}

pub struct HostrepSuffixRules {
    rules: SuffixRuleSet,
}

pub struct HostrepRoutingTable {
    table: RoutingTable,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(err: &Error) -> HostrepStatus {
    match err {
        Error::Config { .. } => HostrepStatus::ConfigError,
        Error::Io { .. } => HostrepStatus::IoError,
        Error::Staged { source, .. } => status_of(source),
        _ => HostrepStatus::DataError,
    }
}

fn fail(status: HostrepStatus, msg: impl Into<String>) -> HostrepStatus {
    set_error(msg);
    status
}

/// Run `f`, translating errors and panics into a status and a stored message.
fn guard<F>(f: F) -> HostrepStatus
where
    F: FnOnce() -> Result<(), HostrepStatus>,
{
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HostrepStatus::Ok,
        Ok(Err(s)) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            fail(HostrepStatus::Panic, format!("internal panic: {msg}"))
        }
    }
}

fn lift<T>(r: hostrep::Result<T>) -> Result<T, HostrepStatus> {
    r.map_err(|e| fail(status_of(&e), e.to_string()))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, HostrepStatus> {
    if p.is_null() {
        return Err(fail(HostrepStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(HostrepStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, HostrepStatus> {
    p.as_ref()
        .ok_or_else(|| fail(HostrepStatus::NullArgument, format!("{what} is null")))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, HostrepStatus> {
    p.as_mut()
        .ok_or_else(|| fail(HostrepStatus::NullArgument, format!("{what} is null")))
}

/// Copy `s` plus a NUL into `buf`. `needed` receives the required size in bytes.
unsafe fn copy_out(s: &str, buf: *mut c_char, len: usize, needed: *mut usize) -> Result<(), HostrepStatus> {
    let n = s.len() + 1;
    if !needed.is_null() {
        *needed = n;
    }
    if buf.is_null() || len < n {
        return Err(fail(
            HostrepStatus::BufferTooSmall,
            format!("buffer of {len} bytes, {n} needed"),
        ));
    }
    ptr::copy_nonoverlapping(s.as_ptr(), buf as *mut u8, s.len());
    *buf.add(s.len()) = 0;
    Ok(())
}

/// Message for the last failed call on this thread, or null. Valid until the next call.
#[no_mangle]
pub extern "C" fn hostrep_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn hostrep_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

// --- suffix rules ---------------------------------------------------------

/// Parse public-suffix rules (one per line, `*.` wildcards and `!` exceptions).
///
/// # Safety
/// `rules_text` must be a valid C string and `out_rules` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hostrep_suffix_rules_parse(
    rules_text: *const c_char,
    out_rules: *mut *mut HostrepSuffixRules,
) -> HostrepStatus {
    guard(|| {
        let slot = out(out_rules, "out_rules")?;
        let rules = SuffixRuleSet::parse(text(rules_text, "rules_text")?);
        *slot = Box::into_raw(Box::new(HostrepSuffixRules { rules }));
        Ok(())
    })
}

/// # Safety
/// `rules` must come from [`hostrep_suffix_rules_parse`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn hostrep_suffix_rules_free(rules: *mut HostrepSuffixRules) {
    if !rules.is_null() {
        drop(Box::from_raw(rules));
    }
}

/// Registrable domain of `hostname`, written NUL-terminated into `buf`.
///
/// # Safety
/// `buf` must hold `buf_len` bytes; `needed` may be null.
#[no_mangle]
pub unsafe extern "C" fn hostrep_extract_2ld(
    rules: *const HostrepSuffixRules,
    hostname: *const c_char,
    buf: *mut c_char,
    buf_len: usize,
    needed: *mut usize,
) -> HostrepStatus {
    guard(|| {
        let rules = handle(rules, "rules")?;
        let d = lift(rules.rules.extract_2ld(text(hostname, "hostname")?))?;
        copy_out(&d, buf, buf_len, needed)
    })
}

// --- routing --------------------------------------------------------------

/// Load a `prefix,asn` routing snapshot.
///
/// # Safety
/// `path` must be a valid C string and `out_table` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hostrep_routing_load(
    path: *const c_char,
    out_table: *mut *mut HostrepRoutingTable,
) -> HostrepStatus {
    guard(|| {
        let slot = out(out_table, "out_table")?;
        let table = lift(load_routing_snapshot(Path::new(text(path, "path")?)))?;
        *slot = Box::into_raw(Box::new(HostrepRoutingTable { table }));
        Ok(())
    })
}

/// # Safety
/// `table` must come from [`hostrep_routing_load`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn hostrep_routing_free(table: *mut HostrepRoutingTable) {
    if !table.is_null() {
        drop(Box::from_raw(table));
    }
}

/// Origin ASN of the longest prefix covering `ip`; `NotFound` when unrouted.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn hostrep_routing_lookup(
    table: *const HostrepRoutingTable,
    ip: *const c_char,
    out_asn: *mut u32,
) -> HostrepStatus {
    guard(|| {
        let table = handle(table, "table")?;
        let slot = out(out_asn, "out_asn")?;
        let raw = text(ip, "ip")?;
        let addr: IpAddr = raw
            .trim()
            .parse()
            .map_err(|_| fail(HostrepStatus::DataError, format!("invalid ip {raw:?}")))?;
        match table.table.longest_match(addr) {
            Some(Asn(a)) => {
                *slot = a;
                Ok(())
            }
            None => Err(fail(HostrepStatus::NotFound, format!("{addr} is not routed"))),
        }
    })
}

// --- statistics -----------------------------------------------------------

unsafe fn correlation(
    x: *const f64,
    y: *const f64,
    n: usize,
    out_r: *mut f64,
    f: fn(&[f64], &[f64]) -> hostrep::Result<f64>,
) -> HostrepStatus {
    guard(|| {
        let slot = out(out_r, "out_r")?;
        if x.is_null() || y.is_null() {
            return Err(fail(HostrepStatus::NullArgument, "x or y is null"));
        }
        let (x, y) = (std::slice::from_raw_parts(x, n), std::slice::from_raw_parts(y, n));
        *slot = lift(f(x, y))?;
        Ok(())
    })
}

/// Pearson's r of two vectors of length `n`.
///
/// # Safety
/// `x` and `y` must point to `n` doubles each.
#[no_mangle]
pub unsafe extern "C" fn hostrep_pearson(x: *const f64, y: *const f64, n: usize, out_r: *mut f64) -> HostrepStatus {
    correlation(x, y, n, out_r, hostrep::stats::pearson)
}

/// Spearman's rho (average ranks for ties).
///
/// # Safety
/// `x` and `y` must point to `n` doubles each.
#[no_mangle]
pub unsafe extern "C" fn hostrep_spearman(x: *const f64, y: *const f64, n: usize, out_r: *mut f64) -> HostrepStatus {
    correlation(x, y, n, out_r, hostrep::stats::spearman)
}

// --- pipeline -------------------------------------------------------------

/// Load and validate a TOML config file.
///
/// # Safety
/// `path` must be a valid C string and `out_config` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hostrep_config_load(
    path: *const c_char,
    out_config: *mut *mut HostrepConfig,
) -> HostrepStatus {
    guard(|| {
        let slot = out(out_config, "out_config")?;
        let (config, text) = lift(PipelineConfig::load(Path::new(text(path, "path")?)))?;
        *slot = Box::into_raw(Box::new(HostrepConfig { config, text }));
        Ok(())
    })
}

/// Switch between the thread pool and single-threaded evaluation.
///
/// # Safety
/// `config` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn hostrep_config_set_parallel(config: *mut HostrepConfig, parallel: bool) -> HostrepStatus {
    guard(|| {
        out(config, "config")?.config.parallel = parallel;
        Ok(())
    })
}

/// # Safety
/// `config` must come from [`hostrep_config_load`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn hostrep_config_free(config: *mut HostrepConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Run the full pipeline.
///
/// # Safety
/// `config` must be a live handle and `out_report` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hostrep_run(
    config: *const HostrepConfig,
    out_report: *mut *mut HostrepReport,
) -> HostrepStatus {
    guard(|| {
        let cfg = handle(config, "config")?;
        let slot = out(out_report, "out_report")?;
        let report = lift(run_pipeline(&cfg.config, &cfg.text))?;
        *slot = Box::into_raw(Box::new(HostrepReport { report }));
        Ok(())
    })
}

/// # Safety
/// `report` must come from [`hostrep_run`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn hostrep_report_free(report: *mut HostrepReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Number of providers scored (the universe size).
///
/// # Safety
/// `report` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn hostrep_report_provider_count(report: *const HostrepReport, out_count: *mut usize) -> HostrepStatus {
    guard(|| {
        let r = handle(report, "report")?;
        *out(out_count, "out_count")? = r.report.occurrence.scores.len();
        Ok(())
    })
}

/// Occurrence score at position `index`, worst first.
///
/// # Safety
/// `report` must be a live handle; output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn hostrep_report_occurrence_at(
    report: *const HostrepReport,
    index: usize,
    out_asn: *mut u32,
    out_score: *mut f64,
) -> HostrepStatus {
    guard(|| {
        let r = handle(report, "report")?;
        let (asn_slot, score_slot) = (out(out_asn, "out_asn")?, out(out_score, "out_score")?);
        let scores = &r.report.occurrence.scores;
        let (asn, s) = scores.scores.get(index).ok_or_else(|| {
            fail(HostrepStatus::NotFound, format!("index {index} out of {} providers", scores.len()))
        })?;
        *asn_slot = asn.0;
        *score_slot = hostrep::aggregate::rational_to_f64(s);
        Ok(())
    })
}

/// Uptime score of `asn`; `NotFound` when the run has no uptime metric or no such provider.
///
/// # Safety
/// `report` must be a live handle; `out_score` must be valid.
#[no_mangle]
pub unsafe extern "C" fn hostrep_report_uptime_score(
    report: *const HostrepReport,
    asn: u32,
    out_score: *mut f64,
) -> HostrepStatus {
    guard(|| {
        let r = handle(report, "report")?;
        let slot = out(out_score, "out_score")?;
        let up = r
            .report
            .uptime
            .as_ref()
            .ok_or_else(|| fail(HostrepStatus::NotFound, "no feed carries removal times"))?;
        *slot = up
            .scores
            .score_f64(Asn(asn))
            .ok_or_else(|| fail(HostrepStatus::NotFound, format!("AS{asn} is not in the universe")))?;
        Ok(())
    })
}

/// Write every report file into `dir`.
///
/// # Safety
/// `report` must be a live handle and `dir` a valid C string.
#[no_mangle]
pub unsafe extern "C" fn hostrep_report_write(report: *const HostrepReport, dir: *const c_char) -> HostrepStatus {
    guard(|| {
        let r = handle(report, "report")?;
        lift(write_report(&r.report, Path::new(text(dir, "dir")?)))?;
        Ok(())
    })
}

/// Write a synthetic dataset and its `config.toml` into `out_dir`.
///
/// # Safety
/// `out_dir` must be a valid C string; `out_worst_asn` may be null.
#[no_mangle]
pub unsafe extern "C" fn hostrep_generate_fixture(
    seed: u64,
    providers: usize,
    feeds: usize,
    abuse_rate: f64,
    uptime_feeds: usize,
    out_dir: *const c_char,
    out_worst_asn: *mut u32,
) -> HostrepStatus {
    guard(|| {
        let params = FixtureParams {
            seed,
            n_providers: providers,
            n_feeds: feeds,
            abuse_rate,
            uptime_feeds,
        };
        let m = lift(generate_fixture(&params, Path::new(text(out_dir, "out_dir")?)))?;
        if !out_worst_asn.is_null() {
            *out_worst_asn = m.worst_asn;
        }
        Ok(())
    })
}
