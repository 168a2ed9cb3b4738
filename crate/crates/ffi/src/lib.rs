//! C interface to the solver, classifier and estimate harness.
//!
//! Suites and grid runs are opaque handles created and freed here. Every
//! function returns a `PmdStatus`; on failure a message is kept per thread
//! and read back with `pmd_last_error`. Output buffers belong to the caller:
//! a function that fills one takes its capacity, always reports the length
//! it needs, and returns `PMD_STATUS_BUFFER_TOO_SMALL` when that does not fit.
//!
//! Pointers must be null or valid for the access described; handles must
//! come from this library and be freed at most once. Strings are
//! NUL-terminated UTF-8.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use pmdrift::classify::{classify, Admissibility, DiffusionParams, Level, Reciprocals};
use pmdrift::config::Suite;
use pmdrift::estimates::EstimateReport;
use pmdrift::runner::{run_grid, GridArtifacts, GridRun};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PmdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Solver = 4,
    BufferTooSmall = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PmdLevel {
    OnLine = 0,
    Subclass = 1,
    Supercritical = 2,
    NotApplicable = 3,
}

impl From<Level> for PmdLevel {
    fn from(l: Level) -> Self {
        match l {
            Level::OnLine => PmdLevel::OnLine,
            Level::Subclass => PmdLevel::Subclass,
            Level::Supercritical => PmdLevel::Supercritical,
            Level::NotApplicable => PmdLevel::NotApplicable,
        }
    }
}

/// Bits of `PmdVerdict::theorems`.
pub const PMD_PME_ADMISSIBLE: u32 = 1;
pub const PMD_FDE_ADMISSIBLE: u32 = 1 << 1;
pub const PMD_DIVFREE_PME_ADMISSIBLE: u32 = 1 << 2;
pub const PMD_DIVFREE_FDE_ADMISSIBLE: u32 = 1 << 3;
pub const PMD_COMPACTNESS_ADMISSIBLE: u32 = 1 << 4;

fn theorem_bit(a: Admissibility) -> u32 {
    match a {
        Admissibility::Pme => PMD_PME_ADMISSIBLE,
        Admissibility::Fde => PMD_FDE_ADMISSIBLE,
        Admissibility::DivFreePme => PMD_DIVFREE_PME_ADMISSIBLE,
        Admissibility::DivFreeFde => PMD_DIVFREE_FDE_ADMISSIBLE,
        Admissibility::Compactness => PMD_COMPACTNESS_ADMISSIBLE,
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PmdVerdict {
    pub scaling_sum: f64,
    pub plain: PmdLevel,
    pub sigma: PmdLevel,
    pub theorems: u32,
    pub near_boundary: bool,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PmdRunSummary {
    pub cells: usize,
    pub steps: usize,
    pub data_mass: f64,
    pub sup_mass: f64,
    pub budget_residual: f64,
    pub runtime_s: f64,
    pub literal_failures: usize,
}

/// A parsed, validated scenario suite.
pub struct PmdSuite(Suite);

/// One scenario solved on one grid, with its estimate reports.
pub struct PmdRun {
    grid: GridRun,
    art: GridArtifacts,
    reports: CString,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

type Failure = (PmdStatus, String);

fn fail<T>(status: PmdStatus, msg: impl Into<String>) -> Result<T, Failure> {
    Err((status, msg.into()))
}

/// Runs `f`, converting errors and panics into a status and the thread's
/// last error.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> PmdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PmdStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(&msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(&format!("panic: {msg}"));
            PmdStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return fail(PmdStatus::NullPointer, format!("`{name}` is null"));
    }
    CStr::from_ptr(p).to_str().or_else(|_| fail(PmdStatus::InvalidArgument, format!("`{name}` is not UTF-8")))
}

unsafe fn out_arg<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| (PmdStatus::NullPointer, format!("`{name}` is null")))
}

/// Copies `src` into `buf` (capacity `cap`) after storing the needed length.
unsafe fn fill<T: Copy>(src: &[T], buf: *mut T, cap: usize, needed: *mut usize) -> Result<(), Failure> {
    if let Some(n) = needed.as_mut() {
        *n = src.len();
    }
    if cap < src.len() {
        return fail(PmdStatus::BufferTooSmall, format!("buffer holds {cap}, need {}", src.len()));
    }
    if src.is_empty() {
        return Ok(());
    }
    if buf.is_null() {
        return fail(PmdStatus::NullPointer, "`buf` is null");
    }
    ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len());
    Ok(())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn pmd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message, NUL included; `needed`
/// receives its size in bytes.
#[no_mangle]
pub unsafe extern "C" fn pmd_last_error(buf: *mut c_char, cap: usize, needed: *mut usize) -> PmdStatus {
    let msg = LAST_ERROR.with(|e| e.borrow().clone());
    let bytes = msg.as_bytes_with_nul();
    match fill(bytes, buf.cast::<u8>(), cap, needed) {
        Ok(()) => PmdStatus::Ok,
        Err((s, _)) => s,
    }
}

/// Classifies the reciprocal exponent pair `(1/q1, 1/q2)` for diffusion
/// exponent `m` in dimension `d`.
#[no_mangle]
pub unsafe extern "C" fn pmd_classify(
    m: f64,
    d: usize,
    inv_q1: f64,
    inv_q2: f64,
    divergence_free: bool,
    out: *mut PmdVerdict,
) -> PmdStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let p = DiffusionParams::new(m, d).or_else(|e| fail(PmdStatus::InvalidArgument, e.to_string()))?;
        let r = Reciprocals::new(inv_q1, inv_q2).or_else(|e| fail(PmdStatus::InvalidArgument, e.to_string()))?;
        let v = classify(&p, r, divergence_free);
        *out = PmdVerdict {
            scaling_sum: v.scaling_sum,
            plain: v.plain.into(),
            sigma: v.sigma.into(),
            theorems: v.theorems.iter().map(|a| theorem_bit(*a)).fold(0, |a, b| a | b),
            near_boundary: v.within_tolerance_of_boundary,
        };
        Ok(())
    })
}

fn boxed_suite(s: Suite, out: &mut *mut PmdSuite) {
    *out = Box::into_raw(Box::new(PmdSuite(s)));
}

/// Parses a suite from TOML text.
#[no_mangle]
pub unsafe extern "C" fn pmd_suite_parse(text: *const c_char, out: *mut *mut PmdSuite) -> PmdStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let text = str_arg(text, "text")?;
        let s = Suite::parse(text, "<text>").or_else(|e| fail(PmdStatus::Config, e.to_string()))?;
        boxed_suite(s, out);
        Ok(())
    })
}

/// Loads a suite from a TOML file.
#[no_mangle]
pub unsafe extern "C" fn pmd_suite_load(path: *const c_char, out: *mut *mut PmdSuite) -> PmdStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let path = str_arg(path, "path")?;
        let s = Suite::load(Path::new(path)).or_else(|e| fail(PmdStatus::Config, e.to_string()))?;
        boxed_suite(s, out);
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn pmd_suite_count(suite: *const PmdSuite, out: *mut usize) -> PmdStatus {
    guard(|| {
        let s = suite.as_ref().ok_or((PmdStatus::NullPointer, "`suite` is null".into()))?;
        *out_arg(out, "out")? = s.0.scenarios.len();
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn pmd_suite_free(suite: *mut PmdSuite) {
    if !suite.is_null() {
        drop(Box::from_raw(suite));
    }
}

/// Solves scenario `id` (the first one when null) with `n` cells per side
/// (the scenario's finest grid when 0) and evaluates its estimates.
#[no_mangle]
pub unsafe extern "C" fn pmd_run_grid(
    suite: *const PmdSuite,
    id: *const c_char,
    n: usize,
    out: *mut *mut PmdRun,
) -> PmdStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let suite = &suite.as_ref().ok_or((PmdStatus::NullPointer, "`suite` is null".into()))?.0;
        let s = if id.is_null() { suite.scenarios.first() } else { suite.find(str_arg(id, "id")?) };
        let s = s.ok_or((PmdStatus::InvalidArgument, "no such scenario".into()))?;
        let n = if n == 0 { *s.ladder.last().expect("validated ladder") } else { n };
        let (grid, art) = run_grid(s, n).or_else(|e| fail(PmdStatus::Solver, format!("{}: {e}", s.id)))?;
        let reports: Vec<&EstimateReport> = grid.reports.iter().map(|r| &r.2).collect();
        let json = serde_json::to_string(&reports).or_else(|e| fail(PmdStatus::Solver, e.to_string()))?;
        let reports = CString::new(json).or_else(|e| fail(PmdStatus::Solver, e.to_string()))?;
        *out = Box::into_raw(Box::new(PmdRun { grid, art, reports }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn pmd_run_summary(run: *const PmdRun, out: *mut PmdRunSummary) -> PmdStatus {
    guard(|| {
        let r = run.as_ref().ok_or((PmdStatus::NullPointer, "`run` is null".into()))?;
        *out_arg(out, "out")? = PmdRunSummary {
            cells: r.art.domain.cell_count(),
            steps: r.grid.steps,
            data_mass: r.art.header.data_mass,
            sup_mass: r.art.header.sup_mass,
            budget_residual: r.grid.budget_residual,
            runtime_s: r.grid.runtime_s,
            literal_failures: r.grid.reports.iter().filter(|x| x.2.literal_failure()).count(),
        };
        Ok(())
    })
}

/// Density at the final time, one value per cell in row-major order.
#[no_mangle]
pub unsafe extern "C" fn pmd_run_final_density(
    run: *const PmdRun,
    buf: *mut f64,
    cap: usize,
    needed: *mut usize,
) -> PmdStatus {
    guard(|| {
        let r = run.as_ref().ok_or((PmdStatus::NullPointer, "`run` is null".into()))?;
        fill(r.art.trajectory.final_slice(), buf, cap, needed)
    })
}

/// Estimate reports as a JSON array, NUL included.
#[no_mangle]
pub unsafe extern "C" fn pmd_run_reports_json(
    run: *const PmdRun,
    buf: *mut c_char,
    cap: usize,
    needed: *mut usize,
) -> PmdStatus {
    guard(|| {
        let r = run.as_ref().ok_or((PmdStatus::NullPointer, "`run` is null".into()))?;
        fill(r.reports.as_bytes_with_nul(), buf.cast::<u8>(), cap, needed)
    })
}

#[no_mangle]
pub unsafe extern "C" fn pmd_run_free(run: *mut PmdRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}
