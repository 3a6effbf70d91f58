//! C ABI for the `ncgopt` optimizers.
//!
//! Problems and reports are opaque heap handles created and freed by this
//! library. Every fallible call returns an [`NcgStatus`]; on failure the
//! message is kept per thread and read with [`ncg_last_error`]. Panics never
//! cross the boundary: they are caught and reported as
//! [`NcgStatus::Panic`].
//!
//! Vectors are passed as `(pointer, length)` pairs of `double`. Output
//! buffers must hold at least the problem dimension; shorter buffers give
//! [`NcgStatus::BufferTooSmall`] and are left untouched.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use ncgopt::problem::registry::{self, BuiltProblem, ProblemConfig};
use ncgopt::solvers::{solve, Algorithm};
use ncgopt::{Error, Oracle, Point, SolveConfig, SolveReport};

/// Result of a library call. Zero is success.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NcgStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// A string was not UTF-8, a length did not match, or a name is unknown.
    InvalidArgument = 2,
    BufferTooSmall = 3,
    /// Tolerances or run controls are invalid.
    Config = 4,
    Input = 5,
    /// The objective returned a non-finite value.
    Oracle = 6,
    Divergence = 7,
    /// The run exceeded its iteration cap.
    BoundExceeded = 8,
    /// The objective increased; the declared smoothness constants are wrong.
    Constants = 9,
    CertificationUnavailable = 10,
    Numerical = 11,
    Io = 12,
    /// A panic inside the library was caught.
    Panic = 13,
}

impl From<&Error> for NcgStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Config(_) => NcgStatus::Config,
            Error::Oracle(_) => NcgStatus::Oracle,
            Error::Input(_) => NcgStatus::Input,
            Error::Divergence(_) => NcgStatus::Divergence,
            Error::BoundExceeded(_) => NcgStatus::BoundExceeded,
            Error::Constants { .. } => NcgStatus::Constants,
            Error::CertificationUnavailable { .. } => NcgStatus::CertificationUnavailable,
            Error::Numerical(_) => NcgStatus::Numerical,
            Error::Io(_) => NcgStatus::Io,
        }
    }
}

/// A built problem with its default starting point.
pub struct NcgProblem {
    built: BuiltProblem,
}

/// The outcome of one solver run.
pub struct NcgReport {
    report: SolveReport,
}

/// Run controls. Start from [`ncg_solve_options_default`] and override.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct NcgSolveOptions {
    pub eps1: f64,
    pub eps2: f64,
    /// When finite, `eps2` is replaced by `eps1^alpha`. NaN leaves it unset.
    pub alpha: f64,
    pub delta: f64,
    pub seed: u64,
    /// Iteration cap; 0 means twice the theoretical bound.
    pub max_iters: u64,
    /// Declared gap `f(x0) - f*`; NaN derives it from the problem.
    pub delta_gap: f64,
    /// Gradient and Hessian sample sizes for SNCG; 0 means the theoretical
    /// size.
    pub s1: u64,
    pub s2: u64,
}

#[derive(Debug)]
struct Failure {
    status: NcgStatus,
    message: String,
}

impl Failure {
    fn new(status: NcgStatus, message: impl Into<String>) -> Self {
        Failure { status, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure { status: NcgStatus::from(&e), message: e.to_string() }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

/// Runs `f`, translating errors and panics into a status and the thread's
/// last error message.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> NcgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            NcgStatus::Ok
        }
        Ok(Err(fail)) => {
            set_last_error(&fail.message);
            fail.status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(&format!("panic: {msg}"));
            NcgStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure::new(NcgStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::new(NcgStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, expected: usize, what: &str) -> Result<&'a [f64], Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    if len != expected {
        return Err(Failure::new(
            NcgStatus::InvalidArgument,
            format!("{what} has length {len}, expected {expected}"),
        ));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn write_out(src: &[f64], out: *mut f64, len: usize) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output buffer"));
    }
    if len < src.len() {
        return Err(Failure::new(
            NcgStatus::BufferTooSmall,
            format!("buffer holds {len} values, need {}", src.len()),
        ));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), out, src.len());
    Ok(())
}

unsafe fn problem_ref<'a>(p: *const NcgProblem) -> Result<&'a NcgProblem, Failure> {
    p.as_ref().ok_or_else(|| null("problem"))
}

unsafe fn report_ref<'a>(r: *const NcgReport) -> Option<&'a NcgReport> {
    r.as_ref()
}

fn into_c_string(s: String) -> *mut c_char {
    match CString::new(s) {
        Ok(c) => c.into_raw(),
        Err(_) => {
            set_last_error("string contains an interior NUL");
            ptr::null_mut()
        }
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ncg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL when the last
/// status-returning call succeeded. Valid until the next library call on
/// this thread.
#[no_mangle]
pub extern "C" fn ncg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Builds a registry problem (`"trig"`, `"matfac"`, `"finitesum-sigmoid"`).
/// `dim` 0 selects the default size. `seed` drives instance generation and
/// the starting point.
///
/// # Safety
/// `key` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ncg_problem_new(
    key: *const c_char,
    dim: usize,
    seed: u64,
    out: *mut *mut NcgProblem,
) -> NcgStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let key = str_arg(key, "key")?;
        if !registry::is_known(key) {
            return Err(Failure::new(NcgStatus::InvalidArgument, format!("unknown problem '{key}'")));
        }
        let mut cfg = ProblemConfig::new(key);
        if dim > 0 {
            cfg = cfg.with_dim(dim);
        }
        let built = registry::build(&cfg, seed)?;
        *out = Box::into_raw(Box::new(NcgProblem { built }));
        Ok(())
    })
}

/// Frees a problem. NULL is ignored.
///
/// # Safety
/// `p` must come from [`ncg_problem_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ncg_problem_free(p: *mut NcgProblem) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Point dimension of the problem, or 0 for NULL.
///
/// # Safety
/// `p` must be NULL or a live problem handle.
#[no_mangle]
pub unsafe extern "C" fn ncg_problem_dim(p: *const NcgProblem) -> usize {
    p.as_ref().map_or(0, |p| p.built.problem.dim())
}

/// Copies the default starting point into `out`.
///
/// # Safety
/// `p` must be a live handle; `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ncg_problem_initial_point(p: *const NcgProblem, out: *mut f64, len: usize) -> NcgStatus {
    guard(|| write_out(problem_ref(p)?.built.x0.as_slice(), out, len))
}

/// Objective value at `x`.
///
/// # Safety
/// `p` must be a live handle; `x` must hold `len` doubles; `value` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn ncg_problem_value(
    p: *const NcgProblem,
    x: *const f64,
    len: usize,
    value: *mut f64,
) -> NcgStatus {
    guard(|| {
        let p = problem_ref(p)?;
        let x = slice_arg(x, len, p.built.problem.dim(), "x")?;
        if value.is_null() {
            return Err(null("value"));
        }
        *value = p.built.problem.value(x);
        Ok(())
    })
}

/// Gradient at `x`, written to `out`.
///
/// # Safety
/// `p` must be a live handle; `x` must hold `len` doubles and `out`
/// `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ncg_problem_gradient(
    p: *const NcgProblem,
    x: *const f64,
    len: usize,
    out: *mut f64,
    out_len: usize,
) -> NcgStatus {
    guard(|| {
        let p = problem_ref(p)?;
        let x = slice_arg(x, len, p.built.problem.dim(), "x")?;
        write_out(&p.built.problem.gradient(x), out, out_len)
    })
}

/// Defaults: `eps1 = 1e-3`, `eps2 = 1e-2`, `delta = 0.1`, seed 0, caps and
/// sample sizes from theory.
#[no_mangle]
pub extern "C" fn ncg_solve_options_default() -> NcgSolveOptions {
    NcgSolveOptions {
        eps1: 1e-3,
        eps2: 1e-2,
        alpha: f64::NAN,
        delta: 0.1,
        seed: 0,
        max_iters: 0,
        delta_gap: f64::NAN,
        s1: 0,
        s2: 0,
    }
}

fn to_config(o: &NcgSolveOptions) -> Result<SolveConfig, Failure> {
    let mut cfg = if o.alpha.is_finite() {
        SolveConfig::with_alpha(o.eps1, o.alpha, o.delta, o.seed)?
    } else {
        SolveConfig::new(o.eps1, o.eps2, o.delta, o.seed)
    };
    cfg.max_iters = (o.max_iters > 0).then_some(o.max_iters);
    cfg.delta_gap = (!o.delta_gap.is_nan()).then_some(o.delta_gap);
    cfg.s1 = (o.s1 > 0).then_some(o.s1);
    cfg.s2 = (o.s2 > 0).then_some(o.s2);
    Ok(cfg)
}

/// Runs `algorithm` (`"gd"`, `"ncd"`, `"ncd-matched"`, `"ncg-a1"`,
/// `"ncg-a2"`, `"ncg-b1"`, `"ncg-b2"`, `"ih-ncg-a"`, `"sncg"`) from `x0`, or
/// from the problem's starting point when `x0` is NULL. `options` NULL means
/// [`ncg_solve_options_default`].
///
/// # Safety
/// `p` must be a live handle, `algorithm` a NUL-terminated string, `x0`
/// NULL or `x0_len` doubles, `options` NULL or valid, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ncg_solve(
    p: *const NcgProblem,
    algorithm: *const c_char,
    options: *const NcgSolveOptions,
    x0: *const f64,
    x0_len: usize,
    out: *mut *mut NcgReport,
) -> NcgStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let p = problem_ref(p)?;
        let name = str_arg(algorithm, "algorithm")?;
        let algo: Algorithm = name
            .parse()
            .map_err(|_| Failure::new(NcgStatus::InvalidArgument, format!("unknown algorithm '{name}'")))?;
        let opts = options.as_ref().copied().unwrap_or_else(|| ncg_solve_options_default());
        let cfg = to_config(&opts)?;
        let start = if x0.is_null() {
            p.built.x0.clone()
        } else {
            Point::new(slice_arg(x0, x0_len, p.built.problem.dim(), "x0")?.to_vec())?
        };
        let oracle = Oracle::new(p.built.problem.as_ref());
        let report = solve(&oracle, &start, algo, &cfg)?;
        *out = Box::into_raw(Box::new(NcgReport { report }));
        Ok(())
    })
}

/// Frees a report. NULL is ignored.
///
/// # Safety
/// `r` must come from [`ncg_solve`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ncg_report_free(r: *mut NcgReport) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// Number of trace rows (iterations). 0 for NULL.
///
/// # Safety
/// `r` must be NULL or a live report handle.
#[no_mangle]
pub unsafe extern "C" fn ncg_report_iters(r: *const NcgReport) -> u64 {
    report_ref(r).map_or(0, |r| r.report.iters as u64)
}

/// Final objective value; NaN for NULL.
///
/// # Safety
/// `r` must be NULL or a live report handle.
#[no_mangle]
pub unsafe extern "C" fn ncg_report_f_final(r: *const NcgReport) -> f64 {
    report_ref(r).map_or(f64::NAN, |r| r.report.f_final)
}

/// Total Hessian-vector products, full plus per-component.
///
/// # Safety
/// `r` must be NULL or a live report handle.
#[no_mangle]
pub unsafe extern "C" fn ncg_report_hvp_evals(r: *const NcgReport) -> u64 {
    report_ref(r).map_or(0, |r| r.report.counters.total_hvp())
}

/// Total gradient evaluations, full plus per-component.
///
/// # Safety
/// `r` must be NULL or a live report handle.
#[no_mangle]
pub unsafe extern "C" fn ncg_report_grad_evals(r: *const NcgReport) -> u64 {
    report_ref(r).map_or(0, |r| r.report.counters.total_grad())
}

/// 1 if the dense certificate confirms the algorithm's guarantee, 0 if it
/// does not, -1 if no certificate was computed (or `r` is NULL).
///
/// # Safety
/// `r` must be NULL or a live report handle.
#[no_mangle]
pub unsafe extern "C" fn ncg_report_certified(r: *const NcgReport) -> i32 {
    match report_ref(r).and_then(|r| r.report.certification_passed()) {
        Some(true) => 1,
        Some(false) => 0,
        None => -1,
    }
}

/// Copies the final iterate into `out`.
///
/// # Safety
/// `r` must be a live handle; `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ncg_report_final_point(r: *const NcgReport, out: *mut f64, len: usize) -> NcgStatus {
    guard(|| {
        let r = report_ref(r).ok_or_else(|| null("report"))?;
        write_out(r.report.x_final.as_slice(), out, len)
    })
}

/// The full report as JSON, or NULL on failure. Free with
/// [`ncg_string_free`].
///
/// # Safety
/// `r` must be NULL or a live report handle.
#[no_mangle]
pub unsafe extern "C" fn ncg_report_json(r: *const NcgReport) -> *mut c_char {
    let mut s = None;
    let status = guard(|| {
        let r = report_ref(r).ok_or_else(|| null("report"))?;
        s = Some(r.report.to_json()?);
        Ok(())
    });
    match (status, s) {
        (NcgStatus::Ok, Some(s)) => into_c_string(s),
        _ => ptr::null_mut(),
    }
}

/// The per-iteration trace as CSV with a header row, or NULL on failure.
/// Free with [`ncg_string_free`].
///
/// # Safety
/// `r` must be NULL or a live report handle.
#[no_mangle]
pub unsafe extern "C" fn ncg_report_trace_csv(r: *const NcgReport) -> *mut c_char {
    let mut s = None;
    let status = guard(|| {
        let r = report_ref(r).ok_or_else(|| null("report"))?;
        s = Some(r.report.trace.to_csv());
        Ok(())
    });
    match (status, s) {
        (NcgStatus::Ok, Some(s)) => into_c_string(s),
        _ => ptr::null_mut(),
    }
}

/// Frees a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ncg_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
