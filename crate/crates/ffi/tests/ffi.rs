use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use ncgopt_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let p = ncg_last_error();
    assert!(!p.is_null(), "expected an error message");
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_owned()
}

fn problem(key: &str, dim: usize, seed: u64) -> *mut NcgProblem {
    let mut p = ptr::null_mut();
    let s = unsafe { ncg_problem_new(c(key).as_ptr(), dim, seed, &mut p) };
    assert_eq!(s, NcgStatus::Ok);
    assert!(!p.is_null());
    p
}

fn owned(s: *mut std::ffi::c_char) -> String {
    assert!(!s.is_null());
    let out = unsafe { CStr::from_ptr(s) }.to_str().unwrap().to_owned();
    unsafe { ncg_string_free(s) };
    out
}

#[test]
fn solve_through_the_c_abi() {
    let p = problem("trig", 6, 3);
    unsafe {
        let d = ncg_problem_dim(p);
        assert_eq!(d, 6);
        let mut x0 = vec![0.0; d];
        assert_eq!(ncg_problem_initial_point(p, x0.as_mut_ptr(), d), NcgStatus::Ok);

        let mut opts = ncg_solve_options_default();
        opts.seed = 9;
        let mut r = ptr::null_mut();
        assert_eq!(ncg_solve(p, c("ncg-a1").as_ptr(), &opts, ptr::null(), 0, &mut r), NcgStatus::Ok);
        assert_eq!(ncg_report_certified(r), 1);
        assert!(ncg_report_iters(r) >= 1);
        assert!(ncg_report_hvp_evals(r) > 0);
        assert!(ncg_report_grad_evals(r) >= ncg_report_iters(r));

        let mut x = vec![0.0; d];
        assert_eq!(ncg_report_final_point(r, x.as_mut_ptr(), d), NcgStatus::Ok);
        let mut f = 0.0;
        assert_eq!(ncg_problem_value(p, x.as_ptr(), d, &mut f), NcgStatus::Ok);
        assert_eq!(f, ncg_report_f_final(r));
        let mut g = vec![0.0; d];
        assert_eq!(ncg_problem_gradient(p, x.as_ptr(), d, g.as_mut_ptr(), d), NcgStatus::Ok);
        assert!(g.iter().map(|v| v * v).sum::<f64>().sqrt() <= opts.eps1);

        let json = owned(ncg_report_json(r));
        assert!(json.contains("\"algorithm\": \"ncg-a1\""), "{json}");
        let csv = owned(ncg_report_trace_csv(r));
        assert_eq!(csv.lines().count() as u64, ncg_report_iters(r) + 1);

        ncg_report_free(r);
        ncg_problem_free(p);
    }
}

#[test]
fn explicit_start_and_default_options() {
    let p = problem("matfac", 0, 1);
    unsafe {
        let d = ncg_problem_dim(p);
        let x0 = vec![0.1; d];
        let mut r = ptr::null_mut();
        assert_eq!(ncg_solve(p, c("gd").as_ptr(), ptr::null(), x0.as_ptr(), d, &mut r), NcgStatus::Ok);
        let mut f0 = 0.0;
        ncg_problem_value(p, x0.as_ptr(), d, &mut f0);
        assert!(ncg_report_f_final(r) <= f0);
        ncg_report_free(r);
        ncg_problem_free(p);
    }
}

#[test]
fn runs_are_reproducible() {
    let p = problem("trig", 0, 5);
    let run = || unsafe {
        let mut r = ptr::null_mut();
        let opts = NcgSolveOptions { seed: 4, alpha: 0.5, ..ncg_solve_options_default() };
        assert_eq!(ncg_solve(p, c("ncg-a2").as_ptr(), &opts, ptr::null(), 0, &mut r), NcgStatus::Ok);
        let s = owned(ncg_report_json(r));
        ncg_report_free(r);
        s
    };
    assert_eq!(run(), run());
    unsafe { ncg_problem_free(p) };
}

#[test]
fn errors_map_to_status_codes() {
    unsafe {
        let mut p = ptr::null_mut();
        assert_eq!(ncg_problem_new(ptr::null(), 0, 0, &mut p), NcgStatus::NullPointer);
        assert!(last_error().contains("key"));
        assert_eq!(ncg_problem_new(c("nope").as_ptr(), 0, 0, &mut p), NcgStatus::InvalidArgument);
        assert!(last_error().contains("nope"));
        assert!(p.is_null());
        assert_eq!(ncg_problem_new(c("trig").as_ptr(), 0, 0, ptr::null_mut()), NcgStatus::NullPointer);

        let p = problem("trig", 4, 0);
        let mut r = ptr::null_mut();
        assert_eq!(ncg_solve(p, c("newton").as_ptr(), ptr::null(), ptr::null(), 0, &mut r), NcgStatus::InvalidArgument);

        let x = [0.0; 3];
        assert_eq!(ncg_solve(p, c("gd").as_ptr(), ptr::null(), x.as_ptr(), 3, &mut r), NcgStatus::InvalidArgument);
        assert!(last_error().contains("length 3"));

        let bad = NcgSolveOptions { eps1: -1.0, ..ncg_solve_options_default() };
        assert_eq!(ncg_solve(p, c("ncg-a1").as_ptr(), &bad, ptr::null(), 0, &mut r), NcgStatus::Config);

        let capped = NcgSolveOptions { max_iters: 1, ..ncg_solve_options_default() };
        assert_eq!(ncg_solve(p, c("ncg-a1").as_ptr(), &capped, ptr::null(), 0, &mut r), NcgStatus::BoundExceeded);
        assert!(r.is_null());

        let mut small = [0.0; 2];
        assert_eq!(ncg_problem_initial_point(p, small.as_mut_ptr(), 2), NcgStatus::BufferTooSmall);
        assert_eq!(small, [0.0; 2]);

        // Success clears the message.
        let mut full = [0.0; 4];
        assert_eq!(ncg_problem_initial_point(p, full.as_mut_ptr(), 4), NcgStatus::Ok);
        assert!(ncg_last_error().is_null());

        assert_eq!(ncg_report_certified(ptr::null()), -1);
        assert!(ncg_report_f_final(ptr::null()).is_nan());
        assert!(ncg_report_json(ptr::null()).is_null());
        assert_eq!(ncg_problem_dim(ptr::null()), 0);
        ncg_report_free(ptr::null_mut());
        ncg_string_free(ptr::null_mut());
        ncg_problem_free(p);
    }
}

#[test]
fn finite_sum_solver() {
    let p = problem("finitesum-sigmoid", 0, 2);
    unsafe {
        let opts = NcgSolveOptions { eps1: 0.1, eps2: 0.3, s1: 100, s2: 100, seed: 1, ..ncg_solve_options_default() };
        let mut r = ptr::null_mut();
        assert_eq!(ncg_solve(p, c("sncg").as_ptr(), &opts, ptr::null(), 0, &mut r), NcgStatus::Ok);
        assert!(ncg_report_grad_evals(r) > 0);
        ncg_report_free(r);
        ncg_problem_free(p);
    }
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(ncg_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

const EXPORTS: &[&str] = &[
    "ncg_version",
    "ncg_last_error",
    "ncg_problem_new",
    "ncg_problem_free",
    "ncg_problem_dim",
    "ncg_problem_initial_point",
    "ncg_problem_value",
    "ncg_problem_gradient",
    "ncg_solve_options_default",
    "ncg_solve",
    "ncg_report_free",
    "ncg_report_iters",
    "ncg_report_f_final",
    "ncg_report_hvp_evals",
    "ncg_report_grad_evals",
    "ncg_report_certified",
    "ncg_report_final_point",
    "ncg_report_json",
    "ncg_report_trace_csv",
    "ncg_string_free",
];

fn header() -> String {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/ncgopt.h");
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn header_declares_every_export() {
    let h = header();
    for name in EXPORTS {
        assert!(h.contains(&format!("{name}(")), "{name} missing from header");
    }
    assert!(h.contains("typedef struct NcgProblem NcgProblem;"));
    assert!(h.contains("NCG_STATUS_BOUND_EXCEEDED = 8"));
}

/// The header must compile as C and as C++ when a compiler is installed.
#[test]
fn header_compiles() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"ncgopt.h\"\n\
         int probe(void) {\n\
           NcgSolveOptions o = ncg_solve_options_default();\n\
           NcgProblem *p = 0; NcgReport *r = 0;\n\
           if (ncg_problem_new(\"trig\", 0, 0, &p) != NCG_STATUS_OK) return 1;\n\
           NcgStatus s = ncg_solve(p, \"ncg-a1\", &o, 0, 0, &r);\n\
           ncg_report_free(r); ncg_problem_free(p);\n\
           return (int)s;\n\
         }\n",
    )
    .unwrap();
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    for (compiler, lang) in [("cc", "c"), ("c++", "c++")] {
        let out = match Command::new(compiler)
            .args(["-fsyntax-only", "-Wall", "-Werror", "-x", lang])
            .arg("-I")
            .arg(&include)
            .arg(&src)
            .output()
        {
            Ok(o) => o,
            Err(_) => {
                eprintln!("{compiler} not found; skipping");
                continue;
            }
        };
        assert!(out.status.success(), "{compiler}: {}", String::from_utf8_lossy(&out.stderr));
    }
}
