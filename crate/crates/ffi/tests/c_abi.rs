use std::ffi::{c_char, CStr, CString};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use covloop_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

unsafe fn take_string(p: *mut c_char) -> String {
    let s = CStr::from_ptr(p).to_str().unwrap().to_owned();
    covloop_string_free(p);
    s
}

unsafe fn last_error() -> String {
    let p = covloop_last_error();
    assert!(!p.is_null());
    CStr::from_ptr(p).to_string_lossy().into_owned()
}

const GCOV: &str = "        -:    0:Source:t.c
        1:    1:int main(void) {
        1:    2:  int x = 0;
        1:    3:  if (x == 42)
branch  0 taken 0 (fallthrough)
branch  1 taken 1
    #####:    4:    return 1;
        1:    5:  return 0;
        -:    6:}
";

#[test]
fn total_coverage_and_errors() {
    unsafe {
        let mut out = 0.0;
        assert_eq!(covloop_total_coverage(60.0, 37.5, &mut out), CovloopStatus::Ok);
        assert_eq!(out, 48.75);
        assert!(covloop_last_error().is_null());
        assert_eq!(covloop_total_coverage(101.0, 0.0, &mut out), CovloopStatus::OutOfRange);
        assert!(last_error().contains("101"));
        assert_eq!(covloop_total_coverage(1.0, 1.0, ptr::null_mut()), CovloopStatus::NullPointer);
    }
}

#[test]
fn language_and_signature() {
    unsafe {
        let mut lang = CovloopLanguage::Python;
        assert_eq!(covloop_detect_language(c("a/prog.c").as_ptr(), &mut lang), CovloopStatus::Ok);
        assert_eq!(lang, CovloopLanguage::C);
        assert_eq!(
            covloop_detect_language(c("prog.java").as_ptr(), &mut lang),
            CovloopStatus::UnsupportedLanguage
        );
        assert_eq!(covloop_detect_language(ptr::null(), &mut lang), CovloopStatus::NullPointer);

        let mut sig = ptr::null_mut();
        let src = c("x = int(input())\ny = input()\n");
        assert_eq!(covloop_signature_extract(src.as_ptr(), CovloopLanguage::Python, &mut sig), CovloopStatus::Ok);
        assert_eq!(covloop_signature_count(sig), 2);
        let mut kind = CovloopInputKind::Char;
        assert_eq!(covloop_signature_kind(sig, 0, &mut kind), CovloopStatus::Ok);
        assert_eq!(kind, CovloopInputKind::Integer);
        assert_eq!(covloop_signature_kind(sig, 1, &mut kind), CovloopStatus::Ok);
        assert_eq!(kind, CovloopInputKind::String);
        assert_eq!(covloop_signature_kind(sig, 2, &mut kind), CovloopStatus::OutOfRange);
        assert_eq!(covloop_signature_warning_count(sig), 0);
        covloop_signature_free(sig);
    }
}

#[test]
fn report_parse_and_json_round_trip() {
    unsafe {
        let mut report = ptr::null_mut();
        assert_eq!(covloop_report_parse_gcov(c(GCOV).as_ptr(), &mut report), CovloopStatus::Ok);
        assert_eq!(covloop_report_line_coverage(report), 80.0);
        assert_eq!(covloop_report_branch_coverage(report), 50.0);
        assert_eq!(covloop_report_total_coverage(report), 65.0);
        assert_eq!(covloop_report_missing_branch_count(report), 1);

        let mut json = ptr::null_mut();
        assert_eq!(covloop_report_to_json(report, &mut json), CovloopStatus::Ok);
        let text = take_string(json);
        assert!(text.contains("\"total_coverage\": 65.00"));

        let mut back = ptr::null_mut();
        assert_eq!(covloop_report_from_json(c(&text).as_ptr(), &mut back), CovloopStatus::Ok);
        assert_eq!(covloop_report_line_coverage(back), 80.0);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/out.json");
        assert_eq!(covloop_report_emit(back, c(path.to_str().unwrap()).as_ptr()), CovloopStatus::Ok);
        assert_eq!(fs::read_to_string(&path).unwrap(), text);
        covloop_report_free(back);
        covloop_report_free(report);

        let mut bad = ptr::null_mut();
        assert_eq!(covloop_report_parse_gcov(c("garbage line").as_ptr(), &mut bad), CovloopStatus::ParseError);
        assert!(bad.is_null());
        assert!(last_error().contains("garbage line"));
        assert_eq!(covloop_report_parse_dynamic(c("{}").as_ptr(), &mut bad), CovloopStatus::ParseError);
    }
}

#[test]
fn cache_handle() {
    unsafe {
        let cache = covloop_cache_new();
        let a = [c("1"), c("a")];
        let ptrs: Vec<*const c_char> = a.iter().map(|s| s.as_ptr()).collect();
        let mut inserted = false;
        assert_eq!(covloop_cache_insert(cache, ptrs.as_ptr(), 2, &mut inserted), CovloopStatus::Ok);
        assert!(inserted);
        let b = [c(" 1 "), c("a")];
        let ptrs_b: Vec<*const c_char> = b.iter().map(|s| s.as_ptr()).collect();
        assert_eq!(covloop_cache_insert(cache, ptrs_b.as_ptr(), 2, &mut inserted), CovloopStatus::Ok);
        assert!(!inserted);
        assert_eq!(covloop_cache_len(cache), 1);

        let bad = [c("x\ny")];
        let ptrs_bad: Vec<*const c_char> = bad.iter().map(|s| s.as_ptr()).collect();
        assert_eq!(
            covloop_cache_insert(cache, ptrs_bad.as_ptr(), 1, ptr::null_mut()),
            CovloopStatus::ContractViolation
        );

        let mut summary = ptr::null_mut();
        assert_eq!(covloop_cache_summary(cache, 10, &mut summary), CovloopStatus::Ok);
        assert_eq!(take_string(summary), "(1, a)");

        let dir = tempfile::tempdir().unwrap();
        assert_eq!(covloop_cache_persist(cache, c(dir.path().to_str().unwrap()).as_ptr(), 0), CovloopStatus::Ok);
        assert_eq!(fs::read_to_string(dir.path().join("test_0000.txt")).unwrap(), "1\na\n");
        covloop_cache_free(cache);
    }
}

#[test]
fn run_loop_through_abi() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("x42.c");
    fs::write(
        &src,
        "#include <stdio.h>\nint main(void) {\n  int x = 0;\n  scanf(\"%d\", &x);\n  if (x == 42) {\n    printf(\"hit\\n\");\n  }\n  return 0;\n}\n",
    )
    .unwrap();
    let work = dir.path().join("work");
    unsafe {
        let opts = covloop_run_options_default();
        assert_eq!(opts.k_max, 10);
        assert_eq!(opts.threshold, 90.0);
        let mut result = ptr::null_mut();
        let status = covloop_run_loop(
            c(src.to_str().unwrap()).as_ptr(),
            c(work.to_str().unwrap()).as_ptr(),
            &opts,
            &mut result,
        );
        assert_eq!(status, CovloopStatus::Ok);
        assert_eq!(covloop_run_result_termination(result), CovloopTermination::ThresholdMet);
        assert!(covloop_run_result_iterations(result) <= 3);
        let report = covloop_run_result_report(result);
        assert_eq!(covloop_report_branch_coverage(report), 100.0);
        let mut json = ptr::null_mut();
        assert_eq!(covloop_run_result_to_json(result, &mut json), CovloopStatus::Ok);
        assert!(take_string(json).contains("\"termination\": \"threshold_met\""));
        covloop_run_result_free(result);

        let mut none = ptr::null_mut();
        let status = covloop_run_loop(
            c(dir.path().join("missing.c").to_str().unwrap()).as_ptr(),
            c(work.to_str().unwrap()).as_ptr(),
            ptr::null(),
            &mut none,
        );
        assert_eq!(status, CovloopStatus::RunError);
        assert!(none.is_null());
    }
}

fn header() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include/covloop.h")
}

/// Directory holding the built library artifacts.
fn artifact_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().and_then(Path::parent).unwrap().to_path_buf()
}

#[test]
fn header_is_valid_c() {
    let status = Command::new("gcc")
        .args(["-std=c99", "-Wall", "-Wextra", "-Werror", "-fsyntax-only", "-x", "c"])
        .arg(header())
        .status()
        .unwrap();
    assert!(status.success());
    let text = fs::read_to_string(header()).unwrap();
    for sym in ["covloop_run_loop", "covloop_cache_insert", "covloop_last_error", "COVLOOP_STATUS_OK"] {
        assert!(text.contains(sym), "{sym} missing from header");
    }
}

const C_CLIENT: &str = r#"
#include <stdio.h>
#include <string.h>
#include "covloop.h"

int main(void) {
  double total = 0;
  if (covloop_total_coverage(60.0, 37.5, &total) != COVLOOP_STATUS_OK || total != 48.75) return 1;
  if (covloop_total_coverage(-1.0, 0.0, &total) != COVLOOP_STATUS_OUT_OF_RANGE) return 2;
  if (covloop_last_error() == NULL) return 3;

  CovloopCache *cache = covloop_cache_new();
  const char *tc[] = {"7", "z"};
  bool inserted = false;
  covloop_cache_insert(cache, tc, 2, &inserted);
  if (!inserted) return 4;
  covloop_cache_insert(cache, tc, 2, &inserted);
  if (inserted || covloop_cache_len(cache) != 1) return 5;
  char *summary = NULL;
  covloop_cache_summary(cache, 5, &summary);
  if (strcmp(summary, "(7, z)") != 0) return 6;
  covloop_string_free(summary);
  covloop_cache_free(cache);

  CovloopSignature *sig = NULL;
  covloop_signature_extract("scanf(\"%d %s\", &a, s);", COVLOOP_LANGUAGE_C, &sig);
  CovloopInputKind kind;
  if (covloop_signature_count(sig) != 2) return 7;
  covloop_signature_kind(sig, 1, &kind);
  if (kind != COVLOOP_INPUT_KIND_STRING) return 8;
  covloop_signature_free(sig);
  puts("ok");
  return 0;
}
"#;

#[test]
fn c_client_links_against_static_library() {
    let lib = artifact_dir().join("libcovloop_ffi.a");
    assert!(lib.is_file(), "{} not built", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("client.c");
    let exe = dir.path().join("client");
    fs::write(&src, C_CLIENT).unwrap();
    let out = Command::new("gcc")
        .args(["-std=c99", "-Wall", "-Werror"])
        .arg("-I")
        .arg(header().parent().unwrap())
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = Command::new(&exe).output().unwrap();
    assert_eq!(run.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&run.stdout), "ok\n");
}
