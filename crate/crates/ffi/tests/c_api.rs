use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use hrc::dataset::write_observations;
use hrc::synth::{population_rule, proportional_menu_sizes, sample_dataset, GeneratorSpec};
use hrc::universe::ChoiceUniverse;
use hrc_ffi::*;

fn write_data(dir: &Path) -> PathBuf {
    let u = ChoiceUniverse::indexed(5).unwrap();
    let rule = population_rule(&u, &GeneratorSpec::co_mixture(1.0).unwrap()).unwrap();
    let obs = sample_dataset(&rule, &proportional_menu_sizes(&u, 4000), "low", 4);
    let path = dir.join("data.csv");
    write_observations(std::fs::File::create(&path).unwrap(), &obs).unwrap();
    path
}

#[test]
fn round_trip_through_handles() {
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(write_data(dir.path()).to_str().unwrap()).unwrap();
    unsafe {
        let mut ds = ptr::null_mut();
        assert_eq!(hrc_dataset_load(path.as_ptr(), 0, &mut ds), HrcStatus::Ok);
        assert_eq!(hrc_dataset_len(ds), 4000);

        let mut rule = ptr::null_mut();
        let missing = CString::new("high").unwrap();
        assert_eq!(hrc_dataset_rule(ds, missing.as_ptr(), &mut rule), HrcStatus::InputError);
        assert!(!hrc_last_error().is_null());
        assert_eq!(hrc_dataset_rule(ds, ptr::null(), &mut rule), HrcStatus::Ok);
        assert_eq!(hrc_rule_items(rule), 5);

        let mut f = 0.0;
        assert_eq!(hrc_rule_frequency(rule, 5, 31, &mut f), HrcStatus::Ok);
        assert!(f > 0.0 && f < 1.0);
        assert_eq!(hrc_rule_frequency(rule, 0, 2, &mut f), HrcStatus::InvalidArgument);

        let mut json = ptr::null_mut();
        let la = CString::new("la").unwrap();
        assert_eq!(hrc_calibrate_json(rule, la.as_ptr(), &mut json), HrcStatus::Ok);
        let text = CStr::from_ptr(json).to_str().unwrap();
        assert!(text.contains("\"well_definedness\""));
        hrc_string_free(json);

        let eu = CString::new("eu").unwrap();
        let mut report = ptr::null_mut();
        assert_eq!(hrc_test_run(rule, la.as_ptr(), eu.as_ptr(), -1.0, 20, 3, &mut report), HrcStatus::Ok);
        let p = hrc_report_p_value(report);
        assert!((0.0..=1.0).contains(&p));
        assert!(hrc_report_statistic(report) >= 0.0);
        let rj = hrc_report_to_json(report);
        assert!(CStr::from_ptr(rj).to_str().unwrap().contains("p_value"));
        hrc_string_free(rj);
        hrc_report_free(report);

        let bogus = CString::new("xyz").unwrap();
        assert_eq!(hrc_test_run(rule, bogus.as_ptr(), eu.as_ptr(), 0.0, 20, 3, &mut report), HrcStatus::InvalidArgument);

        hrc_rule_free(rule);
        hrc_dataset_free(ds);
    }
}

#[test]
fn null_and_missing_inputs() {
    unsafe {
        let mut ds = ptr::null_mut();
        assert_eq!(hrc_dataset_load(ptr::null(), 0, &mut ds), HrcStatus::InvalidArgument);
        let nope = CString::new("/nonexistent/file.csv").unwrap();
        assert_eq!(hrc_dataset_load(nope.as_ptr(), 0, &mut ds), HrcStatus::InputError);
        assert!(ds.is_null());
        hrc_dataset_free(ptr::null_mut());
        let v = CStr::from_ptr(hrc_version()).to_str().unwrap();
        assert_eq!(v, env!("CARGO_PKG_VERSION"));
    }
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/hrc.h")).unwrap();
    for name in [
        "hrc_version",
        "hrc_last_error",
        "hrc_dataset_load",
        "hrc_dataset_free",
        "hrc_dataset_rule",
        "hrc_rule_frequency",
        "hrc_calibrate_json",
        "hrc_test_run",
        "hrc_report_to_json",
        "hrc_string_free",
        "HRC_STATUS_INPUT_ERROR",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
}

const C_PROGRAM: &str = r#"
#include <stdio.h>
#include "hrc.h"

int main(int argc, char **argv) {
    HrcDataset *ds = NULL;
    HrcRule *rule = NULL;
    HrcReport *report = NULL;
    if (hrc_dataset_load(argv[1], 0, &ds) != HRC_STATUS_OK) { fprintf(stderr, "%s\n", hrc_last_error()); return 1; }
    if (hrc_dataset_rule(ds, NULL, &rule) != HRC_STATUS_OK) return 2;
    if (hrc_test_run(rule, "fc", "all", 0.0, 10, 1, &report) != HRC_STATUS_OK) { fprintf(stderr, "%s\n", hrc_last_error()); return 3; }
    printf("%s %.6f\n", hrc_version(), hrc_report_p_value(report));
    hrc_report_free(report);
    hrc_rule_free(rule);
    hrc_dataset_free(ds);
    return argc == 2 ? 0 : 4;
}
"#;

#[test]
fn c_program_links_against_the_library() {
    let Some(cc) = ["cc", "gcc", "clang"].into_iter().find(|c| Command::new(c).arg("--version").output().is_ok()) else {
        println!("c_program_links_against_the_library: no C compiler on PATH, not run");
        return;
    };
    let lib_dir = std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf();
    assert!(lib_dir.join("libhrc_ffi.so").exists() || lib_dir.join("libhrc_ffi.dylib").exists(), "cdylib not built in {lib_dir:?}");
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(&src, C_PROGRAM).unwrap();
    let exe = dir.path().join("main");
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let status = Command::new(cc)
        .arg(&src)
        .arg("-I")
        .arg(&include)
        .arg("-L")
        .arg(&lib_dir)
        .arg("-lhrc_ffi")
        .arg("-o")
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success());
    let data = write_data(dir.path());
    let out = Command::new(&exe).arg(&data).env("LD_LIBRARY_PATH", &lib_dir).env("DYLD_LIBRARY_PATH", &lib_dir).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let line = String::from_utf8(out.stdout).unwrap();
    assert!(line.starts_with(env!("CARGO_PKG_VERSION")));
}
