use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::ptr;

use uniweb_ffi::*;

fn mini() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/mini")
}

fn cstr(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

fn take_string(p: *mut std::ffi::c_char) -> String {
    assert!(!p.is_null());
    let s = unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_owned();
    unsafe { uw_string_free(p) };
    s
}

fn last_error() -> Option<String> {
    let p = uw_last_error_message();
    (!p.is_null()).then(|| take_string(p))
}

#[test]
fn growth_matches_closed_form() {
    let mut g = 0.0;
    assert_eq!(
        unsafe { uw_growth_rate(100.0, 121.0, 2, &mut g) },
        UwStatus::Ok
    );
    assert!((g - 10.0).abs() < 1e-12);
    assert_eq!(last_error(), None);
    assert_eq!(
        unsafe { uw_growth_rate(0.0, 5.0, 2, &mut g) },
        UwStatus::Undefined
    );
    assert!(last_error().is_some());
    assert_eq!(
        unsafe { uw_growth_rate(-1.0, 5.0, 2, &mut g) },
        UwStatus::InvalidArgument
    );
    assert_eq!(
        unsafe { uw_growth_rate(1.0, 5.0, 0, &mut g) },
        UwStatus::InvalidArgument
    );
}

#[test]
fn null_outputs_are_rejected() {
    assert_eq!(
        unsafe { uw_wif(10.0, 5.0, ptr::null_mut()) },
        UwStatus::InvalidArgument
    );
    assert!(last_error().unwrap().contains("out"));
}

#[test]
fn wif_and_ratio() {
    let mut w = 0.0;
    assert_eq!(unsafe { uw_wif(200.0, 50.0, &mut w) }, UwStatus::Ok);
    assert_eq!(w, 0.25);
    assert_eq!(unsafe { uw_wif(0.0, 50.0, &mut w) }, UwStatus::Undefined);

    let (mut pct, mut flag) = (0.0, UwConsistency::Consistent);
    assert_eq!(
        unsafe { uw_internal_general_ratio(400.0, 380.0, &mut pct, &mut flag) },
        UwStatus::Ok
    );
    assert!((pct - 100.0 * 400.0 / 380.0).abs() < 1e-12);
    assert_eq!(flag, UwConsistency::Inconsistent);
    assert_eq!(
        unsafe { uw_internal_general_ratio(5.0, 0.0, &mut pct, &mut flag) },
        UwStatus::Undefined
    );
    assert_eq!(flag, UwConsistency::UndefinedRatio);
}

#[test]
fn spearman_of_monotone_and_reversed() {
    let x = [1.0, 2.0, 3.0, 4.0];
    let up = [10.0, 20.0, 25.0, 100.0];
    let down = [4.0, 3.0, 2.0, 1.0];
    let mut rho = 0.0;
    assert_eq!(
        unsafe { uw_spearman(x.as_ptr(), up.as_ptr(), 4, &mut rho) },
        UwStatus::Ok
    );
    assert!((rho - 1.0).abs() < 1e-12);
    assert_eq!(
        unsafe { uw_spearman(x.as_ptr(), down.as_ptr(), 4, &mut rho) },
        UwStatus::Ok
    );
    assert!((rho + 1.0).abs() < 1e-12);
    let flat = [7.0; 4];
    assert_eq!(
        unsafe { uw_spearman(x.as_ptr(), flat.as_ptr(), 4, &mut rho) },
        UwStatus::Undefined
    );
    assert_eq!(
        unsafe { uw_spearman(x.as_ptr(), up.as_ptr(), 2, &mut rho) },
        UwStatus::Validation
    );
}

#[test]
fn pca_components_are_orthonormal() {
    let x = [1.0, 2.0, 3.0, 4.0, 6.0];
    let y = [2.0, 1.0, 4.0, 3.0, 7.0];
    let mut out = UwPca::default();
    assert_eq!(
        unsafe { uw_pca(x.as_ptr(), y.as_ptr(), 5, UwPcaMode::Correlation, &mut out) },
        UwStatus::Ok
    );
    let c = out.components;
    assert!((c[0] * c[0] + c[1] * c[1] - 1.0).abs() < 1e-12);
    assert!((c[0] * c[2] + c[1] * c[3]).abs() < 1e-12);
    assert!((out.explained_variance[0] + out.explained_variance[1] - 100.0).abs() < 1e-9);
    // correlation mode: eigenvalues are 1 +- r and sum to 2
    assert!((out.eigenvalues[0] + out.eigenvalues[1] - 2.0).abs() < 1e-12);
}

#[test]
fn registry_handle_lifecycle() {
    let path = cstr(&mini().join("registry.csv"));
    let mut reg = ptr::null_mut();
    assert_eq!(
        unsafe { uw_registry_load(path.as_ptr(), &mut reg) },
        UwStatus::Ok
    );
    let mut summary = UwRegistrySummary::default();
    assert_eq!(
        unsafe { uw_registry_summary(reg, &mut summary) },
        UwStatus::Ok
    );
    assert_eq!(
        (
            summary.universities,
            summary.units,
            summary.admitted_urls,
            summary.rejected_urls
        ),
        (3, 12, 18, 3)
    );
    let mut hash = ptr::null_mut();
    assert_eq!(unsafe { uw_registry_hash(reg, &mut hash) }, UwStatus::Ok);
    assert!(take_string(hash).starts_with("e30a7cc2"));
    unsafe { uw_registry_free(reg) };
    unsafe { uw_registry_free(ptr::null_mut()) };
}

#[test]
fn registry_errors_map_to_status() {
    let missing = cstr(Path::new("/nonexistent/registry.csv"));
    let mut reg = ptr::null_mut();
    assert_eq!(
        unsafe { uw_registry_load(missing.as_ptr(), &mut reg) },
        UwStatus::Io
    );
    assert!(reg.is_null());

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(
        &bad,
        "university_id,unit_id,unit_type,activity,nature,url,url_role,redirect_target,status\n\
         ub,lib,libary,,,biblioteca.ub.edu,unit,,\n",
    )
    .unwrap();
    let bad = cstr(&bad);
    assert_eq!(
        unsafe { uw_registry_load(bad.as_ptr(), &mut reg) },
        UwStatus::Validation
    );
    assert!(last_error().unwrap().contains("row 2"));
    assert_eq!(
        unsafe { uw_registry_load(ptr::null(), &mut reg) },
        UwStatus::InvalidArgument
    );
}

#[test]
fn report_run_writes_files_and_hash() {
    let path = cstr(&mini().join("registry.csv"));
    let mut reg = ptr::null_mut();
    assert_eq!(
        unsafe { uw_registry_load(path.as_ptr(), &mut reg) },
        UwStatus::Ok
    );
    let snaps = cstr(&mini());
    let hashes: Vec<String> = (0..2)
        .map(|_| {
            let out = tempfile::tempdir().unwrap();
            let out_c = cstr(out.path());
            let mut hash = ptr::null_mut();
            let status = unsafe { uw_report_run(reg, snaps.as_ptr(), out_c.as_ptr(), &mut hash) };
            assert_eq!(status, UwStatus::Ok, "{:?}", last_error());
            assert!(out.path().join("aggregates.csv").exists());
            take_string(hash)
        })
        .collect();
    assert_eq!(hashes[0], hashes[1]);

    let empty = tempfile::tempdir().unwrap();
    let empty_c = cstr(empty.path());
    let out = tempfile::tempdir().unwrap();
    let out_c = cstr(out.path());
    let status = unsafe { uw_report_run(reg, empty_c.as_ptr(), out_c.as_ptr(), ptr::null_mut()) };
    assert_eq!(status, UwStatus::Validation);
    unsafe { uw_registry_free(reg) };
}
