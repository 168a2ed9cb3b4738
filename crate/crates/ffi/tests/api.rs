use std::ffi::{CStr, CString};
use std::process::Command;
use std::ptr;

use pmdrift_ffi::*;

const SUITE: &str = r#"
schema = 1

[[scenario]]
id = "tiny"
length = 1.0
final_time = 0.005
boundary = "dirichlet-zero"
ladder = [16, 24]
solver = { m = 1.5 }
measure.atoms = [{ x = [0.5, 0.5], t = 0.001, mass = 1.0 }]
"#;

fn last_error() -> String {
    let mut need = 0;
    unsafe {
        assert_eq!(pmd_last_error(ptr::null_mut(), 0, &mut need), PmdStatus::BufferTooSmall);
        let mut buf = vec![0u8; need];
        assert_eq!(pmd_last_error(buf.as_mut_ptr().cast(), buf.len(), &mut need), PmdStatus::Ok);
        CStr::from_bytes_with_nul(&buf).unwrap().to_str().unwrap().to_owned()
    }
}

fn suite() -> *mut PmdSuite {
    let text = CString::new(SUITE).unwrap();
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { pmd_suite_parse(text.as_ptr(), &mut s) }, PmdStatus::Ok);
    s
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(pmd_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn classify_matches_the_core_crate() {
    let mut v = PmdVerdict {
        scaling_sum: 0.0,
        plain: PmdLevel::NotApplicable,
        sigma: PmdLevel::NotApplicable,
        theorems: 0,
        near_boundary: false,
    };
    // (1/4, 1/2) sits on the line for m = 1.5, d = 2
    assert_eq!(unsafe { pmd_classify(1.5, 2, 0.25, 0.5, false, &mut v) }, PmdStatus::Ok);
    assert_eq!(v.plain, PmdLevel::OnLine);
    assert!((v.scaling_sum - 2.0).abs() < 1e-12);
    assert_ne!(v.theorems & PMD_PME_ADMISSIBLE, 0);
    assert_eq!(v.sigma, PmdLevel::NotApplicable);

    assert_eq!(unsafe { pmd_classify(1.5, 2, 0.0, 1.0, true, &mut v) }, PmdStatus::Ok);
    assert_eq!(v.sigma, PmdLevel::OnLine);
}

#[test]
fn bad_arguments_set_the_last_error() {
    let mut v = std::mem::MaybeUninit::<PmdVerdict>::uninit();
    assert_eq!(unsafe { pmd_classify(-1.0, 2, 0.1, 0.1, false, v.as_mut_ptr()) }, PmdStatus::InvalidArgument);
    assert!(!last_error().is_empty());
    assert_eq!(unsafe { pmd_classify(1.5, 2, 0.1, 0.1, false, ptr::null_mut()) }, PmdStatus::NullPointer);
    assert!(last_error().contains("out"));

    let text = CString::new("schema = 7").unwrap();
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { pmd_suite_parse(text.as_ptr(), &mut s) }, PmdStatus::Config);
    assert!(s.is_null());
    assert!(last_error().contains("schema"));

    let path = CString::new("/nonexistent/suite.toml").unwrap();
    assert_eq!(unsafe { pmd_suite_load(path.as_ptr(), &mut s) }, PmdStatus::Config);

    let s = suite();
    let id = CString::new("missing").unwrap();
    let mut run = ptr::null_mut();
    assert_eq!(unsafe { pmd_run_grid(s, id.as_ptr(), 0, &mut run) }, PmdStatus::InvalidArgument);
    assert!(run.is_null());
    unsafe { pmd_suite_free(s) };
}

#[test]
fn load_reads_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("s.toml");
    std::fs::write(&p, SUITE).unwrap();
    let path = CString::new(p.to_str().unwrap()).unwrap();
    let mut s = ptr::null_mut();
    let mut count = 0;
    unsafe {
        assert_eq!(pmd_suite_load(path.as_ptr(), &mut s), PmdStatus::Ok);
        assert_eq!(pmd_suite_count(s, &mut count), PmdStatus::Ok);
        pmd_suite_free(s);
    }
    assert_eq!(count, 1);
}

#[test]
fn run_handle_exposes_density_and_reports() {
    let s = suite();
    let id = CString::new("tiny").unwrap();
    let mut run = ptr::null_mut();
    unsafe {
        assert_eq!(pmd_run_grid(s, id.as_ptr(), 16, &mut run), PmdStatus::Ok);
        let mut sum = PmdRunSummary::default();
        assert_eq!(pmd_run_summary(run, &mut sum), PmdStatus::Ok);
        assert_eq!(sum.cells, 256);
        assert!(sum.steps > 0 && sum.sup_mass <= sum.data_mass * (1.0 + 1e-10));
        assert!(sum.budget_residual < 1e-12);

        let mut need = 0;
        let mut small = vec![0.0; 10];
        assert_eq!(pmd_run_final_density(run, small.as_mut_ptr(), small.len(), &mut need), PmdStatus::BufferTooSmall);
        assert_eq!(need, 256);
        let mut u = vec![0.0; need];
        assert_eq!(pmd_run_final_density(run, u.as_mut_ptr(), u.len(), &mut need), PmdStatus::Ok);
        assert!(u.iter().all(|v| *v >= 0.0));

        pmd_run_reports_json(run, ptr::null_mut(), 0, &mut need);
        let mut buf = vec![0u8; need];
        assert_eq!(pmd_run_reports_json(run, buf.as_mut_ptr().cast(), need, &mut need), PmdStatus::Ok);
        let json: serde_json::Value = serde_json::from_slice(&buf[..need - 1]).unwrap();
        let ids: Vec<&str> = json.as_array().unwrap().iter().map(|r| r["id"].as_str().unwrap()).collect();
        assert!(ids.contains(&"mass_bound"), "{ids:?}");

        // default grid is the finest of the ladder
        let mut fine = ptr::null_mut();
        assert_eq!(pmd_run_grid(s, ptr::null(), 0, &mut fine), PmdStatus::Ok);
        pmd_run_summary(fine, &mut sum);
        assert_eq!(sum.cells, 24 * 24);

        pmd_run_free(fine);
        pmd_run_free(run);
        pmd_suite_free(s);
        pmd_run_free(ptr::null_mut());
        pmd_suite_free(ptr::null_mut());
    }
}

/// Builds `tests/smoke.c` against the generated header and the static
/// library when a C compiler and the archive are around.
#[test]
fn c_program_links_and_runs() {
    let manifest = env!("CARGO_MANIFEST_DIR");
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().and_then(|p| p.parent()).unwrap();
    let lib = profile_dir.join("libpmdrift_ffi.a");
    if !lib.exists() || Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping: no static library at {} or no cc", lib.display());
        return;
    }
    let out = tempfile::tempdir().unwrap();
    let bin = out.path().join("smoke");
    let status = Command::new("cc")
        .args(["-std=c11", "-Wall", "-Werror", "-o"])
        .arg(&bin)
        .arg(format!("{manifest}/tests/smoke.c"))
        .arg(format!("-I{manifest}/include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm"])
        .status()
        .unwrap();
    assert!(status.success());
    let run = Command::new(&bin).output().unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stdout));
}
