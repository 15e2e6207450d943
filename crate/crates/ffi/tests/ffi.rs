use std::ffi::{c_char, c_int, CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use possg_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(possg_last_error_message()) }.to_string_lossy().into_owned()
}

struct Fixture {
    space: *mut PossgSpace,
    gen: *mut PossgGenerator,
}

impl Fixture {
    fn new(weights: &[f64], matrix: &[f64]) -> Self {
        let mut space = ptr::null_mut();
        let mut gen = ptr::null_mut();
        unsafe {
            assert_eq!(possg_space_new(weights.as_ptr(), weights.len(), &mut space), PossgStatus::Ok);
            assert_eq!(possg_generator_new(space, matrix.as_ptr(), &mut gen), PossgStatus::Ok);
        }
        Self { space, gen }
    }
}

impl Drop for Fixture {
    fn drop(&mut self) {
        unsafe {
            possg_generator_free(self.gen);
            possg_space_free(self.space);
        }
    }
}

fn two_state() -> Fixture {
    Fixture::new(&[1.0, 1.0], &[-1.0, 1.0, 1.0, -1.0])
}

#[test]
fn semigroup_matches_closed_form() {
    let f = two_state();
    let mut out = [0.0; 2];
    let status = unsafe { possg_semigroup_apply(f.gen, 0.7, [1.0, 0.0].as_ptr(), out.as_mut_ptr()) };
    assert_eq!(status, PossgStatus::Ok);
    let e = (-1.4f64).exp();
    assert!((out[0] - 0.5 * (1.0 + e)).abs() < 1e-12);
    assert!((out[1] - 0.5 * (1.0 - e)).abs() < 1e-12);
    assert_eq!(last_error(), "");
}

#[test]
fn resolvent_and_euler() {
    let f = two_state();
    let u = [1.0, 0.0];
    let mut r = [0.0; 2];
    unsafe { assert_eq!(possg_resolvent_apply(f.gen, 1.0, 1, u.as_ptr(), r.as_mut_ptr()), PossgStatus::Ok) };
    // (1 - G)^{-1} e_0 = [2/3, 1/3]
    assert!((r[0] - 2.0 / 3.0).abs() < 1e-14 && (r[1] - 1.0 / 3.0).abs() < 1e-14);

    let mut e = [0.0; 2];
    unsafe { assert_eq!(possg_euler_formula(f.gen, 1.0, 1, u.as_ptr(), e.as_mut_ptr()), PossgStatus::Ok) };
    assert_eq!(e, r);

    unsafe { assert_eq!(possg_resolvent_apply(f.gen, 0.0, 1, u.as_ptr(), r.as_mut_ptr()), PossgStatus::Singular) };
    assert!(!last_error().is_empty());
    unsafe { assert_eq!(possg_resolvent_apply(f.gen, 1.0, 0, u.as_ptr(), r.as_mut_ptr()), PossgStatus::InvalidArgument) };
}

#[test]
fn pairing_norm_and_adjoint() {
    let f = Fixture::new(&[0.5, 2.0], &[-1.0, 3.0, 0.25, -0.5]);
    let (a, b) = ([1.0, 2.0], [3.0, -1.0]);
    let mut pairing = 0.0;
    unsafe { assert_eq!(possg_dual_pairing(f.space, a.as_ptr(), b.as_ptr(), &mut pairing), PossgStatus::Ok) };
    assert!((pairing - (1.5 - 4.0)).abs() < 1e-15);

    let mut norm = 0.0;
    unsafe { assert_eq!(possg_lp_norm(f.space, b.as_ptr(), 1.0, &mut norm), PossgStatus::Ok) };
    assert!((norm - 3.5).abs() < 1e-15);
    unsafe { assert_eq!(possg_lp_norm(f.space, b.as_ptr(), f64::INFINITY, &mut norm), PossgStatus::Ok) };
    assert_eq!(norm, 3.0);
    unsafe { assert_eq!(possg_lp_norm(f.space, b.as_ptr(), 0.5, &mut norm), PossgStatus::InvalidArgument) };

    let mut adj = ptr::null_mut();
    let mut m = [0.0; 4];
    unsafe {
        assert_eq!(possg_weighted_adjoint(f.gen, &mut adj), PossgStatus::Ok);
        assert_eq!(possg_generator_matrix(adj, m.as_mut_ptr()), PossgStatus::Ok);
        possg_generator_free(adj);
    }
    // G^sigma_ij = G_ji m_j / m_i
    assert_eq!(m, [-1.0, 0.25 * 2.0 / 0.5, 3.0 * 0.5 / 2.0, -0.5]);
}

#[test]
fn positivity_growth_and_kernel() {
    let f = Fixture::new(&[1.0, 2.0], &[-2.0, 2.0, 1.0, -1.0]);
    let mut metzler = 0;
    let (mut m, mut omega) = (0.0, 0.0);
    let mut k = [0.0; 4];
    unsafe {
        assert_eq!(possg_positivity_check(f.gen, &mut metzler), PossgStatus::Ok);
        assert_eq!(possg_growth_bound(f.gen, f64::INFINITY, &mut m, &mut omega), PossgStatus::Ok);
        assert_eq!(possg_extract_kernel(f.gen, 0.5, k.as_mut_ptr()), PossgStatus::Ok);
    }
    assert_eq!(metzler, 1);
    assert_eq!(m, 1.0);
    assert!(omega.abs() < 1e-15);
    // rows of the kernel integrate to 1 against the weights
    assert!((k[0] + 2.0 * k[1] - 1.0).abs() < 1e-12);
    assert!((k[2] + 2.0 * k[3] - 1.0).abs() < 1e-12);

    let bad = Fixture::new(&[1.0, 1.0], &[-1.0, -0.5, 1.0, -1.0]);
    unsafe {
        assert_eq!(possg_positivity_check(bad.gen, &mut metzler), PossgStatus::Ok);
        assert_eq!(possg_extract_kernel(bad.gen, 0.1, k.as_mut_ptr()), PossgStatus::Ok);
    }
    assert_eq!(metzler, 0);
    assert!(k[1] < 0.0);
}

#[test]
fn generator_from_form_is_conservative() {
    let mut space = ptr::null_mut();
    let mut gen = ptr::null_mut();
    let coeffs = [1.0, -1.0, -1.0, 1.0];
    let mut out = [0.0; 2];
    unsafe {
        assert_eq!(possg_space_new([1.0, 3.0].as_ptr(), 2, &mut space), PossgStatus::Ok);
        assert_eq!(possg_space_len(space), 2);
        assert_eq!(possg_generator_from_form(space, coeffs.as_ptr(), &mut gen), PossgStatus::Ok);
        assert_eq!(possg_semigroup_apply(gen, 2.0, [1.0, 1.0].as_ptr(), out.as_mut_ptr()), PossgStatus::Ok);
        possg_generator_free(gen);
        possg_space_free(space);
    }
    assert!(out.iter().all(|x| (x - 1.0).abs() < 1e-12));
}

#[test]
fn bad_inputs_map_to_status_codes() {
    let mut space = ptr::null_mut();
    unsafe {
        assert_eq!(possg_space_new(ptr::null(), 2, &mut space), PossgStatus::NullPointer);
        assert_eq!(possg_space_new([1.0].as_ptr(), 0, &mut space), PossgStatus::Dimension);
        assert_eq!(possg_space_new([-1.0].as_ptr(), 1, &mut space), PossgStatus::InvalidArgument);
        assert_eq!(possg_space_new([1.0].as_ptr(), 1, ptr::null_mut()), PossgStatus::NullPointer);
        assert_eq!(possg_space_len(ptr::null()), 0);
        possg_space_free(ptr::null_mut());
        possg_generator_free(ptr::null_mut());
        possg_string_free(ptr::null_mut());
    }
    assert!(last_error().contains("out"));
    let f = two_state();
    let mut out = [0.0; 2];
    unsafe {
        assert_eq!(possg_semigroup_apply(f.gen, -1.0, [1.0, 0.0].as_ptr(), out.as_mut_ptr()), PossgStatus::InvalidArgument);
        assert_eq!(possg_semigroup_apply(ptr::null(), 1.0, [1.0, 0.0].as_ptr(), out.as_mut_ptr()), PossgStatus::NullPointer);
    }
}

fn run_json(text: &str, seed: Option<u64>) -> (PossgStatus, Option<String>, c_int) {
    let json = CString::new(text).unwrap();
    let mut report: *mut c_char = ptr::null_mut();
    let mut passed = -1;
    let status = unsafe {
        possg_run_scenario_json(json.as_ptr(), seed.unwrap_or(0), c_int::from(seed.is_some()), &mut report, &mut passed)
    };
    let text = (!report.is_null()).then(|| {
        let s = unsafe { CStr::from_ptr(report) }.to_string_lossy().into_owned();
        unsafe { possg_string_free(report) };
        s
    });
    (status, text, passed)
}

fn scenario_text(name: &str) -> String {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/scenarios").join(name);
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn scenarios_run_through_json() {
    let (status, report, passed) = run_json(&scenario_text("equivalence_2x2.json"), None);
    assert_eq!(status, PossgStatus::Ok);
    assert_eq!(passed, 1);
    let report: serde_json::Value = serde_json::from_str(&report.unwrap()).unwrap();
    assert_eq!(report["passed"], true);

    let (status, _, passed) = run_json(&scenario_text("forced_failure.json"), None);
    assert_eq!(status, PossgStatus::Ok);
    assert_eq!(passed, 0);

    let (a, b) = (run_json(&scenario_text("jump_path5.json"), Some(9)), run_json(&scenario_text("jump_path5.json"), Some(9)));
    assert_eq!(a.1, b.1);

    let (status, report, _) = run_json("{\"schema_version\": 1,", None);
    assert_eq!(status, PossgStatus::Parse);
    assert!(report.is_none());
    assert!(last_error().contains("parse error"));
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(possg_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

/// `target/<profile>` next to the running test binary.
fn profile_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().and_then(Path::parent).unwrap().to_path_buf()
}

#[test]
fn c_program_links_against_the_static_library() {
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    let lib = profile_dir().join("libpossg_ffi.a");
    assert!(lib.exists(), "{} not built", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let build = Command::new("cc")
        .arg(manifest.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lm", "-lpthread", "-ldl", "-o"])
        .arg(&exe)
        .output()
        .expect("C compiler runs");
    assert!(build.status.success(), "{}", String::from_utf8_lossy(&build.stderr));
    let run = Command::new(&exe).output().unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert_eq!(String::from_utf8_lossy(&run.stdout), "ok\n");
}
