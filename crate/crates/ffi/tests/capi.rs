use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use shockstab_ffi::*;

fn model(name: &str) -> *mut ShockstabModel {
    let name = CString::new(name).unwrap();
    let mut m = ptr::null_mut();
    let st = unsafe { shockstab_model_from_registry(name.as_ptr(), &mut m) };
    assert_eq!(st, ShockstabStatus::Ok);
    assert!(!m.is_null());
    m
}

fn profile(m: *const ShockstabModel) -> *mut ShockstabProfile {
    let mut p = ptr::null_mut();
    assert_eq!(unsafe { shockstab_profile_solve(m, &mut p) }, ShockstabStatus::Ok);
    p
}

fn last_error() -> String {
    let p = shockstab_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn burgers_profile_round_trip() {
    let m = model("burgers");
    assert_eq!(unsafe { shockstab_model_dim(m) }, 1);
    let p = profile(m);
    unsafe {
        assert_eq!(shockstab_profile_ell(p), 1);
        assert!(shockstab_profile_residual(p) < 1e-8);
        let mut u = [0.0f64; 1];
        assert_eq!(shockstab_profile_eval(p, 0.0, u.as_mut_ptr(), 1), ShockstabStatus::Ok);
        assert!(u[0].abs() < 1e-6, "u(0) = {}", u[0]);
        for x in [-3.0, 0.7, 5.0] {
            shockstab_profile_eval(p, x, u.as_mut_ptr(), 1);
            assert!((u[0] + f64::tanh(x / 2.0)).abs() < 1e-6);
        }
        assert_eq!(shockstab_profile_eval(p, 0.0, u.as_mut_ptr(), 0), ShockstabStatus::InvalidArgument);
        shockstab_profile_free(p);
        shockstab_model_free(m);
    }
}

#[test]
fn condition_d_and_location() {
    let m = model("burgers");
    let p = profile(m);
    unsafe {
        let mut pass = false;
        let mut w = -1i64;
        assert_eq!(shockstab_condition_d(p, &mut pass, &mut w), ShockstabStatus::Ok);
        assert!(pass);
        assert_eq!(w, 1);
        let mass = [0.04];
        let mut d = [0.0];
        assert_eq!(shockstab_asymptotic_location(p, mass.as_ptr(), 1, d.as_mut_ptr(), 1), ShockstabStatus::Ok);
        assert!((d[0] - 0.02).abs() < 1e-12);
        assert_eq!(
            shockstab_asymptotic_location(p, mass.as_ptr(), 1, d.as_mut_ptr(), 0),
            ShockstabStatus::InvalidArgument
        );
        let mut s = f64::NAN;
        assert_eq!(shockstab_template_sum(p, 0.0, 1.0, &mut s), ShockstabStatus::Ok);
        assert!(s.is_finite() && s > 0.0);
        assert_eq!(shockstab_template_sum(p, 0.0, -1.0, &mut s), ShockstabStatus::InvalidArgument);
        shockstab_profile_free(p);
        shockstab_model_free(m);
    }
}

#[test]
fn identities_hold() {
    for name in ["interaction1", "interaction2"] {
        let c = CString::new(name).unwrap();
        let mut r = f64::NAN;
        assert_eq!(unsafe { shockstab_identity_residual(c.as_ptr(), 20, 7, &mut r) }, ShockstabStatus::Ok);
        assert!(r < 1e-10, "{name}: {r:e}");
    }
    let c = CString::new("hz").unwrap();
    let mut r = 0.0;
    assert_eq!(unsafe { shockstab_identity_residual(c.as_ptr(), 1, 0, &mut r) }, ShockstabStatus::InvalidArgument);
}

#[test]
fn errors_are_reported() {
    let bad = CString::new("no_such_model").unwrap();
    let mut m = ptr::null_mut();
    let st = unsafe { shockstab_model_from_registry(bad.as_ptr(), &mut m) };
    assert_ne!(st, ShockstabStatus::Ok);
    assert!(m.is_null());
    assert!(last_error().contains("no_such_model"));

    assert_eq!(unsafe { shockstab_model_from_registry(ptr::null(), &mut m) }, ShockstabStatus::NullPointer);
    assert_eq!(unsafe { shockstab_profile_solve(ptr::null(), ptr::null_mut()) }, ShockstabStatus::NullPointer);

    let json = CString::new(r#"{"name":"x","flux":"oops"}"#).unwrap();
    assert_eq!(unsafe { shockstab_model_from_json(json.as_ptr(), &mut m) }, ShockstabStatus::Config);

    unsafe {
        assert_eq!(shockstab_model_dim(ptr::null()), 0);
        assert!(shockstab_profile_eta(ptr::null()).is_nan());
        assert_eq!(shockstab_track_len(ptr::null()), 0);
        shockstab_model_free(ptr::null_mut());
        shockstab_profile_free(ptr::null_mut());
        shockstab_track_free(ptr::null_mut());
    }
}

#[test]
fn short_track_run() {
    let m = model("burgers");
    let p = profile(m);
    unsafe {
        let mut t = ptr::null_mut();
        assert_eq!(shockstab_track_run(p, 0.01, 4.0, &mut t), ShockstabStatus::Ok);
        let k = shockstab_track_len(t);
        assert!(k > 2);
        let mut times = vec![0.0; k];
        let mut delta = vec![0.0; k];
        assert_eq!(shockstab_track_history(t, times.as_mut_ptr(), delta.as_mut_ptr(), k), ShockstabStatus::Ok);
        assert_eq!(times[0], 0.0);
        assert!((times[k - 1] - 4.0).abs() < 1e-9);
        assert!(delta.iter().all(|d| d.is_finite()));
        let dinf = shockstab_track_delta_infinity(t);
        assert!(dinf > 0.0 && dinf < 0.1);
        shockstab_track_free(t);
        assert_eq!(shockstab_track_run(p, 1.0, 1.0, &mut t), ShockstabStatus::InvalidArgument);
        shockstab_profile_free(p);
        shockstab_model_free(m);
    }
}

#[test]
fn header_compiles_as_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include").join("shockstab.h");
    let text = std::fs::read_to_string(&header).expect("header generated by build script");
    for f in ["shockstab_model_from_registry", "shockstab_profile_solve", "shockstab_last_error", "SHOCKSTAB_STATUS_OK"] {
        assert!(text.contains(f), "{f} missing from header");
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"shockstab.h\"\nint main(void) {\n  ShockstabModel *m = 0;\n  \
         ShockstabStatus s = shockstab_model_from_registry(\"burgers\", &m);\n  \
         shockstab_model_free(m);\n  return s == SHOCKSTAB_STATUS_OK ? 0 : 1;\n}\n",
    )
    .unwrap();
    let out = match Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(header.parent().unwrap())
        .arg(&src)
        .output()
    {
        Ok(o) => o,
        Err(_) => {
            eprintln!("no C compiler available; skipping");
            return;
        }
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
