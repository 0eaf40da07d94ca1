use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use wickspace_ffi::*;

fn key(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(ws_last_error()) }.to_string_lossy().into_owned()
}

#[test]
fn version_is_cargo_version() {
    let v = unsafe { CStr::from_ptr(ws_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn model_lifecycle_and_massless_value() {
    unsafe {
        let mut m = ptr::null_mut();
        assert_eq!(ws_model_new(key("massless2d:kappa=1").as_ptr(), &mut m), WsStatus::Ok);
        let mut dim = 0usize;
        assert_eq!(ws_model_dim(m, &mut dim), WsStatus::Ok);
        assert_eq!(dim, 2);
        // z = (−i, 0): w = −(1/4π)·2 ln 1 = 0 at κ = 1
        let (re, im) = ([0.0, 0.0], [-1.0, 0.0]);
        let (mut wr, mut wi) = (f64::NAN, f64::NAN);
        assert_eq!(ws_eval_w(m, re.as_ptr(), im.as_ptr(), 2, &mut wr, &mut wi), WsStatus::Ok);
        assert!(wr.abs() < 1e-15 && wi.abs() < 1e-15, "{wr} {wi}");
        // forward-cone imaginary part is outside the domain
        let im_bad = [1.0, 0.0];
        assert_eq!(ws_eval_w(m, re.as_ptr(), im_bad.as_ptr(), 2, &mut wr, &mut wi), WsStatus::Domain);
        assert!(last_error().contains("backward cone"));
        ws_model_free(m);
        ws_model_free(ptr::null_mut());
    }
}

#[test]
fn parse_and_null_errors() {
    unsafe {
        let mut m = ptr::null_mut();
        assert_eq!(ws_model_new(key("tachyon:m=1").as_ptr(), &mut m), WsStatus::Parse);
        assert!(m.is_null());
        assert_eq!(ws_model_new(ptr::null(), &mut m), WsStatus::NullPointer);
        assert_eq!(ws_model_new(key("massless2d:kappa=1").as_ptr(), ptr::null_mut()), WsStatus::NullPointer);
        let mut c = ptr::null_mut();
        assert_eq!(ws_coefficients_new(key("factpow:-3").as_ptr(), &mut c), WsStatus::Parse);
        let mut out = 0.0;
        assert_eq!(ws_coefficients_log_d(ptr::null(), 1, &mut out), WsStatus::NullPointer);
        assert_eq!(last_error(), "coefficients is null");
    }
}

#[test]
fn coefficient_and_series_values() {
    unsafe {
        let mut c = ptr::null_mut();
        assert_eq!(ws_coefficients_new(key("normexp:2").as_ptr(), &mut c), WsStatus::Ok);
        let mut v = 0.0;
        assert_eq!(ws_coefficients_log_d(c, 3, &mut v), WsStatus::Ok);
        assert!((v - (8.0f64 / 6.0).ln()).abs() < 1e-12);
        assert_eq!(ws_majorant_series(c, 0.0, 1.0, &mut v), WsStatus::Domain);
        ws_coefficients_free(c);

        // d = (1, 0, 1): series 1 + L·w
        let vals = [1.0, 0.0, 1.0];
        assert_eq!(ws_coefficients_from_values(vals.as_ptr(), 3, &mut c), WsStatus::Ok);
        assert_eq!(ws_majorant_series(c, 2.0, 3f64.ln(), &mut v), WsStatus::Ok);
        assert!((v - 7f64.ln()).abs() < 1e-12);
        ws_coefficients_free(c);

        let bad = [1.0, -1.0];
        assert_eq!(ws_coefficients_from_values(bad.as_ptr(), 2, &mut c), WsStatus::Domain);
    }
}

#[test]
fn divergent_series_is_reported() {
    unsafe {
        let mut c = ptr::null_mut();
        // d_k = (k!)^{-1/3}: k! d_{2k} grows factorially, so the series diverges for every w > 0
        assert_eq!(ws_coefficients_new(key("factpow:3").as_ptr(), &mut c), WsStatus::Ok);
        let mut v = 0.0;
        assert_eq!(ws_majorant_series(c, 1.0, 0.0, &mut v), WsStatus::Divergent);
        ws_coefficients_free(c);
    }
}

#[test]
fn single_term_infimum_closed_form() {
    unsafe {
        let mut v = 0.0;
        assert_eq!(ws_single_term_infimum(1.0, 1, 4, 0.0, &mut v), WsStatus::Ok);
        assert!((v - 2.0 * (std::f64::consts::E / 2.0).ln()).abs() < 1e-14);
        assert_eq!(ws_single_term_infimum(2.0, 2, 4, 1.0, &mut v), WsStatus::Ok);
        assert_eq!(v, f64::NEG_INFINITY);
        assert_eq!(ws_single_term_infimum(2.0, 2, 2, 1.0, &mut v), WsStatus::Domain);
    }
}

#[test]
fn indicator_values() {
    unsafe {
        let mut b = ptr::null_mut();
        assert_eq!(ws_indicator_new(key("gevrey:0.5").as_ptr(), &mut b), WsStatus::Ok);
        let mut v = 0.0;
        assert_eq!(ws_indicator_log_value(b, 4.0, &mut v), WsStatus::Ok);
        assert!((v - 16.0).abs() < 1e-12);
        ws_indicator_free(b);
        assert_eq!(ws_indicator_new(key("sinh").as_ptr(), &mut b), WsStatus::Parse);
    }
}

#[test]
fn space_strings_and_buffer_sizing() {
    unsafe {
        let mut needed = 0usize;
        let mut small = [0 as std::ffi::c_char; 4];
        assert_eq!(ws_massless_space(1.5, small.as_mut_ptr(), small.len(), &mut needed), WsStatus::BufferTooSmall);
        assert_eq!(needed, "P:a=6,b=3".len() + 1);
        let mut buf = vec![0 as std::ffi::c_char; needed];
        assert_eq!(ws_massless_space(1.5, buf.as_mut_ptr(), buf.len(), ptr::null_mut()), WsStatus::Ok);
        assert_eq!(CStr::from_ptr(buf.as_ptr()).to_str().unwrap(), "P:a=6,b=3");
        assert_eq!(ws_massless_space(-1.0, buf.as_mut_ptr(), buf.len(), ptr::null_mut()), WsStatus::Domain);
    }
}

#[test]
fn classify_through_handles() {
    unsafe {
        let (mut m, mut c) = (ptr::null_mut(), ptr::null_mut());
        assert_eq!(ws_model_new(key("massless2d:kappa=1").as_ptr(), &mut m), WsStatus::Ok);
        assert_eq!(ws_coefficients_new(key("normexp:1").as_ptr(), &mut c), WsStatus::Ok);
        let mut buf = [0 as std::ffi::c_char; 32];
        assert_eq!(ws_classify(m, c, buf.as_mut_ptr(), buf.len(), ptr::null_mut()), WsStatus::Ok);
        assert_eq!(CStr::from_ptr(buf.as_ptr()).to_str().unwrap(), "P2");
        ws_coefficients_free(c);

        assert_eq!(ws_coefficients_new(key("factpow:2").as_ptr(), &mut c), WsStatus::Ok);
        assert_eq!(ws_classify(m, c, buf.as_mut_ptr(), buf.len(), ptr::null_mut()), WsStatus::Refused);
        assert!(last_error().contains("localization"));
        ws_coefficients_free(c);
        ws_model_free(m);
    }
}

#[test]
fn header_compiles_as_c_and_cpp() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let header = dir.join("include/wickspace.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in ["ws_model_new", "ws_classify", "WS_STATUS_PANIC", "typedef struct ws_model ws_model"] {
        assert!(text.contains(name), "{name} missing from header");
    }
    let src = std::env::temp_dir().join(format!("wickspace-abi-{}.c", std::process::id()));
    std::fs::write(
        &src,
        "#include \"wickspace.h\"\n\
         int main(void) {\n\
           ws_model *m = 0; ws_status st = ws_model_new(\"massless2d:kappa=1\", &m);\n\
           char buf[16]; size_t need = 0;\n\
           st = ws_massless_space(0.5, buf, sizeof buf, &need);\n\
           ws_model_free(m);\n\
           return st == WS_STATUS_OK ? 0 : 1;\n\
         }\n",
    )
    .unwrap();
    for (compiler, extra) in [("cc", vec!["-std=c99"]), ("c++", vec!["-x", "c++"])] {
        let status = Command::new(compiler)
            .args(&extra)
            .args(["-fsyntax-only", "-Wall", "-Werror", "-I"])
            .arg(dir.join("include"))
            .arg(&src)
            .status();
        match status {
            Ok(s) => assert!(s.success(), "{compiler} rejected the header"),
            Err(_) => eprintln!("{compiler} not available; skipped"),
        }
    }
}
