use std::ffi::{CStr, CString};
use std::ptr;

use dgcm_ffi::*;

fn noise(n: usize, seed: u64) -> Vec<f64> {
    let mut s = seed;
    (0..n)
        .map(|_| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        })
        .collect()
}

unsafe fn panel(n: usize, conditional: bool) -> *mut DgcmPanel {
    let mut p = ptr::null_mut();
    assert_eq!(dgcm_panel_new(n, &mut p), DgcmStatus::Ok);
    let label = CString::new("x").unwrap();
    for (role, seed) in [(DgcmRole::X, 1), (DgcmRole::Y, 2)] {
        let v = noise(n, seed);
        assert_eq!(dgcm_panel_add_series(p, role as u32, label.as_ptr(), v.as_ptr(), n), DgcmStatus::Ok);
    }
    if conditional {
        let v = noise(n, 3);
        assert_eq!(dgcm_panel_add_series(p, DgcmRole::Z as u32, ptr::null(), v.as_ptr(), n), DgcmStatus::Ok);
    }
    p
}

#[test]
fn conditional_run_round_trip() {
    unsafe {
        let p = panel(300, true);
        let mut h = ptr::null_mut();
        assert_eq!(dgcm_hypothesis_new(true, &mut h), DgcmStatus::Ok);
        assert_eq!(dgcm_hypothesis_add_tuple(h, 0, 0, 0, 0), DgcmStatus::Ok);
        assert_eq!(dgcm_hypothesis_add_conditioning(h, 0, 0), DgcmStatus::Ok);
        let mut config = dgcm_test_config_default();
        config.sims = 200;
        config.time_basis = 2;
        config.cov_basis = 2;
        config.window = 10;
        let mut a = DgcmReport::default();
        let mut b = DgcmReport::default();
        assert_eq!(dgcm_run(p, h, &config, &mut a), DgcmStatus::Ok);
        assert_eq!(dgcm_run(p, h, &config, &mut b), DgcmStatus::Ok);
        assert_eq!(a.statistic, b.statistic);
        assert_eq!(a.window, 10);
        assert!(a.p_value > 0.0 && a.p_value <= 1.0);
        assert_eq!(a.reject, a.statistic > a.quantile);
        dgcm_hypothesis_free(h);
        dgcm_panel_free(p);
    }
}

#[test]
fn unconditional_run_with_default_config() {
    unsafe {
        let p = panel(200, false);
        let mut h = ptr::null_mut();
        assert_eq!(dgcm_hypothesis_new(false, &mut h), DgcmStatus::Ok);
        assert_eq!(dgcm_hypothesis_add_tuple(h, 0, 0, 0, -1), DgcmStatus::Ok);
        let mut r = DgcmReport::default();
        assert_eq!(dgcm_run(p, h, ptr::null(), &mut r), DgcmStatus::Ok);
        assert_eq!(r.dim, 1);
        dgcm_hypothesis_free(h);
        dgcm_panel_free(p);
    }
}

#[test]
fn errors_map_to_status_codes() {
    unsafe {
        let p = panel(50, false);
        let mut h = ptr::null_mut();
        assert_eq!(dgcm_hypothesis_new(true, &mut h), DgcmStatus::Ok);
        assert_eq!(dgcm_hypothesis_add_tuple(h, 0, 0, 0, 0), DgcmStatus::Ok);
        let mut r = DgcmReport::default();
        // conditional hypothesis without conditioning pairs
        assert_eq!(dgcm_run(p, h, ptr::null(), &mut r), DgcmStatus::InvalidArgument);
        assert!(!dgcm_last_error_message().is_null());

        let short = [1.0, 2.0];
        assert_ne!(dgcm_panel_add_series(p, 0, ptr::null(), short.as_ptr(), 2), DgcmStatus::Ok);
        assert_eq!(dgcm_panel_add_series(p, 9, ptr::null(), short.as_ptr(), 2), DgcmStatus::InvalidArgument);
        assert_eq!(dgcm_run(ptr::null(), h, ptr::null(), &mut r), DgcmStatus::NullPointer);
        dgcm_hypothesis_free(h);
        dgcm_panel_free(p);
        dgcm_panel_free(ptr::null_mut());
    }
}

#[test]
fn bh_and_version() {
    let p = [0.01, 0.04, 0.03];
    let mut out = [0.0; 3];
    unsafe {
        assert_eq!(dgcm_bh_adjust(p.as_ptr(), 3, out.as_mut_ptr()), DgcmStatus::Ok);
        assert_eq!(dgcm_bh_adjust([0.0].as_ptr(), 1, out.as_mut_ptr()), DgcmStatus::InvalidArgument);
    }
    assert!((out[0] - 0.03).abs() < 1e-15 && (out[2] - 0.04).abs() < 1e-15);
    let v = unsafe { CStr::from_ptr(dgcm_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/dgcm.h")).unwrap();
    for symbol in [
        "dgcm_panel_new",
        "dgcm_panel_add_series",
        "dgcm_panel_free",
        "dgcm_hypothesis_new",
        "dgcm_hypothesis_add_tuple",
        "dgcm_hypothesis_add_conditioning",
        "dgcm_hypothesis_free",
        "dgcm_test_config_default",
        "dgcm_run",
        "dgcm_bh_adjust",
        "dgcm_last_error_message",
        "dgcm_version",
        "DGCM_STATUS_PANIC",
        "typedef struct DgcmPanel DgcmPanel",
    ] {
        assert!(header.contains(symbol), "{symbol} missing from header");
    }
}
