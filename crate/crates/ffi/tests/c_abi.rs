use std::ffi::{CStr, CString};
use std::ptr;

use mcfdd::detection::{fdd_bep, tdd_bep};
use mcfdd::{derive_all, SystemConfig};
use mcfdd_ffi::*;

fn last_error() -> String {
    let len = unsafe { mcfdd_last_error(ptr::null_mut(), 0) };
    let mut buf = vec![0u8; len + 1];
    unsafe { mcfdd_last_error(buf.as_mut_ptr().cast(), buf.len()) };
    CStr::from_bytes_until_nul(&buf).unwrap().to_str().unwrap().to_string()
}

fn default_system() -> *mut McfddSystem {
    let mut sys = ptr::null_mut();
    assert_eq!(unsafe { mcfdd_system_new_default(&mut sys) }, McfddStatus::Ok);
    assert!(!sys.is_null());
    sys
}

#[test]
fn analytic_matches_core() {
    let sys = default_system();
    let mut a = McfddAnalytic::default();
    assert_eq!(unsafe { mcfdd_analytic(sys, &mut a) }, McfddStatus::Ok);
    let cfg = SystemConfig::default();
    let d = derive_all(&cfg).unwrap();
    let tdd = tdd_bep(&cfg, &d).unwrap();
    let fdd = fdd_bep(&cfg, &d).unwrap();
    assert_eq!(a.gamma_td, tdd.threshold.value);
    assert_eq!(a.tdd_bep, tdd.bep);
    assert_eq!(a.gamma_fd, fdd.threshold.value);
    assert_eq!(a.fdd_bep, fdd.bep);
    assert_eq!(a.fdd_var_full, fdd.var_full);
    unsafe { mcfdd_system_free(sys) };
}

#[test]
fn derived_and_psd() {
    let sys = default_system();
    let mut d = McfddDerived::default();
    assert_eq!(unsafe { mcfdd_derived(sys, &mut d) }, McfddStatus::Ok);
    let core = derive_all(&SystemConfig::default()).unwrap();
    assert_eq!(d.zeta, core.zeta);
    assert_eq!(d.c_m1, core.c_m1);
    let mut s = 0.0;
    assert_eq!(unsafe { mcfdd_total_psd(sys, 1.0, d.c_m1, d.interferer_mean, &mut s) }, McfddStatus::Ok);
    assert!(s > 0.0);
    assert_eq!(unsafe { mcfdd_total_psd(sys, -1.0, d.c_m1, d.interferer_mean, &mut s) }, McfddStatus::DomainError);
    assert!(last_error().contains("frequency"), "{}", last_error());
    unsafe { mcfdd_system_free(sys) };
}

#[test]
fn config_errors_map_to_codes() {
    let mut sys = ptr::null_mut();
    let bad = CString::new("N = 701\n").unwrap();
    assert_eq!(unsafe { mcfdd_system_from_config(bad.as_ptr(), &mut sys) }, McfddStatus::ValidationError);
    assert!(sys.is_null());
    assert!(last_error().contains("`N`"));
    let garbled = CString::new("gamma 0.7\n").unwrap();
    assert_eq!(unsafe { mcfdd_system_from_config(garbled.as_ptr(), &mut sys) }, McfddStatus::ParseError);
    assert!(last_error().starts_with("line 1"));
    let ok = CString::new("gamma = 0.3\n").unwrap();
    assert_eq!(unsafe { mcfdd_system_from_config(ok.as_ptr(), &mut sys) }, McfddStatus::Ok);
    assert!(last_error().is_empty());
    unsafe { mcfdd_system_free(sys) };
    let missing = CString::new("/nonexistent/mcfdd.cfg").unwrap();
    assert_eq!(unsafe { mcfdd_system_from_file(missing.as_ptr(), &mut sys) }, McfddStatus::IoError);
}

#[test]
fn null_pointers_are_rejected() {
    let mut sys = ptr::null_mut();
    assert_eq!(unsafe { mcfdd_system_new_default(ptr::null_mut()) }, McfddStatus::NullPointer);
    assert_eq!(unsafe { mcfdd_system_from_config(ptr::null(), &mut sys) }, McfddStatus::NullPointer);
    let mut a = McfddAnalytic::default();
    assert_eq!(unsafe { mcfdd_analytic(ptr::null(), &mut a) }, McfddStatus::NullPointer);
    let sys = default_system();
    assert_eq!(unsafe { mcfdd_analytic(sys, ptr::null_mut()) }, McfddStatus::NullPointer);
    let mut e = McfddEstimate::default();
    assert_eq!(unsafe { mcfdd_estimate(sys, ptr::null(), 700, &mut e) }, McfddStatus::NullPointer);
    unsafe {
        mcfdd_system_free(sys);
        mcfdd_system_free(ptr::null_mut());
    }
}

#[test]
fn last_error_truncates() {
    let sys = default_system();
    let mut r = McfddBepReport::default();
    assert_eq!(unsafe { mcfdd_monte_carlo(sys, 10, 1, 1, &mut r) }, McfddStatus::InvalidArgument);
    let full = last_error();
    let mut small = [0x7fu8; 8];
    let len = unsafe { mcfdd_last_error(small.as_mut_ptr().cast(), small.len()) };
    assert_eq!(len, full.len());
    assert_eq!(&small[..7], &full.as_bytes()[..7]);
    assert_eq!(small[7], 0);
    unsafe { mcfdd_system_free(sys) };
}

#[test]
fn monte_carlo_is_thread_independent() {
    let sys = default_system();
    let (mut a, mut b) = (McfddBepReport::default(), McfddBepReport::default());
    assert_eq!(unsafe { mcfdd_monte_carlo(sys, 100, 9, 1, &mut a) }, McfddStatus::Ok);
    assert_eq!(unsafe { mcfdd_monte_carlo(sys, 100, 9, 4, &mut b) }, McfddStatus::Ok);
    assert_eq!(a.trials, 100);
    assert_eq!((a.tdd_errors, a.fdd_errors), (b.tdd_errors, b.fdd_errors));
    assert!(a.tdd_ci_low <= a.tdd_bep && a.tdd_bep <= a.tdd_ci_high);
    unsafe { mcfdd_system_free(sys) };
}

#[test]
fn estimate_from_model_shaped_window() {
    use mcfdd::harness::{acquire, prepare, trial_rng};
    let sys = default_system();
    let p = prepare(&SystemConfig::default()).unwrap();
    let x = acquire(&p, p.derived.c_m1, p.derived.interferer_mean, &mut trial_rng(4, 0)).unwrap();
    let mut e = McfddEstimate::default();
    assert_eq!(unsafe { mcfdd_estimate(sys, x.as_ptr(), x.len(), &mut e) }, McfddStatus::Ok);
    assert_eq!(e.converged, 1);
    assert!(e.c_m > 0.0 && e.c_i > 0.0);
    let odd = &x[..699];
    assert_eq!(unsafe { mcfdd_estimate(sys, odd.as_ptr(), odd.len(), &mut e) }, McfddStatus::DomainError);
    unsafe { mcfdd_system_free(sys) };
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(mcfdd_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
