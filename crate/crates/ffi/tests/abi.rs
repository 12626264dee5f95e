use std::ffi::CStr;
use std::ptr;

use quasitip_ffi::*;

fn last_error() -> String {
    let n = unsafe { qt_last_error_message(ptr::null_mut(), 0) };
    let mut buf = vec![0 as std::ffi::c_char; n + 1];
    unsafe { qt_last_error_message(buf.as_mut_ptr(), buf.len()) };
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

fn model(n: usize, lambda: f64, u: f64) -> *mut QtModel {
    let mut m = ptr::null_mut();
    let st = unsafe { qt_model_new(n, lambda, u, 0.0, quasitip::model::GOLDEN_MEAN, 0, &mut m) };
    assert_eq!(st, QtStatus::Ok);
    m
}

#[test]
fn potential_through_handle() {
    let m = model(3, 2.5, 0.0);
    let mut v = 0.0;
    assert_eq!(unsafe { qt_model_potential_at(m, 1, &mut v) }, QtStatus::Ok);
    assert!((v - -1.843_422_195_195_8).abs() < 1e-12);
    assert_eq!(unsafe { qt_model_potential_at(m, 3, &mut v) }, QtStatus::Index);
    assert!(last_error().contains("out of range"));
    unsafe { qt_model_free(m) };
}

#[test]
fn invalid_parameters_are_reported() {
    let mut m = ptr::null_mut();
    let st = unsafe { qt_model_new(1, 2.5, 0.0, 0.0, 0.5, 0, &mut m) };
    assert_eq!(st, QtStatus::Config);
    assert!(m.is_null());
    assert!(!last_error().is_empty());
    let st = unsafe { qt_model_new(10, 2.5, 0.0, 0.0, 0.5, 0, ptr::null_mut()) };
    assert_eq!(st, QtStatus::NullPointer);
}

#[test]
fn separable_spectrum_via_abi() {
    let m = model(8, 2.5, 0.0);
    let (mut sp, mut tp) = (ptr::null_mut(), ptr::null_mut());
    assert_eq!(unsafe { qt_sp_eigenset(m, &mut sp) }, QtStatus::Ok);
    assert_eq!(unsafe { qt_tp_eigenset(m, 1, 0.0, 0.0, &mut tp) }, QtStatus::Ok);
    let (ns, nt) = unsafe { (qt_eigenset_len(sp), qt_eigenset_len(tp)) };
    assert_eq!((ns, nt), (8, 36));
    let mut e1 = vec![0.0; ns];
    let mut e2 = vec![0.0; nt];
    unsafe {
        assert_eq!(qt_eigenset_energies(sp, e1.as_mut_ptr(), ns), QtStatus::Ok);
        assert_eq!(qt_eigenset_energies(tp, e2.as_mut_ptr(), nt), QtStatus::Ok);
        assert_eq!(qt_eigenset_energies(tp, e2.as_mut_ptr(), nt - 1), QtStatus::BufferTooSmall);
    }
    let mut sums: Vec<f64> = (0..ns).flat_map(|a| (a..ns).map(move |b| (a, b))).map(|(a, b)| e1[a] + e1[b]).collect();
    sums.sort_by(f64::total_cmp);
    for (a, b) in sums.iter().zip(&e2) {
        assert!((a - b).abs() < 1e-10);
    }
    let mut pdf = vec![0.0; 8];
    assert_eq!(unsafe { qt_eigenset_pdf(tp, 3, pdf.as_mut_ptr(), 8) }, QtStatus::Ok);
    assert!((pdf.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert_eq!(unsafe { qt_eigenset_pdf(tp, 36, pdf.as_mut_ptr(), 8) }, QtStatus::Index);
    let mut part = vec![0.0; nt];
    assert_eq!(unsafe { qt_eigenset_participation(tp, part.as_mut_ptr(), nt) }, QtStatus::Ok);
    assert!(part.iter().all(|&p| (1.0..=8.0 + 1e-9).contains(&p)));
    unsafe {
        qt_eigenset_free(sp);
        qt_eigenset_free(tp);
        qt_model_free(m);
    }
}

#[test]
fn transport_trace_accessors() {
    let m = model(16, 2.5, 4.5);
    let mut tr = ptr::null_mut();
    assert_eq!(unsafe { qt_transport_run(m, 7, 5.0, 10, &mut tr) }, QtStatus::Ok);
    let n = unsafe { qt_trace_len(tr) };
    assert_eq!(n, 11);
    let mut times = vec![0.0; n];
    let mut sig = vec![0.0; n];
    let mut norms = vec![0.0; n];
    unsafe {
        assert_eq!(qt_trace_times(tr, times.as_mut_ptr(), n), QtStatus::Ok);
        assert_eq!(qt_trace_sigmas(tr, sig.as_mut_ptr(), n), QtStatus::Ok);
        assert_eq!(qt_trace_norms(tr, norms.as_mut_ptr(), n), QtStatus::Ok);
    }
    assert_eq!(times[10], 5.0);
    assert!((sig[0] - 0.5).abs() < 1e-12);
    assert!(norms.iter().all(|x| (x - 1.0).abs() < 1e-10));
    let (mut g, mut has) = (0.0, -1);
    assert_eq!(unsafe { qt_trace_gamma(tr, &mut g, &mut has) }, QtStatus::Ok);
    assert!(has == 0 || has == 1);
    assert_eq!(unsafe { qt_transport_run(m, 15, 5.0, 10, &mut tr) }, QtStatus::Index);
    unsafe {
        qt_trace_free(tr);
        qt_model_free(m);
    }
}

#[test]
fn null_handles_are_harmless() {
    unsafe {
        qt_model_free(ptr::null_mut());
        qt_eigenset_free(ptr::null_mut());
        qt_trace_free(ptr::null_mut());
        assert_eq!(qt_eigenset_len(ptr::null()), 0);
        assert_eq!(qt_trace_len(ptr::null()), 0);
        let mut x = 0.0;
        assert_eq!(qt_model_potential_at(ptr::null(), 0, &mut x), QtStatus::NullPointer);
    }
    let v = unsafe { CStr::from_ptr(qt_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/quasitip.h")).unwrap();
    let source = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/src/lib.rs")).unwrap();
    let exports: Vec<&str> = source
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 15);
    for f in exports {
        assert!(header.contains(&format!("{f}(")), "{f} missing from header");
    }
    assert!(header.contains("QT_STATUS_OK = 0"));
}
