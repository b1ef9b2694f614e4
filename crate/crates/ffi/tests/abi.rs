use std::ffi::{CStr, CString};
use std::ptr;

use ggsp_ffi::*;

const KERNEL: &str = r#"{"graph":{"type":"quadratic","b":0.5},"time":{"type":"gaussian","gamma":0.1}}"#;

fn path_graph(n: usize) -> *mut GgspGraph {
    let us: Vec<usize> = (0..n - 1).collect();
    let vs: Vec<usize> = (1..n).collect();
    let ws = vec![1.0; n - 1];
    let mut g = ptr::null_mut();
    let st = unsafe { ggsp_graph_new(n, us.as_ptr(), vs.as_ptr(), ws.as_ptr(), n - 1, GgspGso::Combinatorial, &mut g) };
    assert_eq!(st, GgspStatus::Ok);
    g
}

fn last_error() -> Option<String> {
    let p = ggsp_last_error();
    if p.is_null() {
        return None;
    }
    let s = unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned();
    unsafe { ggsp_string_free(p) };
    Some(s)
}

#[test]
fn krr_matches_core() {
    let g = path_graph(4);
    let kernel = CString::new(KERNEL).unwrap();
    let v = [0usize, 1, 3, 2];
    let t = [0.1, 0.4, 0.7, 0.9];
    let y = [1.0, -0.5, 0.25, 2.0];
    let mut model = ptr::null_mut();
    let st = unsafe { ggsp_krr_fit(g, kernel.as_ptr(), v.as_ptr(), t.as_ptr(), y.as_ptr(), 4, 0.1, &mut model) };
    assert_eq!(st, GgspStatus::Ok);
    assert!(last_error().is_none());

    let graph = std::sync::Arc::new(ggsp::Graph::path(4).unwrap());
    let k = ggsp::KernelSpec::from_json(KERNEL).unwrap().build(graph).unwrap();
    let samples: ggsp::SampleSet = (0..4).map(|i| ggsp::Sample::new(v[i], t[i], y[i])).collect();
    let reference = ggsp::fit_krr(&k, &samples, 0.1).unwrap();

    let mut out = 0.0;
    assert_eq!(unsafe { ggsp_krr_predict(model, 2, 0.55, &mut out) }, GgspStatus::Ok);
    assert_eq!(out, reference.predict(2, 0.55).unwrap());

    let mut json = ptr::null_mut();
    assert_eq!(unsafe { ggsp_krr_to_json(model, &mut json) }, GgspStatus::Ok);
    let mut restored = ptr::null_mut();
    assert_eq!(unsafe { ggsp_krr_from_json(json, &mut restored) }, GgspStatus::Ok);
    let mut again = 0.0;
    assert_eq!(unsafe { ggsp_krr_predict(restored, 2, 0.55, &mut again) }, GgspStatus::Ok);
    assert_eq!(again.to_bits(), out.to_bits());

    unsafe {
        ggsp_string_free(json);
        ggsp_krr_free(restored);
        ggsp_krr_free(model);
        ggsp_graph_free(g);
    }
}

#[test]
fn error_codes_and_messages() {
    let mut g = ptr::null_mut();
    let (us, vs, ws) = ([0usize], [0usize], [1.0]);
    let st = unsafe { ggsp_graph_new(2, us.as_ptr(), vs.as_ptr(), ws.as_ptr(), 1, GgspGso::Combinatorial, &mut g) };
    assert_eq!(st, GgspStatus::Data);
    assert!(g.is_null());
    assert!(last_error().unwrap().contains("self-loop"));

    let g = path_graph(3);
    let kernel = CString::new(KERNEL).unwrap();
    let mut out = 0.0;
    let mut model = ptr::null_mut();
    let st = unsafe { ggsp_krr_fit(g, kernel.as_ptr(), ptr::null(), ptr::null(), ptr::null(), 0, -1.0, &mut model) };
    assert_eq!(st, GgspStatus::Usage);

    let st = unsafe { ggsp_krr_predict(ptr::null(), 0, 0.5, &mut out) };
    assert_eq!(st, GgspStatus::NullPointer);
    assert!(last_error().unwrap().contains("model"));

    let bad = CString::new("{not json").unwrap();
    let st = unsafe { ggsp_krr_fit(g, bad.as_ptr(), ptr::null(), ptr::null(), ptr::null(), 0, 1.0, &mut model) };
    assert_eq!(st, GgspStatus::Data);

    let invalid = [0xffu8, 0];
    let st = unsafe { ggsp_krr_fit(g, invalid.as_ptr().cast(), ptr::null(), ptr::null(), ptr::null(), 0, 1.0, &mut model) };
    assert_eq!(st, GgspStatus::InvalidUtf8);

    let mut gc = 0.0;
    assert_eq!(unsafe { ggsp_gtrss_prior_correlation(256, 1.0, &mut gc) }, GgspStatus::Ok);
    assert!(last_error().is_none());
    unsafe { ggsp_graph_free(g) };
}

#[test]
fn bound_and_correlation() {
    let p = GgspBoundParams { kt: 1.0, l: 0.5, m0: 1e4, c0: 0.5, dim: 1, c_d: 1.0, n_d: 1, c1: 0.0, c2: 0.0, c3: 0.0 };
    let (mut b, mut pr) = (0.0, 0.0);
    assert_eq!(unsafe { ggsp_var_bound(&p, &mut b, &mut pr) }, GgspStatus::Ok);
    assert_eq!(b, 0.5);
    assert!((pr - 0.8).abs() < 1e-12);

    let bad = GgspBoundParams { c0: 1.5, ..p };
    assert_eq!(unsafe { ggsp_var_bound(&bad, &mut b, &mut pr) }, GgspStatus::Usage);

    let mut c = 0.0;
    assert_eq!(unsafe { ggsp_gtrss_prior_correlation(256, 1.0, &mut c) }, GgspStatus::Ok);
    assert_eq!(c, ggsp::kernels::gtrss_prior_correlation(256, 1.0).unwrap());
}

#[test]
fn rff_stream_and_variance() {
    let g = path_graph(4);
    let kernel = CString::new(r#"{"graph":{"type":"quadratic","b":0.5},"time":{"type":"laplacian","gamma":0.3}}"#).unwrap();
    let mut rff = ptr::null_mut();
    assert_eq!(unsafe { ggsp_rff_new(g, kernel.as_ptr(), 32, 7, 0.1, 50, 0.0, &mut rff) }, GgspStatus::Ok);
    let mut before = 0.0;
    for i in 0..200 {
        let t = (i % 20) as f64 / 20.0;
        let v = i % 4;
        assert_eq!(unsafe { ggsp_rff_step(rff, v, t, (6.0 * t + v as f64).sin(), &mut before) }, GgspStatus::Ok);
    }
    let mut pred = 0.0;
    assert_eq!(unsafe { ggsp_rff_predict(rff, 1, 0.5, &mut pred) }, GgspStatus::Ok);
    assert!(pred.is_finite());
    assert_eq!(unsafe { ggsp_rff_step(rff, 9, 0.5, 1.0, ptr::null_mut()) }, GgspStatus::Data);

    let v = [0usize, 2];
    let t = [0.5, 0.5];
    let (mut prior, mut post) = (0.0, 0.0);
    unsafe {
        assert_eq!(ggsp_posterior_variance(g, kernel.as_ptr(), v.as_ptr(), t.as_ptr(), 0, 0.1, 1, 0.5, &mut prior), GgspStatus::Ok);
        assert_eq!(ggsp_posterior_variance(g, kernel.as_ptr(), v.as_ptr(), t.as_ptr(), 2, 0.1, 1, 0.5, &mut post), GgspStatus::Ok);
    }
    assert!(post < prior);
    unsafe {
        ggsp_rff_free(rff);
        ggsp_graph_free(g);
    }
}

#[test]
fn gtrss_full_observation_tracks_data() {
    let g = path_graph(3);
    let steps = 5;
    let obs: Vec<f64> = (0..15).map(|i| (i as f64 * 0.3).cos()).collect();
    let mask = [1u8; 15];
    let mut out = vec![0.0; 15];
    let st = unsafe { ggsp_gtrss_solve(g, mask.as_ptr(), obs.as_ptr(), steps, 1e-9, 1.0, 1.0, 1.0, out.as_mut_ptr()) };
    assert_eq!(st, GgspStatus::Ok);
    for (a, b) in out.iter().zip(&obs) {
        assert!((a - b).abs() < 1e-6);
    }
    unsafe { ggsp_graph_free(g) };
}

#[test]
fn header_declares_entry_points() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/ggsp.h")).unwrap();
    for name in [
        "ggsp_graph_new",
        "ggsp_graph_free",
        "ggsp_krr_fit",
        "ggsp_krr_predict",
        "ggsp_rff_new",
        "ggsp_rff_step",
        "ggsp_var_bound",
        "ggsp_last_error",
        "typedef struct GgspGraph GgspGraph",
        "GGSP_STATUS_NUMERICAL = 3",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
}

#[test]
fn header_compiles_as_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/ggsp.h");
    let Ok(out) = std::process::Command::new("cc").args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c", header]).output() else {
        eprintln!("no C compiler; skipping");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
