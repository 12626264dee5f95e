use std::sync::atomic::{AtomicUsize, Ordering};

use quasitip::scan::{classify_cells, run_cell, run_scan, run_scan_with, ScanOptions, ScanSpec};
use quasitip::{Boundary, Error};

fn small() -> ScanSpec {
    ScanSpec {
        lambdas: vec![2.2, 2.6],
        us: vec![0.0, 3.0, 6.0],
        n: 16,
        t_final: 30.0,
        realizations: 3,
        positions: None,
        beta: 0.0,
        alpha: quasitip::model::GOLDEN_MEAN,
        boundary: Boundary::Open,
        samples: 6,
    }
}

#[test]
fn repeated_scans_are_bit_identical() {
    let spec = small();
    let a = run_scan(&spec).unwrap();
    let b = run_scan(&spec).unwrap();
    assert_eq!(a, b);
    let bits = |d: &quasitip::scan::PhaseDiagram| d.sigma_matrix().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a), bits(&b));
    assert_eq!(a.rows(), 2);
    assert_eq!(a.cols(), 3);
    assert_eq!(a.cell(1, 2).lambda, 2.6);
    assert_eq!(a.cell(1, 2).u, 6.0);
}

#[test]
fn cell_takes_the_fastest_realization() {
    let spec = small();
    let cell = run_cell(&spec, 2.2, 3.0);
    let l0s = spec.initial_positions().unwrap();
    let runs = quasitip::dynamics::transport_runs(&spec.params(2.2, 3.0), &l0s, spec.t_final, spec.samples).unwrap();
    let best = runs.iter().map(|r| r.trace.final_sigma()).fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(cell.sigma_star, Some(best));
    assert!(l0s.contains(&cell.best_l0.unwrap()));
}

#[test]
fn interrupted_scan_resumes_to_the_same_result() {
    let spec = small();
    let dir = tempfile::tempdir().unwrap();
    let state = dir.path().join("scan.state.json");
    let partial = run_scan_with(
        &spec,
        &ScanOptions {
            checkpoint: Some(state.clone()),
            max_new_cells: Some(2),
            progress: None,
        },
    )
    .unwrap();
    assert!(partial.is_none());
    assert!(state.exists());

    let calls = AtomicUsize::new(0);
    let progress = |_: usize, _: usize| {
        calls.fetch_add(1, Ordering::Relaxed);
    };
    let resumed = run_scan_with(
        &spec,
        &ScanOptions {
            checkpoint: Some(state.clone()),
            max_new_cells: None,
            progress: Some(&progress),
        },
    )
    .unwrap()
    .unwrap();
    assert_eq!(calls.load(Ordering::Relaxed), spec.cell_count() - 2);
    assert_eq!(resumed, run_scan(&spec).unwrap());

    let mut other = spec.clone();
    other.t_final = 31.0;
    let err = run_scan_with(
        &other,
        &ScanOptions {
            checkpoint: Some(state),
            ..Default::default()
        },
    );
    assert!(matches!(err, Err(Error::ResumeMismatch(_))));
}

#[test]
fn empty_state_file_starts_fresh() {
    let spec = small();
    let dir = tempfile::tempdir().unwrap();
    let state = dir.path().join("s.json");
    std::fs::write(&state, "").unwrap();
    let d = run_scan_with(
        &spec,
        &ScanOptions {
            checkpoint: Some(state),
            ..Default::default()
        },
    )
    .unwrap()
    .unwrap();
    assert_eq!(d.cells.len(), 6);
}

#[test]
fn invalid_specs_fail_before_running() {
    let mut s = small();
    s.lambdas = vec![2.6, 2.2];
    assert!(matches!(run_scan(&s), Err(Error::Config(_))));
    let mut s = small();
    s.positions = Some(vec![1, 1, 2]);
    assert!(run_scan(&s).is_err());
    let mut s = small();
    s.positions = Some(vec![1, 2, 15]);
    assert!(matches!(run_scan(&s), Err(Error::Index { .. })));
    let mut s = small();
    s.realizations = 0;
    assert!(run_scan(&s).is_err());
}

#[test]
fn classification_threshold() {
    let d = run_scan(&small()).unwrap();
    let all = classify_cells(&d, 1e-9).unwrap();
    assert!(all.iter().all(|&m| m));
    let none = classify_cells(&d, 1e9).unwrap();
    assert!(none.iter().all(|&m| !m));
    assert!(classify_cells(&d, 0.0).is_err());
}

#[test]
fn spec_json_round_trip_and_hash() {
    let spec = small();
    let text = serde_json::to_string(&spec).unwrap();
    let back: ScanSpec = serde_json::from_str(&text).unwrap();
    assert_eq!(back, spec);
    assert_eq!(back.content_hash(), spec.content_hash());
    let mut other = spec.clone();
    other.beta = 0.1;
    assert_ne!(other.content_hash(), spec.content_hash());
    assert!(serde_json::from_str::<ScanSpec>(r#"{"lambdas":[2.5],"us":[1],"n":10,"t_final":1,"realizations":1,"oops":1}"#).is_err());
}
