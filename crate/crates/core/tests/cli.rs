use std::path::Path;
use std::process::{Command, Output};

use quasitip::io::{Csv, GridData, Sidecar};

fn quasitip(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_quasitip"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("QUASITIP_OUT")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], out: &Path) -> Vec<String> {
    let o = quasitip(args, out);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap().lines().map(str::to_string).collect()
}

#[test]
fn sp_spectrum_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let files = ok(&["sp-spectrum", "--n", "60"], dir.path());
    assert_eq!(files.len(), 3);
    let csv = Csv::read(&dir.path().join("sp-spectrum.csv")).unwrap();
    assert_eq!(csv.rows.len(), 60);
    let e = csv.numbers("energy").unwrap();
    assert!(e.windows(2).all(|w| w[0] <= w[1]));
    let side = Sidecar::read(&dir.path().join("sp-spectrum.json")).unwrap();
    assert_eq!(side.kind, "sp-spectrum");
    assert_eq!(side.params.unwrap().n, 60);
}

#[test]
fn tp_spectrum_window_and_dump() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["tp-spectrum", "--n", "20", "--u", "4.5", "--window", "-2,1", "--dump-vectors"], dir.path());
    let csv = Csv::read(&dir.path().join("tp-spectrum.csv")).unwrap();
    let e = csv.numbers("energy").unwrap();
    assert!(!e.is_empty() && e.iter().all(|&x| (-2.0..1.0).contains(&x)));
    let (dim, data) = quasitip::io::read_vectors(&dir.path().join("tp-eigenvectors.bin")).unwrap();
    assert_eq!(dim, 210);
    assert_eq!(data.len(), 210 * e.len());
}

#[test]
fn evolve_outputs_and_replay() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["evolve", "--n", "24", "--u", "4.5", "--t", "20", "--samples", "4"], dir.path());
    let pdf = Csv::read(&dir.path().join("evolve-pdf.csv")).unwrap();
    assert_eq!(pdf.rows.len(), 5);
    assert_eq!(pdf.columns.len(), 25);
    for row in &pdf.rows {
        let s: f64 = row[1..].iter().map(|x| x.parse::<f64>().unwrap()).sum();
        assert!((s - 1.0).abs() < 1e-10);
    }
    let dat = std::fs::read_to_string(dir.path().join("evolve-log10pdf.dat")).unwrap();
    let grid = GridData::parse(&dat, true).unwrap();
    assert_eq!((grid.rows, grid.cols), (5, 24));
    let first = std::fs::read(dir.path().join("evolve-trace.csv")).unwrap();

    let replay_dir = tempfile::tempdir().unwrap();
    let sidecar = dir.path().join("evolve.json");
    ok(&["replay", sidecar.to_str().unwrap()], replay_dir.path());
    assert_eq!(std::fs::read(replay_dir.path().join("evolve-trace.csv")).unwrap(), first);
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"n": 30, "lambda": 3.0, "u": 1.0}"#).unwrap();
    ok(&["sp-spectrum", "--config", cfg.to_str().unwrap(), "--n", "40"], dir.path());
    let side = Sidecar::read(&dir.path().join("sp-spectrum.json")).unwrap();
    let p = side.params.unwrap();
    assert_eq!((p.n, p.lambda), (40, 3.0));
}

#[test]
fn small_scan_and_resume_flag() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "scan", "--n", "14", "--t", "10", "--lambda", "2.5", "--u", "4.5", "--realizations", "2", "--samples", "4",
    ];
    let files = ok(&args, dir.path());
    let sigma = files.iter().find(|f| f.contains("scan-sigma-") && f.ends_with(".csv")).unwrap();
    let csv = Csv::read(Path::new(sigma)).unwrap();
    assert_eq!(csv.rows.len(), 1);
    assert_eq!(csv.columns.len(), 2);
    let again = ok(&args, dir.path());
    assert_eq!(files, again);
    let mut resumed = args.to_vec();
    resumed.push("--resume");
    ok(&resumed, dir.path());
}

#[test]
fn fock_outputs() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["fock", "--n", "60", "--gap", "2"], dir.path());
    let csv = Csv::read(&dir.path().join("fock-overlaps.csv")).unwrap();
    assert_eq!(csv.rows.len(), 6);
    let text = std::fs::read_to_string(dir.path().join("fock-resonance.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["gaps_used"], serde_json::json!([2.0, 2.0, 2.0, 2.0]));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let code = |args: &[&str]| quasitip(args, dir.path()).status.code();
    assert_eq!(code(&["--help"]), Some(0));
    assert_eq!(code(&["sp-spectrum", "--bogus"]), Some(1));
    assert_eq!(code(&["sp-spectrum", "--lambda", "-1"]), Some(1));
    assert_eq!(code(&["sp-spectrum", "--n", "1"]), Some(1));
    assert_eq!(code(&["scan", "--n", "10", "--realizations", "2", "--seed-positions", "3,40"]), Some(1));
    assert_eq!(code(&["sp-spectrum", "--threads", "0"]), Some(1));
    assert_eq!(code(&["sweep", "--n", "6", "--u-grid", "0,1"]), Some(1));
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let o = quasitip(&["sp-spectrum", "--n", "10"], &blocker.join("sub"));
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("error"));
}
