use proptest::prelude::*;
use quasitip::io::{
    fmt_f64, log10_floored, parse_f64, read_vectors, write_vectors, Csv, Field, GridData, RunConfig, Sidecar, Table,
    LOG10_FLOOR,
};
use quasitip::{Error, ModelParams};

#[test]
fn csv_round_trip() {
    let mut t = Table::new(["index", "energy", "label"]);
    t.push(vec![Field::Int(0), Field::Num(-1.0 / 3.0), Field::Text("TP1".into())]);
    t.push(vec![Field::Int(1), Field::Num(2.5e-300), Field::Text("TP2".into())]);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    t.write(&path).unwrap();
    let csv = Csv::read(&path).unwrap();
    assert_eq!(csv.columns, vec!["index", "energy", "label"]);
    assert_eq!(csv.numbers("energy").unwrap(), vec![-1.0 / 3.0, 2.5e-300]);
    assert_eq!(csv.rows[1][2], "TP2");
    assert!(csv.column_index("nope").is_err());
    assert!(matches!(csv.numbers("label"), Err(Error::Parse(_))));
}

#[test]
fn grid_round_trip() {
    let g = GridData {
        rows: 2,
        cols: 3,
        values: vec![1.0, 2.0, 3.0, 4.0, 5.0, f64::NAN],
        row_coords: Some(vec![2.1, 2.2]),
        col_coords: Some(vec![0.0, 0.5, 1.0]),
        comments: vec!["sigma".into()],
    };
    let text = g.to_dat();
    assert!(text.starts_with('#'));
    let back = GridData::parse(&text, true).unwrap();
    assert_eq!((back.rows, back.cols), (2, 3));
    assert_eq!(back.row_coords, g.row_coords);
    assert_eq!(back.col_coords, g.col_coords);
    assert_eq!(&back.values[..5], &g.values[..5]);
    assert!(back.values[5].is_nan());

    let plain = GridData {
        rows: 2,
        cols: 2,
        values: vec![0.5, -0.5, 1e-20, 7.0],
        row_coords: None,
        col_coords: None,
        comments: vec![],
    };
    assert_eq!(GridData::parse(&plain.to_dat(), false).unwrap().values, plain.values);
}

#[test]
fn sidecar_round_trip() {
    let cfg = RunConfig {
        n: Some(50),
        lambda: Some(2.5),
        ..Default::default()
    };
    let mut s = Sidecar::new("evolve", &cfg, Some(ModelParams::new(50, 2.5, 0.0)), serde_json::json!({"gamma": 0.93}));
    s.files.push("evolve-pdf.csv".into());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("evolve.json");
    s.write(&path).unwrap();
    let back = Sidecar::read(&path).unwrap();
    assert_eq!(back.config, cfg);
    assert_eq!(back.params, s.params);
    assert_eq!(back.results["gamma"], 0.93);
    assert_eq!(back.files, s.files);
}

#[test]
fn vector_dump_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("v.bin");
    let data: Vec<f64> = (0..12).map(|i| i as f64 * 0.25 - 1.0).collect();
    write_vectors(&path, 4, &data).unwrap();
    assert_eq!(read_vectors(&path).unwrap(), (4, data));
    std::fs::write(&path, [1u8, 2, 3]).unwrap();
    assert!(read_vectors(&path).is_err());
}

#[test]
fn config_merge_and_validation() {
    let base = RunConfig::from_json(r#"{"n": 80, "lambda": 2.5, "u": 1.0}"#).unwrap();
    let flags = RunConfig {
        u: Some(4.5),
        ..Default::default()
    };
    let merged = base.merged(&flags);
    assert_eq!((merged.n, merged.lambda, merged.u), (Some(80), Some(2.5), Some(4.5)));
    let p = merged.model_params(10).unwrap();
    assert_eq!((p.n, p.u), (80, 4.5));
    assert_eq!(RunConfig::default().model_params(33).unwrap().n, 33);
    assert!(matches!(RunConfig::from_json(r#"{"lamda": 2.5}"#), Err(Error::Config(_))));
    let bad = RunConfig {
        lambda: Some(-1.0),
        ..Default::default()
    };
    assert!(bad.model_params(10).is_err());
}

#[test]
fn number_formatting() {
    assert_eq!(fmt_f64(1.0), "1.0000000000000000e0");
    assert_eq!(fmt_f64(f64::NAN), "NaN");
    assert_eq!(fmt_f64(f64::NEG_INFINITY), "-inf");
    assert_eq!(log10_floored(0.0), LOG10_FLOOR);
    assert_eq!(log10_floored(1e-30), LOG10_FLOOR);
    assert!((log10_floored(1e-3) + 3.0).abs() < 1e-15);
    assert!(parse_f64("x").is_err());
}

proptest! {
    #[test]
    fn formatted_numbers_parse_back_exactly(x in any::<f64>()) {
        prop_assume!(x.is_finite());
        prop_assert_eq!(parse_f64(&fmt_f64(x)).unwrap().to_bits(), x.to_bits());
    }
}
