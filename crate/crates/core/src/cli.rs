//! Subcommand implementations behind the `quasitip` binary.
//!
//! Each command takes a resolved [`RunConfig`], computes, and writes its data
//! files plus one JSON sidecar into the output directory.

use std::path::{Path, PathBuf};

use serde_json::json;

use crate::dynamics::transport_run;
use crate::error::{Error, Result};
use crate::fockspace::{build_sorted_sp_basis, miniband_distances, overlap_statistics, resonance_estimate};
use crate::io::{
    ensure_dir, fmt_f64, hashed_name, log10_floored, two_column, write_vectors, Command, Field, GridData, RunConfig,
    Sidecar, Table,
};
use crate::linalg::slicing::SliceOptions;
use crate::model::PairBasis;
use crate::scan::{classify_cells, default_threshold, run_scan_with, ScanOptions, ScanSpec};
use crate::spectral::{
    self, localization_length_fit, max_participation_sweep, max_site, sp_eigenset, tp_minibands, uniform_grid, DiagMode,
    DiagOptions, Miniband,
};

/// Files written by one command.
#[derive(Debug, Clone, Default)]
pub struct Report {
    pub files: Vec<PathBuf>,
    pub sidecar: Option<PathBuf>,
}

struct Writer<'a> {
    dir: &'a Path,
    report: Report,
}

impl Writer<'_> {
    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.report.files.push(p.clone());
        p
    }

    fn table(&mut self, name: &str, t: &Table) -> Result<()> {
        let p = self.path(name);
        t.write(&p)
    }

    fn grid(&mut self, name: &str, g: &GridData) -> Result<()> {
        let p = self.path(name);
        g.write(&p)
    }

    fn finish(mut self, name: &str, mut sidecar: Sidecar) -> Result<Report> {
        sidecar.files = self
            .report
            .files
            .iter()
            .filter_map(|p| p.file_name().map(|f| f.to_string_lossy().into_owned()))
            .collect();
        let p = self.dir.join(name);
        sidecar.write(&p)?;
        self.report.sidecar = Some(p);
        Ok(self.report)
    }
}

/// Runs `config.command`.
pub fn run(config: &RunConfig, log: &(dyn Fn(&str) + Sync)) -> Result<Report> {
    let command = config
        .command
        .ok_or_else(|| Error::Config("no subcommand given".into()))?;
    let dir = config.out_dir();
    ensure_dir(&dir)?;
    let w = Writer {
        dir: &dir,
        report: Report::default(),
    };
    match command {
        Command::SpSpectrum => sp_spectrum(config, w),
        Command::TpSpectrum => tp_spectrum(config, w, log),
        Command::Sweep => sweep(config, w, log),
        Command::Evolve => evolve(config, w, log),
        Command::Scan => scan(config, w, log),
        Command::Fock => fock(config, w),
    }
}

fn diag_options(config: &RunConfig, keep_vectors: bool) -> DiagOptions {
    DiagOptions {
        keep_vectors,
        dense_limit: config.dense_limit.unwrap_or(DiagOptions::default().dense_limit),
        slicing: SliceOptions::default(),
    }
}

fn sp_spectrum(config: &RunConfig, mut w: Writer<'_>) -> Result<Report> {
    let params = config.model_params(200)?;
    let mut set = sp_eigenset(&params)?;
    let windows = spectral::label_states(&mut set, &params).ok();
    let vectors = set.vectors.as_ref().expect("single-particle vectors kept");
    let mut t = Table::new(["index", "energy", "participation", "miniband", "center", "max_site"]);
    for q in 0..set.len() {
        let center: f64 = vectors.col(q).iter().enumerate().map(|(j, a)| j as f64 * a * a).sum();
        let label = set.labels.as_ref().map_or("none".to_string(), |l| l[q].to_string());
        t.push(vec![
            q.into(),
            set.energies[q].into(),
            set.participation[q].into(),
            label.into(),
            center.into(),
            max_site(set.pdf(q)).into(),
        ]);
    }
    w.table("sp-spectrum.csv", &t)?;
    w.grid(
        "sp-participation.dat",
        &two_column(&["energy participation".into()], &set.energies, &set.participation),
    )?;
    let results = json!({
        "minibands": windows,
        "localization_length_fit": localization_length_fit(&set),
        "localization_length_exact": params.localization_length(),
        "max_residual": set.max_residual,
    });
    w.finish("sp-spectrum.json", Sidecar::new("sp-spectrum", config, Some(params), results))
}

fn tp_spectrum(config: &RunConfig, mut w: Writer<'_>, log: &(dyn Fn(&str) + Sync)) -> Result<Report> {
    let params = config.model_params(100)?;
    let mode = match config.window {
        Some([lower, upper]) => DiagMode::Window { lower, upper },
        None => DiagMode::Full,
    };
    let dump = config.dump_vectors.unwrap_or(false);
    log(&format!("diagonalizing dimension {}", PairBasis::new(params.n).dim()));
    let mut set = spectral::tp_eigenset(&params, mode, &diag_options(config, dump))?;
    let windows = spectral::label_states(&mut set, &params).ok();
    let mut t = Table::new(["index", "energy", "participation", "miniband", "max_site"]);
    for q in 0..set.len() {
        let label = set.labels.as_ref().map_or("none".to_string(), |l| l[q].to_string());
        t.push(vec![
            q.into(),
            set.energies[q].into(),
            set.participation[q].into(),
            label.into(),
            max_site(set.pdf(q)).into(),
        ]);
    }
    w.table("tp-spectrum.csv", &t)?;
    w.grid(
        "tp-participation.dat",
        &two_column(&["energy participation".into()], &set.energies, &set.participation),
    )?;
    if let Some(v) = &set.vectors {
        let p = w.path("tp-eigenvectors.bin");
        write_vectors(&p, v.rows, &v.data)?;
    }
    let mut sorted = set.participation.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted.get(sorted.len() / 2).copied();
    let per_band: Vec<_> = match &set.labels {
        Some(labels) => Miniband::PAIR
            .iter()
            .map(|&m| {
                let ps: Vec<f64> = (0..set.len()).filter(|&q| labels[q] == m).map(|q| set.participation[q]).collect();
                json!({
                    "miniband": m,
                    "states": ps.len(),
                    "max_participation": ps.iter().copied().fold(f64::NAN, f64::max),
                })
            })
            .collect(),
        None => Vec::new(),
    };
    let results = json!({
        "states": set.len(),
        "median_participation": median,
        "minibands": windows,
        "per_miniband": per_band,
        "max_residual": set.max_residual,
    });
    w.finish("tp-spectrum.json", Sidecar::new("tp-spectrum", config, Some(params), results))
}

fn sweep(config: &RunConfig, mut w: Writer<'_>, log: &(dyn Fn(&str) + Sync)) -> Result<Report> {
    let params = config.model_params(100)?;
    let [start, end, step] = config.u_grid.unwrap_or([0.0, 15.0, 0.25]);
    let grid = uniform_grid(start, end, step);
    if grid.is_empty() {
        return Err(Error::Config(format!("empty U grid [{start}, {end}] step {step}")));
    }
    log(&format!("sweeping {} U values at N = {}", grid.len(), params.n));
    let points = max_participation_sweep(&params, &grid, DiagMode::Full, &diag_options(config, false))?;
    let mut t = Table::new(["u", "max_participation", "energy", "state"]);
    for p in &points {
        t.push(vec![p.u.into(), p.max_participation.into(), p.energy.into(), p.state.into()]);
    }
    w.table("sweep.csv", &t)?;
    let us: Vec<f64> = points.iter().map(|p| p.u).collect();
    let ps: Vec<f64> = points.iter().map(|p| p.max_participation).collect();
    w.grid("sweep.dat", &two_column(&["u max_participation".into()], &us, &ps))?;
    let best = points
        .iter()
        .max_by(|a, b| a.max_participation.total_cmp(&b.max_participation))
        .expect("non-empty sweep");
    let results = json!({ "peak_u": best.u, "peak_participation": best.max_participation });
    w.finish("sweep.json", Sidecar::new("sweep", config, Some(params), results))
}

fn evolve(config: &RunConfig, mut w: Writer<'_>, log: &(dyn Fn(&str) + Sync)) -> Result<Report> {
    let params = config.model_params(200)?;
    let t_final = config.t.unwrap_or(1000.0);
    let samples = config.samples.unwrap_or(100);
    let l0 = config.l0.unwrap_or(params.n / 2 - 1);
    log(&format!("propagating to t = {t_final} from l0 = {l0}"));
    let run = transport_run(&params, l0, t_final, samples)?;
    let tr = &run.trace;
    let n = tr.lattice_size;

    let mut pdf = Table::new(std::iter::once("t".to_string()).chain((0..n).map(|l| format!("p{l}"))));
    for (s, &t) in tr.times.iter().enumerate() {
        pdf.push(std::iter::once(Field::Num(t)).chain(tr.pdf(s).iter().map(|&p| Field::Num(p))).collect());
    }
    w.table("evolve-pdf.csv", &pdf)?;

    let mut obs = Table::new(["t", "sigma", "norm", "energy"]);
    for s in 0..tr.times.len() {
        obs.push(vec![tr.times[s].into(), tr.sigmas[s].into(), tr.norms[s].into(), tr.energies[s].into()]);
    }
    w.table("evolve-trace.csv", &obs)?;
    w.grid(
        "evolve-log10pdf.dat",
        &GridData {
            rows: tr.times.len(),
            cols: n,
            values: tr.pdfs.iter().map(|&p| log10_floored(p)).collect(),
            row_coords: Some(tr.times.clone()),
            col_coords: Some((0..n).map(|l| l as f64).collect()),
            comments: vec!["log10 PDF; rows = time, columns = site".into()],
        },
    )?;
    w.grid(
        "evolve-sigma.dat",
        &two_column(&["t sigma".into()], &tr.times, &tr.sigmas),
    )?;
    let results = json!({
        "l0": l0,
        "t_final": t_final,
        "final_sigma": tr.final_sigma(),
        "fit": run.fit,
        "boundary_contact": run.boundary_contact,
        "boundary_limited": run.boundary_limited,
    });
    w.finish("evolve.json", Sidecar::new("evolve", config, Some(params), results))
}

/// Scan spec from config: explicit spec, else preset (default `desk`), with
/// individual flags applied on top.
pub fn resolve_scan_spec(config: &RunConfig) -> Result<ScanSpec> {
    let mut spec = match (&config.scan, &config.preset) {
        (Some(s), _) => s.clone(),
        (None, Some(name)) => ScanSpec::preset(name)?,
        (None, None) => ScanSpec::preset("desk")?,
    };
    if let Some(n) = config.n {
        spec.n = n;
    }
    if let Some(t) = config.t {
        spec.t_final = t;
    }
    if let Some(l) = config.lambda {
        spec.lambdas = vec![l];
    }
    if let Some(u) = config.u {
        spec.us = vec![u];
    }
    if let Some(b) = config.beta {
        spec.beta = b;
    }
    if let Some(a) = config.alpha {
        spec.alpha = a;
    }
    if let Some(b) = config.boundary {
        spec.boundary = b;
    }
    if let Some(s) = config.samples {
        spec.samples = s;
    }
    if let Some(r) = config.realizations {
        spec.realizations = r;
    }
    if let Some(p) = &config.seed_positions {
        spec.realizations = p.len();
        spec.positions = Some(p.clone());
    }
    spec.validate()?;
    Ok(spec)
}

fn scan(config: &RunConfig, mut w: Writer<'_>, log: &(dyn Fn(&str) + Sync)) -> Result<Report> {
    let spec = resolve_scan_spec(config)?;
    let hash = spec.content_hash();
    let state = w.dir.join(hashed_name("scan", &hash, "state.json"));
    if !config.resume.unwrap_or(false) && state.exists() {
        std::fs::remove_file(&state).map_err(|e| Error::io(&state, e))?;
    }
    log(&format!("scan {hash}: {} cells, state file {}", spec.cell_count(), state.display()));
    let progress = |k: usize, total: usize| log(&format!("cell {k}/{total}"));
    let opts = ScanOptions {
        checkpoint: Some(state.clone()),
        max_new_cells: None,
        progress: Some(&progress),
    };
    let diagram = run_scan_with(&spec, &opts)?.expect("scan without a cell limit completes");
    let threshold = config.threshold.unwrap_or_else(|| default_threshold(&spec));
    let metal = classify_cells(&diagram, threshold)?;

    let header = |first: &str| std::iter::once(first.to_string()).chain(spec.us.iter().map(|&u| fmt_f64(u)));
    let mut sigma = Table::new(header("lambda\\u"));
    let mut metal_t = Table::new(header("lambda\\u"));
    let mut cells = Table::new(["lambda", "u", "sigma_star", "best_l0", "gamma", "boundary_limited", "error"]);
    for (r, &lambda) in spec.lambdas.iter().enumerate() {
        let row = &diagram.cells[r * spec.us.len()..(r + 1) * spec.us.len()];
        sigma.push(
            std::iter::once(Field::Num(lambda))
                .chain(row.iter().map(|c| Field::Num(c.sigma_star.unwrap_or(f64::NAN))))
                .collect(),
        );
        metal_t.push(
            std::iter::once(Field::Num(lambda))
                .chain(metal[r * spec.us.len()..(r + 1) * spec.us.len()].iter().map(|&m| Field::Int(m as i64)))
                .collect(),
        );
        for c in row {
            cells.push(vec![
                c.lambda.into(),
                c.u.into(),
                c.sigma_star.unwrap_or(f64::NAN).into(),
                c.best_l0.map_or(Field::Text(String::new()), Field::from),
                c.gamma.unwrap_or(f64::NAN).into(),
                Field::Int(c.boundary_limited as i64),
                c.error.clone().unwrap_or_default().replace(',', ";").into(),
            ]);
        }
    }
    w.table(&hashed_name("scan-sigma", &hash, "csv"), &sigma)?;
    w.table(&hashed_name("scan-metal", &hash, "csv"), &metal_t)?;
    w.table(&hashed_name("scan-cells", &hash, "csv"), &cells)?;
    w.grid(
        &hashed_name("scan-sigma", &hash, "dat"),
        &GridData {
            rows: spec.lambdas.len(),
            cols: spec.us.len(),
            values: diagram.sigma_matrix(),
            row_coords: Some(spec.lambdas.clone()),
            col_coords: Some(spec.us.clone()),
            comments: vec!["sigma*; rows = lambda, columns = U".into()],
        },
    )?;
    let failed = diagram.cells.iter().filter(|c| c.error.is_some()).count();
    let results = json!({
        "spec": spec,
        "spec_hash": hash,
        "threshold": threshold,
        "metal_cells": metal.iter().filter(|&&m| m).count(),
        "failed_cells": failed,
        "initial_positions": spec.initial_positions()?,
    });
    let mut resolved = config.clone();
    resolved.scan = Some(spec.clone());
    resolved.preset = None;
    resolved.resume = None;
    w.finish(&hashed_name("scan", &hash, "json"), Sidecar::new("scan", &resolved, None, results))
}

fn fock(config: &RunConfig, mut w: Writer<'_>) -> Result<Report> {
    let params = config.model_params(100)?;
    let basis = build_sorted_sp_basis(&params)?;
    let stats = overlap_statistics(&basis)?;
    let mut t = Table::new([
        "miniband",
        "composition",
        "pairs",
        "mean_i0",
        "std_i0",
        "mean_i0_onsite",
        "mean_abs_cross",
        "neighbor_links",
    ]);
    for s in &stats {
        t.push(vec![
            s.miniband.to_string().into(),
            format!("{}x{}", s.bands.0, s.bands.1).into(),
            s.pairs.into(),
            s.mean_self.into(),
            s.std_self.into(),
            s.mean_self_onsite.into(),
            s.mean_cross.into(),
            s.neighbor_links.into(),
        ]);
    }
    w.table("fock-overlaps.csv", &t)?;
    let tp = tp_minibands(basis.windows.as_ref().expect("statistics imply minibands"));
    let measured = miniband_distances(&tp);
    let gaps = match config.gap {
        Some(g) => vec![g; measured.len()],
        None => measured.clone(),
    };
    let resonances = resonance_estimate(&stats, &gaps, (0.0, f64::INFINITY))?;
    let p = w.path("fock-resonance.json");
    let body = json!({ "measured_distances": measured, "gaps_used": gaps, "resonances": resonances });
    crate::io::write_text(&p, &(serde_json::to_string_pretty(&body)? + "\n"))?;
    let results = json!({
        "bound_pairs": basis.bound_pairs()?.len(),
        "extended_warning": basis.extended_warning,
        "resonances": resonances,
    });
    w.finish("fock.json", Sidecar::new("fock", config, Some(params), results))
}
