//! The (U, λ) phase-diagram scan: many two-particle spreading runs reduced
//! to the largest final second moment per grid cell.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::transport_runs;
use crate::error::{Error, Result};
use crate::model::{Boundary, ModelParams, GOLDEN_MEAN};

/// Everything that determines a scan's output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSpec {
    /// Ascending potential strengths (rows of the diagram).
    pub lambdas: Vec<f64>,
    /// Ascending interaction strengths (columns of the diagram).
    pub us: Vec<f64>,
    pub n: usize,
    pub t_final: f64,
    pub realizations: usize,
    /// Explicit initial positions `l0`; overrides the evenly spaced rule and
    /// must then hold exactly `realizations` distinct entries.
    #[serde(default)]
    pub positions: Option<Vec<usize>>,
    /// Potential phase, fixed for the whole scan.
    #[serde(default)]
    pub beta: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub boundary: Boundary,
    /// Number of uniform sample intervals per run.
    #[serde(default = "default_samples")]
    pub samples: usize,
}

fn default_alpha() -> f64 {
    GOLDEN_MEAN
}

fn default_samples() -> usize {
    40
}

/// `count` evenly spaced values from `start` to `end` inclusive.
pub fn linspace(start: f64, end: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![start],
        _ => (0..count)
            .map(|i| start + (end - start) * i as f64 / (count - 1) as f64)
            .collect(),
    }
}

impl ScanSpec {
    /// Named presets: `desk` (N=144, t=2000, 12 realizations, 25 U × 12 λ)
    /// and `paper` (N=610, t=1.5e4, 60 realizations, same grid).
    pub fn preset(name: &str) -> Result<Self> {
        let (n, t_final, realizations) = match name {
            "desk" => (144, 2.0e3, 12),
            "paper" => (610, 1.5e4, 60),
            other => return Err(Error::Config(format!("unknown preset `{other}` (expected desk or paper)"))),
        };
        Ok(ScanSpec {
            lambdas: linspace(2.1, 3.4, 12),
            us: linspace(0.0, 16.0, 25),
            n,
            t_final,
            realizations,
            positions: None,
            beta: 0.0,
            alpha: GOLDEN_MEAN,
            boundary: Boundary::Open,
            samples: default_samples(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        let grid_ok = |g: &[f64], name: &str| -> Result<()> {
            if g.is_empty() {
                return Err(Error::Config(format!("{name} grid is empty")));
            }
            if g.iter().any(|x| !x.is_finite()) || g.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::Config(format!("{name} grid must be finite and strictly ascending")));
            }
            Ok(())
        };
        grid_ok(&self.lambdas, "λ")?;
        grid_ok(&self.us, "U")?;
        if self.realizations == 0 {
            return Err(Error::Config("realization count must be at least 1".into()));
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return Err(Error::Config(format!("final time must be positive, got {}", self.t_final)));
        }
        if self.samples < 2 {
            return Err(Error::Config("at least 2 sample intervals are needed".into()));
        }
        for &lambda in &self.lambdas {
            self.params(lambda, self.us[0]).validate()?;
        }
        self.initial_positions()?;
        Ok(())
    }

    pub fn params(&self, lambda: f64, u: f64) -> ModelParams {
        ModelParams {
            n: self.n,
            lambda,
            u,
            beta: self.beta,
            alpha: self.alpha,
            boundary: self.boundary,
        }
    }

    /// Initial positions `l0` (pair on `l0, l0+1`) shared by every cell.
    ///
    /// Without explicit positions they are spaced `max(1, N/(2R))` apart and
    /// centred on the middle bond of the chain.
    pub fn initial_positions(&self) -> Result<Vec<usize>> {
        let r = self.realizations;
        if let Some(p) = &self.positions {
            let mut sorted = p.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if p.len() != r || sorted.len() != r {
                return Err(Error::Config(format!("need {r} distinct initial positions, got {p:?}")));
            }
            if let Some(&bad) = p.iter().find(|&&l| l + 1 >= self.n) {
                return Err(Error::Index {
                    index: bad,
                    limit: self.n.saturating_sub(1),
                });
            }
            return Ok(p.clone());
        }
        if r > self.n.saturating_sub(1) {
            return Err(Error::Config(format!("{r} realizations do not fit on {} sites", self.n)));
        }
        let spacing = (self.n / (2 * r)).max(1);
        let middle = (self.n as i64 - 2) / 2;
        let first = middle - ((r as i64 - 1) * spacing as i64) / 2;
        let first = first.clamp(0, self.n as i64 - 2 - (r as i64 - 1) * spacing as i64);
        Ok((0..r).map(|k| (first + (k * spacing) as i64) as usize).collect())
    }

    /// First 12 hex digits of the SHA-256 of the canonical JSON encoding.
    pub fn content_hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("scan spec serializes");
        let digest = Sha256::digest(&json);
        digest.iter().take(6).map(|b| format!("{b:02x}")).collect()
    }

    pub fn cell_count(&self) -> usize {
        self.lambdas.len() * self.us.len()
    }
}

/// Reduced result of one `(λ, U)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub lambda: f64,
    pub u: f64,
    /// Largest final σ over realizations; `None` if the cell failed.
    pub sigma_star: Option<f64>,
    /// Initial position of the fastest-growing realization.
    pub best_l0: Option<usize>,
    /// Spreading exponent of that realization.
    pub gamma: Option<f64>,
    /// That realization touched the boundary before `t_final / 2`.
    pub boundary_limited: bool,
    pub error: Option<String>,
}

/// `σ*` on the `λ × U` grid, row-major by λ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseDiagram {
    pub spec: ScanSpec,
    pub spec_hash: String,
    pub cells: Vec<CellResult>,
}

impl PhaseDiagram {
    pub fn rows(&self) -> usize {
        self.spec.lambdas.len()
    }

    pub fn cols(&self) -> usize {
        self.spec.us.len()
    }

    pub fn cell(&self, row: usize, col: usize) -> &CellResult {
        &self.cells[row * self.cols() + col]
    }

    /// σ* per cell, NaN for failed cells.
    pub fn sigma_matrix(&self) -> Vec<f64> {
        self.cells.iter().map(|c| c.sigma_star.unwrap_or(f64::NAN)).collect()
    }
}

/// Metal iff `σ* >= sigma_c`; failed cells count as insulating.
pub fn classify_cells(diagram: &PhaseDiagram, sigma_c: f64) -> Result<Vec<bool>> {
    if !(sigma_c > 0.0) {
        return Err(Error::Config(format!("classification threshold must be positive, got {sigma_c}")));
    }
    Ok(diagram
        .cells
        .iter()
        .map(|c| c.sigma_star.is_some_and(|s| s >= sigma_c))
        .collect())
}

/// Default threshold `N / 10`.
pub fn default_threshold(spec: &ScanSpec) -> f64 {
    spec.n as f64 / 10.0
}

/// Runs every realization of one cell as a single block propagation.
pub fn run_cell(spec: &ScanSpec, lambda: f64, u: f64) -> CellResult {
    let outcome = spec
        .initial_positions()
        .and_then(|l0s| transport_runs(&spec.params(lambda, u), &l0s, spec.t_final, spec.samples));
    match outcome {
        Ok(runs) => {
            // First maximum in realization order, so ties resolve deterministically.
            let best = runs
                .iter()
                .fold(None, |acc: Option<&crate::dynamics::TransportResult>, r| match acc {
                    Some(b) if b.trace.final_sigma() >= r.trace.final_sigma() => Some(b),
                    _ => Some(r),
                })
                .expect("at least one realization");
            CellResult {
                lambda,
                u,
                sigma_star: Some(best.trace.final_sigma()),
                best_l0: Some(best.l0),
                gamma: best.fit.map(|f| f.gamma),
                boundary_limited: best.boundary_limited,
                error: None,
            }
        }
        Err(e) => CellResult {
            lambda,
            u,
            sigma_star: None,
            best_l0: None,
            gamma: None,
            boundary_limited: false,
            error: Some(e.to_string()),
        },
    }
}

/// On-disk scan progress.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Checkpoint {
    spec_hash: String,
    spec: ScanSpec,
    cells: Vec<Option<CellResult>>,
}

#[derive(Default)]
pub struct ScanOptions<'a> {
    /// State file read on start (if present and non-empty) and rewritten
    /// after every completed cell.
    pub checkpoint: Option<PathBuf>,
    /// Stop after this many newly computed cells (the checkpoint keeps them).
    pub max_new_cells: Option<usize>,
    /// Called with `(completed, total)` after each cell.
    pub progress: Option<&'a (dyn Fn(usize, usize) + Sync)>,
}

fn load_checkpoint(path: &Path, spec: &ScanSpec, hash: &str) -> Result<Vec<Option<CellResult>>> {
    let empty = vec![None; spec.cell_count()];
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(empty),
        Err(e) => return Err(Error::io(path, e)),
    };
    if text.trim().is_empty() {
        return Ok(empty);
    }
    let state: Checkpoint = serde_json::from_str(&text)?;
    if state.spec_hash != hash || state.spec != *spec {
        return Err(Error::ResumeMismatch(format!(
            "state file {} belongs to spec {}, current spec is {hash}",
            path.display(),
            state.spec_hash
        )));
    }
    if state.cells.len() != spec.cell_count() {
        return Err(Error::ResumeMismatch(format!(
            "state file holds {} cells, spec needs {}",
            state.cells.len(),
            spec.cell_count()
        )));
    }
    Ok(state.cells)
}

fn save_checkpoint(path: &Path, spec: &ScanSpec, hash: &str, cells: &[Option<CellResult>]) -> Result<()> {
    let state = Checkpoint {
        spec_hash: hash.to_string(),
        spec: spec.clone(),
        cells: cells.to_vec(),
    };
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, serde_json::to_vec(&state)?).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Runs (or resumes) a scan. Cells run in parallel; results do not depend on
/// execution order or on interruptions.
///
/// Returns `Ok(None)` when `max_new_cells` stopped the scan early.
pub fn run_scan_with(spec: &ScanSpec, opts: &ScanOptions<'_>) -> Result<Option<PhaseDiagram>> {
    spec.validate()?;
    let hash = spec.content_hash();
    let initial = match &opts.checkpoint {
        Some(path) => load_checkpoint(path, spec, &hash)?,
        None => vec![None; spec.cell_count()],
    };
    let mut pending: Vec<usize> = (0..initial.len()).filter(|&i| initial[i].is_none()).collect();
    if let Some(limit) = opts.max_new_cells {
        pending.truncate(limit);
    }
    let total = spec.cell_count();
    let done = AtomicUsize::new(total - initial.iter().filter(|c| c.is_none()).count());
    let state = Mutex::new(initial);
    let cols = spec.us.len();

    pending.par_iter().try_for_each(|&idx| -> Result<()> {
        let cell = run_cell(spec, spec.lambdas[idx / cols], spec.us[idx % cols]);
        let mut cells = state.lock().expect("scan state lock");
        cells[idx] = Some(cell);
        if let Some(path) = &opts.checkpoint {
            save_checkpoint(path, spec, &hash, &cells)?;
        }
        drop(cells);
        let k = done.fetch_add(1, Ordering::Relaxed) + 1;
        if let Some(report) = opts.progress {
            report(k, total);
        }
        Ok(())
    })?;

    let cells = state.into_inner().expect("scan state lock");
    if cells.iter().any(Option::is_none) {
        return Ok(None);
    }
    Ok(Some(PhaseDiagram {
        spec: spec.clone(),
        spec_hash: hash,
        cells: cells.into_iter().map(Option::unwrap).collect(),
    }))
}

/// Runs a whole scan without checkpointing.
pub fn run_scan(spec: &ScanSpec) -> Result<PhaseDiagram> {
    Ok(run_scan_with(spec, &ScanOptions::default())?.expect("uninterrupted scan completes"))
}
