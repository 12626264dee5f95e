//! Eigenstates and their observables: site PDFs, participation numbers,
//! miniband labels, localization-length fits and the max-participation sweep.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::slicing::{self, SliceOptions};
use crate::linalg::{dense, Columns};
use crate::model::{build_sp_hamiltonian, build_tp_hamiltonian, ModelParams, PairBasis, SparseSymMatrix};

/// How basis amplitudes map onto lattice sites.
#[derive(Debug, Clone, Copy)]
pub enum Sites<'a> {
    /// One particle: basis index = site.
    Single(usize),
    /// Two bosons in the symmetric pair basis.
    Pair(&'a PairBasis),
}

impl Sites<'_> {
    pub fn lattice_size(&self) -> usize {
        match self {
            Sites::Single(n) => *n,
            Sites::Pair(b) => b.lattice_size(),
        }
    }

    pub fn particles(&self) -> usize {
        match self {
            Sites::Single(_) => 1,
            Sites::Pair(_) => 2,
        }
    }

    /// Site PDF of a normalized state, without the normalization check.
    pub fn pdf(&self, v: &[f64]) -> Vec<f64> {
        match self {
            Sites::Single(_) => v.iter().map(|x| x * x).collect(),
            Sites::Pair(basis) => pair_pdf(basis, v.iter().map(|x| x * x)),
        }
    }
}

/// `p_l = (Σ_{k>=l} |L_lk|² + Σ_{m<=l} |L_ml|²) / 2` from squared amplitudes.
pub(crate) fn pair_pdf(basis: &PairBasis, weights: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut p = vec![0.0; basis.lattice_size()];
    for ((l, m), w) in basis.pairs().zip(weights) {
        p[l] += 0.5 * w;
        p[m] += 0.5 * w;
    }
    p
}

fn check_normalized(norm_sq: f64) -> Result<()> {
    let norm = norm_sq.sqrt();
    if (norm - 1.0).abs() > 1e-8 {
        return Err(Error::Precondition(format!("state norm {norm} deviates from 1")));
    }
    Ok(())
}

/// Site PDF of a normalized two-boson state in the pair basis.
pub fn pdf_of_state(v: &[f64], basis: &PairBasis) -> Result<Vec<f64>> {
    if v.len() != basis.dim() {
        return Err(Error::Config(format!(
            "state has {} amplitudes, pair basis has {}",
            v.len(),
            basis.dim()
        )));
    }
    check_normalized(v.iter().map(|x| x * x).sum())?;
    Ok(Sites::Pair(basis).pdf(v))
}

/// `1 / Σ p_l²`.
pub fn participation_number(p: &[f64]) -> Result<f64> {
    let s: f64 = p.iter().map(|x| x * x).sum();
    if !(s > 0.0) {
        return Err(Error::Domain("participation number of an all-zero PDF".into()));
    }
    Ok(1.0 / s)
}

/// Site with the largest PDF value (first on ties).
pub fn max_site(p: &[f64]) -> usize {
    p.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &x)| if x > best.1 { (i, x) } else { best })
        .0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Miniband {
    SP1,
    SP2,
    SP3,
    TP1,
    TP2,
    TP3,
    TP4,
    TP5,
}

impl Miniband {
    pub const SINGLE: [Miniband; 3] = [Miniband::SP1, Miniband::SP2, Miniband::SP3];
    pub const PAIR: [Miniband; 5] = [Miniband::TP1, Miniband::TP2, Miniband::TP3, Miniband::TP4, Miniband::TP5];

    /// Two-particle miniband holding a product of single-particle minibands
    /// `a` and `b` (0-based): TP index = a + b.
    pub fn product(a: usize, b: usize) -> Miniband {
        Miniband::PAIR[a + b]
    }
}

impl fmt::Display for Miniband {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for Miniband {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Miniband::SINGLE
            .iter()
            .chain(Miniband::PAIR.iter())
            .copied()
            .find(|m| m.to_string() == s)
            .ok_or_else(|| Error::Parse(format!("unknown miniband `{s}`")))
    }
}

/// Ordered, disjoint energy windows, one per miniband.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinibandWindows {
    pub labels: Vec<Miniband>,
    /// `(lower, upper)` per label; consecutive windows meet at gap midpoints.
    pub windows: Vec<(f64, f64)>,
    /// Occupied spectral extent of each miniband, before gap-midpoint padding.
    pub extents: Vec<(f64, f64)>,
}

impl MinibandWindows {
    /// Label of energy `e`; energies beyond the outer windows take the
    /// outermost label.
    pub fn label(&self, e: f64) -> Miniband {
        let k = self.windows[..self.windows.len() - 1]
            .iter()
            .take_while(|w| e >= w.1)
            .count();
        self.labels[k]
    }

    pub fn window(&self, m: Miniband) -> Option<(f64, f64)> {
        self.labels.iter().position(|&l| l == m).map(|i| self.windows[i])
    }

    pub fn extent(&self, m: Miniband) -> Option<(f64, f64)> {
        self.labels.iter().position(|&l| l == m).map(|i| self.extents[i])
    }

    fn from_extents(labels: Vec<Miniband>, extents: Vec<(f64, f64)>) -> Self {
        let k = extents.len();
        let mut windows = extents.clone();
        for i in 0..k - 1 {
            let mid = 0.5 * (extents[i].1 + extents[i + 1].0);
            windows[i].1 = mid;
            windows[i + 1].0 = mid;
        }
        windows[0].0 = f64::NEG_INFINITY;
        windows[k - 1].1 = f64::INFINITY;
        MinibandWindows {
            labels,
            windows,
            extents,
        }
    }
}

/// Splits an ascending spectrum into `k` clusters at its `k-1` widest gaps.
///
/// A gap counts only if it exceeds 10× the median level spacing. Isolated
/// groups smaller than `max(3, len/100)` levels (boundary states inside a
/// gap) do not split a gap in two; they are left out of every cluster's
/// extent. Fewer than `k-1` qualifying gaps means the clustering is
/// unavailable.
pub fn detect_clusters(energies: &[f64], k: usize) -> Result<Vec<(f64, f64)>> {
    let unavailable = |why: String| Err(Error::ClassificationUnavailable(why));
    if energies.len() < 2 * k {
        return unavailable(format!("{} levels cannot form {k} clusters", energies.len()));
    }
    let mut sorted: Vec<f64> = energies.windows(2).map(|w| w[1] - w[0]).collect();
    sorted.sort_by(f64::total_cmp);
    let threshold = 10.0 * sorted[sorted.len() / 2];

    // Raw clusters between every qualifying gap, as index ranges.
    let mut raw: Vec<(usize, usize)> = Vec::new();
    let mut start = 0;
    for i in 0..energies.len() - 1 {
        if energies[i + 1] - energies[i] > threshold {
            raw.push((start, i));
            start = i + 1;
        }
    }
    raw.push((start, energies.len() - 1));

    let min_size = 3.max(energies.len() / 100);
    let bulk: Vec<(usize, usize)> = raw.into_iter().filter(|&(a, b)| b + 1 - a >= min_size).collect();
    if bulk.len() < k {
        return unavailable(format!(
            "found {} gap-separated groups wider than {threshold:.3e}, need {k}",
            bulk.len()
        ));
    }
    let mut gaps: Vec<(f64, usize)> = bulk
        .windows(2)
        .enumerate()
        .map(|(i, w)| (energies[w[1].0] - energies[w[0].1], i))
        .collect();
    gaps.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut cuts: Vec<usize> = gaps.iter().take(k - 1).map(|g| g.1).collect();
    cuts.sort_unstable();

    let mut clusters = Vec::with_capacity(k);
    let mut first = 0;
    for c in cuts.into_iter().chain(std::iter::once(bulk.len() - 1)) {
        clusters.push((energies[bulk[first].0], energies[bulk[c].1]));
        first = c + 1;
    }
    Ok(clusters)
}

/// SP1..SP3 windows from a single-particle spectrum.
pub fn sp_minibands(energies: &[f64]) -> Result<MinibandWindows> {
    let extents = detect_clusters(energies, 3)?;
    Ok(MinibandWindows::from_extents(Miniband::SINGLE.to_vec(), extents))
}

/// TP1..TP5 windows by the product rule over SP minibands.
pub fn tp_minibands(sp: &MinibandWindows) -> MinibandWindows {
    let sp_ext = &sp.extents;
    let mut extents = vec![(f64::INFINITY, f64::NEG_INFINITY); 5];
    for a in 0..3 {
        for b in a..3 {
            let e = &mut extents[a + b];
            e.0 = e.0.min(sp_ext[a].0 + sp_ext[b].0);
            e.1 = e.1.max(sp_ext[a].1 + sp_ext[b].1);
        }
    }
    MinibandWindows::from_extents(Miniband::PAIR.to_vec(), extents)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DiagMode {
    /// Every eigenpair.
    Full,
    /// Every eigenpair with eigenvalue in `[lower, upper)`.
    Window { lower: f64, upper: f64 },
}

#[derive(Debug, Clone, Copy)]
pub struct DiagOptions {
    pub keep_vectors: bool,
    /// `Full` mode uses the dense solver up to this dimension and spectrum
    /// slicing beyond it.
    pub dense_limit: usize,
    pub slicing: SliceOptions,
}

impl Default for DiagOptions {
    fn default() -> Self {
        DiagOptions {
            keep_vectors: false,
            dense_limit: 1500,
            slicing: SliceOptions::default(),
        }
    }
}

/// Eigenvalues ascending, with per-state site PDF and participation number.
#[derive(Debug, Clone)]
pub struct EigenSet {
    pub particles: usize,
    pub lattice_size: usize,
    pub energies: Vec<f64>,
    /// Present when requested via [`DiagOptions::keep_vectors`].
    pub vectors: Option<Columns>,
    /// Row-major `len × lattice_size`.
    pub pdfs: Vec<f64>,
    pub participation: Vec<f64>,
    pub labels: Option<Vec<Miniband>>,
    /// Largest `‖Hv − Ev‖` over the returned states.
    pub max_residual: f64,
}

impl EigenSet {
    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    pub fn pdf(&self, q: usize) -> &[f64] {
        &self.pdfs[q * self.lattice_size..(q + 1) * self.lattice_size]
    }

    /// Index of the state with the largest participation number.
    pub fn most_extended(&self) -> Option<usize> {
        self.participation
            .iter()
            .enumerate()
            .fold(None, |best: Option<(usize, f64)>, (i, &p)| match best {
                Some((_, bp)) if bp >= p => best,
                _ => Some((i, p)),
            })
            .map(|(i, _)| i)
    }
}

struct Chunk {
    energies: Vec<f64>,
    pdfs: Vec<f64>,
    participation: Vec<f64>,
    vectors: Option<Columns>,
    residual: f64,
}

fn observe(values: Vec<f64>, vectors: Columns, sites: Sites<'_>, keep: bool, residual: f64) -> Result<Chunk> {
    let mut pdfs = Vec::with_capacity(values.len() * sites.lattice_size());
    let mut participation = Vec::with_capacity(values.len());
    for q in 0..values.len() {
        let p = sites.pdf(vectors.col(q));
        participation.push(participation_number(&p)?);
        pdfs.extend_from_slice(&p);
    }
    Ok(Chunk {
        energies: values,
        pdfs,
        participation,
        vectors: keep.then_some(vectors),
        residual,
    })
}

fn max_residual(h: &SparseSymMatrix, values: &[f64], vectors: &Columns) -> f64 {
    (0..values.len())
        .into_par_iter()
        .map(|q| {
            let v = vectors.col(q);
            let mut hv = vec![0.0; v.len()];
            h.matvec(v, &mut hv);
            hv.iter().zip(v).map(|(a, b)| (a - values[q] * b).powi(2)).sum::<f64>().sqrt()
        })
        .reduce(|| 0.0, f64::max)
}

/// Diagonalizes `h` and evaluates per-state observables on `sites`.
pub fn diagonalize(h: &SparseSymMatrix, mode: DiagMode, sites: Sites<'_>, opts: &DiagOptions) -> Result<EigenSet> {
    let expected_dim = match sites {
        Sites::Single(n) => n,
        Sites::Pair(b) => b.dim(),
    };
    if h.dim() != expected_dim {
        return Err(Error::Config(format!(
            "matrix dimension {} does not match basis dimension {expected_dim}",
            h.dim()
        )));
    }
    let hnorm = h.norm_estimate().max(f64::MIN_POSITIVE);
    let chunks: Vec<Chunk> = match mode {
        DiagMode::Full if h.dim() <= opts.dense_limit => {
            let (values, vectors) = dense::eigh(h.dim(), &h.to_dense())?;
            let residual = max_residual(h, &values, &vectors);
            vec![observe(values, vectors, sites, opts.keep_vectors, residual)?]
        }
        DiagMode::Full => {
            let (lo, hi) = h.gershgorin_bounds();
            let pad = 1e-3 * (hi - lo) + 1e-3;
            slice_chunks(h, lo - pad, hi + pad, sites, opts)?
        }
        DiagMode::Window { lower, upper } => {
            if !(lower < upper) {
                return Err(Error::Precondition(format!("window [{lower}, {upper}) is empty")));
            }
            slice_chunks(h, lower, upper, sites, opts)?
        }
    };

    let mut set = EigenSet {
        particles: sites.particles(),
        lattice_size: sites.lattice_size(),
        energies: Vec::new(),
        vectors: opts.keep_vectors.then(|| Columns::new(h.dim())),
        pdfs: Vec::new(),
        participation: Vec::new(),
        labels: None,
        max_residual: 0.0,
    };
    for c in chunks {
        set.energies.extend(c.energies);
        set.pdfs.extend(c.pdfs);
        set.participation.extend(c.participation);
        set.max_residual = set.max_residual.max(c.residual);
        if let (Some(all), Some(v)) = (set.vectors.as_mut(), c.vectors) {
            all.data.extend(v.data);
        }
    }
    if set.max_residual > 1e-8 * hnorm {
        return Err(Error::Convergence {
            iterations: 0,
            residual: set.max_residual,
        });
    }
    Ok(set)
}

fn slice_chunks(h: &SparseSymMatrix, lo: f64, hi: f64, sites: Sites<'_>, opts: &DiagOptions) -> Result<Vec<Chunk>> {
    slicing::map_window(h, lo, hi, &opts.slicing, |s| {
        observe(s.values, s.vectors, sites, opts.keep_vectors, s.max_residual)
    })
}

/// Labels every state of `set` with its miniband.
///
/// Windows come from the single-particle spectrum of `params` (three
/// gap-separated clusters); two-particle windows follow by the product rule.
pub fn classify_minibands(set: &EigenSet, params: &ModelParams) -> Result<MinibandWindows> {
    let sp = single_particle_spectrum(params)?;
    let sp_windows = sp_minibands(&sp)?;
    Ok(match set.particles {
        1 => sp_windows,
        _ => tp_minibands(&sp_windows),
    })
}

/// Applies [`classify_minibands`] and stores the labels in `set`.
pub fn label_states(set: &mut EigenSet, params: &ModelParams) -> Result<MinibandWindows> {
    let windows = classify_minibands(set, params)?;
    set.labels = Some(set.energies.iter().map(|&e| windows.label(e)).collect());
    Ok(windows)
}

/// Ascending single-particle eigenvalues.
pub fn single_particle_spectrum(params: &ModelParams) -> Result<Vec<f64>> {
    let h = build_sp_hamiltonian(params)?;
    dense::eigvalsh(h.dim(), &h.to_dense())
}

/// All single-particle eigenstates with observables (and vectors).
pub fn sp_eigenset(params: &ModelParams) -> Result<EigenSet> {
    let h = build_sp_hamiltonian(params)?;
    let opts = DiagOptions {
        keep_vectors: true,
        dense_limit: usize::MAX,
        ..Default::default()
    };
    diagonalize(&h, DiagMode::Full, Sites::Single(params.n), &opts)
}

/// Two-particle eigenstates with observables.
pub fn tp_eigenset(params: &ModelParams, mode: DiagMode, opts: &DiagOptions) -> Result<EigenSet> {
    let basis = PairBasis::new(params.n);
    let h = build_tp_hamiltonian(params, &basis)?;
    diagonalize(&h, mode, Sites::Pair(&basis), opts)
}

/// Decay length from one eigenstate PDF.
///
/// Each flank of the peak is fitted by least squares of `ln p_l` against
/// distance, skipping the 5 sites next to the peak and values below 1e-14;
/// `p ~ exp(-2 d / ξ)` gives `ξ = -2 / slope`. Flanks with fewer than 8
/// usable sites are ignored.
pub fn fit_decay_length(pdf: &[f64]) -> Option<f64> {
    const SKIP: usize = 5;
    const FLOOR: f64 = 1e-14;
    const MIN_POINTS: usize = 8;
    let peak = max_site(pdf);
    let flank = |sites: &mut dyn Iterator<Item = usize>| -> Option<f64> {
        let pts: Vec<(f64, f64)> = sites
            .map(|l| (l.abs_diff(peak) as f64, pdf[l]))
            .filter(|&(_, p)| p >= FLOOR)
            .map(|(d, p)| (d, p.ln()))
            .collect();
        if pts.len() < MIN_POINTS {
            return None;
        }
        let slope = linear_fit(&pts).0;
        (slope < 0.0).then(|| -2.0 / slope)
    };
    let left = flank(&mut (0..peak.saturating_sub(SKIP)).rev());
    let right = flank(&mut (peak + SKIP + 1..pdf.len()));
    match (left, right) {
        (Some(a), Some(b)) => Some(0.5 * (a + b)),
        (a, b) => a.or(b),
    }
}

/// Median fitted decay length over all states of a single-particle set.
pub fn localization_length_fit(set: &EigenSet) -> Option<f64> {
    let mut fits: Vec<f64> = (0..set.len()).filter_map(|q| fit_decay_length(set.pdf(q))).collect();
    if fits.is_empty() {
        return None;
    }
    fits.sort_by(f64::total_cmp);
    Some(fits[fits.len() / 2])
}

/// Least squares `y = slope x + intercept`; returns `(slope, intercept, rms)`.
pub fn linear_fit(points: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let rms = (points
        .iter()
        .map(|p| (p.1 - slope * p.0 - intercept).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    (slope, intercept, rms)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub u: f64,
    pub max_participation: f64,
    pub energy: f64,
    pub state: usize,
}

/// Largest two-particle participation number for each `U` in `u_grid`.
///
/// Grid points are independent and run in parallel; results keep grid order.
pub fn max_participation_sweep(
    params: &ModelParams,
    u_grid: &[f64],
    mode: DiagMode,
    opts: &DiagOptions,
) -> Result<Vec<SweepPoint>> {
    if u_grid.iter().any(|u| !u.is_finite()) || u_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Config("U grid must be finite and ascending".into()));
    }
    let opts = DiagOptions {
        keep_vectors: false,
        ..*opts
    };
    u_grid
        .par_iter()
        .map(|&u| {
            let p = ModelParams { u, ..*params };
            let set = tp_eigenset(&p, mode, &opts)?;
            let q = set
                .most_extended()
                .ok_or_else(|| Error::Domain(format!("no states found at U={u}")))?;
            Ok(SweepPoint {
                u,
                max_participation: set.participation[q],
                energy: set.energies[q],
                state: q,
            })
        })
        .collect()
}

/// Evenly spaced grid `start, start+step, ..` up to `end` inclusive.
pub fn uniform_grid(start: f64, end: f64, step: f64) -> Vec<f64> {
    let count = ((end - start) / step + 1e-9).floor() as usize + 1;
    (0..count).map(|i| start + step * i as f64).collect()
}
