//! Real-time evolution `ψ(t) = exp(-iHt) ψ₀` by Chebyshev expansion, and the
//! wave-packet observables built on it.
//!
//! The spectrum is mapped onto `[-1, 1]` with Gershgorin bounds widened by
//! 1%, and
//!
//! ```text
//! exp(-iHΔt) = e^{-ibΔt} Σ_k (2 - δ_k0) (-i)^k J_k(aΔt) T_k((H - b)/a)
//! ```
//!
//! is truncated where the dropped Bessel tail falls below 1e-14. Long
//! intervals are split into macro steps of at most [`MAX_STEP_ARGUMENT`]
//! in `aΔt`, which keeps every expansion below 10⁴ terms.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{build_tp_hamiltonian, ModelParams, PairBasis, SparseSymMatrix};
use crate::spectral::{linear_fit, pair_pdf, Sites};

/// Largest `a Δt` handled by one Chebyshev expansion.
pub const MAX_STEP_ARGUMENT: f64 = 4000.0;
/// Dropped-coefficient tail bound.
pub const TAIL_TOLERANCE: f64 = 1e-14;
/// Norm drift that aborts a run.
pub const NORM_DRIFT_LIMIT: f64 = 1e-8;
/// Edge-site PDF that counts as boundary contact.
pub const EDGE_THRESHOLD: f64 = 1e-8;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Bessel functions `J_0(x) ..= J_order(x)` for `x >= 0` by Miller's
/// backward recurrence, normalized with `J_0 + 2 Σ J_2k = 1`.
pub fn bessel_j_sequence(order: usize, x: f64) -> Vec<f64> {
    assert!(x >= 0.0 && x.is_finite());
    let mut out = vec![0.0; order + 1];
    if x == 0.0 {
        out[0] = 1.0;
        return out;
    }
    let top = order.max(x.ceil() as usize);
    let start = 2 * ((top + (160.0 * top as f64).sqrt() as usize + 30) / 2);
    let mut next = 0.0; // j_{k+1}
    let mut cur = 1e-300; // j_k
    let mut norm = 0.0;
    for k in (1..=start).rev() {
        let prev = 2.0 * k as f64 / x * cur - next;
        next = cur;
        cur = prev;
        let km1 = k - 1;
        if km1 <= order {
            out[km1] = cur;
        }
        if km1 % 2 == 0 {
            norm += if km1 == 0 { cur } else { 2.0 * cur };
        }
        if cur.abs() > 1e250 {
            cur *= 1e-250;
            next *= 1e-250;
            norm *= 1e-250;
            for v in out.iter_mut().skip(km1) {
                *v *= 1e-250;
            }
        }
    }
    for v in &mut out {
        *v /= norm;
    }
    out
}

/// Chebyshev coefficients `(2 - δ_k0) (-i)^k J_k(x)` truncated at the tail tolerance.
fn chebyshev_coefficients(x: f64) -> Vec<Complex64> {
    let order = (x + 16.0 * (x.max(1.0)).cbrt() + 60.0).ceil() as usize;
    let j = bessel_j_sequence(order, x);
    // Smallest K with Σ_{k>K} 2|J_k| < tolerance.
    let mut tail = 0.0;
    let mut keep = j.len();
    for k in (0..j.len()).rev() {
        tail += 2.0 * j[k].abs();
        if tail >= TAIL_TOLERANCE {
            keep = k + 1;
            break;
        }
    }
    let phases = [
        Complex64::new(1.0, 0.0),
        Complex64::new(0.0, -1.0),
        Complex64::new(-1.0, 0.0),
        Complex64::new(0.0, 1.0),
    ];
    (0..keep)
        .map(|k| phases[k % 4] * if k == 0 { j[0] } else { 2.0 * j[k] })
        .collect()
}

/// A real symmetric operator that acts on blocks of complex vectors stored
/// row-interleaved: entry `(i, r)` of a `dim × width` block is at `i * width + r`.
pub trait Operator: Sync {
    fn dim(&self) -> usize;

    fn apply_block(&self, x: &[Complex64], y: &mut [Complex64], width: usize);

    /// Enclosure of the spectrum.
    fn spectral_bounds(&self) -> (f64, f64);

    /// Chebyshev update `prev <- 2 (H cur - b cur)/a - prev` followed by
    /// `acc += coef * prev`.
    #[allow(clippy::too_many_arguments)]
    fn chebyshev_step(
        &self,
        cur: &[Complex64],
        prev: &mut [Complex64],
        acc: &mut [Complex64],
        scratch: &mut [Complex64],
        coef: Complex64,
        a: f64,
        b: f64,
        width: usize,
    ) {
        self.apply_block(cur, scratch, width);
        let s = 2.0 / a;
        for i in 0..prev.len() {
            prev[i] = (scratch[i] - cur[i] * b) * s - prev[i];
            acc[i] += coef * prev[i];
        }
    }
}

impl Operator for SparseSymMatrix {
    fn dim(&self) -> usize {
        SparseSymMatrix::dim(self)
    }

    fn apply_block(&self, x: &[Complex64], y: &mut [Complex64], width: usize) {
        let (row_ptr, cols, vals) = self.csr();
        for i in 0..self.dim() {
            let yi = &mut y[i * width..(i + 1) * width];
            yi.iter_mut().for_each(|v| *v = ZERO);
            for k in row_ptr[i]..row_ptr[i + 1] {
                let c = cols[k] as usize;
                let h = vals[k];
                for (yr, xr) in yi.iter_mut().zip(&x[c * width..(c + 1) * width]) {
                    *yr += xr * h;
                }
            }
        }
    }

    fn spectral_bounds(&self) -> (f64, f64) {
        self.gershgorin_bounds()
    }

    fn chebyshev_step(
        &self,
        cur: &[Complex64],
        prev: &mut [Complex64],
        acc: &mut [Complex64],
        scratch: &mut [Complex64],
        coef: Complex64,
        a: f64,
        b: f64,
        width: usize,
    ) {
        let (row_ptr, cols, vals) = self.csr();
        let rows = CsrRows { row_ptr, cols, vals };
        let step = ChebStep {
            cur: as_reals(cur),
            s: 2.0 / a,
            b,
            coef,
            w2: 2 * width,
        };
        let (prev, acc, hv) = (as_reals_mut(prev), as_reals_mut(acc), as_reals_mut(&mut scratch[..width]));
        #[cfg(target_arch = "x86_64")]
        if std::is_x86_feature_detected!("avx2") {
            // SAFETY: the CPU supports AVX2, checked just above.
            unsafe { chebyshev_rows_avx2(&rows, &step, prev, acc, hv) };
            return;
        }
        chebyshev_rows(&rows, &step, prev, acc, hv);
    }
}

struct CsrRows<'a> {
    row_ptr: &'a [usize],
    cols: &'a [u32],
    vals: &'a [f64],
}

struct ChebStep<'a> {
    cur: &'a [f64],
    s: f64,
    b: f64,
    coef: Complex64,
    /// Reals per block row (twice the block width).
    w2: usize,
}

fn as_reals(x: &[Complex64]) -> &[f64] {
    // SAFETY: Complex64 is repr(C) { re: f64, im: f64 }.
    unsafe { std::slice::from_raw_parts(x.as_ptr().cast(), 2 * x.len()) }
}

fn as_reals_mut(x: &mut [Complex64]) -> &mut [f64] {
    // SAFETY: Complex64 is repr(C) { re: f64, im: f64 }.
    unsafe { std::slice::from_raw_parts_mut(x.as_mut_ptr().cast(), 2 * x.len()) }
}

#[inline(always)]
fn chebyshev_rows(m: &CsrRows<'_>, st: &ChebStep<'_>, prev: &mut [f64], acc: &mut [f64], hv: &mut [f64]) {
    let w2 = st.w2;
    let (cr, ci) = (st.coef.re, st.coef.im);
    for i in 0..m.row_ptr.len() - 1 {
        hv.iter_mut().for_each(|v| *v = 0.0);
        for k in m.row_ptr[i]..m.row_ptr[i + 1] {
            let c = m.cols[k] as usize;
            let h = m.vals[k];
            for (y, x) in hv.iter_mut().zip(&st.cur[c * w2..(c + 1) * w2]) {
                *y += h * x;
            }
        }
        let span = i * w2..(i + 1) * w2;
        let p = &mut prev[span.clone()];
        for ((p, h), c) in p.iter_mut().zip(hv.iter()).zip(&st.cur[span.clone()]) {
            *p = (h - c * st.b) * st.s - *p;
        }
        for (a, p) in acc[span].chunks_exact_mut(2).zip(p.chunks_exact(2)) {
            a[0] += cr * p[0] - ci * p[1];
            a[1] += cr * p[1] + ci * p[0];
        }
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn chebyshev_rows_avx2(m: &CsrRows<'_>, st: &ChebStep<'_>, prev: &mut [f64], acc: &mut [f64], hv: &mut [f64]) {
    chebyshev_rows(m, st, prev, acc, hv)
}

/// Dense real symmetric operator, column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseSym {
    pub n: usize,
    pub data: Vec<f64>,
}

impl Operator for DenseSym {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply_block(&self, x: &[Complex64], y: &mut [Complex64], width: usize) {
        y.iter_mut().for_each(|v| *v = ZERO);
        // Symmetric: row i of A equals column i.
        for i in 0..self.n {
            let col = &self.data[i * self.n..(i + 1) * self.n];
            let yi = &mut y[i * width..(i + 1) * width];
            for (j, &h) in col.iter().enumerate() {
                if h != 0.0 {
                    for (yr, xr) in yi.iter_mut().zip(&x[j * width..(j + 1) * width]) {
                        *yr += xr * h;
                    }
                }
            }
        }
    }

    fn spectral_bounds(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..self.n {
            let col = &self.data[i * self.n..(i + 1) * self.n];
            let r: f64 = col.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, v)| v.abs()).sum();
            lo = lo.min(col[i] - r);
            hi = hi.max(col[i] + r);
        }
        (lo, hi)
    }
}

/// Map of the spectrum onto `[-1, 1]`: `(half-width a, centre b)`.
pub fn spectral_map(op: &impl Operator) -> Result<(f64, f64)> {
    let (lo, hi) = op.spectral_bounds();
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(Error::SpectralBounds(format!("invalid bounds [{lo}, {hi}]")));
    }
    let half = 0.5 * (hi - lo) * 1.01;
    Ok((half.max(1e-3), 0.5 * (hi + lo)))
}

/// Propagator for blocks of states under one fixed operator.
pub struct Propagator<'a, O: Operator> {
    op: &'a O,
    a: f64,
    b: f64,
    width: usize,
    cur: Vec<Complex64>,
    prev: Vec<Complex64>,
    scratch: Vec<Complex64>,
    pub matvecs: usize,
}

impl<'a, O: Operator> Propagator<'a, O> {
    pub fn new(op: &'a O, width: usize) -> Result<Self> {
        let (a, b) = spectral_map(op)?;
        let n = op.dim() * width;
        Ok(Propagator {
            op,
            a,
            b,
            width,
            cur: vec![ZERO; n],
            prev: vec![ZERO; n],
            scratch: vec![ZERO; n],
            matvecs: 0,
        })
    }

    /// Half-width and centre of the mapped spectrum.
    pub fn spectral_map(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    /// `psi <- exp(-i H dt) psi` for a block; `dt` may be negative.
    pub fn step(&mut self, psi: &mut [Complex64], dt: f64) {
        if dt == 0.0 {
            return;
        }
        let substeps = (self.a * dt.abs() / MAX_STEP_ARGUMENT).ceil().max(1.0) as usize;
        let h = dt / substeps as f64;
        for _ in 0..substeps {
            self.single_step(psi, h);
        }
    }

    fn single_step(&mut self, psi: &mut [Complex64], dt: f64) {
        let x = self.a * dt.abs();
        let mut coefs = chebyshev_coefficients(x);
        if dt < 0.0 {
            // exp(+iH|dt|): conjugate coefficients of the real Chebyshev series.
            coefs.iter_mut().for_each(|c| *c = c.conj());
        }
        let phase = Complex64::from_polar(1.0, -self.b * dt);
        let (a, b, w) = (self.a, self.b, self.width);

        // prev = T_0 ψ = ψ, cur = T_1 ψ = (H - b)ψ/a; acc = c0 prev + c1 cur.
        self.prev.copy_from_slice(psi);
        self.op.apply_block(&self.prev, &mut self.cur, w);
        self.matvecs += 1;
        for (c, p) in self.cur.iter_mut().zip(&self.prev) {
            *c = (*c - p * b) / a;
        }
        let c0 = coefs[0];
        let c1 = coefs.get(1).copied().unwrap_or(ZERO);
        for ((out, p), c) in psi.iter_mut().zip(&self.prev).zip(&self.cur) {
            *out = p * c0 + c * c1;
        }
        for &coef in coefs.iter().skip(2) {
            // After the step `prev` holds T_{k}, so swap to keep (prev, cur) ordered.
            self.op
                .chebyshev_step(&self.cur, &mut self.prev, psi, &mut self.scratch, coef, a, b, w);
            self.matvecs += 1;
            std::mem::swap(&mut self.cur, &mut self.prev);
        }
        psi.iter_mut().for_each(|v| *v *= phase);
    }
}

/// Time series recorded during a propagation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WavePacketTrace {
    pub times: Vec<f64>,
    /// Row-major `times.len() × lattice_size`.
    pub pdfs: Vec<f64>,
    pub lattice_size: usize,
    pub norms: Vec<f64>,
    pub energies: Vec<f64>,
    pub sigmas: Vec<f64>,
    /// Reference position for the second moment.
    pub center: f64,
}

impl WavePacketTrace {
    pub fn pdf(&self, sample: usize) -> &[f64] {
        &self.pdfs[sample * self.lattice_size..(sample + 1) * self.lattice_size]
    }

    pub fn final_sigma(&self) -> f64 {
        *self.sigmas.last().unwrap_or(&0.0)
    }

    /// First sample time at which either edge site exceeds [`EDGE_THRESHOLD`].
    pub fn boundary_contact(&self) -> Option<f64> {
        let n = self.lattice_size;
        (0..self.times.len())
            .find(|&s| {
                let p = self.pdf(s);
                p[0] > EDGE_THRESHOLD || p[n - 1] > EDGE_THRESHOLD
            })
            .map(|s| self.times[s])
    }
}

/// `sqrt(Σ_l (l - center)² p_l)`.
pub fn second_moment(p: &[f64], center: f64) -> f64 {
    p.iter()
        .enumerate()
        .map(|(l, &pl)| (l as f64 - center).powi(2) * pl)
        .sum::<f64>()
        .sqrt()
}

/// Unit state with both bosons on sites `l0` and `l0 + 1`.
pub fn initial_adjacent_pair(l0: usize, basis: &PairBasis) -> Result<Vec<f64>> {
    let n = basis.lattice_size();
    if l0 + 1 >= n {
        return Err(Error::Index {
            index: l0,
            limit: n.saturating_sub(1),
        });
    }
    let mut v = vec![0.0; basis.dim()];
    v[basis.index(l0, l0 + 1)?] = 1.0;
    Ok(v)
}

fn site_pdf(sites: Sites<'_>, psi: impl Iterator<Item = Complex64>) -> Vec<f64> {
    match sites {
        Sites::Single(_) => psi.map(|c| c.norm_sqr()).collect(),
        Sites::Pair(basis) => pair_pdf(basis, psi.map(|c| c.norm_sqr())),
    }
}

fn check_samples(t_final: f64, samples: &[f64]) -> Result<()> {
    if !(t_final.is_finite()) {
        return Err(Error::Config(format!("invalid final time {t_final}")));
    }
    let (lo, hi) = if t_final >= 0.0 { (0.0, t_final) } else { (t_final, 0.0) };
    let forward = t_final >= 0.0;
    for w in samples.windows(2) {
        if (forward && w[1] < w[0]) || (!forward && w[1] > w[0]) {
            return Err(Error::Config("sample times must be ordered along the evolution".into()));
        }
    }
    if samples.iter().any(|&t| !(t >= lo && t <= hi)) {
        return Err(Error::Config(format!("sample times must lie within [{lo}, {hi}]")));
    }
    Ok(())
}

/// Evolves a block of states to `t_final`, recording observables at each
/// sample time. Returns one trace per state and the final states
/// (row-interleaved block).
pub fn propagate_block<O: Operator>(
    op: &O,
    states: &[Vec<Complex64>],
    t_final: f64,
    sample_times: &[f64],
    sites: Sites<'_>,
    centers: &[f64],
) -> Result<(Vec<WavePacketTrace>, Vec<Complex64>)> {
    check_samples(t_final, sample_times)?;
    let width = states.len();
    let dim = op.dim();
    assert_eq!(centers.len(), width);
    for s in states {
        if s.len() != dim {
            return Err(Error::Config(format!("state length {} does not match dimension {dim}", s.len())));
        }
        let nrm: f64 = s.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if (nrm - 1.0).abs() > 1e-8 {
            return Err(Error::Precondition(format!("initial state norm {nrm} deviates from 1")));
        }
    }
    let mut psi = vec![ZERO; dim * width];
    for (r, s) in states.iter().enumerate() {
        for (i, &c) in s.iter().enumerate() {
            psi[i * width + r] = c;
        }
    }
    let mut prop = Propagator::new(op, width)?;
    let n_sites = sites.lattice_size();
    let mut traces: Vec<WavePacketTrace> = centers
        .iter()
        .map(|&center| WavePacketTrace {
            times: Vec::new(),
            pdfs: Vec::new(),
            lattice_size: n_sites,
            norms: Vec::new(),
            energies: Vec::new(),
            sigmas: Vec::new(),
            center,
        })
        .collect();

    let mut hpsi = vec![ZERO; dim * width];
    let mut record = |psi: &[Complex64], t: f64, traces: &mut [WavePacketTrace]| -> Result<()> {
        op.apply_block(psi, &mut hpsi, width);
        for (r, tr) in traces.iter_mut().enumerate() {
            let column = (0..dim).map(|i| psi[i * width + r]);
            let norm = column.clone().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > NORM_DRIFT_LIMIT {
                return Err(Error::Accuracy(format!("norm drifted to {norm} at t={t}")));
            }
            let energy: f64 = (0..dim).map(|i| (psi[i * width + r].conj() * hpsi[i * width + r]).re).sum();
            let p = site_pdf(sites, column);
            tr.sigmas.push(second_moment(&p, tr.center));
            tr.times.push(t);
            tr.norms.push(norm);
            tr.energies.push(energy);
            tr.pdfs.extend_from_slice(&p);
        }
        Ok(())
    };

    let mut now = 0.0;
    for &t in sample_times {
        prop.step(&mut psi, t - now);
        now = t;
        record(&psi, t, &mut traces)?;
    }
    prop.step(&mut psi, t_final - now);
    Ok((traces, psi))
}

/// Single-state [`propagate_block`].
pub fn propagate<O: Operator>(
    op: &O,
    psi0: &[Complex64],
    t_final: f64,
    sample_times: &[f64],
    sites: Sites<'_>,
    center: f64,
) -> Result<(WavePacketTrace, Vec<Complex64>)> {
    let (mut traces, psi) = propagate_block(op, &[psi0.to_vec()], t_final, sample_times, sites, &[center])?;
    Ok((traces.pop().unwrap(), psi))
}

pub fn to_complex(v: &[f64]) -> Vec<Complex64> {
    v.iter().map(|&x| Complex64::new(x, 0.0)).collect()
}

/// `count + 1` uniformly spaced sample times on `[0, t_final]`.
pub fn uniform_samples(t_final: f64, count: usize) -> Vec<f64> {
    let count = count.max(1);
    (0..=count).map(|i| t_final * i as f64 / count as f64).collect()
}

/// Power-law fit `σ ∝ t^γ` over the latter half of the pre-boundary window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpreadingFit {
    pub gamma: f64,
    /// RMS residual of the log-log fit.
    pub residual: f64,
    pub points: usize,
    pub window: (f64, f64),
}

/// Fits `ln σ` against `ln t` for samples with `t` in `[T/2, T]`, `T` the
/// last sample before boundary contact.
pub fn fit_spreading(trace: &WavePacketTrace) -> Option<SpreadingFit> {
    let contact = trace.boundary_contact();
    let pre: Vec<usize> = (0..trace.times.len())
        .filter(|&s| trace.times[s] > 0.0 && contact.is_none_or(|tc| trace.times[s] < tc))
        .collect();
    let t_end = trace.times[*pre.last()?];
    let pts: Vec<(f64, f64)> = pre
        .iter()
        .filter(|&&s| trace.times[s] >= 0.5 * t_end && trace.sigmas[s] > 0.0)
        .map(|&s| (trace.times[s].ln(), trace.sigmas[s].ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let (gamma, _, residual) = linear_fit(&pts);
    Some(SpreadingFit {
        gamma,
        residual,
        points: pts.len(),
        window: (pts[0].0.exp(), pts[pts.len() - 1].0.exp()),
    })
}

/// Outcome of one two-particle spreading run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportResult {
    pub params: ModelParams,
    pub l0: usize,
    pub t_final: f64,
    pub trace: WavePacketTrace,
    pub fit: Option<SpreadingFit>,
    pub boundary_contact: Option<f64>,
    /// Contact happened before `t_final / 2`.
    pub boundary_limited: bool,
}

impl TransportResult {
    fn from_trace(params: ModelParams, l0: usize, t_final: f64, trace: WavePacketTrace) -> Self {
        let contact = trace.boundary_contact();
        TransportResult {
            params,
            l0,
            t_final,
            fit: fit_spreading(&trace),
            boundary_limited: contact.is_some_and(|tc| tc < 0.5 * t_final),
            boundary_contact: contact,
            trace,
        }
    }
}

/// Adjacent pair at `(l0, l0+1)` evolved to `t_final` with `samples` uniform
/// sample intervals; σ is measured from `l0 + 1/2`.
pub fn transport_run(params: &ModelParams, l0: usize, t_final: f64, samples: usize) -> Result<TransportResult> {
    Ok(transport_runs(params, &[l0], t_final, samples)?.pop().unwrap())
}

/// Several initial positions sharing one Hamiltonian, propagated as a block.
pub fn transport_runs(params: &ModelParams, l0s: &[usize], t_final: f64, samples: usize) -> Result<Vec<TransportResult>> {
    if !(t_final > 0.0) {
        return Err(Error::Config(format!("final time must be positive, got {t_final}")));
    }
    let basis = PairBasis::new(params.n);
    let h = build_tp_hamiltonian(params, &basis)?;
    let states = l0s
        .iter()
        .map(|&l0| initial_adjacent_pair(l0, &basis).map(|v| to_complex(&v)))
        .collect::<Result<Vec<_>>>()?;
    let centers: Vec<f64> = l0s.iter().map(|&l| l as f64 + 0.5).collect();
    let times = uniform_samples(t_final, samples);
    let (traces, _) = propagate_block(&h, &states, t_final, &times, Sites::Pair(&basis), &centers)?;
    Ok(traces
        .into_iter()
        .zip(l0s)
        .map(|(tr, &l0)| TransportResult::from_trace(*params, l0, t_final, tr))
        .collect())
}
