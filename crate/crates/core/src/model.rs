//! Model parameters, the quasiperiodic potential, the boson pair basis and
//! Hamiltonian assembly.
//!
//! Units: hopping amplitude = 1 and ħ = 1. Sites are labelled `0..N`.
//!
//! Two-boson states use the symmetric basis
//! `|l,m> = b_l^+ b_m^+ |0> / sqrt(1 + δ_lm)` with `l <= m`. The normalization
//! produces a `sqrt(2)` hopping amplitude between `|l,l>` and `|l,l±1>`; for
//! `N = 2, λ = 0` the Hamiltonian in the basis `{(0,0), (0,1), (1,1)}` is
//!
//! ```text
//! [[U,  √2, 0 ],
//!  [√2, 0,  √2],
//!  [0,  √2, U ]]
//! ```

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `(√5 − 1) / 2`.
pub const GOLDEN_MEAN: f64 = 0.618_033_988_749_894_9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    #[default]
    Open,
    Periodic,
}

impl std::str::FromStr for Boundary {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "open" => Ok(Boundary::Open),
            "periodic" => Ok(Boundary::Periodic),
            other => Err(Error::Config(format!("unknown boundary rule `{other}`"))),
        }
    }
}

impl std::fmt::Display for Boundary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Boundary::Open => "open",
            Boundary::Periodic => "periodic",
        })
    }
}

/// Physical and numerical parameters of one model instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    /// Number of lattice sites.
    pub n: usize,
    /// Potential strength λ.
    pub lambda: f64,
    /// Onsite interaction U.
    pub u: f64,
    /// Potential phase β in radians.
    pub beta: f64,
    /// Incommensurability α.
    pub alpha: f64,
    pub boundary: Boundary,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            n: 100,
            lambda: 2.5,
            u: 0.0,
            beta: 0.0,
            alpha: GOLDEN_MEAN,
            boundary: Boundary::Open,
        }
    }
}

impl ModelParams {
    pub fn new(n: usize, lambda: f64, u: f64) -> Self {
        ModelParams {
            n,
            lambda,
            u,
            ..Default::default()
        }
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn with_boundary(mut self, boundary: Boundary) -> Self {
        self.boundary = boundary;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::Config(format!("lattice size must be >= 2, got {}", self.n)));
        }
        if self.boundary == Boundary::Periodic && self.n < 3 {
            return Err(Error::Config("periodic boundaries need at least 3 sites".into()));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::Config(format!("lambda must be finite and >= 0, got {}", self.lambda)));
        }
        if !self.u.is_finite() {
            return Err(Error::Config(format!("U must be finite, got {}", self.u)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if !(self.beta >= 0.0 && self.beta < 2.0 * PI) {
            return Err(Error::Config(format!("beta must lie in [0, 2π), got {}", self.beta)));
        }
        Ok(())
    }

    /// Single-particle localization length `1 / ln(λ/2)`, defined for λ > 2.
    pub fn localization_length(&self) -> Option<f64> {
        localization_length(self.lambda)
    }
}

/// `1 / ln(λ/2)` for λ > 2, `None` otherwise.
pub fn localization_length(lambda: f64) -> Option<f64> {
    (lambda > 2.0).then(|| 1.0 / (lambda / 2.0).ln())
}

/// Onsite energy `λ cos(β + 2π α j)`.
pub fn potential_at(params: &ModelParams, site: usize) -> Result<f64> {
    if site >= params.n {
        return Err(Error::Index {
            index: site,
            limit: params.n,
        });
    }
    Ok(onsite(params, site))
}

#[inline]
fn onsite(params: &ModelParams, site: usize) -> f64 {
    params.lambda * (params.beta + 2.0 * PI * params.alpha * site as f64).cos()
}

/// The whole potential profile.
pub fn potential(params: &ModelParams) -> Vec<f64> {
    (0..params.n).map(|j| onsite(params, j)).collect()
}

/// Index map between ordered site pairs `(l, m)`, `l <= m`, and `0..N(N+1)/2`.
///
/// Ordering is row-major: `(0,0), (0,1), .., (0,N-1), (1,1), ..`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairBasis {
    n: usize,
    row_offsets: Vec<usize>,
    pairs: Vec<(u32, u32)>,
}

impl PairBasis {
    pub fn new(n: usize) -> Self {
        let mut row_offsets = Vec::with_capacity(n + 1);
        let mut pairs = Vec::with_capacity(n * (n + 1) / 2);
        for l in 0..n {
            row_offsets.push(pairs.len());
            for m in l..n {
                pairs.push((l as u32, m as u32));
            }
        }
        row_offsets.push(pairs.len());
        PairBasis {
            n,
            row_offsets,
            pairs,
        }
    }

    pub fn lattice_size(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.pairs.len()
    }

    /// Index of `(l, m)`; the pair is reordered if `l > m`.
    pub fn index(&self, l: usize, m: usize) -> Result<usize> {
        let (l, m) = if l <= m { (l, m) } else { (m, l) };
        if m >= self.n {
            return Err(Error::Index {
                index: m,
                limit: self.n,
            });
        }
        Ok(self.row_offsets[l] + (m - l))
    }

    #[inline]
    pub(crate) fn index_unchecked(&self, l: usize, m: usize) -> usize {
        debug_assert!(l <= m && m < self.n);
        self.row_offsets[l] + (m - l)
    }

    pub fn pair(&self, index: usize) -> Result<(usize, usize)> {
        self.pairs
            .get(index)
            .map(|&(l, m)| (l as usize, m as usize))
            .ok_or(Error::Index {
                index,
                limit: self.dim(),
            })
    }

    pub fn pairs(&self) -> impl ExactSizeIterator<Item = (usize, usize)> + '_ {
        self.pairs.iter().map(|&(l, m)| (l as usize, m as usize))
    }
}

/// Real symmetric sparse matrix.
///
/// The canonical content is the upper triangle (row <= column) in row-major
/// order; a full CSR copy of both triangles backs the matrix-vector product.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSymMatrix {
    dim: usize,
    upper: Vec<(usize, usize, f64)>,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

impl SparseSymMatrix {
    /// Builds from upper-triangle triplets; duplicates are summed.
    pub fn from_upper_triplets(dim: usize, mut triplets: Vec<(usize, usize, f64)>) -> Result<Self> {
        for &(r, c, v) in &triplets {
            if r > c {
                return Err(Error::Precondition(format!("triplet ({r},{c}) below the diagonal")));
            }
            if c >= dim {
                return Err(Error::Index { index: c, limit: dim });
            }
            if !v.is_finite() {
                return Err(Error::Precondition(format!("non-finite entry at ({r},{c})")));
            }
        }
        triplets.sort_by_key(|t| (t.0, t.1));
        let mut upper: Vec<(usize, usize, f64)> = Vec::with_capacity(triplets.len());
        for (r, c, v) in triplets {
            match upper.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => upper.push((r, c, v)),
            }
        }

        let mut counts = vec![0usize; dim];
        for &(r, c, _) in &upper {
            counts[r] += 1;
            if r != c {
                counts[c] += 1;
            }
        }
        let mut row_ptr = Vec::with_capacity(dim + 1);
        row_ptr.push(0);
        for c in &counts {
            row_ptr.push(row_ptr.last().unwrap() + c);
        }
        let nnz = *row_ptr.last().unwrap();
        let mut cols = vec![0u32; nnz];
        let mut vals = vec![0.0; nnz];
        let mut fill = row_ptr[..dim].to_vec();
        // Lower entries of row r come from columns < r, upper from >= r; pushing
        // lower ones first while walking `upper` in row-major order keeps every
        // CSR row sorted by column.
        let mut lower_rows: Vec<Vec<(u32, f64)>> = vec![Vec::new(); dim];
        for &(r, c, v) in &upper {
            if r != c {
                lower_rows[c].push((r as u32, v));
            }
        }
        let mut ui = 0;
        for row in 0..dim {
            for &(c, v) in &lower_rows[row] {
                cols[fill[row]] = c;
                vals[fill[row]] = v;
                fill[row] += 1;
            }
            while ui < upper.len() && upper[ui].0 == row {
                let (_, c, v) = upper[ui];
                cols[fill[row]] = c as u32;
                vals[fill[row]] = v;
                fill[row] += 1;
                ui += 1;
            }
        }

        Ok(SparseSymMatrix {
            dim,
            upper,
            row_ptr,
            cols,
            vals,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Upper-triangle entries `(row, col, value)`, row-major.
    pub fn upper(&self) -> &[(usize, usize, f64)] {
        &self.upper
    }

    /// Stored entries of row `i` (both triangles) as `(col, value)`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[span.clone()]
            .iter()
            .zip(&self.vals[span])
            .map(|(&c, &v)| (c as usize, v))
    }

    pub fn row_nnz(&self, i: usize) -> usize {
        self.row_ptr[i + 1] - self.row_ptr[i]
    }

    pub fn max_row_nnz(&self) -> usize {
        (0..self.dim).map(|i| self.row_nnz(i)).max().unwrap_or(0)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.dim];
        for &(r, c, v) in &self.upper {
            if r == c {
                d[r] = v;
            }
        }
        d
    }

    /// Entry `(i, j)` of the full symmetric matrix.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (r, c) = if i <= j { (i, j) } else { (j, i) };
        self.row(r).find(|&(col, _)| col == c).map_or(0.0, |(_, v)| v)
    }

    /// `y = H x`.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.dim);
        assert_eq!(y.len(), self.dim);
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[k] * x[self.cols[k] as usize];
            }
            *yi = acc;
        }
    }

    /// `y = H x` for complex vectors.
    pub fn matvec_complex(&self, x: &[Complex64], y: &mut [Complex64]) {
        assert_eq!(x.len(), self.dim);
        assert_eq!(y.len(), self.dim);
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += x[self.cols[k] as usize] * self.vals[k];
            }
            *yi = acc;
        }
    }

    /// Raw CSR arrays `(row_ptr, cols, vals)` of the full matrix.
    pub fn csr(&self) -> (&[usize], &[u32], &[f64]) {
        (&self.row_ptr, &self.cols, &self.vals)
    }

    /// Gershgorin enclosure `[lower, upper]` of the spectrum.
    pub fn gershgorin_bounds(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..self.dim {
            let mut centre = 0.0;
            let mut radius = 0.0;
            for (c, v) in self.row(i) {
                if c == i {
                    centre = v;
                } else {
                    radius += v.abs();
                }
            }
            lo = lo.min(centre - radius);
            hi = hi.max(centre + radius);
        }
        (lo, hi)
    }

    /// Infinity norm, an upper bound on the spectral norm.
    pub fn norm_estimate(&self) -> f64 {
        (0..self.dim)
            .map(|i| self.row(i).map(|(_, v)| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Dense column-major copy.
    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.dim;
        let mut a = vec![0.0; n * n];
        for &(r, c, v) in &self.upper {
            a[c * n + r] = v;
            a[r * n + c] = v;
        }
        a
    }
}

fn bonds(params: &ModelParams) -> Vec<(usize, usize)> {
    let n = params.n;
    let mut bonds: Vec<(usize, usize)> = (0..n - 1).map(|j| (j, j + 1)).collect();
    if params.boundary == Boundary::Periodic {
        bonds.push((n - 1, 0));
    }
    bonds
}

/// Tridiagonal single-particle Hamiltonian (plus corner couplings when periodic).
pub fn build_sp_hamiltonian(params: &ModelParams) -> Result<SparseSymMatrix> {
    params.validate()?;
    let n = params.n;
    let mut triplets = Vec::with_capacity(2 * n + 1);
    for (j, e) in potential(params).into_iter().enumerate() {
        triplets.push((j, j, e));
        if j + 1 < n {
            triplets.push((j, j + 1, 1.0));
        }
    }
    if params.boundary == Boundary::Periodic {
        triplets.push((0, n - 1, 1.0));
    }
    SparseSymMatrix::from_upper_triplets(n, triplets)
}

/// Two-boson Hubbard Hamiltonian in the symmetric pair basis.
pub fn build_tp_hamiltonian(params: &ModelParams, basis: &PairBasis) -> Result<SparseSymMatrix> {
    params.validate()?;
    if basis.lattice_size() != params.n {
        return Err(Error::Config(format!(
            "pair basis built for N={} but parameters have N={}",
            basis.lattice_size(),
            params.n
        )));
    }
    let eps = potential(params);
    let bonds = bonds(params);
    let mut triplets = Vec::with_capacity(basis.dim() * 3);

    for (idx, (l, m)) in basis.pairs().enumerate() {
        let double = l == m;
        let diag = eps[l] + eps[m] + if double { params.u } else { 0.0 };
        triplets.push((idx, idx, diag));

        // Apply b_i^+ b_j for every ordered bond direction; keep only targets
        // above `idx` so each unordered pair of states is assembled once.
        for &(a, b) in &bonds {
            for (to, from) in [(a, b), (b, a)] {
                let occ_from = usize::from(l == from) + usize::from(m == from);
                if occ_from == 0 {
                    continue;
                }
                let occ_to = usize::from(l == to) + usize::from(m == to);
                let amp = ((occ_from * (occ_to + 1)) as f64).sqrt();
                // Move one particle from `from` to `to`.
                let (nl, nm) = if l == from { (to, m) } else { (l, to) };
                let (nl, nm) = if nl <= nm { (nl, nm) } else { (nm, nl) };
                let target = basis.index_unchecked(nl, nm);
                if target > idx {
                    triplets.push((idx, target, amp));
                }
            }
        }
    }
    SparseSymMatrix::from_upper_triplets(basis.dim(), triplets)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_mean_digits() {
        let exact = (5f64.sqrt() - 1.0) / 2.0;
        assert!((GOLDEN_MEAN - exact).abs() < 1e-15);
        assert_eq!(ModelParams::default().alpha, GOLDEN_MEAN);
    }

    #[test]
    fn potential_values() {
        let p = ModelParams::new(10, 0.0, 0.0).with_beta(1.3);
        for j in 0..10 {
            assert_eq!(potential_at(&p, j).unwrap(), 0.0);
        }
        let p = ModelParams::new(10, 2.5, 0.0);
        assert_eq!(potential_at(&p, 0).unwrap(), 2.5);
        // 2.5 cos(2π α) from a 30-digit evaluation.
        assert!((potential_at(&p, 1).unwrap() - (-1.843_422_195_195_8)).abs() < 1e-12);
        assert!(matches!(potential_at(&p, 10), Err(Error::Index { .. })));
    }

    #[test]
    fn rational_alpha_periodicity() {
        // α = 1/2: shifting β by π equals relabelling j -> j+1.
        let p = ModelParams::new(8, 1.7, 0.0).with_alpha(0.5).with_beta(0.3);
        let q = p.with_beta(0.3 + PI);
        for j in 0..7 {
            let a = potential_at(&q, j).unwrap();
            let b = potential_at(&p, j + 1).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn param_validation() {
        assert!(ModelParams::new(1, 2.5, 0.0).validate().is_err());
        assert!(ModelParams::new(4, -1.0, 0.0).validate().is_err());
        assert!(ModelParams::new(4, 1.0, 0.0).with_alpha(1.0).validate().is_err());
        assert!(ModelParams::new(4, 1.0, 0.0).with_beta(7.0).validate().is_err());
        assert!(ModelParams::new(2, 1.0, 0.0)
            .with_boundary(Boundary::Periodic)
            .validate()
            .is_err());
        assert!(ModelParams::new(2, 0.0, 0.0).validate().is_ok());
    }

    #[test]
    fn pair_basis_bijection() {
        for n in 1..12 {
            let basis = PairBasis::new(n);
            assert_eq!(basis.dim(), n * (n + 1) / 2);
            let mut seen = vec![false; basis.dim()];
            for l in 0..n {
                for m in l..n {
                    let i = basis.index(l, m).unwrap();
                    assert!(!seen[i]);
                    seen[i] = true;
                    assert_eq!(basis.pair(i).unwrap(), (l, m));
                    assert_eq!(basis.index(m, l).unwrap(), i);
                }
            }
            assert!(seen.into_iter().all(|s| s));
            assert!(basis.pair(basis.dim()).is_err());
            assert!(basis.index(0, n).is_err());
        }
    }

    #[test]
    fn sp_hamiltonian_two_sites() {
        let h = build_sp_hamiltonian(&ModelParams::new(2, 0.0, 0.0)).unwrap();
        assert_eq!(h.to_dense(), vec![0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn sp_hamiltonian_three_sites() {
        let p = ModelParams::new(3, 2.5, 0.0);
        let h = build_sp_hamiltonian(&p).unwrap();
        let d = h.diagonal();
        assert!((d[0] - 2.5).abs() < 1e-14);
        assert!((d[1] + 1.843_422_195_195_8).abs() < 1e-12);
        assert!((d[2] - 0.218_564_311_792_401).abs() < 1e-12);
        assert_eq!(h.get(0, 1), 1.0);
        assert_eq!(h.get(1, 2), 1.0);
        assert_eq!(h.get(0, 2), 0.0);

        let hp = build_sp_hamiltonian(&p.with_boundary(Boundary::Periodic)).unwrap();
        assert_eq!(hp.get(0, 2), 1.0);
    }

    #[test]
    fn tp_hamiltonian_two_sites() {
        let u = 3.7;
        let p = ModelParams::new(2, 0.0, u);
        let basis = PairBasis::new(2);
        let h = build_tp_hamiltonian(&p, &basis).unwrap();
        let s = 2f64.sqrt();
        let expected = [u, s, 0.0, s, 0.0, s, 0.0, s, u];
        for (a, b) in h.to_dense().iter().zip(expected) {
            assert!((a - b).abs() < 1e-15, "{a} vs {b}");
        }
    }

    #[test]
    fn tp_hamiltonian_symmetry_and_sparsity() {
        for boundary in [Boundary::Open, Boundary::Periodic] {
            let p = ModelParams::new(9, 2.5, 1.3).with_boundary(boundary);
            let basis = PairBasis::new(9);
            let h = build_tp_hamiltonian(&p, &basis).unwrap();
            let n = h.dim();
            let a = h.to_dense();
            for i in 0..n {
                for j in 0..n {
                    assert_eq!(a[i * n + j], a[j * n + i]);
                }
            }
            if boundary == Boundary::Open {
                assert!(h.max_row_nnz() <= 5);
            }
        }
    }

    #[test]
    fn tp_hamiltonian_dimension_mismatch() {
        let p = ModelParams::new(5, 2.5, 1.0);
        assert!(matches!(
            build_tp_hamiltonian(&p, &PairBasis::new(4)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn triplets_sum_and_sort() {
        let h = SparseSymMatrix::from_upper_triplets(3, vec![(1, 2, 1.0), (0, 0, 2.0), (1, 2, 0.5)]).unwrap();
        assert_eq!(h.upper(), &[(0, 0, 2.0), (1, 2, 1.5)]);
        assert_eq!(h.get(2, 1), 1.5);
        assert!(SparseSymMatrix::from_upper_triplets(3, vec![(2, 1, 1.0)]).is_err());
    }
}
