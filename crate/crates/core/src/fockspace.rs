//! The noninteracting two-particle eigenbasis ("Fock pairs") and the
//! interaction written in it.
//!
//! A Fock pair `|μ,ν⟩`, `μ <= ν`, is the symmetrized product of single-particle
//! eigenstates `A^μ` and `A^ν`. In this basis the two-particle Hamiltonian is
//! `diag(λ_μ + λ_ν) + U·I`, where
//! `I_{μν,μ'ν'} = 2 / sqrt((1+δ_{μν})(1+δ_{μ'ν'})) Σ_j A_j^μ A_j^ν A_j^μ' A_j^ν'`
//! and the diagonal `I⁰_{μν} = I_{μν,μν}` renormalizes the pair energies.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{second_moment, DenseSym, Propagator, NORM_DRIFT_LIMIT};
use crate::error::{Error, Result};
use crate::linalg::{dense, dot, Columns};
use crate::model::{build_sp_hamiltonian, localization_length, ModelParams, PairBasis};
use crate::spectral::{pair_pdf, sp_minibands, Miniband, MinibandWindows};

/// Single-particle eigenstates ordered by their position along the chain.
#[derive(Debug, Clone)]
pub struct SortedSpBasis {
    pub params: ModelParams,
    /// Eigenvalue of each state, in sorted order.
    pub energies: Vec<f64>,
    /// Eigenvector of each state, in sorted order.
    pub vectors: Columns,
    /// PDF centroid `Σ_j j (A_j)²` (0-based sites).
    pub centers: Vec<f64>,
    /// `order[k]` is the ascending-energy index of sorted state `k`.
    pub order: Vec<usize>,
    /// Miniband of each sorted state, when the spectrum splits into SP1..SP3.
    pub labels: Option<Vec<Miniband>>,
    pub windows: Option<MinibandWindows>,
    /// Set when λ <= 2: states are extended and centroids carry little meaning.
    pub extended_warning: bool,
}

/// Diagonalizes the single-particle Hamiltonian and sorts the eigenstates by
/// centroid, then eigenvalue, then energy rank.
pub fn build_sorted_sp_basis(params: &ModelParams) -> Result<SortedSpBasis> {
    let h = build_sp_hamiltonian(params)?;
    let n = params.n;
    let (values, vectors) = dense::eigh(n, &h.to_dense())?;
    let centers: Vec<f64> = (0..n)
        .map(|q| vectors.col(q).iter().enumerate().map(|(j, a)| j as f64 * a * a).sum())
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        centers[a]
            .total_cmp(&centers[b])
            .then(values[a].total_cmp(&values[b]))
            .then(a.cmp(&b))
    });
    let windows = sp_minibands(&values).ok();
    let mut sorted = Columns::new(n);
    for &q in &order {
        sorted.push(vectors.col(q));
    }
    Ok(SortedSpBasis {
        params: *params,
        energies: order.iter().map(|&q| values[q]).collect(),
        labels: windows.as_ref().map(|w| order.iter().map(|&q| w.label(values[q])).collect()),
        windows,
        vectors: sorted,
        centers: order.iter().map(|&q| centers[q]).collect(),
        order,
        extended_warning: params.lambda <= 2.0,
    })
}

impl SortedSpBasis {
    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    fn check(&self, mu: usize, nu: usize) -> Result<(usize, usize)> {
        let n = self.len();
        match mu.max(nu) {
            i if i >= n => Err(Error::Index { index: i, limit: n }),
            _ => Ok((mu.min(nu), mu.max(nu))),
        }
    }

    /// `A^μ_j A^ν_j` scaled so that `I` is a plain dot product of two such
    /// vectors: factor `sqrt(2/(1+δ_{μν}))`.
    fn product(&self, mu: usize, nu: usize) -> Vec<f64> {
        let s = if mu == nu { 1.0 } else { std::f64::consts::SQRT_2 };
        self.vectors
            .col(mu)
            .iter()
            .zip(self.vectors.col(nu))
            .map(|(a, b)| s * a * b)
            .collect()
    }

    /// `I⁰_{μν}`.
    pub fn overlap_self(&self, mu: usize, nu: usize) -> Result<f64> {
        let (mu, nu) = self.check(mu, nu)?;
        let p = self.product(mu, nu);
        Ok(dot(&p, &p))
    }

    /// `I_{μν,μ'ν'}`.
    pub fn overlap_cross(&self, a: (usize, usize), b: (usize, usize)) -> Result<f64> {
        let a = self.check(a.0, a.1)?;
        let b = self.check(b.0, b.1)?;
        Ok(dot(&self.product(a.0, a.1), &self.product(b.0, b.1)))
    }

    /// `𝓔_{μν} = λ_μ + λ_ν + U I⁰_{μν}`.
    pub fn renormalized_energy(&self, mu: usize, nu: usize, u: f64) -> Result<f64> {
        let i0 = self.overlap_self(mu, nu)?;
        Ok(self.energies[mu] + self.energies[nu] + u * i0)
    }

    /// Pairs `(μ, ν)`, `μ <= ν`, whose centroids are closer than ξ₁.
    pub fn bound_pairs(&self) -> Result<Vec<(usize, usize)>> {
        bound_pair_filter(self, self.params.lambda)
    }

    /// Two-particle miniband of pair `(μ, ν)` by the product rule.
    pub fn pair_miniband(&self, mu: usize, nu: usize) -> Option<Miniband> {
        let labels = self.labels.as_ref()?;
        let rank = |m: Miniband| Miniband::SINGLE.iter().position(|&s| s == m).unwrap();
        Some(Miniband::product(rank(labels[mu]), rank(labels[nu])))
    }

    /// Fock pair states with energies at interaction `u`, in [`PairBasis`]
    /// order over sorted labels.
    pub fn pair_states(&self, u: f64) -> Vec<FockPairState> {
        let xi = localization_length(self.params.lambda);
        let basis = PairBasis::new(self.len());
        let pairs: Vec<(usize, usize)> = basis.pairs().collect();
        pairs
            .par_iter()
            .map(|&(mu, nu)| {
                let p = self.product(mu, nu);
                let i0 = dot(&p, &p);
                FockPairState {
                    mu,
                    nu,
                    energy: self.energies[mu] + self.energies[nu] + u * i0,
                    self_overlap: i0,
                    bound: xi.is_some_and(|x| (self.centers[mu] - self.centers[nu]).abs() < x),
                }
            })
            .collect()
    }
}

/// One Fock pair and its interaction-renormalized energy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FockPairState {
    pub mu: usize,
    pub nu: usize,
    pub energy: f64,
    pub self_overlap: f64,
    /// Centroids closer than ξ₁.
    pub bound: bool,
}

/// Pairs whose single-particle centroids are closer than `ξ₁ = 1/ln(λ/2)`.
pub fn bound_pair_filter(basis: &SortedSpBasis, lambda: f64) -> Result<Vec<(usize, usize)>> {
    let xi = localization_length(lambda)
        .ok_or_else(|| Error::Domain(format!("localization length undefined for λ = {lambda} <= 2")))?;
    let c = &basis.centers;
    let mut out = Vec::new();
    // Centroids are sorted, so the partner scan stops at the first distant one.
    for mu in 0..c.len() {
        for nu in mu..c.len() {
            if c[nu] - c[mu] >= xi {
                break;
            }
            out.push((mu, nu));
        }
    }
    Ok(out)
}

/// Fock pair states as columns in the site pair basis of [`PairBasis`].
///
/// Column `(μ,ν)` has entries `(A_l^μ A_m^ν + A_m^μ A_l^ν)/sqrt(1+δ_{μν})` for
/// `l < m` and `sqrt(2) A_l^μ A_l^ν / sqrt(1+δ_{μν})` for `l = m`. The matrix
/// is orthogonal.
pub fn fock_state_matrix(basis: &SortedSpBasis) -> Columns {
    let n = basis.len();
    let pairs = PairBasis::new(n);
    let dim = pairs.dim();
    let site_pairs: Vec<(usize, usize)> = pairs.pairs().collect();
    let mut out = Columns {
        rows: dim,
        data: vec![0.0; dim * dim],
    };
    out.data
        .par_chunks_mut(dim)
        .zip(pairs.pairs().collect::<Vec<_>>())
        .for_each(|(col, (mu, nu))| {
            let a = basis.vectors.col(mu);
            let b = basis.vectors.col(nu);
            let norm = if mu == nu { std::f64::consts::FRAC_1_SQRT_2 } else { 1.0 };
            for (v, &(l, m)) in col.iter_mut().zip(&site_pairs) {
                *v = if l == m {
                    std::f64::consts::SQRT_2 * a[l] * b[l] * norm
                } else {
                    (a[l] * b[m] + a[m] * b[l]) * norm
                };
            }
        });
    out
}

/// Two-particle Hamiltonian in the Fock pair basis: `𝓔_{μν}` on the
/// diagonal and `U I_{μν,μ'ν'}` off it.
///
/// With `cutoff = Some(d)` couplings whose four centroids spread over more
/// than `d` sites are dropped; this is an approximation, exact only as
/// `d → ∞`.
pub fn fock_hamiltonian(basis: &SortedSpBasis, u: f64, cutoff: Option<f64>) -> DenseSym {
    let n = basis.len();
    let pairs: Vec<(usize, usize)> = PairBasis::new(n).pairs().collect();
    let dim = pairs.len();
    let products: Vec<Vec<f64>> = pairs.par_iter().map(|&(mu, nu)| basis.product(mu, nu)).collect();
    let c = &basis.centers;
    let spread = |a: (usize, usize), b: (usize, usize)| {
        let xs = [c[a.0], c[a.1], c[b.0], c[b.1]];
        let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
        hi - lo
    };
    let mut data = vec![0.0; dim * dim];
    data.par_chunks_mut(dim).enumerate().for_each(|(q, col)| {
        for (p, v) in col.iter_mut().enumerate() {
            let keep = p == q || cutoff.is_none_or(|d| spread(pairs[p], pairs[q]) <= d);
            if keep {
                *v = u * dot(&products[p], &products[q]);
            }
        }
        let (mu, nu) = pairs[q];
        col[q] += basis.energies[mu] + basis.energies[nu];
    });
    DenseSym { n: dim, data }
}

/// Fock-space evolution sampled at given times.
#[derive(Debug, Clone)]
pub struct FockEvolution {
    pub times: Vec<f64>,
    /// Site PDF at each sample, row-major `times.len() × N`.
    pub pdfs: Vec<f64>,
    pub lattice_size: usize,
    pub norms: Vec<f64>,
    /// Coefficients `φ_{μν}` at the final time.
    pub phi: Vec<Complex64>,
}

impl FockEvolution {
    pub fn pdf(&self, sample: usize) -> &[f64] {
        &self.pdfs[sample * self.lattice_size..(sample + 1) * self.lattice_size]
    }

    /// Second moment of each sampled PDF about `center`.
    pub fn sigmas(&self, center: f64) -> Vec<f64> {
        (0..self.times.len()).map(|s| second_moment(self.pdf(s), center)).collect()
    }
}

/// Norm tolerance for Fock-space evolution.
const FOCK_NORM_LIMIT: f64 = 1e-9;

/// Evolves coefficients `φ_{μν}` with the rotated Hamiltonian.
///
/// `phi0` is indexed like [`PairBasis`] over sorted labels. Site PDFs are
/// reconstructed through [`fock_state_matrix`] at each sample time.
pub fn fock_propagate(
    basis: &SortedSpBasis,
    u: f64,
    phi0: &[Complex64],
    t_final: f64,
    sample_times: &[f64],
    cutoff: Option<f64>,
) -> Result<FockEvolution> {
    let op = fock_hamiltonian(basis, u, cutoff);
    let dim = op.n;
    if phi0.len() != dim {
        return Err(Error::Config(format!("φ has {} entries, Fock basis has {dim}", phi0.len())));
    }
    let norm0 = phi0.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    if (norm0 - 1.0).abs() > NORM_DRIFT_LIMIT {
        return Err(Error::Precondition(format!("φ norm {norm0} deviates from 1")));
    }
    if !t_final.is_finite() || sample_times.iter().any(|&t| !(t >= 0.0 && t <= t_final)) {
        return Err(Error::Config(format!("sample times must lie within [0, {t_final}]")));
    }
    if sample_times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Config("sample times must be ascending".into()));
    }
    let v = fock_state_matrix(basis);
    let pairs = PairBasis::new(basis.len());
    let mut prop = Propagator::new(&op, 1)?;
    let mut phi = phi0.to_vec();
    let mut out = FockEvolution {
        times: Vec::new(),
        pdfs: Vec::new(),
        lattice_size: basis.len(),
        norms: Vec::new(),
        phi: Vec::new(),
    };
    let mut now = 0.0;
    let check = |phi: &[Complex64], t: f64| -> Result<f64> {
        let norm = phi.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if (norm - norm0).abs() > FOCK_NORM_LIMIT {
            return Err(Error::Accuracy(format!("Fock-space norm drifted to {norm} at t={t}")));
        }
        Ok(norm)
    };
    for &t in sample_times {
        prop.step(&mut phi, t - now);
        now = t;
        out.norms.push(check(&phi, t)?);
        let psi = to_site_basis(&v, &phi);
        out.pdfs.extend(pair_pdf(&pairs, psi.iter().map(|c| c.norm_sqr())));
        out.times.push(t);
    }
    prop.step(&mut phi, t_final - now);
    check(&phi, t_final)?;
    out.phi = phi;
    Ok(out)
}

/// `ψ = V φ` for a column-major orthogonal `V`.
pub fn to_site_basis(v: &Columns, phi: &[Complex64]) -> Vec<Complex64> {
    let mut psi = vec![Complex64::new(0.0, 0.0); v.rows];
    for (q, c) in phi.iter().enumerate() {
        if c.norm_sqr() == 0.0 {
            continue;
        }
        for (p, &x) in psi.iter_mut().zip(v.col(q)) {
            *p += c * x;
        }
    }
    psi
}

/// `φ = Vᵀ ψ`.
pub fn to_fock_basis(v: &Columns, psi: &[Complex64]) -> Vec<Complex64> {
    (0..v.len())
        .into_par_iter()
        .map(|q| v.col(q).iter().zip(psi).map(|(&x, p)| p * x).sum())
        .collect()
}

/// Overlap integrals of bound Fock pairs built from single-particle
/// minibands `bands.0` and `bands.1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlapStats {
    /// Two-particle miniband of the composition, by the product rule.
    pub miniband: Miniband,
    pub bands: (Miniband, Miniband),
    /// Bound pairs of this composition.
    pub pairs: usize,
    pub mean_self: f64,
    pub std_self: f64,
    /// Mean `I⁰` over the `μ = ν` pairs alone (same-band compositions).
    pub mean_self_onsite: f64,
    pub onsite_pairs: usize,
    /// Mean `|I_{μν,μ'ν'}|` over neighbouring bound pairs.
    pub mean_cross: f64,
    pub neighbor_links: usize,
}

impl OverlapStats {
    /// The composition that carries a two-particle miniband's statistics:
    /// same-band pairs for TP1, TP3, TP5 and adjacent-band pairs for TP2, TP4.
    pub fn is_primary(&self) -> bool {
        let rank = |m: Miniband| Miniband::SINGLE.iter().position(|&s| s == m).unwrap();
        rank(self.bands.1) - rank(self.bands.0) <= 1
    }
}

/// `I⁰` and neighbour `|I|` averages over bound pairs, one row per
/// composition `SPa × SPb` (`a <= b`).
///
/// States of each single-particle miniband are ranked by centroid. Two
/// distinct bound pairs of the same composition are neighbours when both
/// constituents differ by at most one rank.
pub fn overlap_statistics(basis: &SortedSpBasis) -> Result<Vec<OverlapStats>> {
    let labels = basis.labels.as_ref().ok_or_else(|| {
        Error::ClassificationUnavailable("single-particle spectrum does not split into three minibands".into())
    })?;
    let bound = basis.bound_pairs()?;
    let mut rank = vec![0i64; basis.len()];
    let mut seen = [0i64; 3];
    for (k, l) in labels.iter().enumerate() {
        let b = Miniband::SINGLE.iter().position(|s| s == l).unwrap();
        rank[k] = seen[b];
        seen[b] += 1;
    }
    let compositions: Vec<(usize, usize)> = (0..3).flat_map(|a| (a..3).map(move |b| (a, b))).collect();
    compositions
        .par_iter()
        .map(|&(a, b)| {
            let (sa, sb) = (Miniband::SINGLE[a], Miniband::SINGLE[b]);
            let members: Vec<(usize, usize)> = bound
                .iter()
                .copied()
                .filter(|&(mu, nu)| {
                    let (x, y) = (labels[mu], labels[nu]);
                    (x, y) == (sa, sb) || (x, y) == (sb, sa)
                })
                .collect();
            let selfs: Vec<f64> = members.iter().map(|&(mu, nu)| basis.overlap_self(mu, nu)).collect::<Result<_>>()?;
            let onsite: Vec<f64> = members
                .iter()
                .zip(&selfs)
                .filter(|((mu, nu), _)| mu == nu)
                .map(|(_, &v)| v)
                .collect();
            let (mean_self, std_self) = mean_std(&selfs);

            // Key each pair by the band ranks of its (band a, band b) constituents.
            let key = |(mu, nu): (usize, usize)| {
                if labels[mu] == sa {
                    (rank[mu], rank[nu])
                } else {
                    (rank[nu], rank[mu])
                }
            };
            let keys: Vec<(i64, i64)> = members.iter().map(|&p| key(p)).collect();
            let mut cross = Vec::new();
            for i in 0..members.len() {
                for j in i + 1..members.len() {
                    let (ki, kj) = (keys[i], keys[j]);
                    let near = |x: (i64, i64), y: (i64, i64)| (x.0 - y.0).abs() <= 1 && (x.1 - y.1).abs() <= 1;
                    // Same-band pairs are unordered, so also try the swapped key.
                    if near(ki, kj) || (a == b && near(ki, (kj.1, kj.0))) {
                        cross.push(basis.overlap_cross(members[i], members[j])?.abs());
                    }
                }
            }
            Ok(OverlapStats {
                miniband: Miniband::product(a, b),
                bands: (sa, sb),
                pairs: members.len(),
                mean_self,
                std_self,
                mean_self_onsite: mean_std(&onsite).0,
                onsite_pairs: onsite.len(),
                mean_cross: mean_std(&cross).0,
                neighbor_links: cross.len(),
            })
        })
        .collect()
}

fn mean_std(x: &[f64]) -> (f64, f64) {
    if x.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Predicted onset of resonant mixing between a miniband and the one above.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Resonance {
    pub lower: Miniband,
    pub upper: Miniband,
    /// Energy distance between the two minibands.
    pub gap: f64,
    pub mean_self_overlap: f64,
    /// `gap / Ī⁰`; `None` when it is infinite or outside the requested range.
    pub u_star: Option<f64>,
}

/// Distance between the centres of the extents of adjacent minibands.
pub fn miniband_distances(windows: &MinibandWindows) -> Vec<f64> {
    let mid = |(a, b): (f64, f64)| 0.5 * (a + b);
    windows.extents.windows(2).map(|w| mid(w[1]) - mid(w[0])).collect()
}

/// `U* = Δ / Ī⁰_A` for each adjacent pair of two-particle minibands `A < B`.
///
/// `Ī⁰_A` is the primary composition's mean (see [`OverlapStats::is_primary`]).
/// `gaps[k]` is Δ between `TP(k+1)` and `TP(k+2)`; resonances outside
/// `u_range` (inclusive) or with vanishing `Ī⁰` are reported with `u_star = None`.
pub fn resonance_estimate(stats: &[OverlapStats], gaps: &[f64], u_range: (f64, f64)) -> Result<Vec<Resonance>> {
    let bands = Miniband::PAIR;
    if gaps.len() != bands.len() - 1 {
        return Err(Error::Config(format!("need {} miniband gaps, got {}", bands.len() - 1, gaps.len())));
    }
    let mean_of = |m: Miniband| -> Result<f64> {
        stats
            .iter()
            .find(|s| s.miniband == m && s.is_primary())
            .map(|s| s.mean_self)
            .ok_or_else(|| Error::ClassificationUnavailable(format!("no overlap statistics for {m}")))
    };
    (0..bands.len() - 1)
        .map(|k| {
            let i0 = mean_of(bands[k])?;
            let u = gaps[k] / i0;
            let in_range = u.is_finite() && i0 > 1e-12 && u >= u_range.0 && u <= u_range.1;
            Ok(Resonance {
                lower: bands[k],
                upper: bands[k + 1],
                gap: gaps[k],
                mean_self_overlap: i0,
                u_star: in_range.then_some(u),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sorted_by_centroid() {
        let b = build_sorted_sp_basis(&ModelParams::new(40, 2.5, 0.0)).unwrap();
        assert!(b.centers.windows(2).all(|w| w[0] <= w[1]));
        assert!(!b.extended_warning);
        let mut seen = b.order.clone();
        seen.sort_unstable();
        assert_eq!(seen, (0..40).collect::<Vec<_>>());
    }

    #[test]
    fn extended_regime_sets_warning() {
        let b = build_sorted_sp_basis(&ModelParams::new(30, 0.0, 0.0)).unwrap();
        assert!(b.extended_warning);
        assert!(matches!(bound_pair_filter(&b, 2.0), Err(Error::Domain(_))));
    }

    #[test]
    fn delta_state_overlaps() {
        // λ huge: states collapse onto single sites.
        let b = build_sorted_sp_basis(&ModelParams::new(12, 1e7, 0.0)).unwrap();
        assert!((b.overlap_self(3, 3).unwrap() - 1.0).abs() < 1e-9);
        assert!(b.overlap_self(2, 7).unwrap() < 1e-9);
        let e = b.renormalized_energy(4, 4, 3.0).unwrap();
        assert!((e - (2.0 * b.energies[4] + 3.0)).abs() < 1e-6 * b.energies[4].abs().max(1.0));
    }

    #[test]
    fn cross_matches_self_on_identical_pairs() {
        let b = build_sorted_sp_basis(&ModelParams::new(20, 2.5, 0.0)).unwrap();
        let s = b.overlap_self(5, 6).unwrap();
        let c = b.overlap_cross((5, 6), (6, 5)).unwrap();
        assert!((s - c).abs() < 1e-15);
        assert!((b.overlap_cross((1, 2), (3, 4)).unwrap() - b.overlap_cross((3, 4), (1, 2)).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn resonance_from_paper_inputs() {
        let compositions = [(0, 0), (0, 1), (1, 1), (1, 2), (2, 2)];
        let stats: Vec<OverlapStats> = compositions
            .iter()
            .zip([0.5, 0.05, 0.3, 0.0, 0.5])
            .map(|(&(a, b), i0)| OverlapStats {
                miniband: Miniband::product(a, b),
                bands: (Miniband::SINGLE[a], Miniband::SINGLE[b]),
                pairs: 1,
                mean_self: i0,
                std_self: 0.0,
                mean_self_onsite: i0,
                onsite_pairs: 1,
                mean_cross: 0.0,
                neighbor_links: 0,
            })
            .collect();
        let r = resonance_estimate(&stats, &[2.0; 4], (0.0, 20.0)).unwrap();
        assert_eq!(r[0].u_star, Some(4.0));
        assert!((r[2].u_star.unwrap() - 20.0 / 3.0).abs() < 1e-12);
        assert_eq!(r[3].u_star, None);
        assert_eq!(r[1].u_star, None);
    }
}
