//! Bandwidth-reducing ordering and banded `LDL^T` factorization of
//! `H - σI` for a sparse symmetric `H`.

use std::collections::VecDeque;

use super::dot;
use crate::error::{Error, Result};
use crate::model::SparseSymMatrix;

/// Reverse Cuthill-McKee ordering and the resulting half-bandwidth.
#[derive(Debug, Clone)]
pub struct BandPattern {
    /// `perm[new] = old`.
    pub perm: Vec<usize>,
    /// `inv[old] = new`.
    pub inv: Vec<usize>,
    pub bandwidth: usize,
}

impl BandPattern {
    pub fn new(h: &SparseSymMatrix) -> Self {
        let n = h.dim();
        let adj: Vec<Vec<usize>> = (0..n)
            .map(|i| h.row(i).map(|(c, _)| c).filter(|&c| c != i).collect())
            .collect();
        let degree: Vec<usize> = adj.iter().map(Vec::len).collect();

        let mut order = Vec::with_capacity(n);
        let mut visited = vec![false; n];
        while order.len() < n {
            let seed = (0..n)
                .filter(|&i| !visited[i])
                .min_by_key(|&i| (degree[i], i))
                .unwrap();
            let start = pseudo_peripheral(&adj, &degree, seed);
            let mut queue = VecDeque::from([start]);
            visited[start] = true;
            while let Some(v) = queue.pop_front() {
                order.push(v);
                let mut next: Vec<usize> = adj[v].iter().copied().filter(|&w| !visited[w]).collect();
                next.sort_by_key(|&w| (degree[w], w));
                for w in next {
                    visited[w] = true;
                    queue.push_back(w);
                }
            }
        }
        order.reverse();

        let mut inv = vec![0; n];
        for (new, &old) in order.iter().enumerate() {
            inv[old] = new;
        }
        let bandwidth = (0..n)
            .flat_map(|i| adj[i].iter().map(move |&j| (i, j)))
            .map(|(i, j)| inv[i].abs_diff(inv[j]))
            .max()
            .unwrap_or(0);
        BandPattern {
            perm: order,
            inv,
            bandwidth,
        }
    }

    pub fn permute(&self, x: &[f64], out: &mut [f64]) {
        for (new, &old) in self.perm.iter().enumerate() {
            out[new] = x[old];
        }
    }

    pub fn unpermute(&self, x: &[f64], out: &mut [f64]) {
        for (new, &old) in self.perm.iter().enumerate() {
            out[old] = x[new];
        }
    }
}

/// BFS levels from `start`; returns the last level.
fn bfs_last_level(adj: &[Vec<usize>], start: usize) -> (usize, Vec<usize>) {
    let mut dist = vec![usize::MAX; adj.len()];
    dist[start] = 0;
    let mut queue = VecDeque::from([start]);
    let mut depth = 0;
    while let Some(v) = queue.pop_front() {
        depth = depth.max(dist[v]);
        for &w in &adj[v] {
            if dist[w] == usize::MAX {
                dist[w] = dist[v] + 1;
                queue.push_back(w);
            }
        }
    }
    let last = (0..adj.len()).filter(|&i| dist[i] == depth).collect();
    (depth, last)
}

fn pseudo_peripheral(adj: &[Vec<usize>], degree: &[usize], seed: usize) -> usize {
    let mut node = seed;
    let (mut ecc, mut last) = bfs_last_level(adj, node);
    loop {
        let candidate = *last.iter().min_by_key(|&&i| (degree[i], i)).unwrap();
        let (e, l) = bfs_last_level(adj, candidate);
        if e <= ecc {
            return node;
        }
        node = candidate;
        ecc = e;
        last = l;
    }
}

/// `LDL^T` of `P (H - σI) P^T` without pivoting, stored by rows of the band.
///
/// Failure on tiny pivots or large multipliers is reported as an error; the
/// caller moves the shift slightly and retries.
#[derive(Debug, Clone)]
pub struct BandLdl {
    n: usize,
    b: usize,
    /// Row `i` holds `L[i, i-b..i]` at positions `0..b`.
    l: Vec<f64>,
    d: Vec<f64>,
    pub shift: f64,
}

const MAX_MULTIPLIER: f64 = 1e8;

impl BandLdl {
    pub fn factor(h: &SparseSymMatrix, pattern: &BandPattern, shift: f64) -> Result<Self> {
        let n = h.dim();
        let b = pattern.bandwidth;
        let w = b + 1;
        let mut l = vec![0.0; n * w];
        for i in 0..n {
            let old = pattern.perm[i];
            for (c_old, v) in h.row(old) {
                let j = pattern.inv[c_old];
                if j <= i {
                    l[i * w + j + b - i] = if j == i { v - shift } else { v };
                }
            }
        }
        let scale = h.norm_estimate() + shift.abs();
        let pivot_floor = 1e-12 * scale.max(f64::MIN_POSITIVE);

        let mut d = vec![0.0; n];
        let mut scratch = vec![0.0; w];
        for i in 0..n {
            let lo = i.saturating_sub(b);
            let (before, rest) = l.split_at_mut(i * w);
            let row_i = &mut rest[..w];
            for j in lo..i {
                let row_j = &before[j * w..(j + 1) * w];
                let pi = j + b - i;
                let len = j - lo;
                let si = lo + b - i;
                let sj = lo + b - j;
                let s = dot(&scratch[si..si + len], &row_j[sj..sj + len]);
                let wij = row_i[pi] - s;
                scratch[pi] = wij;
                let lij = wij / d[j];
                if !(lij.abs() <= MAX_MULTIPLIER) {
                    return Err(Error::Precondition(format!(
                        "unstable LDL^T at shift {shift}: multiplier {lij:.3e}"
                    )));
                }
                row_i[pi] = lij;
            }
            let si = lo + b - i;
            let s = dot(&scratch[si..b], &row_i[si..b]);
            let di = row_i[b] - s;
            if !(di.abs() > pivot_floor) {
                return Err(Error::Precondition(format!("small pivot {di:.3e} at shift {shift}")));
            }
            d[i] = di;
            row_i[b] = 0.0;
        }
        Ok(BandLdl { n, b, l, d, shift })
    }

    /// Number of eigenvalues of `H` strictly below the shift.
    pub fn negative_count(&self) -> usize {
        self.d.iter().filter(|&&x| x < 0.0).count()
    }

    /// Solves `(H - σI) x = r` in the permuted ordering, in place.
    pub fn solve_permuted(&self, x: &mut [f64]) {
        let (n, b, w) = (self.n, self.b, self.b + 1);
        for i in 0..n {
            let lo = i.saturating_sub(b);
            let row = &self.l[i * w..i * w + b];
            let s = dot(&row[lo + b - i..], &x[lo..i]);
            x[i] -= s;
        }
        for (xi, di) in x.iter_mut().zip(&self.d) {
            *xi /= di;
        }
        for i in (0..n).rev() {
            let lo = i.saturating_sub(b);
            let xi = x[i];
            let row = &self.l[i * w..i * w + b];
            for (xk, a) in x[lo..i].iter_mut().zip(&row[lo + b - i..]) {
                *xk -= a * xi;
            }
        }
    }
}
