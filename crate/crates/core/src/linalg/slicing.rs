//! Spectrum slicing with shift-invert Lanczos.
//!
//! The window is cut into slices holding at most `max_slice` eigenvalues,
//! counted exactly with `LDL^T` inertia. Each slice is solved independently
//! by Lanczos with full reorthogonalization on `(H - σI)^{-1}`, `σ` at the
//! slice centre, until exactly the counted number of Ritz pairs inside the
//! slice have converged. Every returned pair is checked against `H` directly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::band::{BandLdl, BandPattern};
use super::{dense, dot, norm, Columns};
use crate::error::{Error, Result};
use crate::model::SparseSymMatrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SliceOptions {
    /// Largest number of eigenvalues solved in one slice.
    pub max_slice: usize,
    /// Accepted residual `‖Hv − Ev‖` relative to `‖H‖`.
    pub tol: f64,
    pub seed: u64,
}

impl Default for SliceOptions {
    fn default() -> Self {
        SliceOptions {
            max_slice: 40,
            tol: 1e-10,
            seed: 0x5eed,
        }
    }
}

/// Eigenpairs of one slice, ascending.
#[derive(Debug, Clone)]
pub struct Slice {
    pub lower: f64,
    pub upper: f64,
    pub values: Vec<f64>,
    pub vectors: Columns,
    pub max_residual: f64,
}

struct Shifted {
    ldl: BandLdl,
    count: usize,
}

fn factor_near(h: &SparseSymMatrix, pattern: &BandPattern, x: f64, room: f64) -> Result<Shifted> {
    let mut last = None;
    // Deterministic nudges inside the available room.
    for k in 0..8 {
        let shift = x + room * [0.0, 1e-7, -2e-7, 3e-6, -5e-6, 1e-4, -3e-4, 2e-3][k];
        match BandLdl::factor(h, pattern, shift) {
            Ok(ldl) => {
                let count = ldl.negative_count();
                return Ok(Shifted { ldl, count });
            }
            Err(e) => last = Some(e),
        }
    }
    Err(last.unwrap())
}

/// Number of eigenvalues of `h` below `x` (with `x` nudged if singular);
/// returns the point actually used.
pub fn count_below(h: &SparseSymMatrix, pattern: &BandPattern, x: f64) -> Result<(f64, usize)> {
    let room = 1e-3 * (h.norm_estimate() + 1.0);
    let s = factor_near(h, pattern, x, room)?;
    Ok((s.ldl.shift, s.count))
}

/// Solves every eigenpair in `[lo, hi)` and maps each slice through `f`.
/// Results come back in ascending energy order.
pub fn map_window<T, F>(h: &SparseSymMatrix, lo: f64, hi: f64, opts: &SliceOptions, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(Slice) -> Result<T> + Sync,
{
    if !(lo < hi) {
        return Err(Error::Precondition(format!("empty window [{lo}, {hi})")));
    }
    let pattern = BandPattern::new(h);
    let (a, na) = count_below(h, &pattern, lo)?;
    let (b, nb) = count_below(h, &pattern, hi)?;
    let leaves = split(h, &pattern, (a, na), (b, nb), opts)?;
    let solved: Vec<Vec<T>> = leaves
        .into_par_iter()
        .enumerate()
        .map(|(k, (a, b, count))| {
            let seed = opts.seed ^ (k as u64).wrapping_mul(0x9e37_79b9);
            let mut out = Vec::new();
            solve_leaf(h, &pattern, (a, b, count), opts, seed, 0, &mut |s| {
                out.push(f(s)?);
                Ok(())
            })?;
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(solved.into_iter().flatten().collect())
}

const MAX_SUBDIVISIONS: usize = 8;

/// Solves one leaf; if Lanczos stalls (typically a shift sitting in a gap
/// with the eigenvalues crowded at one edge), the leaf is halved by inertia
/// and each nonempty half is solved with its own shift.
fn solve_leaf(
    h: &SparseSymMatrix,
    pattern: &BandPattern,
    (a, b, count): (f64, f64, usize),
    opts: &SliceOptions,
    seed: u64,
    depth: usize,
    emit: &mut dyn FnMut(Slice) -> Result<()>,
) -> Result<()> {
    match solve_slice(h, pattern, a, b, count, opts, seed) {
        Ok(slice) => emit(slice),
        Err(err @ (Error::Convergence { .. } | Error::Accuracy(_))) => {
            if depth >= MAX_SUBDIVISIONS {
                return Err(err);
            }
            let (_, na) = factor_near(h, pattern, a, 0.0).map(|s| (s.ldl.shift, s.count))?;
            let room = 1e-3 * (b - a);
            let mid = factor_near(h, pattern, 0.5 * (a + b), room)?;
            let (m, nm) = (mid.ldl.shift, mid.count);
            let lower = nm.saturating_sub(na);
            for (lo, hi, c, k) in [(a, m, lower, 1u64), (m, b, count.saturating_sub(lower), 2)] {
                if c > 0 {
                    solve_leaf(h, pattern, (lo, hi, c), opts, seed.rotate_left(7) ^ k, depth + 1, emit)?;
                }
            }
            Ok(())
        }
        Err(e) => Err(e),
    }
}

/// Every eigenpair in `[lo, hi)`, ascending.
pub fn eigenpairs_in_window(h: &SparseSymMatrix, lo: f64, hi: f64, opts: &SliceOptions) -> Result<(Vec<f64>, Columns)> {
    let slices = map_window(h, lo, hi, opts, Ok)?;
    let mut values = Vec::new();
    let mut vectors = Columns::new(h.dim());
    for s in slices {
        values.extend_from_slice(&s.values);
        vectors.data.extend_from_slice(&s.vectors.data);
    }
    Ok((values, vectors))
}

fn split(
    h: &SparseSymMatrix,
    pattern: &BandPattern,
    lo: (f64, usize),
    hi: (f64, usize),
    opts: &SliceOptions,
) -> Result<Vec<(f64, f64, usize)>> {
    let mut leaves = Vec::new();
    let mut stack = vec![(lo, hi)];
    let target = (opts.max_slice * 3 / 4).max(1);
    let scale = h.norm_estimate() + 1.0;
    while let Some(((a, na), (b, nb))) = stack.pop() {
        if nb <= na {
            continue;
        }
        let count = nb - na;
        if count <= opts.max_slice || b - a < 1e-9 * scale {
            leaves.push((a, b, count));
            continue;
        }
        let pieces = count.div_ceil(target).min(64);
        let mut points = vec![(a, na)];
        for i in 1..pieces {
            let x = a + (b - a) * i as f64 / pieces as f64;
            let room = 1e-3 * (b - a) / pieces as f64;
            let s = factor_near(h, pattern, x, room)?;
            points.push((s.ldl.shift, s.count));
        }
        points.push((b, nb));
        for w in points.windows(2) {
            stack.push((w[0], w[1]));
        }
    }
    leaves.sort_by(|x, y| x.0.total_cmp(&y.0));
    Ok(leaves)
}

fn solve_slice(
    h: &SparseSymMatrix,
    pattern: &BandPattern,
    a: f64,
    b: f64,
    count: usize,
    opts: &SliceOptions,
    seed: u64,
) -> Result<Slice> {
    let n = h.dim();
    let hnorm = h.norm_estimate().max(f64::MIN_POSITIVE);
    let centre = 0.5 * (a + b);
    let shifted = factor_near(h, pattern, centre, 0.25 * (b - a))?;
    let sigma = shifted.ldl.shift;
    let op_norm = hnorm + sigma.abs();
    let accept = opts.tol * hnorm;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut basis: Vec<f64> = Vec::new();
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let max_steps = n.min(4 * count + 120);
    let mut next_check = n.min(count + 20);

    let mut v = random_unit(&mut rng, n, &basis);
    let mut w = vec![0.0; n];
    let mut coef = Vec::new();
    let mut worst = f64::INFINITY;

    loop {
        let m = alpha.len();
        basis.extend_from_slice(&v);
        w.copy_from_slice(&v);
        shifted.ldl.solve_permuted(&mut w);
        let a_j = dot(&v, &w);
        let b_prev = beta.last().copied().unwrap_or(0.0);
        let prev_start = m.saturating_sub(1) * n;
        for i in 0..n {
            let back = if m > 0 { b_prev * basis[prev_start + i] } else { 0.0 };
            w[i] -= a_j * v[i] + back;
        }
        // Full reorthogonalization by classical Gram-Schmidt, repeated once
        // when the first pass removes most of the vector.
        let mut b_j = norm(&w);
        for _ in 0..2 {
            coef.clear();
            coef.extend(basis.chunks_exact(n).map(|q| dot(q, &w)));
            for (q, c) in basis.chunks_exact(n).zip(&coef) {
                for (wi, qi) in w.iter_mut().zip(q) {
                    *wi -= c * qi;
                }
            }
            let after = norm(&w);
            let enough = after > 0.5 * b_j;
            b_j = after;
            if enough {
                break;
            }
        }
        alpha.push(a_j);
        let steps = m + 1;

        let breakdown = b_j <= 1e-12 * a_j.abs().max(1.0);
        if steps >= next_check || breakdown || steps >= max_steps {
            let (done, slice) = ritz(h, pattern, &basis, &alpha, &beta, b_j, sigma, op_norm, a, b, count, accept)?;
            if let Some(slice) = slice {
                if done {
                    return Ok(slice);
                }
                worst = slice.max_residual;
            }
            next_check = n.min(steps + (steps / 4).max(10));
        }
        if steps >= max_steps {
            return Err(Error::Convergence {
                iterations: steps,
                residual: worst,
            });
        }
        if breakdown {
            // Invariant subspace: continue from a fresh orthogonal direction.
            v = random_unit(&mut rng, n, &basis);
            b_j = 0.0;
        } else {
            for (vi, wi) in v.iter_mut().zip(&w) {
                *vi = wi / b_j;
            }
        }
        beta.push(b_j);
    }
}

#[allow(clippy::too_many_arguments)]
fn ritz(
    h: &SparseSymMatrix,
    pattern: &BandPattern,
    basis: &[f64],
    alpha: &[f64],
    beta: &[f64],
    last_beta: f64,
    sigma: f64,
    op_norm: f64,
    a: f64,
    b: f64,
    count: usize,
    accept: f64,
) -> Result<(bool, Option<Slice>)> {
    let n = h.dim();
    let m = alpha.len();
    let mut t = vec![0.0; m * m];
    for i in 0..m {
        t[i * m + i] = alpha[i];
        if i + 1 < m {
            t[i * m + i + 1] = beta[i];
            t[(i + 1) * m + i] = beta[i];
        }
    }
    let (theta, s) = dense::eigh(m, &t)?;
    let mut inside: Vec<(f64, usize)> = Vec::new();
    for (k, &th) in theta.iter().enumerate() {
        if th == 0.0 {
            continue;
        }
        let e = sigma + 1.0 / th;
        if e >= a && e < b {
            let est = (last_beta * s.col(k)[m - 1]).abs() * op_norm / th.abs();
            if est > accept {
                return Ok((false, None));
            }
            inside.push((e, k));
        }
    }
    if inside.len() < count {
        return Ok((false, None));
    }
    if inside.len() > count {
        return Err(Error::Accuracy(format!(
            "slice [{a}, {b}) holds {} Ritz values but inertia counts {count}",
            inside.len()
        )));
    }
    inside.sort_by(|x, y| x.0.total_cmp(&y.0));

    let mut values = Vec::with_capacity(count);
    let mut vectors = Columns::new(n);
    let mut yp = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut hy = vec![0.0; n];
    let mut max_residual: f64 = 0.0;
    for &(_, k) in &inside {
        yp.iter_mut().for_each(|x| *x = 0.0);
        for (q, &c) in basis.chunks_exact(n).zip(s.col(k)) {
            for (yi, qi) in yp.iter_mut().zip(q) {
                *yi += c * qi;
            }
        }
        let nrm = norm(&yp);
        pattern.unpermute(&yp, &mut y);
        y.iter_mut().for_each(|x| *x /= nrm);
        h.matvec(&y, &mut hy);
        // Rayleigh quotient is the more accurate eigenvalue.
        let e = dot(&y, &hy);
        let r = hy.iter().zip(&y).map(|(p, q)| (p - e * q).powi(2)).sum::<f64>().sqrt();
        max_residual = max_residual.max(r);
        values.push(e);
        vectors.push(&y);
    }
    let slice = Slice {
        lower: a,
        upper: b,
        values,
        vectors,
        max_residual,
    };
    Ok((max_residual <= 100.0 * accept, Some(slice)))
}

fn random_unit(rng: &mut ChaCha8Rng, n: usize, basis: &[f64]) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
    for _ in 0..2 {
        for q in basis.chunks_exact(n) {
            let c = dot(q, &v);
            for (vi, qi) in v.iter_mut().zip(q) {
                *vi -= c * qi;
            }
        }
    }
    let nrm = norm(&v);
    v.iter_mut().for_each(|x| *x /= nrm);
    v
}
