//! Symmetric eigensolvers.
//!
//! [`dense`] wraps a LAPACK-class dense solver for small problems.
//! [`slicing`] finds every eigenpair in an energy window with shift-invert
//! Lanczos on a banded `LDL^T` factorization; the factorization's inertia
//! gives exact eigenvalue counts so no state in the window is missed.

pub mod band;
pub mod dense;
pub mod slicing;

/// Column-major block of vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Columns {
    pub rows: usize,
    pub data: Vec<f64>,
}

impl Columns {
    pub fn new(rows: usize) -> Self {
        Columns { rows, data: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.data.len().checked_div(self.rows).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn push(&mut self, v: &[f64]) {
        assert_eq!(v.len(), self.rows);
        self.data.extend_from_slice(v);
    }
}

/// Dot product with four independent accumulators so the loop vectorizes.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
