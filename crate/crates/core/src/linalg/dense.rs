use faer::{Mat, Side};

use super::Columns;
use crate::error::{Error, Result};

/// All eigenpairs of a dense symmetric matrix given in column-major order.
/// Eigenvalues ascend; eigenvectors are the matching columns.
pub fn eigh(n: usize, a: &[f64]) -> Result<(Vec<f64>, Columns)> {
    assert_eq!(a.len(), n * n);
    if n == 0 {
        return Ok((Vec::new(), Columns::new(0)));
    }
    let m = Mat::<f64>::from_fn(n, n, |i, j| a[j * n + i]);
    let evd = m
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Accuracy(format!("dense eigensolver failed: {e:?}")))?;
    let s = evd.S();
    let u = evd.U();
    let values: Vec<f64> = (0..n).map(|i| s[i]).collect();
    let mut vectors = Columns {
        rows: n,
        data: vec![0.0; n * n],
    };
    for j in 0..n {
        let col = vectors.col_mut(j);
        for (i, c) in col.iter_mut().enumerate() {
            *c = u[(i, j)];
        }
    }
    Ok((values, vectors))
}

/// Eigenvalues only.
pub fn eigvalsh(n: usize, a: &[f64]) -> Result<Vec<f64>> {
    if n == 0 {
        return Ok(Vec::new());
    }
    let m = Mat::<f64>::from_fn(n, n, |i, j| a[j * n + i]);
    let mut values = m
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Accuracy(format!("dense eigensolver failed: {e:?}")))?;
    values.sort_by(f64::total_cmp);
    Ok(values)
}
