//! Symmetric eigendecomposition and truncated real matrix powers.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::nystroem::EIGEN_FLOOR;
use crate::{Error, Result};

/// Eigenpairs sorted by decreasing eigenvalue.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: DVector<f64>,
    /// Column `k` is the eigenvector of `values[k]`.
    pub vectors: DMatrix<f64>,
}

pub fn sym_eigen(m: &DMatrix<f64>) -> SymEigen {
    let eig = SymmetricEigen::new(m.clone());
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = DVector::from_iterator(n, order.iter().map(|&k| eig.eigenvalues[k]));
    let mut vectors = DMatrix::zeros(m.nrows(), n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    SymEigen { values, vectors }
}

/// Rank used when the caller does not pick one: `N - 1` up to a thousand rows,
/// 100 beyond.
pub fn default_power_rank(n: usize) -> usize {
    if n <= 1000 {
        n.saturating_sub(1).max(1)
    } else {
        100
    }
}

/// `V Λᵖ Vᵀ` over the top-`rank` eigenpairs of a symmetric PSD matrix.
/// Eigenvalues below `EIGEN_FLOOR` times the largest are dropped, so `p = 0`
/// yields the projector onto the retained eigenspace.
pub fn matrix_power(m: &DMatrix<f64>, p: f64, rank: Option<usize>) -> Result<DMatrix<f64>> {
    if m.nrows() != m.ncols() {
        return Err(Error::invalid("matrix_power needs a square matrix"));
    }
    if !(p >= 0.0 && p.is_finite()) {
        return Err(Error::invalid(format!("power {p} must be a finite non-negative real")));
    }
    let n = m.nrows();
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    for i in 0..n {
        for j in 0..i {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-9 {
                return Err(Error::invalid("matrix_power needs a symmetric matrix"));
            }
        }
    }
    let rank = rank.unwrap_or_else(|| default_power_rank(n));
    if rank == 0 {
        return Err(Error::invalid("rank must be at least 1"));
    }
    let eig = sym_eigen(m);
    let smallest = eig.values[n - 1];
    if smallest < -1e-9 {
        return Err(Error::NotPositiveSemidefinite(smallest));
    }
    let top = eig.values[0];
    let mut out = DMatrix::zeros(n, n);
    if top <= 0.0 {
        return Ok(out);
    }
    for k in 0..rank.min(n) {
        let lam = eig.values[k];
        if lam <= EIGEN_FLOOR * top {
            break;
        }
        let v = eig.vectors.column(k);
        out += lam.powf(p) * (v * v.transpose());
    }
    Ok(out)
}
