//! Dense Cholesky factorisation, log-determinant and linear solves.

use nalgebra::DMatrix;

use crate::{Error, Result};

/// Lower-triangular factor `R` with `M = R Rᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    lower: DMatrix<f64>,
}

impl Cholesky {
    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    pub fn lower(&self) -> &DMatrix<f64> {
        &self.lower
    }

    /// `log det M = 2 Σ log R_ii`.
    pub fn logdet(&self) -> f64 {
        2.0 * (0..self.dim()).map(|i| self.lower[(i, i)].ln()).sum::<f64>()
    }

    /// Solves `M X = rhs` by forward then backward substitution.
    pub fn solve(&self, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let n = self.dim();
        if rhs.nrows() != n {
            return Err(Error::invalid(format!(
                "right-hand side has {} rows, expected {n}",
                rhs.nrows()
            )));
        }
        let l = &self.lower;
        let mut x = rhs.clone();
        for c in 0..x.ncols() {
            // R y = b
            for i in 0..n {
                let mut s = x[(i, c)];
                for k in 0..i {
                    s -= l[(i, k)] * x[(k, c)];
                }
                x[(i, c)] = s / l[(i, i)];
            }
            // Rᵀ z = y
            for i in (0..n).rev() {
                let mut s = x[(i, c)];
                for k in i + 1..n {
                    s -= l[(k, i)] * x[(k, c)];
                }
                x[(i, c)] = s / l[(i, i)];
            }
        }
        Ok(x)
    }
}

fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::invalid(format!(
            "matrix is {}x{}, expected square",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("matrix has non-finite entries"));
    }
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-9 {
                return Err(Error::invalid(format!("matrix not symmetric at ({i},{j})")));
            }
        }
    }
    Ok(())
}

/// Factorises a symmetric positive-definite matrix. A pivot `≤ rel_tol · M_jj`
/// is reported as non-positive.
pub(crate) fn cholesky_with_tol(m: &DMatrix<f64>, rel_tol: f64) -> Result<Cholesky> {
    check_symmetric(m)?;
    let n = m.nrows();
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > rel_tol * m[(j, j)].abs()) || d <= 0.0 {
            return Err(Error::NotPositiveDefinite { pivot: j, value: d });
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in j + 1..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(Cholesky { lower: l })
}

pub fn cholesky(m: &DMatrix<f64>) -> Result<Cholesky> {
    cholesky_with_tol(m, 0.0)
}

/// `log det m` for a symmetric positive-definite `m`.
pub fn chol_logdet(m: &DMatrix<f64>) -> Result<f64> {
    Ok(cholesky(m)?.logdet())
}

/// `m⁻¹ · rhs` for a symmetric positive-definite `m`.
pub fn chol_solve(m: &DMatrix<f64>, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    cholesky(m)?.solve(rhs)
}
