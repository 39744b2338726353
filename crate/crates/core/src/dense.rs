//! Row-major dense storage for tall matrices (`N × d′` feature rows).

use nalgebra::DMatrix;

use crate::util::dot;

#[derive(Debug, Clone, PartialEq)]
pub struct RowMatrix {
    data: Vec<f64>,
    nrows: usize,
    ncols: usize,
}

impl RowMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            data: vec![0.0; nrows * ncols],
            nrows,
            ncols,
        }
    }

    /// Panics if `data.len() != nrows * ncols`.
    pub fn from_vec(nrows: usize, ncols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), nrows * ncols, "row-major buffer size mismatch");
        Self { data, nrows, ncols }
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let ncols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * ncols);
        for r in rows {
            assert_eq!(r.as_ref().len(), ncols, "ragged rows");
            data.extend_from_slice(r.as_ref());
        }
        Self {
            data,
            nrows: rows.len(),
            ncols,
        }
    }

    pub fn from_dmatrix(m: &DMatrix<f64>) -> Self {
        let mut out = Self::zeros(m.nrows(), m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                out.data[i * m.ncols() + j] = m[(i, j)];
            }
        }
        out
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.nrows, self.ncols, &self.data)
    }

    #[inline]
    pub fn nrows(&self) -> usize {
        self.nrows
    }

    #[inline]
    pub fn ncols(&self) -> usize {
        self.ncols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.ncols..(i + 1) * self.ncols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.ncols..(i + 1) * self.ncols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn row_dot(&self, i: usize, j: usize) -> f64 {
        dot(self.row(i), self.row(j))
    }

    /// Gram matrix `R_S R_Sᵀ` of the selected rows.
    pub fn gram(&self, ids: &[usize]) -> DMatrix<f64> {
        let k = ids.len();
        let mut g = DMatrix::zeros(k, k);
        for a in 0..k {
            for b in 0..=a {
                let v = self.row_dot(ids[a], ids[b]);
                g[(a, b)] = v;
                g[(b, a)] = v;
            }
        }
        g
    }

    /// `Rᵀ R`, a `ncols × ncols` matrix.
    pub fn cross(&self) -> DMatrix<f64> {
        let c = self.ncols;
        let mut out = DMatrix::zeros(c, c);
        for i in 0..self.nrows {
            let r = self.row(i);
            for a in 0..c {
                let ra = r[a];
                if ra == 0.0 {
                    continue;
                }
                for b in 0..=a {
                    out[(a, b)] += ra * r[b];
                }
            }
        }
        for a in 0..c {
            for b in 0..a {
                out[(b, a)] = out[(a, b)];
            }
        }
        out
    }

    /// `self · m` where `m` is `ncols × k`.
    pub fn mul(&self, m: &DMatrix<f64>) -> RowMatrix {
        assert_eq!(m.nrows(), self.ncols);
        let k = m.ncols();
        let mut out = RowMatrix::zeros(self.nrows, k);
        for i in 0..self.nrows {
            let r = self.row(i);
            let o = out.row_mut(i);
            for (a, &ra) in r.iter().enumerate() {
                if ra == 0.0 {
                    continue;
                }
                for (b, ob) in o.iter_mut().enumerate() {
                    *ob += ra * m[(a, b)];
                }
            }
        }
        out
    }
}
