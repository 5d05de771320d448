//! Compressed sparse row matrices used for graph adjacency.

use crate::matrix::Matrix;

/// Immutable CSR matrix with f64 values.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from triplets; entries must be unique and are sorted per row.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Self {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_rows];
        for (r, c, v) in triplets {
            rows[r].push((c, v));
        }
        let mut row_ptr = Vec::with_capacity(n_rows + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_unstable_by_key(|e| e.0);
            for (c, v) in row {
                col_idx.push(c);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let lo = self.row_ptr[r];
        let hi = self.row_ptr[r + 1];
        self.col_idx[lo..hi]
            .iter()
            .copied()
            .zip(self.values[lo..hi].iter().copied())
    }

    /// `self · x` for dense `x` (n_cols × w).
    pub fn mul_dense(&self, x: &Matrix) -> Matrix {
        assert_eq!(self.n_cols, x.rows());
        let w = x.cols();
        let mut out = Matrix::zeros(self.n_rows, w);
        for r in 0..self.n_rows {
            let orow = out.row_mut(r);
            for (c, v) in self.row(r) {
                let xrow = &x.data()[c * w..(c + 1) * w];
                for (o, xv) in orow.iter_mut().zip(xrow) {
                    *o += v * xv;
                }
            }
        }
        out
    }

    /// `selfᵀ · x` for dense `x` (n_rows × w), via row scatter.
    pub fn transpose_mul_dense(&self, x: &Matrix) -> Matrix {
        assert_eq!(self.n_rows, x.rows());
        let w = x.cols();
        let mut out = Matrix::zeros(self.n_cols, w);
        for r in 0..self.n_rows {
            let xrow = &x.data()[r * w..(r + 1) * w];
            for (c, v) in self.row(r) {
                let orow = &mut out.data_mut()[c * w..(c + 1) * w];
                for (o, xv) in orow.iter_mut().zip(xrow) {
                    *o += v * xv;
                }
            }
        }
        out
    }

    /// Dense copy, for small-graph test oracles.
    pub fn to_dense(&self) -> Matrix {
        let mut out = Matrix::zeros(self.n_rows, self.n_cols);
        for r in 0..self.n_rows {
            for (c, v) in self.row(r) {
                out.set(r, c, v);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mul_and_transpose_mul_agree_with_dense() {
        let s = CsrMatrix::from_triplets(
            3,
            2,
            vec![(0, 0, 2.0), (0, 1, -1.0), (2, 0, 0.5)],
        );
        let x = Matrix::from_rows(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]]);
        let y = s.mul_dense(&x);
        assert_eq!(y.row(0), &[2.0 - 4.0, 4.0 - 5.0, 6.0 - 6.0]);
        assert_eq!(y.row(1), &[0.0, 0.0, 0.0]);
        assert_eq!(y.row(2), &[0.5, 1.0, 1.5]);

        let z = s.transpose_mul_dense(&y);
        // Dense check: Sᵀ·(S·X)
        let sd = s.to_dense();
        let mut want = Matrix::zeros(2, 3);
        for i in 0..2 {
            for j in 0..3 {
                let mut acc = 0.0;
                for r in 0..3 {
                    acc += sd.get(r, i) * y.get(r, j);
                }
                want.set(i, j, acc);
            }
        }
        assert_eq!(z, want);
    }
}
