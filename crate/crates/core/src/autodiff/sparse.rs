use crate::error::{Error, Result};

/// Constant sparse matrix in compressed-row form.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a matrix from per-row `(column, value)` lists. Duplicate columns
    /// within a row are summed.
    pub fn from_rows(cols: usize, rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for mut row in rows.iter().cloned() {
            row.sort_by_key(|&(c, _)| c);
            let mut last: Option<usize> = None;
            for (c, v) in row {
                if c >= cols {
                    return Err(Error::shape(
                        "CsrMatrix::from_rows",
                        format!("column {c} out of range {cols}"),
                    ));
                }
                if last == Some(c) {
                    *values.last_mut().unwrap() += v;
                } else {
                    indices.push(c);
                    values.push(v);
                    last = Some(c);
                }
            }
            indptr.push(indices.len());
        }
        Ok(CsrMatrix {
            rows: rows.len(),
            cols,
            indptr,
            indices,
            values,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[i]..self.indptr[i + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.cols]; self.rows];
        for (i, row) in out.iter_mut().enumerate() {
            for (c, v) in self.row(i) {
                row[c] += v;
            }
        }
        out
    }

    /// `self (r×c) · x (c×n)`.
    pub(crate) fn mul_dense(&self, x: &[f64], n: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.rows * n];
        for i in 0..self.rows {
            let out_row = &mut out[i * n..(i + 1) * n];
            for (c, v) in self.row(i) {
                for (o, &xv) in out_row.iter_mut().zip(&x[c * n..(c + 1) * n]) {
                    *o += v * xv;
                }
            }
        }
        out
    }

    /// `selfᵀ (c×r) · g (r×n)`.
    pub(crate) fn transpose_mul_dense(&self, g: &[f64], n: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.cols * n];
        for i in 0..self.rows {
            let g_row = &g[i * n..(i + 1) * n];
            for (c, v) in self.row(i) {
                for (o, &gv) in out[c * n..(c + 1) * n].iter_mut().zip(g_row) {
                    *o += v * gv;
                }
            }
        }
        out
    }
}
