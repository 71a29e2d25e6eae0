//! Compressed sparse row storage and the products the models need.

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// CSR matrix. Column indices are strictly increasing within each row.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRowMatrix {
    n_rows: usize,
    n_cols: usize,
    offsets: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseRowMatrix {
    /// Assembles from triplets. Duplicate coordinates are summed.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let mut entries: Vec<(usize, usize, f64)> = triplets.into_iter().collect();
        for &(r, c, _) in &entries {
            if r >= n_rows || c >= n_cols {
                return Err(Error::Contract(format!(
                    "triplet ({r}, {c}) outside {n_rows}x{n_cols}"
                )));
            }
        }
        entries.sort_unstable_by_key(|&(r, c, _)| (r, c));

        let mut offsets = vec![0usize; n_rows + 1];
        let mut indices = Vec::with_capacity(entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in entries {
            if last == Some((r, c)) {
                *values.last_mut().expect("non-empty after first entry") += v;
                continue;
            }
            indices.push(c);
            values.push(v);
            offsets[r + 1] += 1;
            last = Some((r, c));
        }
        for i in 0..n_rows {
            offsets[i + 1] += offsets[i];
        }
        Ok(Self {
            n_rows,
            n_cols,
            offsets,
            indices,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n_rows: n,
            n_cols: n,
            offsets: (0..=n).collect(),
            indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_rows, self.n_cols)
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `(column, value)` pairs stored in row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.offsets[i]..self.offsets[i + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    /// Stored value at `(i, j)`, zero when absent.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let span = self.offsets[i]..self.offsets[i + 1];
        match self.indices[span.clone()].binary_search(&j) {
            Ok(k) => self.values[span.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.n_rows, self.n_cols);
        for i in 0..self.n_rows {
            for (j, v) in self.row(i) {
                m[(i, j)] = v;
            }
        }
        m
    }

    pub fn transpose(&self) -> Self {
        let triplets = (0..self.n_rows).flat_map(|i| self.row(i).map(move |(j, v)| (j, i, v)));
        Self::from_triplets(self.n_cols, self.n_rows, triplets)
            .expect("transposed coordinates are in range")
    }

    /// Checks the structural invariants.
    pub fn check_invariants(&self) -> Result<()> {
        if self.offsets.len() != self.n_rows + 1 || self.offsets[0] != 0 {
            return Err(Error::Validation("bad offsets length or origin".into()));
        }
        if *self.offsets.last().unwrap() != self.values.len() || self.indices.len() != self.values.len() {
            return Err(Error::Validation("last offset differs from nnz".into()));
        }
        for i in 0..self.n_rows {
            if self.offsets[i] > self.offsets[i + 1] {
                return Err(Error::Validation(format!("offsets decrease at row {i}")));
            }
            let cols = &self.indices[self.offsets[i]..self.offsets[i + 1]];
            if cols.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Validation(format!("row {i} columns not strictly increasing")));
            }
            if cols.iter().any(|&c| c >= self.n_cols) {
                return Err(Error::Validation(format!("row {i} column out of range")));
            }
        }
        Ok(())
    }

    /// `S · H` without autodiff.
    pub fn mul_dense(&self, h: &Matrix) -> Result<Matrix> {
        if self.n_cols != h.rows() {
            return Err(Error::dim("spmm", self.shape(), h.shape()));
        }
        let mut out = Matrix::zeros(self.n_rows, h.cols());
        self.mul_dense_into(h, &mut out);
        Ok(out)
    }

    /// `out += S · H`.
    pub(crate) fn mul_dense_into(&self, h: &Matrix, out: &mut Matrix) {
        for i in 0..self.n_rows {
            let out_row = out.row_mut(i);
            for k in self.offsets[i]..self.offsets[i + 1] {
                let v = self.values[k];
                let h_row = h.row(self.indices[k]);
                for (o, &x) in out_row.iter_mut().zip(h_row) {
                    *o += v * x;
                }
            }
        }
    }

    /// `out += Sᵀ · G`, scattering row contributions without forming `Sᵀ`.
    pub(crate) fn mul_transpose_dense_into(&self, g: &Matrix, out: &mut Matrix) {
        for i in 0..self.n_rows {
            let g_row = g.row(i);
            for k in self.offsets[i]..self.offsets[i + 1] {
                let v = self.values[k];
                let out_row = out.row_mut(self.indices[k]);
                for (o, &x) in out_row.iter_mut().zip(g_row) {
                    *o += v * x;
                }
            }
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if self.n_cols != x.len() {
            return Err(Error::dim("spmv", self.shape(), (x.len(), 1)));
        }
        Ok((0..self.n_rows)
            .map(|i| self.row(i).map(|(j, v)| v * x[j]).sum())
            .collect())
    }
}
