//! Compressed sparse rows for materialized J and `H = 2JᵀJ`.

use crate::real::Real;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparseCsr<T> {
    pub rows: usize,
    pub cols: usize,
    /// `rows + 1` monotone offsets into `indices` / `values`.
    pub offsets: Vec<usize>,
    /// Column indices, strictly increasing within each row.
    pub indices: Vec<usize>,
    pub values: Vec<T>,
}

impl<T: Real> SparseCsr<T> {
    pub fn empty(cols: usize) -> Self {
        SparseCsr { rows: 0, cols, offsets: vec![0], indices: Vec::new(), values: Vec::new() }
    }

    /// Builds from per-row entries; entries of a row may be unsorted and may repeat
    /// a column, in which case they are summed in the given order.
    pub fn from_rows<I>(cols: usize, rows: I) -> Self
    where
        I: IntoIterator,
        I::Item: IntoIterator<Item = (usize, T)>,
    {
        let mut m = SparseCsr::empty(cols);
        let mut row: Vec<(usize, T)> = Vec::new();
        for r in rows {
            row.clear();
            row.extend(r);
            row.sort_by_key(|&(c, _)| c);
            let start = m.indices.len();
            for &(c, v) in &row {
                debug_assert!(c < cols);
                if m.indices.len() > start && *m.indices.last().unwrap() == c {
                    let last = m.values.last_mut().unwrap();
                    *last = *last + v;
                } else {
                    m.indices.push(c);
                    m.values.push(v);
                }
            }
            m.offsets.push(m.indices.len());
            m.rows += 1;
        }
        m
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Storage size of the matrix, for reporting.
    pub fn bytes(&self) -> usize {
        self.offsets.len() * std::mem::size_of::<usize>()
            + self.indices.len() * std::mem::size_of::<usize>()
            + self.values.len() * std::mem::size_of::<T>()
    }

    pub fn row(&self, r: usize) -> (&[usize], &[T]) {
        let (a, b) = (self.offsets[r], self.offsets[r + 1]);
        (&self.indices[a..b], &self.values[a..b])
    }

    /// `y = A x`.
    pub fn mul_vec(&self, x: &[T], y: &mut [T]) {
        for (r, out) in y.iter_mut().enumerate().take(self.rows) {
            let (idx, val) = self.row(r);
            *out = idx.iter().zip(val).fold(T::zero(), |acc, (&c, &v)| acc + v * x[c]);
        }
    }

    /// `y = Aᵀ x`, accumulated row by row.
    pub fn mul_transpose_vec(&self, x: &[T], y: &mut [T]) {
        y.fill(T::zero());
        for (r, &xr) in x.iter().enumerate().take(self.rows) {
            let (idx, val) = self.row(r);
            for (&c, &v) in idx.iter().zip(val) {
                y[c] = y[c] + v * xr;
            }
        }
    }

    pub fn transpose(&self) -> SparseCsr<T> {
        let mut counts = vec![0usize; self.cols + 1];
        for &c in &self.indices {
            counts[c + 1] += 1;
        }
        for i in 0..self.cols {
            counts[i + 1] += counts[i];
        }
        let offsets = counts.clone();
        let mut next = counts;
        let mut indices = vec![0; self.nnz()];
        let mut values = vec![T::zero(); self.nnz()];
        for r in 0..self.rows {
            let (idx, val) = self.row(r);
            for (&c, &v) in idx.iter().zip(val) {
                indices[next[c]] = r;
                values[next[c]] = v;
                next[c] += 1;
            }
        }
        SparseCsr { rows: self.cols, cols: self.rows, offsets, indices, values }
    }

    /// `2JᵀJ` by row-wise sparse accumulation over the columns of J.
    pub fn normal_matrix(&self) -> SparseCsr<T> {
        let jt = self.transpose();
        let n = self.cols;
        let two = T::from_f64(2.0);
        let mut acc = vec![T::zero(); n];
        let mut mark = vec![usize::MAX; n];
        let mut cols: Vec<usize> = Vec::new();
        let mut h = SparseCsr::empty(n);
        for i in 0..n {
            cols.clear();
            let (rows_i, vals_i) = jt.row(i);
            for (&r, &a) in rows_i.iter().zip(vals_i) {
                let (idx, val) = self.row(r);
                for (&c, &v) in idx.iter().zip(val) {
                    if mark[c] != i {
                        mark[c] = i;
                        acc[c] = T::zero();
                        cols.push(c);
                    }
                    acc[c] = acc[c] + a * v;
                }
            }
            cols.sort_unstable();
            for &c in &cols {
                h.indices.push(c);
                h.values.push(two * acc[c]);
            }
            h.offsets.push(h.indices.len());
            h.rows += 1;
        }
        h
    }

    /// Adds `d[i]` to every stored diagonal entry, inserting missing ones.
    pub fn with_added_diagonal(&self, d: &[T]) -> SparseCsr<T> {
        SparseCsr::from_rows(
            self.cols,
            (0..self.rows).map(|r| {
                let (idx, val) = self.row(r);
                let mut row: Vec<(usize, T)> = idx.iter().copied().zip(val.iter().copied()).collect();
                if d[r] != T::zero() {
                    row.push((r, d[r]));
                }
                row
            }),
        )
    }

    pub fn to_dense(&self) -> Vec<Vec<T>> {
        let mut out = vec![vec![T::zero(); self.cols]; self.rows];
        for (r, row) in out.iter_mut().enumerate() {
            let (idx, val) = self.row(r);
            for (&c, &v) in idx.iter().zip(val) {
                row[c] = v;
            }
        }
        out
    }
}
