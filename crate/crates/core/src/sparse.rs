//! Sparse matrix storage.
//!
//! [`CooMatrix`] is the assembly format (duplicates are summed on
//! conversion); [`SparseMatrix`] is compressed sparse rows with sorted column
//! indices and is what every solver consumes.

use nalgebra::DMatrix;

use crate::error::{MsgrError, Result};
use crate::index_set::IndexSet;

/// Relative tolerance used by [`SparseMatrix::is_symmetric`] by default.
pub const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Default)]
pub struct CooMatrix {
    n_rows: usize,
    n_cols: usize,
    rows: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl CooMatrix {
    pub fn new(n_rows: usize, n_cols: usize) -> Self {
        Self { n_rows, n_cols, ..Default::default() }
    }

    pub fn with_capacity(n_rows: usize, n_cols: usize, cap: usize) -> Self {
        Self { n_rows, n_cols, rows: Vec::with_capacity(cap), cols: Vec::with_capacity(cap), vals: Vec::with_capacity(cap) }
    }

    pub fn push(&mut self, i: usize, j: usize, v: f64) {
        assert!(i < self.n_rows && j < self.n_cols, "entry ({i}, {j}) out of bounds");
        self.rows.push(i);
        self.cols.push(j);
        self.vals.push(v);
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Converts to CSR, summing duplicates. Explicit zeros that result from
    /// summation are kept so the sparsity pattern matches the assembly.
    pub fn to_csr(&self) -> SparseMatrix {
        let mut counts = vec![0usize; self.n_rows + 1];
        for &r in &self.rows {
            counts[r + 1] += 1;
        }
        for i in 0..self.n_rows {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut cols = vec![0usize; self.nnz()];
        let mut vals = vec![0.0; self.nnz()];
        for k in 0..self.nnz() {
            let r = self.rows[k];
            cols[next[r]] = self.cols[k];
            vals[next[r]] = self.vals[k];
            next[r] += 1;
        }

        let mut row_ptr = Vec::with_capacity(self.n_rows + 1);
        let mut col_idx = Vec::with_capacity(self.nnz());
        let mut values = Vec::with_capacity(self.nnz());
        row_ptr.push(0);
        let mut scratch: Vec<(usize, f64)> = Vec::new();
        for i in 0..self.n_rows {
            scratch.clear();
            scratch.extend((counts[i]..counts[i + 1]).map(|k| (cols[k], vals[k])));
            scratch.sort_by_key(|&(c, _)| c);
            for &(c, v) in &scratch {
                match col_idx.last() {
                    Some(&last) if last == c && col_idx.len() > row_ptr[i] => {
                        *values.last_mut().unwrap() += v;
                    }
                    _ => {
                        col_idx.push(c);
                        values.push(v);
                    }
                }
            }
            row_ptr.push(col_idx.len());
        }
        SparseMatrix { n_rows: self.n_rows, n_cols: self.n_cols, row_ptr, col_idx, values }
    }
}

/// Compressed sparse row matrix with sorted column indices per row.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self { n_rows, n_cols, row_ptr: vec![0; n_rows + 1], col_idx: Vec::new(), values: Vec::new() }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![1.0; n])
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        let n = d.len();
        Self { n_rows: n, n_cols: n, row_ptr: (0..=n).collect(), col_idx: (0..n).collect(), values: d.to_vec() }
    }

    /// Builds a matrix from `(row, col, value)` triplets, summing duplicates.
    pub fn from_triplets(n_rows: usize, n_cols: usize, t: &[(usize, usize, f64)]) -> Self {
        let mut coo = CooMatrix::with_capacity(n_rows, n_cols, t.len());
        for &(i, j, v) in t {
            coo.push(i, j, v);
        }
        coo.to_csr()
    }

    /// Dense to sparse, dropping entries with `|a_ij| <= drop_tol`.
    pub fn from_dense(m: &DMatrix<f64>, drop_tol: f64) -> Self {
        let mut coo = CooMatrix::new(m.nrows(), m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                let v = m[(i, j)];
                if v.abs() > drop_tol {
                    coo.push(i, j, v);
                }
            }
        }
        coo.to_csr()
    }

    /// Builds an `n_rows x columns.len()` matrix from sparse columns.
    pub fn from_columns(n_rows: usize, columns: &[Vec<(usize, f64)>]) -> Self {
        let cap = columns.iter().map(Vec::len).sum();
        let mut coo = CooMatrix::with_capacity(n_rows, columns.len(), cap);
        for (j, col) in columns.iter().enumerate() {
            for &(i, v) in col {
                coo.push(i, j, v);
            }
        }
        coo.to_csr()
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn is_square(&self) -> bool {
        self.n_rows == self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `(col, value)` pairs of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[r.clone()].binary_search(&j) {
            Ok(pos) => self.values[r.start + pos],
            Err(_) => 0.0,
        }
    }

    /// Iterates all stored `(row, col, value)` triplets in row order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_rows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n_rows.min(self.n_cols)).map(|i| self.get(i, i)).collect()
    }

    /// Sum of `|a_ij|` over off-diagonal entries of each row.
    pub fn off_diagonal_abs_sums(&self) -> Vec<f64> {
        (0..self.n_rows).map(|i| self.row(i).filter(|&(j, _)| j != i).map(|(_, v)| v.abs()).sum()).collect()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n_cols, "matvec dimension mismatch");
        (0..self.n_rows).map(|i| self.row(i).map(|(j, v)| v * x[j]).sum()).collect()
    }

    /// `A^T x`.
    pub fn matvec_transpose(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n_rows, "matvec_transpose dimension mismatch");
        let mut y = vec![0.0; self.n_cols];
        for (i, &xi) in x.iter().enumerate() {
            if xi != 0.0 {
                for (j, v) in self.row(i) {
                    y[j] += v * xi;
                }
            }
        }
        y
    }

    /// `x^T A x`.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        self.matvec(x).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    pub fn transpose(&self) -> SparseMatrix {
        let mut counts = vec![0usize; self.n_cols + 1];
        for &c in &self.col_idx {
            counts[c + 1] += 1;
        }
        for j in 0..self.n_cols {
            counts[j + 1] += counts[j];
        }
        let mut next = counts.clone();
        let mut col_idx = vec![0; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for i in 0..self.n_rows {
            for (j, v) in self.row(i) {
                col_idx[next[j]] = i;
                values[next[j]] = v;
                next[j] += 1;
            }
        }
        SparseMatrix { n_rows: self.n_cols, n_cols: self.n_rows, row_ptr: counts, col_idx, values }
    }

    pub fn scale(&self, s: f64) -> SparseMatrix {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= s);
        out
    }

    /// `self + s * other`.
    pub fn add_scaled(&self, other: &SparseMatrix, s: f64) -> Result<SparseMatrix> {
        if self.n_rows != other.n_rows || self.n_cols != other.n_cols {
            return Err(MsgrError::DimensionMismatch(format!(
                "cannot add {}x{} and {}x{}",
                self.n_rows, self.n_cols, other.n_rows, other.n_cols
            )));
        }
        let mut coo = CooMatrix::with_capacity(self.n_rows, self.n_cols, self.nnz() + other.nnz());
        for (i, j, v) in self.triplets() {
            coo.push(i, j, v);
        }
        for (i, j, v) in other.triplets() {
            coo.push(i, j, s * v);
        }
        Ok(coo.to_csr())
    }

    /// Adds `d` to the diagonal, creating entries where needed.
    pub fn add_diagonal(&self, d: &[f64]) -> Result<SparseMatrix> {
        if d.len() != self.n_rows || !self.is_square() {
            return Err(MsgrError::DimensionMismatch(format!("diagonal of length {} on {}x{} matrix", d.len(), self.n_rows, self.n_cols)));
        }
        self.add_scaled(&SparseMatrix::from_diagonal(d), 1.0)
    }

    /// Sparse product `self * other` (Gustavson).
    pub fn mul(&self, other: &SparseMatrix) -> Result<SparseMatrix> {
        if self.n_cols != other.n_rows {
            return Err(MsgrError::DimensionMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.n_rows, self.n_cols, other.n_rows, other.n_cols
            )));
        }
        let mut acc = vec![0.0; other.n_cols];
        let mut marker = vec![usize::MAX; other.n_cols];
        let mut pattern: Vec<usize> = Vec::new();
        let mut row_ptr = vec![0usize];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for i in 0..self.n_rows {
            pattern.clear();
            for (k, a) in self.row(i) {
                for (j, b) in other.row(k) {
                    if marker[j] != i {
                        marker[j] = i;
                        acc[j] = 0.0;
                        pattern.push(j);
                    }
                    acc[j] += a * b;
                }
            }
            pattern.sort_unstable();
            for &j in &pattern {
                col_idx.push(j);
                values.push(acc[j]);
            }
            row_ptr.push(col_idx.len());
        }
        Ok(SparseMatrix { n_rows: self.n_rows, n_cols: other.n_cols, row_ptr, col_idx, values })
    }

    /// Entry-exact extraction of `A[rows, cols]` in local ordering.
    pub fn restrict(&self, rows: &IndexSet, cols: &IndexSet) -> SparseMatrix {
        let mut coo = CooMatrix::new(rows.len(), cols.len());
        for (li, &gi) in rows.ids().iter().enumerate() {
            for (gj, v) in self.row(gi) {
                if let Some(lj) = cols.local(gj) {
                    coo.push(li, lj, v);
                }
            }
        }
        coo.to_csr()
    }

    /// Places `self` (in the local ordering of `rows`/`cols`) into an
    /// `n_rows x n_cols` matrix.
    pub fn embed(&self, rows: &IndexSet, cols: &IndexSet, n_rows: usize, n_cols: usize) -> SparseMatrix {
        let mut coo = CooMatrix::with_capacity(n_rows, n_cols, self.nnz());
        for (i, j, v) in self.triplets() {
            coo.push(rows.global(i), cols.global(j), v);
        }
        coo.to_csr()
    }

    /// Symmetric permutation `B[i, j] = A[perm[i], perm[j]]`.
    pub fn permute_symmetric(&self, perm: &[usize]) -> SparseMatrix {
        let mut inv = vec![0usize; perm.len()];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut coo = CooMatrix::with_capacity(self.n_rows, self.n_cols, self.nnz());
        for (i, j, v) in self.triplets() {
            coo.push(inv[i], inv[j], v);
        }
        coo.to_csr()
    }

    /// Column `j` as a dense vector.
    pub fn column_dense(&self, j: usize) -> Vec<f64> {
        (0..self.n_rows).map(|i| self.get(i, j)).collect()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n_rows, self.n_cols);
        for (i, j, v) in self.triplets() {
            m[(i, j)] += v;
        }
        m
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// True when `|a_ij - a_ji| <= tol * max(1, |a_ij|)` for every stored pair.
    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.is_square() && self.triplets().all(|(i, j, v)| (v - self.get(j, i)).abs() <= tol * v.abs().max(1.0))
    }

    /// Largest `|a_ij - a_ji|` relative to `max|a|`.
    pub fn relative_asymmetry(&self) -> f64 {
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        self.triplets().map(|(i, j, v)| (v - self.get(j, i)).abs()).fold(0.0, f64::max) / scale
    }

    /// `(A + A^T) / 2`.
    pub fn symmetrized(&self) -> Result<SparseMatrix> {
        Ok(self.add_scaled(&self.transpose(), 1.0)?.scale(0.5))
    }

    /// Removes stored entries with `|a_ij| <= tol`.
    pub fn pruned(&self, tol: f64) -> SparseMatrix {
        let mut coo = CooMatrix::new(self.n_rows, self.n_cols);
        for (i, j, v) in self.triplets() {
            if v.abs() > tol {
                coo.push(i, j, v);
            }
        }
        coo.to_csr()
    }

    /// Symmetric adjacency pattern without the diagonal (union of `A` and `A^T`).
    pub fn adjacency_pattern(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n_rows];
        for (i, j, v) in self.triplets() {
            if i != j && v != 0.0 {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
        for a in &mut adj {
            a.sort_unstable();
            a.dedup();
        }
        adj
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn small() -> SparseMatrix {
        SparseMatrix::from_triplets(3, 3, &[(0, 0, 2.0), (0, 1, -1.0), (1, 0, -1.0), (1, 1, 2.0), (1, 2, -1.0), (2, 1, -1.0), (2, 2, 2.0)])
    }

    #[test]
    fn duplicates_are_summed() {
        let m = SparseMatrix::from_triplets(2, 2, &[(0, 1, 1.0), (0, 1, 2.5), (1, 0, 1.0)]);
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.get(0, 1), 3.5);
    }

    #[test]
    fn restrict_extracts_entries() {
        let d = SparseMatrix::from_diagonal(&[1.0, 2.0, 3.0]);
        let s = IndexSet::new(vec![2]).unwrap();
        assert_eq!(d.restrict(&s, &s).to_dense(), DMatrix::from_element(1, 1, 3.0));

        let all = IndexSet::range(3);
        assert_eq!(small().restrict(&all, &all), small());
    }

    #[test]
    fn product_matches_dense() {
        let a = small();
        let b = SparseMatrix::from_triplets(3, 2, &[(0, 0, 1.0), (2, 1, 3.0), (1, 1, -2.0)]);
        let c = a.mul(&b).unwrap();
        assert!((c.to_dense() - a.to_dense() * b.to_dense()).abs().max() < 1e-15);
        assert!(a.mul(&a.transpose().mul(&b).unwrap().transpose()).is_err());
    }

    #[test]
    fn symmetry_checks() {
        assert!(small().is_symmetric(SYMMETRY_TOL));
        let skew = SparseMatrix::from_triplets(2, 2, &[(0, 1, 1.0), (1, 0, 1.1)]);
        assert!(!skew.is_symmetric(SYMMETRY_TOL));
        assert!(skew.symmetrized().unwrap().is_symmetric(SYMMETRY_TOL));
    }

    fn arb_matrix() -> impl Strategy<Value = SparseMatrix> {
        (1usize..8, 1usize..8).prop_flat_map(|(r, c)| {
            proptest::collection::vec((0..r, 0..c, -10.0f64..10.0), 0..30).prop_map(move |t| SparseMatrix::from_triplets(r, c, &t))
        })
    }

    proptest! {
        #[test]
        fn coo_csr_dense_agree(m in arb_matrix()) {
            let back = SparseMatrix::from_dense(&m.to_dense(), 0.0);
            prop_assert!((back.to_dense() - m.to_dense()).abs().max() == 0.0);
            prop_assert_eq!(m.transpose().transpose().to_dense(), m.to_dense());
        }

        #[test]
        fn restrict_then_embed_is_exact(m in arb_matrix(), mask in proptest::collection::vec(any::<bool>(), 8)) {
            let rows = IndexSet::from_sorted_unique((0..m.n_rows()).filter(|&i| mask[i]).collect());
            let cols = IndexSet::range(m.n_cols());
            let back = m.restrict(&rows, &cols).embed(&rows, &cols, m.n_rows(), m.n_cols());
            for (i, j, v) in back.triplets() {
                prop_assert_eq!(v, m.get(i, j));
            }
            for i in rows.ids() {
                for j in 0..m.n_cols() {
                    prop_assert_eq!(back.get(*i, j), m.get(*i, j));
                }
            }
        }
    }
}
