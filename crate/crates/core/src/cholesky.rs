//! Envelope (profile) Cholesky factorization under a reverse Cuthill–McKee
//! ordering.
//!
//! The operators handled here come from 2D/3D meshes and lattices, where RCM
//! gives a bandwidth of roughly `sqrt(n)` and the envelope stays small enough
//! for direct solves at the sizes this crate targets.

use std::collections::VecDeque;

use crate::error::{MsgrError, Result};
use crate::sparse::SparseMatrix;

/// Reverse Cuthill–McKee ordering of a symmetric adjacency structure.
/// `perm[new] = old`.
pub fn reverse_cuthill_mckee(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    let degree: Vec<usize> = adj.iter().map(Vec::len).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);

    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&v| (degree[v], v));

    for &seed in &by_degree {
        if visited[seed] {
            continue;
        }
        let start = pseudo_peripheral(adj, &degree, seed);
        visited[start] = true;
        let mut queue = VecDeque::from([start]);
        let mut nbrs = Vec::new();
        while let Some(v) = queue.pop_front() {
            order.push(v);
            nbrs.clear();
            nbrs.extend(adj[v].iter().copied().filter(|&u| !visited[u]));
            nbrs.sort_by_key(|&u| (degree[u], u));
            for &u in &nbrs {
                visited[u] = true;
                queue.push_back(u);
            }
        }
    }
    order.reverse();
    order
}

fn bfs_levels(adj: &[Vec<usize>], start: usize) -> (Vec<usize>, usize) {
    let mut level = vec![usize::MAX; adj.len()];
    level[start] = 0;
    let mut queue = VecDeque::from([start]);
    let mut reached = vec![start];
    let mut depth = 0;
    while let Some(v) = queue.pop_front() {
        for &u in &adj[v] {
            if level[u] == usize::MAX {
                level[u] = level[v] + 1;
                depth = depth.max(level[u]);
                reached.push(u);
                queue.push_back(u);
            }
        }
    }
    let last: Vec<usize> = reached.into_iter().filter(|&v| level[v] == depth).collect();
    (last, depth)
}

fn pseudo_peripheral(adj: &[Vec<usize>], degree: &[usize], seed: usize) -> usize {
    let mut current = seed;
    let (mut last, mut ecc) = bfs_levels(adj, current);
    loop {
        let candidate = *last.iter().min_by_key(|&&v| (degree[v], v)).unwrap();
        let (next_last, next_ecc) = bfs_levels(adj, candidate);
        if next_ecc <= ecc {
            return current;
        }
        current = candidate;
        last = next_last;
        ecc = next_ecc;
    }
}

/// Cholesky factor `P A P^T = L L^T` stored by rows within the envelope.
#[derive(Debug, Clone)]
pub struct SparseCholesky {
    n: usize,
    perm: Vec<usize>,
    first: Vec<usize>,
    offset: Vec<usize>,
    env: Vec<f64>,
}

impl SparseCholesky {
    /// Factors a symmetric positive definite matrix. Only the lower triangle
    /// of the permuted matrix is read.
    pub fn factor(a: &SparseMatrix) -> Result<Self> {
        if !a.is_square() {
            return Err(MsgrError::DimensionMismatch(format!("cholesky of non-square {}x{} matrix", a.n_rows(), a.n_cols())));
        }
        let n = a.n_rows();
        let perm = reverse_cuthill_mckee(&a.adjacency_pattern());
        let pa = a.permute_symmetric(&perm);

        let mut first: Vec<usize> = (0..n).collect();
        for i in 0..n {
            if let Some((j, _)) = pa.row(i).find(|&(_, v)| v != 0.0) {
                first[i] = first[i].min(j);
            }
        }
        let mut offset = Vec::with_capacity(n + 1);
        offset.push(0);
        for i in 0..n {
            offset.push(offset[i] + (i - first[i] + 1));
        }
        let mut env = vec![0.0; offset[n]];
        for i in 0..n {
            for (j, v) in pa.row(i) {
                if j <= i && j >= first[i] {
                    env[offset[i] + j - first[i]] += v;
                }
            }
        }

        for i in 0..n {
            let fi = first[i];
            let (done, rest) = env.split_at_mut(offset[i]);
            let row_i = &mut rest[..i - fi + 1];
            for j in fi..i {
                let fj = first[j];
                let row_j = &done[offset[j]..offset[j + 1]];
                let k0 = fi.max(fj);
                let mut s = row_i[j - fi];
                for k in k0..j {
                    s -= row_i[k - fi] * row_j[k - fj];
                }
                row_i[j - fi] = s / row_j[j - fj];
            }
            let a_ii = row_i[i - fi];
            let d = a_ii - row_i[..i - fi].iter().map(|x| x * x).sum::<f64>();
            if !(d > 1e-14 * a_ii.abs()) || !d.is_finite() {
                return Err(MsgrError::NotPositiveDefinite { row: perm[i], pivot: d });
            }
            row_i[i - fi] = d.sqrt();
        }

        Ok(Self { n, perm, first, offset, env })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of stored factor entries.
    pub fn envelope_size(&self) -> usize {
        self.env.len()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.n, "right-hand side length mismatch");
        let mut z: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..self.n {
            let fi = self.first[i];
            let row = &self.env[self.offset[i]..self.offset[i + 1]];
            let mut s = z[i];
            for k in fi..i {
                s -= row[k - fi] * z[k];
            }
            z[i] = s / row[i - fi];
        }
        for i in (0..self.n).rev() {
            let fi = self.first[i];
            let row = &self.env[self.offset[i]..self.offset[i + 1]];
            let xi = z[i] / row[i - fi];
            z[i] = xi;
            for k in fi..i {
                z[k] -= row[k - fi] * xi;
            }
        }
        for (new, &old) in self.perm.iter().enumerate() {
            b[old] = z[new];
        }
    }
}
