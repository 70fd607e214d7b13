use rayon::prelude::*;

use super::{assemble_prolongation, nonzeros, Column, Prolongation, ProlongationKind};
use crate::cholesky::SparseCholesky;
use crate::clustering::ClusterSet;
use crate::error::{MsgrError, Result};
use crate::index_set::IndexSet;
use crate::partition::Partition;
use crate::sparse::SparseMatrix;

/// Coarse points are the centroids in column order; fine points are the rest.
pub fn cf_split(clusters: &ClusterSet, n: usize) -> Result<(IndexSet, IndexSet)> {
    let c = IndexSet::with_bound(clusters.centroids(), n)?;
    let f = c.complement(n);
    Ok((c, f))
}

/// `P = [-A_FF^{-1} A_FC; I]` in native vertex order, one column per entry of `c`.
pub fn ideal_interpolation(a: &SparseMatrix, c: &IndexSet, f: &IndexSet) -> Result<SparseMatrix> {
    let columns = ideal_columns(a, c, f, |_| true)?;
    Ok(SparseMatrix::from_columns(a.n_rows(), &columns))
}

/// Columns of the ideal interpolation restricted to the vertices `c ∪ f`,
/// computed only for the coarse points selected by `want`. Entries use the
/// global ids of `c` and `f`.
fn ideal_columns(a: &SparseMatrix, c: &IndexSet, f: &IndexSet, want: impl Fn(usize) -> bool + Sync) -> Result<Vec<Vec<(usize, f64)>>> {
    let chol = if f.is_empty() {
        None
    } else {
        let a_ff = a.restrict(f, f);
        Some(SparseCholesky::factor(&a_ff).map_err(|e| MsgrError::SingularSystem(format!("A_FF: {e}")))?)
    };
    let a_fc = a.restrict(f, c);
    let a_cf = a_fc.transpose();
    (0..c.len())
        .into_par_iter()
        .filter(|&j| want(j))
        .map(|j| {
            let mut col = Vec::new();
            if let Some(chol) = &chol {
                let mut rhs = vec![0.0; f.len()];
                for (i, v) in a_cf.row(j) {
                    rhs[i] = -v;
                }
                chol.solve_in_place(&mut rhs);
                col = nonzeros(rhs).into_iter().map(|(i, x)| (f.global(i), x)).collect();
            }
            col.push((c.global(j), 1.0));
            col.sort_unstable_by_key(|e| e.0);
            Ok(col)
        })
        .collect()
}

pub fn cf_ideal_global(a: &SparseMatrix, clusters: &ClusterSet) -> Result<Prolongation> {
    let (c, f) = cf_split(clusters, a.n_rows())?;
    let cols = ideal_columns(a, &c, &f, |_| true)?;
    let columns: Vec<Column> = clusters.aggregates().iter().zip(cols).map(|(agg, col)| (agg.subdomain, agg.index, col)).collect();
    assemble_prolongation(clusters, ProlongationKind::CF_GLOBAL, columns)
}

/// Ideal interpolation computed on each oversampled region, with zero values
/// outside it. All centroids of a subdomain share one local factorization.
pub fn cf_ideal_local(a: &SparseMatrix, clusters: &ClusterSet, partition: &Partition) -> Result<Prolongation> {
    let n = a.n_rows();
    let (c_global, _) = cf_split(clusters, n)?;
    if partition.n_subdomains() != clusters.n_subdomains() {
        return Err(MsgrError::DimensionMismatch("partition vs cluster subdomains".into()));
    }
    let per_subdomain: Vec<Vec<Column>> = (0..partition.n_subdomains())
        .into_par_iter()
        .map(|k| {
            let region = partition.oversampled(k);
            let (mut c_ids, mut f_ids) = (Vec::new(), Vec::new());
            for v in region.sorted_ids() {
                if c_global.contains(v) {
                    c_ids.push(v);
                } else {
                    f_ids.push(v);
                }
            }
            let c_loc = IndexSet::from_sorted_unique(c_ids);
            let f_loc = IndexSet::from_sorted_unique(f_ids);
            let aggs = clusters.subdomain_aggregates(k);
            let targets: Vec<usize> = aggs.iter().map(|g| c_loc.local(g.centroid).expect("centroid lies in its region")).collect();
            let cols = ideal_columns(a, &c_loc, &f_loc, |j| targets.contains(&j))
                .map_err(|e| MsgrError::Subdomain { subdomain: k, message: e.to_string() })?;
            // ideal_columns yields targets in increasing local order
            let mut order: Vec<usize> = (0..aggs.len()).collect();
            order.sort_by_key(|&r| targets[r]);
            let mut out: Vec<Column> = Vec::with_capacity(aggs.len());
            for (r, col) in order.into_iter().zip(cols) {
                out.push((k, aggs[r].index, col));
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    assemble_prolongation(clusters, ProlongationKind::CF_LOCAL, per_subdomain.into_iter().flatten().collect())
}
