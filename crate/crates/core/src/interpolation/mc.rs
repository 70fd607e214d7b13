use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{assemble_prolongation, nonzeros, Column, Prolongation, ProlongationKind};
use crate::cholesky::SparseCholesky;
use crate::clustering::ClusterSet;
use crate::error::{MsgrError, Result};
use crate::index_set::IndexSet;
use crate::partition::Partition;
use crate::sparse::{CooMatrix, SparseMatrix};

/// Mean-value constraint rows, one per aggregate: `1/|A|` on its members.
pub fn build_constraints(clusters: &ClusterSet) -> SparseMatrix {
    let mut coo = CooMatrix::new(clusters.n_coarse(), clusters.n_vertices());
    for (row, agg) in clusters.aggregates().iter().enumerate() {
        let s = 1.0 / agg.members.len() as f64;
        for &v in agg.members.ids() {
            coo.push(row, v, s);
        }
    }
    coo.to_csr()
}

/// Minimizers of `psi^T A psi / 2` subject to `S psi = e_t` for each target
/// row `t`, returned as the columns of an `n x targets.len()` matrix.
///
/// The saddle system is reduced by block elimination: `Y = A^{-1} S^T`,
/// `G = S Y`, `Psi = Y G^{-1} E`.
pub fn constrained_minimizers(a: &SparseMatrix, s: &SparseMatrix, targets: &[usize]) -> Result<DMatrix<f64>> {
    let n = a.n_rows();
    if s.n_cols() != n {
        return Err(MsgrError::DimensionMismatch("constraint columns vs operator".into()));
    }
    let m = s.n_rows();
    let chol = SparseCholesky::factor(a)?;
    let ycols: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|j| {
            let mut rhs = vec![0.0; n];
            for (i, v) in s.row(j) {
                rhs[i] = v;
            }
            chol.solve_in_place(&mut rhs);
            rhs
        })
        .collect();
    let y = DMatrix::from_fn(n, m, |i, j| ycols[j][i]);

    let mut g = DMatrix::zeros(m, m);
    for j in 0..m {
        for (i, v) in s.row(j) {
            for c in 0..m {
                g[(j, c)] += v * y[(i, c)];
            }
        }
    }
    let g = (&g + g.transpose()) * 0.5;
    let chol_g =
        g.cholesky().ok_or_else(|| MsgrError::SingularSystem("constraint Gram matrix is singular (rank-deficient constraints)".into()))?;
    let mut e = DMatrix::zeros(m, targets.len());
    for (c, &t) in targets.iter().enumerate() {
        if t >= m {
            return Err(MsgrError::IndexOutOfRange { index: t, size: m });
        }
        e[(t, c)] = 1.0;
    }
    Ok(y * chol_g.solve(&e))
}

pub fn mc_global(a: &SparseMatrix, clusters: &ClusterSet) -> Result<Prolongation> {
    let s = build_constraints(clusters);
    let targets: Vec<usize> = (0..clusters.n_coarse()).collect();
    let psi = constrained_minimizers(a, &s, &targets)?;
    let columns: Vec<Column> = clusters
        .aggregates()
        .iter()
        .enumerate()
        .map(|(c, agg)| (agg.subdomain, agg.index, nonzeros(psi.column(c).iter().copied())))
        .collect();
    assemble_prolongation(clusters, ProlongationKind::MC_GLOBAL, columns)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct McLocalOptions {
    /// Also constrain aggregates only partly inside the region, averaging
    /// over the covered part.
    pub constrain_partial: bool,
}

/// Per subdomain: vertices of the oversampled region whose operator
/// neighbours all lie inside it (the interior; the rest is held at zero), and
/// the constrained aggregates with their rows on the interior.
struct LocalScope {
    interior: IndexSet,
    constrained: Vec<usize>,
    rows: SparseMatrix,
}

fn local_scope(a: &SparseMatrix, clusters: &ClusterSet, region: &IndexSet, opts: &McLocalOptions) -> LocalScope {
    let interior = IndexSet::from_sorted_unique(
        region.sorted_ids().filter(|&v| a.row(v).all(|(u, x)| u == v || x == 0.0 || region.contains(u))).collect(),
    );
    let mut touched: Vec<usize> = region.sorted_ids().filter_map(|v| clusters.aggregate_of(v)).collect();
    touched.sort_unstable();
    touched.dedup();

    let mut constrained = Vec::new();
    let mut triplets = Vec::new();
    for c in touched {
        let members = &clusters.aggregates()[c].members;
        let covered = members.ids().iter().filter(|&&v| region.contains(v)).count();
        let full = covered == members.len();
        if !full && !opts.constrain_partial {
            continue;
        }
        let inner: Vec<usize> = members.ids().iter().filter_map(|&v| interior.local(v)).collect();
        if inner.is_empty() {
            continue;
        }
        let row = constrained.len();
        let s = 1.0 / covered as f64;
        for i in inner {
            triplets.push((row, i, s));
        }
        constrained.push(c);
    }
    let rows = SparseMatrix::from_triplets(constrained.len(), interior.len(), &triplets);
    LocalScope { interior, constrained, rows }
}

/// Constrained minimizers on each oversampled region with zero values on
/// its boundary ring and outside.
pub fn mc_local(a: &SparseMatrix, clusters: &ClusterSet, partition: &Partition, opts: &McLocalOptions) -> Result<Prolongation> {
    if partition.n_subdomains() != clusters.n_subdomains() {
        return Err(MsgrError::DimensionMismatch("partition vs cluster subdomains".into()));
    }
    let results: Vec<(Vec<Column>, Vec<usize>)> = (0..partition.n_subdomains())
        .into_par_iter()
        .map(|k| {
            let scope = local_scope(a, clusters, partition.oversampled(k), opts);
            let aggs = clusters.subdomain_aggregates(k);
            let mut targets = Vec::with_capacity(aggs.len());
            for agg in aggs {
                let c = clusters.column(k, agg.index);
                match scope.constrained.binary_search(&c) {
                    Ok(t) => targets.push(t),
                    Err(_) => return Err(MsgrError::InfeasibleConstraint { subdomain: k, aggregate: agg.index }),
                }
            }
            let a_loc = a.restrict(&scope.interior, &scope.interior);
            let psi = constrained_minimizers(&a_loc, &scope.rows, &targets)
                .map_err(|e| MsgrError::Subdomain { subdomain: k, message: e.to_string() })?;
            let columns = aggs
                .iter()
                .enumerate()
                .map(|(t, agg)| {
                    let entries = nonzeros(psi.column(t).iter().copied()).into_iter().map(|(i, x)| (scope.interior.global(i), x)).collect();
                    (k, agg.index, entries)
                })
                .collect();
            Ok((columns, scope.constrained))
        })
        .collect::<Result<_>>()?;

    let mut columns = Vec::new();
    let mut scopes = Vec::new();
    for (cols, scope) in results {
        columns.extend(cols);
        scopes.push(scope);
    }
    let mut p = assemble_prolongation(clusters, ProlongationKind::MC_LOCAL, columns)?;
    p.constrained = Some(scopes);
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::Aggregate;
    use crate::graph::{apply_boundary, assemble_signed_laplacian, Edge, RobinCondition, WeightedGraph};

    fn robin_path(n: usize, alpha: f64) -> SparseMatrix {
        let g = WeightedGraph::new(n, (0..n - 1).map(|i| Edge { i, j: i + 1, w: 1.0 }).collect())
            .unwrap()
            .with_robin((0..n).map(|v| RobinCondition { vertex: v, alpha, value: 0.0 }).collect())
            .unwrap();
        apply_boundary(&assemble_signed_laplacian(&g), &g).unwrap().0
    }

    fn one_aggregate(n: usize) -> ClusterSet {
        ClusterSet::new(n, vec![Aggregate { subdomain: 0, index: 0, members: IndexSet::range(n), centroid: 0 }]).unwrap()
    }

    #[test]
    fn constraint_rows() {
        let aggs = vec![
            Aggregate { subdomain: 0, index: 0, members: IndexSet::new(vec![0]).unwrap(), centroid: 0 },
            Aggregate { subdomain: 0, index: 1, members: IndexSet::new(vec![1, 2, 3, 4]).unwrap(), centroid: 2 },
        ];
        let s = build_constraints(&ClusterSet::new(5, aggs).unwrap());
        assert_eq!(s.get(0, 0), 1.0);
        assert_eq!(s.get(1, 3), 0.25);
        assert!(s.matvec(&[1.0; 5]).iter().all(|&x| (x - 1.0).abs() < 1e-15));
    }

    #[test]
    fn uniform_reaction_gives_constant_basis() {
        let a = robin_path(6, 0.3);
        let p = mc_global(&a, &one_aggregate(6)).unwrap();
        for i in 0..6 {
            assert!((p.matrix().get(i, 0) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn dense_kkt_oracle() {
        // compare against a direct dense solve of the full saddle system
        let a = robin_path(7, 0.1);
        let aggs = vec![
            Aggregate { subdomain: 0, index: 0, members: IndexSet::new(vec![0, 1, 2]).unwrap(), centroid: 1 },
            Aggregate { subdomain: 0, index: 1, members: IndexSet::new(vec![3, 4]).unwrap(), centroid: 3 },
            Aggregate { subdomain: 0, index: 2, members: IndexSet::new(vec![5, 6]).unwrap(), centroid: 5 },
        ];
        let cs = ClusterSet::new(7, aggs).unwrap();
        let p = mc_global(&a, &cs).unwrap().into_matrix().to_dense();
        let s = build_constraints(&cs).to_dense();
        let mut kkt = DMatrix::zeros(10, 10);
        kkt.view_mut((0, 0), (7, 7)).copy_from(&a.to_dense());
        kkt.view_mut((7, 0), (3, 7)).copy_from(&s);
        kkt.view_mut((0, 7), (7, 3)).copy_from(&s.transpose());
        let lu = kkt.lu();
        for c in 0..3 {
            let mut rhs = nalgebra::DVector::zeros(10);
            rhs[7 + c] = 1.0;
            let x = lu.solve(&rhs).unwrap();
            for i in 0..7 {
                assert!((x[i] - p[(i, c)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rank_deficient_constraints_rejected() {
        let a = robin_path(4, 1.0);
        let s = SparseMatrix::from_triplets(2, 4, &[(0, 0, 0.5), (0, 1, 0.5), (1, 0, 0.5), (1, 1, 0.5)]);
        assert!(matches!(constrained_minimizers(&a, &s, &[0]), Err(MsgrError::SingularSystem(_))));
    }

    #[test]
    fn local_ring_is_held_at_zero() {
        let g = {
            let mut e = Vec::new();
            for i in 0..11 {
                e.push(Edge { i, j: i + 1, w: 1.0 });
            }
            let c = (0..12).map(|i| [i as f64, 0.0, 0.0]).collect();
            WeightedGraph::new(12, e)
                .unwrap()
                .with_coords(1, c)
                .unwrap()
                .with_robin(vec![RobinCondition { vertex: 0, alpha: 1.0, value: 0.0 }])
                .unwrap()
        };
        let a = apply_boundary(&assemble_signed_laplacian(&g), &g).unwrap().0;
        let part = Partition::from_assignment(&g, 3, (0..12).map(|v| v / 4).collect()).unwrap();
        let labels: Vec<(usize, usize)> = (0..12).map(|v| (v / 4, (v % 4) / 2)).collect();
        let cs = ClusterSet::from_labels(&g, &labels).unwrap();
        let over = crate::partition::oversample(&g, &part, 2.0, false).unwrap();
        let p = mc_local(&a, &cs, &over, &McLocalOptions::default()).unwrap();
        // middle subdomain: region 2..=9, ring {2, 9}
        let s = build_constraints(&cs);
        let sp = s.mul(p.matrix()).unwrap().to_dense();
        let scope = p.constrained_scope(1).unwrap();
        assert_eq!(scope, &[1, 2, 3, 4]);
        for r in 0..2 {
            let col = cs.column(1, r);
            for v in 0..12 {
                let x = p.matrix().get(v, col);
                if !(3..=8).contains(&v) {
                    assert_eq!(x, 0.0, "vertex {v}");
                }
            }
            for &j in scope {
                let expect = if j == col { 1.0 } else { 0.0 };
                assert!((sp[(j, col)] - expect).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn target_swallowed_by_ring_is_infeasible() {
        let g = WeightedGraph::new(4, (0..3).map(|i| Edge { i, j: i + 1, w: 1.0 }).collect())
            .unwrap()
            .with_coords(1, (0..4).map(|i| [i as f64, 0.0, 0.0]).collect())
            .unwrap()
            .with_robin(vec![RobinCondition { vertex: 0, alpha: 1.0, value: 0.0 }])
            .unwrap();
        let a = apply_boundary(&assemble_signed_laplacian(&g), &g).unwrap().0;
        let part = Partition::from_assignment(&g, 2, vec![0, 0, 1, 1]).unwrap();
        let cs = ClusterSet::from_labels(&g, &[(0, 0), (0, 0), (1, 0), (1, 1)]).unwrap();
        // no oversampling: vertex 2 is a ring vertex and the only member of (1, 0)
        match mc_local(&a, &cs, &part, &McLocalOptions::default()) {
            Err(MsgrError::InfeasibleConstraint { subdomain: 1, aggregate: 0 }) => {}
            other => panic!("{other:?}"),
        }
    }
}
