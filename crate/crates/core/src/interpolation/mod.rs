//! Prolongation operators built from a [`ClusterSet`]: ideal CF
//! interpolation and mean-value constrained energy minimizers (MC), each in
//! a global and an oversampled-local form.

mod cf;
mod mc;

pub use cf::{cf_ideal_global, cf_ideal_local, cf_split, ideal_interpolation};
pub use mc::{build_constraints, constrained_minimizers, mc_global, mc_local, McLocalOptions};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::clustering::ClusterSet;
use crate::error::{MsgrError, Result};
use crate::partition::Partition;
use crate::sparse::SparseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "CF")]
    Cf,
    #[serde(rename = "MC")]
    Mc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    #[serde(rename = "glo")]
    Global,
    #[serde(rename = "loc")]
    Local,
}

/// One of the four prolongation constructions, written `CF-glo`, `MC-loc`, ...
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ProlongationKind {
    pub method: Method,
    pub scope: Scope,
}

impl ProlongationKind {
    pub const CF_GLOBAL: Self = Self { method: Method::Cf, scope: Scope::Global };
    pub const CF_LOCAL: Self = Self { method: Method::Cf, scope: Scope::Local };
    pub const MC_GLOBAL: Self = Self { method: Method::Mc, scope: Scope::Global };
    pub const MC_LOCAL: Self = Self { method: Method::Mc, scope: Scope::Local };
    pub const ALL: [Self; 4] = [Self::CF_GLOBAL, Self::CF_LOCAL, Self::MC_GLOBAL, Self::MC_LOCAL];

    pub fn is_local(&self) -> bool {
        self.scope == Scope::Local
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Cf => "CF",
            Method::Mc => "MC",
        })
    }
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scope::Global => "glo",
            Scope::Local => "loc",
        })
    }
}

impl fmt::Display for ProlongationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.method, self.scope)
    }
}

impl FromStr for ProlongationKind {
    type Err = MsgrError;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace(['_', ' '], "-");
        let kind = match norm.as_str() {
            "cf-glo" | "cf-global" => Self::CF_GLOBAL,
            "cf-loc" | "cf-local" => Self::CF_LOCAL,
            "mc-glo" | "mc-global" => Self::MC_GLOBAL,
            "mc-loc" | "mc-local" => Self::MC_LOCAL,
            _ => return Err(MsgrError::InvalidParameter(format!("unknown method `{s}` (expected CF-glo, CF-loc, MC-glo or MC-loc)"))),
        };
        Ok(kind)
    }
}

impl Serialize for ProlongationKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ProlongationKind {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ColumnInfo {
    pub subdomain: usize,
    pub aggregate: usize,
    pub centroid: usize,
}

/// An `n x n_c` prolongation with one column per aggregate, ordered by
/// `(subdomain, aggregate)`.
#[derive(Debug, Clone)]
pub struct Prolongation {
    p: SparseMatrix,
    columns: Vec<ColumnInfo>,
    kind: ProlongationKind,
    /// Per subdomain, the aggregate columns whose constraints were imposed
    /// (MC-local only).
    constrained: Option<Vec<Vec<usize>>>,
}

impl Prolongation {
    pub fn matrix(&self) -> &SparseMatrix {
        &self.p
    }

    pub fn into_matrix(self) -> SparseMatrix {
        self.p
    }

    pub fn columns(&self) -> &[ColumnInfo] {
        &self.columns
    }

    pub fn kind(&self) -> ProlongationKind {
        self.kind
    }

    pub fn n_fine(&self) -> usize {
        self.p.n_rows()
    }

    pub fn n_coarse(&self) -> usize {
        self.p.n_cols()
    }

    /// Aggregates constrained when building the columns of subdomain `k`;
    /// `None` means every aggregate.
    pub fn constrained_scope(&self, k: usize) -> Option<&[usize]> {
        self.constrained.as_ref().map(|c| c[k].as_slice())
    }

    /// Sidecar lines `col k r centroid`.
    pub fn meta_text(&self) -> String {
        let mut s = String::new();
        for (c, info) in self.columns.iter().enumerate() {
            s.push_str(&format!("{c} {} {} {}\n", info.subdomain, info.aggregate, info.centroid));
        }
        s
    }
}

/// A computed column: `(subdomain, aggregate, sparse entries)`.
pub type Column = (usize, usize, Vec<(usize, f64)>);

/// Orders columns by `(subdomain, aggregate)` and builds the matrix. Every
/// aggregate of `clusters` must appear exactly once.
pub fn assemble_prolongation(clusters: &ClusterSet, kind: ProlongationKind, mut columns: Vec<Column>) -> Result<Prolongation> {
    columns.sort_by_key(|c| (c.0, c.1));
    if let Some(w) = columns.windows(2).find(|w| (w[0].0, w[0].1) == (w[1].0, w[1].1)) {
        return Err(MsgrError::DuplicateColumn { subdomain: w[0].0, aggregate: w[0].1 });
    }
    if columns.len() != clusters.n_coarse() {
        return Err(MsgrError::DimensionMismatch(format!("{} columns for {} aggregates", columns.len(), clusters.n_coarse())));
    }
    let mut info = Vec::with_capacity(columns.len());
    let mut data = Vec::with_capacity(columns.len());
    for ((k, r, entries), agg) in columns.into_iter().zip(clusters.aggregates()) {
        if (k, r) != (agg.subdomain, agg.index) {
            return Err(MsgrError::InvalidParameter(format!("column ({k}, {r}) has no aggregate")));
        }
        info.push(ColumnInfo { subdomain: k, aggregate: r, centroid: agg.centroid });
        data.push(entries);
    }
    Ok(Prolongation { p: SparseMatrix::from_columns(clusters.n_vertices(), &data), columns: info, kind, constrained: None })
}

/// Builds the prolongation of the requested kind.
pub fn build_prolongation(a: &SparseMatrix, clusters: &ClusterSet, partition: &Partition, kind: ProlongationKind) -> Result<Prolongation> {
    match kind {
        ProlongationKind::CF_GLOBAL => cf_ideal_global(a, clusters),
        ProlongationKind::CF_LOCAL => cf_ideal_local(a, clusters, partition),
        ProlongationKind::MC_GLOBAL => mc_global(a, clusters),
        _ => mc_local(a, clusters, partition, &McLocalOptions::default()),
    }
}

fn nonzeros(dense: impl IntoIterator<Item = f64>) -> Vec<(usize, f64)> {
    dense.into_iter().enumerate().filter(|&(_, x)| x != 0.0).collect()
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::clustering::Aggregate;
    use crate::index_set::IndexSet;

    #[test]
    fn kind_names_round_trip() {
        for k in ProlongationKind::ALL {
            assert_eq!(k.to_string().parse::<ProlongationKind>().unwrap(), k);
        }
        assert_eq!("mc_global".parse::<ProlongationKind>().unwrap(), ProlongationKind::MC_GLOBAL);
        assert!("AMG".parse::<ProlongationKind>().is_err());
    }

    #[test]
    fn assembly_orders_and_rejects_duplicates() {
        let aggs = vec![
            Aggregate { subdomain: 0, index: 0, members: IndexSet::new(vec![0, 1]).unwrap(), centroid: 0 },
            Aggregate { subdomain: 0, index: 1, members: IndexSet::new(vec![2]).unwrap(), centroid: 2 },
        ];
        let cs = ClusterSet::new(3, aggs).unwrap();
        let p = assemble_prolongation(&cs, ProlongationKind::CF_GLOBAL, vec![(0, 1, vec![(2, 1.0)]), (0, 0, vec![(0, 1.0), (1, 0.5)])])
            .unwrap();
        assert_eq!(p.matrix().get(1, 0), 0.5);
        assert_eq!(p.matrix().get(2, 1), 1.0);
        assert_eq!(p.meta_text(), "0 0 0 0\n1 0 1 2\n");
        let dup = assemble_prolongation(&cs, ProlongationKind::CF_GLOBAL, vec![(0, 0, vec![]), (0, 0, vec![])]);
        assert!(matches!(dup, Err(MsgrError::DuplicateColumn { subdomain: 0, aggregate: 0 })));
    }
}
