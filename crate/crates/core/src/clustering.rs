//! Local spectral clustering: per subdomain, the smallest generalized
//! eigenpairs of `(L, D)` embed the vertices, k-means on the normalized
//! embedding rows yields aggregates, and one centroid vertex is picked per
//! aggregate.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MsgrError, Result};
use crate::graph::{Point, WeightedGraph};
use crate::index_set::IndexSet;
use crate::kmeans::{kmeans, normalize_rows};
use crate::partition::Partition;

/// Local signed Laplacian on a vertex subset (edges with both endpoints inside).
#[derive(Debug, Clone)]
pub struct LocalLaplacian {
    pub l: DMatrix<f64>,
    pub d: Vec<f64>,
    /// Local indices whose degree was zero and got replaced by the guard value.
    pub isolated: Vec<usize>,
}

pub fn local_signed_laplacian(graph: &WeightedGraph, set: &IndexSet) -> Result<LocalLaplacian> {
    let n = set.len();
    if n == 0 {
        return Err(MsgrError::InvalidParameter("empty vertex set".into()));
    }
    let mut l = DMatrix::zeros(n, n);
    let mut d = vec![0.0; n];
    for (a, &v) in set.ids().iter().enumerate() {
        for &(u, w) in graph.neighbors(v) {
            if let Some(b) = set.local(u) {
                l[(a, b)] = -w;
                d[a] += w.abs();
            }
        }
    }
    for a in 0..n {
        l[(a, a)] = d[a];
    }
    let dmax = d.iter().cloned().fold(0.0, f64::max);
    let eps = if dmax > 0.0 { 1e-12 * dmax } else { 1.0 };
    let isolated: Vec<usize> = (0..n).filter(|&a| d[a] == 0.0).collect();
    for &a in &isolated {
        d[a] = eps;
    }
    Ok(LocalLaplacian { l, d, isolated })
}

#[derive(Debug, Clone)]
pub struct SpectralEmbedding {
    pub eigenvalues: Vec<f64>,
    /// `n x m` matrix of generalized eigenvectors, `D`-orthonormal.
    pub vectors: DMatrix<f64>,
}

/// The `m` smallest pairs of `L phi = lambda D phi`, via the symmetric
/// reduction `D^{-1/2} L D^{-1/2}`.
pub fn generalized_eigs(l: &DMatrix<f64>, d: &[f64], m: usize) -> Result<SpectralEmbedding> {
    let n = d.len();
    if m == 0 || m > n {
        return Err(MsgrError::InvalidParameter(format!("requested {m} eigenpairs of a {n}x{n} problem")));
    }
    if d.iter().any(|&x| !(x > 0.0)) {
        return Err(MsgrError::InvalidParameter("degree matrix must be positive".into()));
    }
    let s: Vec<f64> = d.iter().map(|x| 1.0 / x.sqrt()).collect();
    let b = DMatrix::from_fn(n, n, |i, j| s[i] * l[(i, j)] * s[j]);
    let eig = b.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
    let eigenvalues = order[..m].iter().map(|&c| eig.eigenvalues[c]).collect();
    let vectors = DMatrix::from_fn(n, m, |i, c| s[i] * eig.eigenvectors[(i, order[c])]);
    Ok(SpectralEmbedding { eigenvalues, vectors })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CentroidRule {
    /// Member nearest (in coordinates) to the coordinate mean.
    #[default]
    Physical,
    /// Member nearest (in the embedding) to the embedding mean.
    Spectral,
}

/// Picks one member per aggregate. `members` must be sorted so ties fall on
/// the smallest vertex id.
pub fn select_centroid(members: &[usize], coords: &[Point]) -> usize {
    let inv = 1.0 / members.len() as f64;
    let mut mu = [0.0; 3];
    for &v in members {
        for a in 0..3 {
            mu[a] += coords[v][a] * inv;
        }
    }
    nearest(members, |v| (0..3).map(|a| (coords[v][a] - mu[a]).powi(2)).sum())
}

fn nearest(members: &[usize], dist: impl Fn(usize) -> f64) -> usize {
    let mut best = (members[0], f64::INFINITY);
    for &v in members {
        let d = dist(v);
        if d < best.1 {
            best = (v, d);
        }
    }
    best.0
}

/// Member of `rows` (local row indices into `x`) closest to the row mean.
fn spectral_centroid(rows: &[usize], x: &DMatrix<f64>) -> usize {
    let m = x.ncols();
    let mut mu = vec![0.0; m];
    for &i in rows {
        for a in 0..m {
            mu[a] += x[(i, a)] / rows.len() as f64;
        }
    }
    nearest(rows, |i| (0..m).map(|a| (x[(i, a)] - mu[a]).powi(2)).sum())
}

/// Member of `rows` minimizing the summed embedding distance to the others.
fn medoid(rows: &[usize], x: &DMatrix<f64>) -> usize {
    nearest(rows, |i| rows.iter().map(|&j| (x.row(i) - x.row(j)).norm()).sum())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusteringConfig {
    /// Aggregates per subdomain.
    pub m: usize,
    /// Per-subdomain override of `m`.
    pub m_per_subdomain: Option<Vec<usize>>,
    pub seed: u64,
    pub n_init: usize,
    pub centroid_rule: CentroidRule,
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        Self { m: 4, m_per_subdomain: None, seed: 0, n_init: 8, centroid_rule: CentroidRule::Physical }
    }
}

impl ClusteringConfig {
    pub fn new(m: usize, seed: u64) -> Self {
        Self { m, seed, ..Default::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub subdomain: usize,
    /// Position within the subdomain.
    pub index: usize,
    pub members: IndexSet,
    pub centroid: usize,
}

/// Diagnostics gathered while clustering.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClusterReport {
    /// `(subdomain, requested, used)` whenever `M` exceeded the subdomain size.
    pub clamped: Vec<(usize, usize, usize)>,
    pub isolated_vertices: usize,
    pub kmeans_repairs: usize,
    /// Centroids were chosen in the embedding because coordinates are missing.
    pub medoid_fallback: bool,
    pub eigenvalues: Vec<Vec<f64>>,
}

/// Aggregates ordered by `(subdomain, index)`; they are disjoint.
#[derive(Debug, Clone)]
pub struct ClusterSet {
    n_vertices: usize,
    aggregates: Vec<Aggregate>,
    offsets: Vec<usize>,
    owner: Vec<Option<usize>>,
    pub report: ClusterReport,
}

impl ClusterSet {
    /// Validates ordering, disjointness and centroid membership.
    pub fn new(n_vertices: usize, aggregates: Vec<Aggregate>) -> Result<Self> {
        let mut owner = vec![None; n_vertices];
        let mut offsets = vec![0];
        for (c, agg) in aggregates.iter().enumerate() {
            let expected_k = offsets.len() - 1;
            if agg.subdomain == expected_k + 1 && agg.index == 0 {
                offsets.push(c);
            } else if agg.subdomain != expected_k || agg.index != c - offsets[expected_k] {
                return Err(MsgrError::InvalidParameter(format!("aggregate ({}, {}) out of order", agg.subdomain, agg.index)));
            }
            if agg.members.is_empty() {
                return Err(MsgrError::InvalidParameter(format!("aggregate ({}, {}) is empty", agg.subdomain, agg.index)));
            }
            for &v in agg.members.ids() {
                if v >= n_vertices {
                    return Err(MsgrError::IndexOutOfRange { index: v, size: n_vertices });
                }
                if owner[v].replace(c).is_some() {
                    return Err(MsgrError::InvalidParameter(format!("vertex {v} in two aggregates")));
                }
            }
            if !agg.members.contains(agg.centroid) {
                return Err(MsgrError::InvalidParameter(format!(
                    "centroid {} outside aggregate ({}, {})",
                    agg.centroid, agg.subdomain, agg.index
                )));
            }
        }
        offsets.push(aggregates.len());
        if aggregates.is_empty() {
            offsets = vec![0];
        }
        Ok(Self { n_vertices, aggregates, offsets, owner, report: ClusterReport::default() })
    }

    /// Builds aggregates from per-vertex labels `(subdomain, aggregate)`,
    /// choosing centroids by the physical rule.
    pub fn from_labels(graph: &WeightedGraph, labels: &[(usize, usize)]) -> Result<Self> {
        let coords = graph.coords().ok_or_else(|| MsgrError::MissingCoordinates("centroid selection".into()))?;
        let mut keys: Vec<(usize, usize)> = labels.to_vec();
        keys.sort_unstable();
        keys.dedup();
        let aggregates = keys
            .iter()
            .map(|&(k, r)| {
                let members: Vec<usize> = (0..labels.len()).filter(|&v| labels[v] == (k, r)).collect();
                let centroid = select_centroid(&members, coords);
                Aggregate { subdomain: k, index: r, members: IndexSet::from_sorted_unique(members), centroid }
            })
            .collect();
        Self::new(graph.n_vertices(), aggregates)
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    pub fn n_subdomains(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Total number of aggregates (coarse dimension).
    pub fn n_coarse(&self) -> usize {
        self.aggregates.len()
    }

    pub fn aggregates(&self) -> &[Aggregate] {
        &self.aggregates
    }

    pub fn subdomain_aggregates(&self, k: usize) -> &[Aggregate] {
        &self.aggregates[self.offsets[k]..self.offsets[k + 1]]
    }

    /// Global column index of aggregate `(k, r)`.
    pub fn column(&self, k: usize, r: usize) -> usize {
        self.offsets[k] + r
    }

    pub fn aggregate_of(&self, v: usize) -> Option<usize> {
        self.owner[v]
    }

    pub fn centroids(&self) -> Vec<usize> {
        self.aggregates.iter().map(|a| a.centroid).collect()
    }

    pub fn covers_all(&self) -> bool {
        self.owner.iter().all(Option::is_some)
    }

    /// Export lines `vertex subdomain aggregate is_centroid`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for v in 0..self.n_vertices {
            if let Some(c) = self.owner[v] {
                let a = &self.aggregates[c];
                s.push_str(&format!("{v} {} {} {}\n", a.subdomain, a.index, u8::from(a.centroid == v)));
            }
        }
        s
    }
}

struct SubdomainResult {
    aggregates: Vec<Aggregate>,
    clamped: Option<(usize, usize, usize)>,
    isolated: usize,
    repairs: usize,
    eigenvalues: Vec<f64>,
}

fn cluster_subdomain(graph: &WeightedGraph, k: usize, set: &IndexSet, requested: usize, cfg: &ClusteringConfig) -> Result<SubdomainResult> {
    // canonical vertex order, so results do not depend on how `set` was listed
    let sorted = IndexSet::from_sorted_unique(set.sorted_ids().collect());
    let set = &sorted;
    let n = set.len();
    let m = requested.min(n);
    let lap = local_signed_laplacian(graph, set)?;
    let emb = generalized_eigs(&lap.l, &lap.d, m)?;
    let x = normalize_rows(&emb.vectors);
    let km = kmeans(&x, m, cfg.seed ^ (k as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15), cfg.n_init);

    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); m];
    for (local, &label) in km.labels.iter().enumerate() {
        groups[label].push(local);
    }
    // canonical order: by smallest member
    groups.sort_by_key(|g| g[0]);

    let coords = graph.coords();
    let aggregates = groups
        .iter()
        .enumerate()
        .map(|(r, rows)| {
            let centroid_local = match (coords, cfg.centroid_rule) {
                (Some(c), CentroidRule::Physical) => {
                    let ids: Vec<usize> = rows.iter().map(|&i| set.global(i)).collect();
                    set.local(select_centroid(&ids, c)).unwrap()
                }
                (Some(_), CentroidRule::Spectral) => spectral_centroid(rows, &x),
                (None, _) => medoid(rows, &x),
            };
            Aggregate {
                subdomain: k,
                index: r,
                members: IndexSet::from_sorted_unique(rows.iter().map(|&i| set.global(i)).collect()),
                centroid: set.global(centroid_local),
            }
        })
        .collect();
    Ok(SubdomainResult {
        aggregates,
        clamped: (m < requested).then_some((k, requested, m)),
        isolated: lap.isolated.len(),
        repairs: km.repairs,
        eigenvalues: emb.eigenvalues,
    })
}

/// Clusters every subdomain of `partition` independently.
pub fn cluster(graph: &WeightedGraph, partition: &Partition, cfg: &ClusteringConfig) -> Result<ClusterSet> {
    let n_sub = partition.n_subdomains();
    if let Some(ms) = &cfg.m_per_subdomain {
        if ms.len() != n_sub {
            return Err(MsgrError::InvalidParameter(format!("{} per-subdomain counts for {n_sub} subdomains", ms.len())));
        }
    }
    let requested = |k: usize| cfg.m_per_subdomain.as_ref().map_or(cfg.m, |ms| ms[k]);
    if (0..n_sub).any(|k| requested(k) == 0) {
        return Err(MsgrError::InvalidParameter("M must be at least 1".into()));
    }

    let results: Vec<SubdomainResult> = (0..n_sub)
        .into_par_iter()
        .map(|k| {
            cluster_subdomain(graph, k, partition.subdomain(k), requested(k), cfg)
                .map_err(|e| MsgrError::Subdomain { subdomain: k, message: e.to_string() })
        })
        .collect::<Result<_>>()?;

    let mut report = ClusterReport { medoid_fallback: graph.coords().is_none(), ..Default::default() };
    let mut aggregates = Vec::new();
    for r in results {
        report.clamped.extend(r.clamped);
        report.isolated_vertices += r.isolated;
        report.kmeans_repairs += r.repairs;
        report.eigenvalues.push(r.eigenvalues);
        aggregates.extend(r.aggregates);
    }
    let mut set = ClusterSet::new(graph.n_vertices(), aggregates)?;
    set.report = report;
    Ok(set)
}
