//! Balanced subdomain partitioning and oversampled regions.
//!
//! Subdomains come from recursive bisection (coordinate-based when the graph
//! has coordinates, breadth-first level structures otherwise) followed by
//! greedy edge-cut refinement on `|w_ij|` that never breaks the balance
//! bound.

use std::collections::{HashMap, VecDeque};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MsgrError, Result};
use crate::graph::WeightedGraph;
use crate::index_set::IndexSet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartitionConfig {
    pub n_subdomains: usize,
    pub seed: u64,
    /// Allowed `max size / min size - 1`.
    pub balance_tol: f64,
    pub refine_passes: usize,
}

impl PartitionConfig {
    pub fn new(n_subdomains: usize, seed: u64) -> Self {
        Self { n_subdomains, seed, balance_tol: 0.1, refine_passes: 4 }
    }
}

/// How oversampled regions are grown around each subdomain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum OversampleMode {
    /// Every vertex within Euclidean distance `delta` of the subdomain.
    Vertex { delta: f64 },
    /// Whole subdomains that contain a vertex within distance `delta`.
    Closure { delta: f64 },
    /// Vertices within `hops` breadth-first layers.
    Hops { hops: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BalanceStats {
    pub min: usize,
    pub max: usize,
    pub mean: f64,
}

impl BalanceStats {
    pub fn ratio(&self) -> f64 {
        self.max as f64 / self.min.max(1) as f64
    }
}

#[derive(Debug, Clone)]
pub struct Partition {
    assignment: Vec<usize>,
    subdomains: Vec<IndexSet>,
    oversampled: Option<Vec<IndexSet>>,
    mode: Option<OversampleMode>,
    disconnected: Vec<usize>,
}

impl Partition {
    /// Builds a partition from a vertex-to-subdomain map. Every subdomain id
    /// in `0..n_subdomains` must be used.
    pub fn from_assignment(graph: &WeightedGraph, n_subdomains: usize, assignment: Vec<usize>) -> Result<Self> {
        if assignment.len() != graph.n_vertices() {
            return Err(MsgrError::DimensionMismatch("assignment length vs graph".into()));
        }
        let mut members = vec![Vec::new(); n_subdomains];
        for (v, &k) in assignment.iter().enumerate() {
            if k >= n_subdomains {
                return Err(MsgrError::IndexOutOfRange { index: k, size: n_subdomains });
            }
            members[k].push(v);
        }
        if let Some(k) = members.iter().position(Vec::is_empty) {
            return Err(MsgrError::InvalidParameter(format!("subdomain {k} is empty")));
        }
        let subdomains: Vec<IndexSet> = members.into_iter().map(IndexSet::from_sorted_unique).collect();
        let disconnected =
            subdomains.iter().enumerate().filter(|(_, s)| graph.induced(s).connected_components().len() > 1).map(|(k, _)| k).collect();
        Ok(Self { assignment, subdomains, oversampled: None, mode: None, disconnected })
    }

    pub fn n_subdomains(&self) -> usize {
        self.subdomains.len()
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn subdomain(&self, k: usize) -> &IndexSet {
        &self.subdomains[k]
    }

    pub fn subdomains(&self) -> &[IndexSet] {
        &self.subdomains
    }

    /// Oversampled region of subdomain `k`; the subdomain itself when no
    /// oversampling has been applied.
    pub fn oversampled(&self, k: usize) -> &IndexSet {
        self.oversampled.as_ref().map_or(&self.subdomains[k], |o| &o[k])
    }

    pub fn has_oversampling(&self) -> bool {
        self.oversampled.is_some()
    }

    pub fn oversample_mode(&self) -> Option<OversampleMode> {
        self.mode
    }

    /// Subdomains whose induced subgraph is not connected.
    pub fn disconnected_subdomains(&self) -> &[usize] {
        &self.disconnected
    }

    pub fn balance(&self) -> BalanceStats {
        let sizes: Vec<usize> = self.subdomains.iter().map(IndexSet::len).collect();
        BalanceStats {
            min: sizes.iter().copied().min().unwrap_or(0),
            max: sizes.iter().copied().max().unwrap_or(0),
            mean: sizes.iter().sum::<usize>() as f64 / sizes.len().max(1) as f64,
        }
    }

    /// Maximum over vertices of the number of oversampled regions containing it.
    pub fn overlap_multiplicity(&self) -> usize {
        let mut count = vec![0usize; self.assignment.len()];
        for k in 0..self.n_subdomains() {
            for &v in self.oversampled(k).ids() {
                count[v] += 1;
            }
        }
        count.into_iter().max().unwrap_or(0)
    }

    fn with_oversampled(&self, sets: Vec<IndexSet>, mode: OversampleMode) -> Self {
        Self { oversampled: Some(sets), mode: Some(mode), ..self.clone() }
    }
}

/// Balanced partition with default settings (10% balance tolerance).
pub fn partition_balanced(graph: &WeightedGraph, n_subdomains: usize, seed: u64) -> Result<Partition> {
    partition_with(graph, &PartitionConfig::new(n_subdomains, seed))
}

pub fn partition_with(graph: &WeightedGraph, cfg: &PartitionConfig) -> Result<Partition> {
    let n = graph.n_vertices();
    if cfg.n_subdomains == 0 || cfg.n_subdomains > n {
        return Err(MsgrError::InvalidParameter(format!("cannot split {n} vertices into {} subdomains", cfg.n_subdomains)));
    }
    let comps = graph.connected_components();
    if comps.len() > 1 {
        return Err(MsgrError::Disconnected { sizes: comps.iter().map(Vec::len).collect() });
    }

    let mut parts = Vec::with_capacity(cfg.n_subdomains);
    bisect(graph, (0..n).collect(), cfg.n_subdomains, cfg.seed, &mut parts);
    let mut assignment = vec![0usize; n];
    for (k, members) in parts.iter().enumerate() {
        for &v in members {
            assignment[v] = k;
        }
    }
    refine(graph, &mut assignment, cfg);
    Partition::from_assignment(graph, cfg.n_subdomains, assignment)
}

fn bisect(graph: &WeightedGraph, mut ids: Vec<usize>, parts: usize, seed: u64, out: &mut Vec<Vec<usize>>) {
    if parts == 1 {
        ids.sort_unstable();
        out.push(ids);
        return;
    }
    let left_parts = parts / 2;
    let target = ((ids.len() * left_parts) as f64 / parts as f64).round() as usize;
    let target = target.clamp(left_parts, ids.len() - (parts - left_parts));

    match graph.coords() {
        Some(coords) => {
            let axis = (0..3)
                .max_by(|&a, &b| {
                    let ext = |ax: usize| {
                        let (lo, hi) = ids.iter().fold((f64::MAX, f64::MIN), |(lo, hi), &v| (lo.min(coords[v][ax]), hi.max(coords[v][ax])));
                        hi - lo
                    };
                    // prefer the lower axis on ties
                    ext(a).total_cmp(&ext(b)).then(b.cmp(&a))
                })
                .unwrap();
            ids.sort_by(|&a, &b| coords[a][axis].total_cmp(&coords[b][axis]).then(a.cmp(&b)));
        }
        None => ids = level_order(graph, &ids, seed),
    }
    let right = ids.split_off(target);
    bisect(graph, ids, left_parts, seed, out);
    bisect(graph, right, parts - left_parts, seed, out);
}

/// Breadth-first order of the subgraph induced by `ids`, started from a
/// pseudo-peripheral vertex. Components are visited one after another.
fn level_order(graph: &WeightedGraph, ids: &[usize], seed: u64) -> Vec<usize> {
    let set = IndexSet::new(ids.to_vec()).expect("distinct ids");
    let local_adj = |l: usize| graph.neighbors(set.global(l)).iter().filter_map(|&(u, _)| set.local(u)).collect::<Vec<_>>();
    let bfs = |start: usize, visited: &mut Vec<bool>| {
        let mut order = vec![start];
        visited[start] = true;
        let mut q = VecDeque::from([start]);
        while let Some(v) = q.pop_front() {
            for u in local_adj(v) {
                if !visited[u] {
                    visited[u] = true;
                    order.push(u);
                    q.push_back(u);
                }
            }
        }
        order
    };

    let m = ids.len();
    let mut visited = vec![false; m];
    let mut order = Vec::with_capacity(m);
    let mut start = (seed as usize) % m;
    loop {
        // two sweeps to move the start to a far end of its component
        let mut scratch = visited.clone();
        let far = *bfs(start, &mut scratch).last().unwrap();
        let mut scratch = visited.clone();
        let far = *bfs(far, &mut scratch).last().unwrap();
        order.extend(bfs(far, &mut visited));
        match (0..m).find(|&l| !visited[l]) {
            Some(next) => start = next,
            None => break,
        }
    }
    order.into_iter().map(|l| set.global(l)).collect()
}

fn refine(graph: &WeightedGraph, assignment: &mut [usize], cfg: &PartitionConfig) {
    let mut sizes = vec![0usize; cfg.n_subdomains];
    for &k in assignment.iter() {
        sizes[k] += 1;
    }
    let lo = *sizes.iter().min().unwrap();
    let hi = (*sizes.iter().max().unwrap()).max(((1.0 + cfg.balance_tol) * lo as f64).floor() as usize);

    let mut conn: HashMap<usize, f64> = HashMap::new();
    for _ in 0..cfg.refine_passes {
        let mut moved = 0;
        for v in 0..graph.n_vertices() {
            let own = assignment[v];
            conn.clear();
            for &(u, w) in graph.neighbors(v) {
                *conn.entry(assignment[u]).or_insert(0.0) += w.abs();
            }
            let internal = conn.get(&own).copied().unwrap_or(0.0);
            let best = conn.iter().filter(|(&q, _)| q != own).map(|(&q, &c)| (q, c)).max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)));
            if let Some((q, external)) = best {
                let gain = external - internal;
                if gain > 1e-12 * (external + internal) && sizes[own] > lo && sizes[q] < hi {
                    assignment[v] = q;
                    sizes[own] -= 1;
                    sizes[q] += 1;
                    moved += 1;
                }
            }
        }
        if moved == 0 {
            break;
        }
    }
}

/// Euclidean oversampling. `closure = true` adds whole neighbouring subdomains.
pub fn oversample(graph: &WeightedGraph, partition: &Partition, delta: f64, closure: bool) -> Result<Partition> {
    let mode = if closure { OversampleMode::Closure { delta } } else { OversampleMode::Vertex { delta } };
    oversample_with(graph, partition, mode)
}

/// Breadth-first oversampling for graphs without coordinates.
pub fn graph_distance_oversample(graph: &WeightedGraph, partition: &Partition, hops: usize) -> Partition {
    oversample_with(graph, partition, OversampleMode::Hops { hops }).expect("hop oversampling cannot fail")
}

pub fn oversample_with(graph: &WeightedGraph, partition: &Partition, mode: OversampleMode) -> Result<Partition> {
    let sets: Vec<IndexSet> = match mode {
        OversampleMode::Vertex { delta } | OversampleMode::Closure { delta } => {
            let coords = graph.coords().ok_or_else(|| {
                MsgrError::MissingCoordinates("distance oversampling needs vertex coordinates; use hop (graph-distance) mode".into())
            })?;
            if !(delta >= 0.0) {
                return Err(MsgrError::InvalidParameter(format!("oversampling distance {delta}")));
            }
            let grid = SpatialHash::new(coords, delta);
            let closure = matches!(mode, OversampleMode::Closure { .. });
            (0..partition.n_subdomains())
                .into_par_iter()
                .map(|k| {
                    let sub = partition.subdomain(k);
                    let mut inside = vec![false; graph.n_vertices()];
                    for &v in sub.ids() {
                        inside[v] = true;
                    }
                    let mut added = Vec::new();
                    for &u in sub.ids() {
                        grid.for_each_within(coords, u, delta, |v| {
                            if !inside[v] {
                                inside[v] = true;
                                added.push(v);
                            }
                        });
                    }
                    if closure {
                        let mut touched: Vec<usize> = added.iter().map(|&v| partition.assignment()[v]).collect();
                        touched.sort_unstable();
                        touched.dedup();
                        for j in touched {
                            for &v in partition.subdomain(j).ids() {
                                inside[v] = true;
                            }
                        }
                    }
                    IndexSet::from_sorted_unique((0..graph.n_vertices()).filter(|&v| inside[v]).collect())
                })
                .collect()
        }
        OversampleMode::Hops { hops } => (0..partition.n_subdomains())
            .into_par_iter()
            .map(|k| {
                let mut level = vec![usize::MAX; graph.n_vertices()];
                let mut q = VecDeque::new();
                for &v in partition.subdomain(k).ids() {
                    level[v] = 0;
                    q.push_back(v);
                }
                while let Some(v) = q.pop_front() {
                    if level[v] == hops {
                        continue;
                    }
                    for &(u, _) in graph.neighbors(v) {
                        if level[u] == usize::MAX {
                            level[u] = level[v] + 1;
                            q.push_back(u);
                        }
                    }
                }
                IndexSet::from_sorted_unique((0..graph.n_vertices()).filter(|&v| level[v] != usize::MAX).collect())
            })
            .collect(),
    };
    Ok(partition.with_oversampled(sets, mode))
}

/// Uniform bucket grid for radius queries.
struct SpatialHash {
    cell: f64,
    buckets: HashMap<[i64; 3], Vec<usize>>,
    all: Vec<usize>,
}

impl SpatialHash {
    fn new(coords: &[[f64; 3]], radius: f64) -> Self {
        let (lo, hi) = coords.iter().fold(([f64::MAX; 3], [f64::MIN; 3]), |(mut lo, mut hi), p| {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
            (lo, hi)
        });
        let extent = (0..3).map(|a| hi[a] - lo[a]).fold(0.0, f64::max);
        // Radii comparable to the domain size degrade to a full scan.
        let cell = if radius > 0.0 && radius < 0.25 * extent { radius } else { 0.0 };
        let mut buckets: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
        if cell > 0.0 {
            for (v, p) in coords.iter().enumerate() {
                buckets.entry(Self::key(p, cell)).or_default().push(v);
            }
        }
        Self { cell, buckets, all: (0..coords.len()).collect() }
    }

    fn key(p: &[f64; 3], cell: f64) -> [i64; 3] {
        [(p[0] / cell).floor() as i64, (p[1] / cell).floor() as i64, (p[2] / cell).floor() as i64]
    }

    fn for_each_within(&self, coords: &[[f64; 3]], u: usize, radius: f64, mut f: impl FnMut(usize)) {
        let p = coords[u];
        let r2 = radius * radius * (1.0 + 1e-12);
        let mut visit = |v: usize| {
            let q = coords[v];
            let d2 = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2);
            if d2 <= r2 {
                f(v);
            }
        };
        if self.cell == 0.0 {
            if radius == 0.0 {
                return;
            }
            self.all.iter().for_each(|&v| visit(v));
            return;
        }
        let k = Self::key(&p, self.cell);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(b) = self.buckets.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) {
                        b.iter().for_each(|&v| visit(v));
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Edge;

    pub(crate) fn grid_graph(nx: usize, ny: usize) -> WeightedGraph {
        let mut edges = Vec::new();
        let mut coords = Vec::new();
        let h = 1.0 / (nx.max(ny) - 1) as f64;
        for y in 0..ny {
            for x in 0..nx {
                let i = y * nx + x;
                coords.push([x as f64 * h, y as f64 * h, 0.0]);
                if x + 1 < nx {
                    edges.push(Edge { i, j: i + 1, w: 1.0 });
                }
                if y + 1 < ny {
                    edges.push(Edge { i, j: i + nx, w: 1.0 });
                }
            }
        }
        WeightedGraph::new(nx * ny, edges).unwrap().with_coords(2, coords).unwrap()
    }

    fn path(n: usize) -> WeightedGraph {
        WeightedGraph::new(n, (0..n - 1).map(|i| Edge { i, j: i + 1, w: 1.0 }).collect()).unwrap()
    }

    fn check_cover(p: &Partition, n: usize) {
        let mut count = vec![0; n];
        for s in p.subdomains() {
            for &v in s.ids() {
                count[v] += 1;
            }
        }
        assert!(count.iter().all(|&c| c == 1));
    }

    #[test]
    fn trivial_partitions() {
        let g = grid_graph(5, 4);
        let one = partition_balanced(&g, 1, 0).unwrap();
        assert_eq!(one.subdomain(0).len(), 20);
        let all = partition_balanced(&g, 20, 0).unwrap();
        assert!(all.subdomains().iter().all(|s| s.len() == 1));
        check_cover(&all, 20);
        assert!(partition_balanced(&g, 21, 0).is_err());
    }

    #[test]
    fn grid_four_way_balance() {
        let g = grid_graph(20, 20);
        let p = partition_balanced(&g, 4, 0).unwrap();
        check_cover(&p, 400);
        let b = p.balance();
        assert!(b.min >= 90 && b.max <= 110, "{b:?}");
        assert!(b.ratio() <= 1.1);
        assert!(p.disconnected_subdomains().is_empty());
    }

    #[test]
    fn odd_counts_stay_balanced() {
        let g = grid_graph(30, 30);
        for n in [3, 7, 25] {
            let p = partition_balanced(&g, n, 0).unwrap();
            check_cover(&p, 900);
            assert!(p.balance().ratio() <= 1.1, "{n}: {:?}", p.balance());
        }
    }

    #[test]
    fn coordinate_free_fallback() {
        let g = path(40);
        let p = partition_balanced(&g, 4, 3).unwrap();
        check_cover(&p, 40);
        assert!(p.balance().ratio() <= 1.1);
        assert!(p.disconnected_subdomains().is_empty());
    }

    #[test]
    fn disconnected_input_rejected() {
        let g = WeightedGraph::new(4, vec![Edge { i: 0, j: 1, w: 1.0 }, Edge { i: 2, j: 3, w: 1.0 }]).unwrap();
        match partition_balanced(&g, 2, 0) {
            Err(MsgrError::Disconnected { sizes }) => assert_eq!(sizes, vec![2, 2]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn deterministic() {
        let g = grid_graph(17, 13);
        let a = partition_balanced(&g, 6, 5).unwrap();
        let b = partition_balanced(&g, 6, 5).unwrap();
        assert_eq!(a.assignment(), b.assignment());
    }

    #[test]
    fn oversample_limits() {
        let g = grid_graph(10, 10);
        let p = partition_balanced(&g, 4, 0).unwrap();
        let zero = oversample(&g, &p, 0.0, false).unwrap();
        for k in 0..4 {
            assert_eq!(zero.oversampled(k), zero.subdomain(k));
        }
        let full = oversample(&g, &p, 2.0, false).unwrap();
        for k in 0..4 {
            assert_eq!(full.oversampled(k).len(), 100);
        }
        assert!(matches!(
            oversample(&path(5), &partition_balanced(&path(5), 2, 0).unwrap(), 0.1, false),
            Err(MsgrError::MissingCoordinates(_))
        ));
    }

    fn brute_force(g: &WeightedGraph, sub: &IndexSet, delta: f64) -> Vec<usize> {
        let coords = g.coords().unwrap();
        (0..g.n_vertices())
            .filter(|&v| {
                sub.ids().iter().any(|&u| {
                    let d = ((coords[u][0] - coords[v][0]).powi(2) + (coords[u][1] - coords[v][1]).powi(2)).sqrt();
                    d <= delta * (1.0 + 1e-12)
                })
            })
            .collect()
    }

    #[test]
    fn one_layer_at_delta_point_one() {
        // 10 cells per side: h = 0.1, so one grid layer is within reach
        let g = grid_graph(11, 11);
        let p = partition_balanced(&g, 4, 0).unwrap();
        let o = oversample(&g, &p, 0.1, false).unwrap();
        let one_hop = graph_distance_oversample(&g, &p, 1);
        for k in 0..4 {
            assert_eq!(o.oversampled(k).ids(), brute_force(&g, p.subdomain(k), 0.1).as_slice());
            assert_eq!(o.oversampled(k), one_hop.oversampled(k));
        }
        // 10 vertices per side: h = 1/9 > 0.1 adds nothing
        let g = grid_graph(10, 10);
        let p = partition_balanced(&g, 4, 0).unwrap();
        let o = oversample(&g, &p, 0.1, false).unwrap();
        for k in 0..4 {
            assert_eq!(o.oversampled(k), p.subdomain(k));
        }
    }

    #[test]
    fn spatial_hash_matches_brute_force() {
        let g = grid_graph(23, 17);
        let p = partition_balanced(&g, 6, 0).unwrap();
        for delta in [0.03, 0.05, 0.13, 0.3] {
            let o = oversample(&g, &p, delta, false).unwrap();
            for k in 0..6 {
                assert_eq!(o.oversampled(k).ids(), brute_force(&g, p.subdomain(k), delta).as_slice(), "{delta}");
            }
        }
    }

    #[test]
    fn closure_mode_adds_whole_subdomains() {
        let g = grid_graph(10, 10);
        let p = partition_balanced(&g, 4, 0).unwrap();
        let o = oversample(&g, &p, 0.12, true).unwrap();
        for k in 0..4 {
            let mut sizes: Vec<usize> = (0..4).filter(|&j| p.subdomain(j).ids().iter().any(|&v| o.oversampled(k).contains(v))).collect();
            sizes.sort();
            let total: usize = sizes.iter().map(|&j| p.subdomain(j).len()).sum();
            assert_eq!(o.oversampled(k).len(), total);
        }
    }

    #[test]
    fn hop_oversampling_on_path() {
        let g = path(10);
        let p = Partition::from_assignment(&g, 3, vec![0, 0, 0, 0, 1, 1, 2, 2, 2, 2]).unwrap();
        let o = graph_distance_oversample(&g, &p, 2);
        assert_eq!(o.oversampled(1).ids(), &[2, 3, 4, 5, 6, 7]);
        let none = graph_distance_oversample(&g, &p, 0);
        assert_eq!(none.oversampled(1).ids(), &[4, 5]);
        let all = graph_distance_oversample(&g, &p, 9);
        assert_eq!(all.oversampled(1).len(), 10);
    }

    #[test]
    fn oversampling_is_monotone_in_delta() {
        let g = grid_graph(12, 12);
        let p = partition_balanced(&g, 5, 0).unwrap();
        let mut prev = oversample(&g, &p, 0.0, false).unwrap();
        for d in [0.05, 0.1, 0.2, 0.35, 0.6] {
            let next = oversample(&g, &p, d, false).unwrap();
            for k in 0..5 {
                assert!(next.subdomain(k).is_subset_of(next.oversampled(k)));
                assert!(prev.oversampled(k).is_subset_of(next.oversampled(k)));
            }
            prev = next;
        }
    }
}
