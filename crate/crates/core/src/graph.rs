//! Weighted signed graphs, Laplacian assembly, boundary conditions and the
//! discrete weighted norms used in the error analysis.

use crate::error::{MsgrError, Result};
use crate::index_set::IndexSet;
use crate::sparse::{CooMatrix, SparseMatrix};

/// Spatial position; 2D points leave the last component at zero.
pub type Point = [f64; 3];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub w: f64,
}

/// Pointwise Robin condition: adds `alpha` to the diagonal and `alpha * value`
/// to the right-hand side at `vertex`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobinCondition {
    pub vertex: usize,
    pub alpha: f64,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirichletCondition {
    pub vertex: usize,
    pub value: f64,
}

/// Undirected graph with signed edge weights, optional coordinates, node
/// capacities and boundary markers. Immutable once built.
#[derive(Debug, Clone)]
pub struct WeightedGraph {
    n_vertices: usize,
    dim: usize,
    coords: Option<Vec<Point>>,
    edges: Vec<Edge>,
    adjacency: Vec<Vec<(usize, f64)>>,
    capacity: Option<Vec<f64>>,
    robin: Vec<RobinCondition>,
    dirichlet: Vec<DirichletCondition>,
}

impl WeightedGraph {
    /// Validates and builds a graph. Edges are normalized to `i < j`.
    pub fn new(n_vertices: usize, edges: Vec<Edge>) -> Result<Self> {
        let mut edges: Vec<Edge> = edges.into_iter().map(|e| if e.i > e.j { Edge { i: e.j, j: e.i, w: e.w } } else { e }).collect();
        for e in &edges {
            if e.j >= n_vertices {
                return Err(MsgrError::IndexOutOfRange { index: e.j, size: n_vertices });
            }
            if e.i == e.j {
                return Err(MsgrError::InvalidGraph(format!("self-loop at vertex {}", e.i)));
            }
            if !e.w.is_finite() {
                return Err(MsgrError::InvalidGraph(format!("non-finite weight on ({}, {})", e.i, e.j)));
            }
        }
        edges.sort_by_key(|e| (e.i, e.j));
        if let Some(w) = edges.windows(2).find(|w| w[0].i == w[1].i && w[0].j == w[1].j) {
            return Err(MsgrError::InvalidGraph(format!("duplicate edge ({}, {})", w[0].i, w[0].j)));
        }
        let mut adjacency = vec![Vec::new(); n_vertices];
        for e in &edges {
            adjacency[e.i].push((e.j, e.w));
            adjacency[e.j].push((e.i, e.w));
        }
        for a in &mut adjacency {
            a.sort_by_key(|&(v, _)| v);
        }
        Ok(Self { n_vertices, dim: 0, coords: None, edges, adjacency, capacity: None, robin: Vec::new(), dirichlet: Vec::new() })
    }

    pub fn with_coords(mut self, dim: usize, coords: Vec<Point>) -> Result<Self> {
        if coords.len() != self.n_vertices {
            return Err(MsgrError::DimensionMismatch(format!("{} coordinates for {} vertices", coords.len(), self.n_vertices)));
        }
        if !(1..=3).contains(&dim) {
            return Err(MsgrError::InvalidParameter(format!("spatial dimension {dim}")));
        }
        self.dim = dim;
        self.coords = Some(coords);
        Ok(self)
    }

    pub fn with_capacity(mut self, capacity: Vec<f64>) -> Result<Self> {
        if capacity.len() != self.n_vertices {
            return Err(MsgrError::DimensionMismatch("capacity length".into()));
        }
        if let Some(c) = capacity.iter().find(|c| !(**c >= 0.0)) {
            return Err(MsgrError::InvalidGraph(format!("negative capacity {c}")));
        }
        self.capacity = Some(capacity);
        Ok(self)
    }

    pub fn with_robin(mut self, robin: Vec<RobinCondition>) -> Result<Self> {
        for r in &robin {
            if r.vertex >= self.n_vertices {
                return Err(MsgrError::IndexOutOfRange { index: r.vertex, size: self.n_vertices });
            }
            if !(r.alpha >= 0.0) {
                return Err(MsgrError::InvalidGraph(format!("negative robin coefficient {}", r.alpha)));
            }
        }
        self.robin = robin;
        Ok(self)
    }

    pub fn with_dirichlet(mut self, dirichlet: Vec<DirichletCondition>) -> Result<Self> {
        let mut seen = vec![false; self.n_vertices];
        for d in &dirichlet {
            if d.vertex >= self.n_vertices {
                return Err(MsgrError::IndexOutOfRange { index: d.vertex, size: self.n_vertices });
            }
            if std::mem::replace(&mut seen[d.vertex], true) {
                return Err(MsgrError::InvalidGraph(format!("vertex {} listed twice as dirichlet", d.vertex)));
            }
        }
        self.dirichlet = dirichlet;
        Ok(self)
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Spatial dimension, 0 when no coordinates are attached.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn coords(&self) -> Option<&[Point]> {
        self.coords.as_deref()
    }

    pub fn capacity(&self) -> Option<&[f64]> {
        self.capacity.as_deref()
    }

    pub fn robin(&self) -> &[RobinCondition] {
        &self.robin
    }

    pub fn dirichlet(&self) -> &[DirichletCondition] {
        &self.dirichlet
    }

    /// `(neighbor, weight)` pairs sorted by neighbor id.
    pub fn neighbors(&self, v: usize) -> &[(usize, f64)] {
        &self.adjacency[v]
    }

    pub fn all_weights_positive(&self) -> bool {
        self.edges.iter().all(|e| e.w > 0.0)
    }

    /// `d_i = sum_j |w_ij|`.
    pub fn degrees(&self) -> Vec<f64> {
        self.adjacency.iter().map(|a| a.iter().map(|(_, w)| w.abs()).sum()).collect()
    }

    /// Connected components as vertex lists, each sorted, ordered by smallest id.
    pub fn connected_components(&self) -> Vec<Vec<usize>> {
        let mut comp = vec![usize::MAX; self.n_vertices];
        let mut out = Vec::new();
        for s in 0..self.n_vertices {
            if comp[s] != usize::MAX {
                continue;
            }
            let id = out.len();
            comp[s] = id;
            let mut stack = vec![s];
            let mut members = Vec::new();
            while let Some(v) = stack.pop() {
                members.push(v);
                for &(u, _) in &self.adjacency[v] {
                    if comp[u] == usize::MAX {
                        comp[u] = id;
                        stack.push(u);
                    }
                }
            }
            members.sort_unstable();
            out.push(members);
        }
        out
    }

    /// Subgraph induced by `set`, in the local ordering of `set`. Coordinates
    /// and capacities are carried over; boundary markers are remapped and
    /// dropped when their vertex is outside the set.
    pub fn induced(&self, set: &IndexSet) -> WeightedGraph {
        let mut edges = Vec::new();
        for (li, &gi) in set.ids().iter().enumerate() {
            for &(gj, w) in &self.adjacency[gi] {
                if let Some(lj) = set.local(gj) {
                    if li < lj {
                        edges.push(Edge { i: li, j: lj, w });
                    }
                }
            }
        }
        let mut g = WeightedGraph::new(set.len(), edges).expect("induced subgraph of a valid graph");
        g.dim = self.dim;
        g.coords = self.coords.as_ref().map(|c| set.ids().iter().map(|&i| c[i]).collect());
        g.capacity = self.capacity.as_ref().map(|c| set.gather(c));
        g.robin = self.robin.iter().filter_map(|r| set.local(r.vertex).map(|v| RobinCondition { vertex: v, ..*r })).collect();
        g.dirichlet = self.dirichlet.iter().filter_map(|d| set.local(d.vertex).map(|v| DirichletCondition { vertex: v, ..*d })).collect();
        g
    }

    /// Builds the graph of an operator from its off-diagonal entries with
    /// `w_ij = -a_ij`, so that a Laplacian maps back onto its own weights.
    /// Entries with `|a_ij| <= drop_tol * max|a|` are skipped.
    pub fn from_operator(a: &SparseMatrix, drop_tol: f64) -> Result<Self> {
        if !a.is_square() {
            return Err(MsgrError::DimensionMismatch("operator graph needs a square matrix".into()));
        }
        let cut = drop_tol * a.max_abs();
        let edges = a.triplets().filter(|&(i, j, v)| i < j && v.abs() > cut).map(|(i, j, v)| Edge { i, j, w: -v }).collect();
        WeightedGraph::new(a.n_rows(), edges)
    }
}

/// Signed Laplacian: `L_ii = sum_j |w_ij|`, `L_ij = -w_ij`.
pub fn assemble_signed_laplacian(graph: &WeightedGraph) -> SparseMatrix {
    let n = graph.n_vertices();
    let mut coo = CooMatrix::with_capacity(n, n, n + 2 * graph.n_edges());
    for (i, d) in graph.degrees().into_iter().enumerate() {
        coo.push(i, i, d);
    }
    for e in graph.edges() {
        coo.push(e.i, e.j, -e.w);
        coo.push(e.j, e.i, -e.w);
    }
    coo.to_csr()
}

/// Adds the Robin terms of `graph` to an operator: `A = L + diag(alpha)` and
/// `f_i = alpha_i g_i`.
///
/// A system with neither Robin coefficients nor Dirichlet vertices is
/// singular for Laplacian operators and is rejected.
pub fn apply_boundary(l: &SparseMatrix, graph: &WeightedGraph) -> Result<(SparseMatrix, Vec<f64>)> {
    let n = graph.n_vertices();
    if l.n_rows() != n || !l.is_square() {
        return Err(MsgrError::DimensionMismatch(format!("operator is {}x{}, graph has {n} vertices", l.n_rows(), l.n_cols())));
    }
    let has_robin = graph.robin().iter().any(|r| r.alpha > 0.0);
    if !has_robin && graph.dirichlet().is_empty() {
        return Err(MsgrError::SingularSystem("no robin coefficient and no dirichlet vertex; pure Neumann operator".into()));
    }
    let mut diag = vec![0.0; n];
    let mut f = vec![0.0; n];
    for r in graph.robin() {
        diag[r.vertex] += r.alpha;
        f[r.vertex] += r.alpha * r.value;
    }
    Ok((l.add_diagonal(&diag)?, f))
}

/// Result of eliminating Dirichlet vertices from `A u = f`.
#[derive(Debug, Clone)]
pub struct DirichletReduction {
    pub a: SparseMatrix,
    pub f: Vec<f64>,
    /// Free vertices, ascending; local index `i` of the reduced system is
    /// fine vertex `free.global(i)`.
    pub free: IndexSet,
    n: usize,
    values: Vec<(usize, f64)>,
}

impl DirichletReduction {
    /// Rebuilds a full-length vector from a solution on the free vertices.
    pub fn reconstruct(&self, u_free: &[f64]) -> Vec<f64> {
        let mut u = vec![0.0; self.n];
        self.free.scatter(u_free, &mut u);
        for &(v, g) in &self.values {
            u[v] = g;
        }
        u
    }

    pub fn n_full(&self) -> usize {
        self.n
    }
}

/// Restricts `A u = f` to the free vertices: `f_int - A_{int,dir} g`.
pub fn eliminate_dirichlet(a: &SparseMatrix, f: &[f64], dirichlet: &[DirichletCondition]) -> Result<DirichletReduction> {
    let n = a.n_rows();
    if f.len() != n {
        return Err(MsgrError::DimensionMismatch(format!("rhs length {} for {n} rows", f.len())));
    }
    let mut g = vec![None; n];
    for d in dirichlet {
        if d.vertex >= n {
            return Err(MsgrError::IndexOutOfRange { index: d.vertex, size: n });
        }
        if g[d.vertex].replace(d.value).is_some() {
            return Err(MsgrError::InvalidParameter(format!("dirichlet vertex {} repeated", d.vertex)));
        }
    }
    let free = IndexSet::from_sorted_unique((0..n).filter(|&i| g[i].is_none()).collect());
    let a_int = a.restrict(&free, &free);
    let f_int = free
        .ids()
        .iter()
        .map(|&i| {
            let lift: f64 = a.row(i).filter_map(|(j, v)| g[j].map(|gj| v * gj)).sum();
            f[i] - lift
        })
        .collect();
    let values = dirichlet.iter().map(|d| (d.vertex, d.value)).collect();
    Ok(DirichletReduction { a: a_int, f: f_int, free, n, values })
}

/// Submatrix `A[rows, cols]` in local ordering.
pub fn restrict_submatrix(a: &SparseMatrix, rows: &IndexSet, cols: &IndexSet) -> SparseMatrix {
    a.restrict(rows, cols)
}

/// `||v||_D` with `d_i` the absolute off-diagonal row sums of `op`.
pub fn norm_d(v: &[f64], op: &SparseMatrix) -> Result<f64> {
    check_len(v, op)?;
    Ok(op.off_diagonal_abs_sums().iter().zip(v).map(|(d, x)| d * x * x).sum::<f64>().sqrt())
}

/// `||v||_D` with graph degrees.
pub fn norm_d_graph(v: &[f64], graph: &WeightedGraph) -> f64 {
    graph.degrees().iter().zip(v).map(|(d, x)| d * x * x).sum::<f64>().sqrt()
}

/// Energy norm `sqrt(v^T A v)`. Quadratic forms below `-1e-12 ||v||^2 max|a|`
/// are reported as indefinite; smaller negative round-off clamps to zero.
pub fn norm_a(v: &[f64], a: &SparseMatrix) -> Result<f64> {
    check_len(v, a)?;
    let q = a.quadratic_form(v);
    let vv: f64 = v.iter().map(|x| x * x).sum();
    if q < -1e-12 * vv * a.max_abs().max(1.0) {
        return Err(MsgrError::IndefiniteOperator(q));
    }
    Ok(q.max(0.0).sqrt())
}

/// `sqrt(sum_{(i,j) in E} w_ij (v_i - v_j)^2)`.
pub fn norm_l(v: &[f64], graph: &WeightedGraph) -> Result<f64> {
    if v.len() != graph.n_vertices() {
        return Err(MsgrError::DimensionMismatch("vector length vs graph".into()));
    }
    let q: f64 = graph.edges().iter().map(|e| e.w * (v[e.i] - v[e.j]).powi(2)).sum();
    if q < -1e-12 * v.iter().map(|x| x * x).sum::<f64>() {
        return Err(MsgrError::IndefiniteOperator(q));
    }
    Ok(q.max(0.0).sqrt())
}

fn check_len(v: &[f64], a: &SparseMatrix) -> Result<()> {
    if v.len() != a.n_rows() || !a.is_square() {
        return Err(MsgrError::DimensionMismatch(format!("vector of length {} with {}x{} operator", v.len(), a.n_rows(), a.n_cols())));
    }
    Ok(())
}
