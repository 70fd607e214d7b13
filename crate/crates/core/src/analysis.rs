//! Diagnostics for the energy error bound: aggregate diameters, intra-
//! aggregate contrast, the `D^{-1}` norm of the load, and fitted constants.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::clustering::ClusterSet;
use crate::error::{MsgrError, Result};
use crate::graph::{norm_a, norm_d_graph, Point, WeightedGraph};
use crate::sparse::SparseMatrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregateStats {
    pub subdomain: usize,
    pub index: usize,
    pub size: usize,
    pub diameter: f64,
    /// max/min `|w_ij|` over edges inside the aggregate (1 without edges).
    pub c_ratio: f64,
    /// max/min vertex degree over the members.
    pub c_ratio_degree: f64,
    pub internal_edges: usize,
}

/// Weight- and degree-based contrast per aggregate.
pub fn cluster_contrast(graph: &WeightedGraph, clusters: &ClusterSet) -> Vec<(f64, f64, usize)> {
    let degrees = guarded_degrees(graph);
    clusters
        .aggregates()
        .par_iter()
        .map(|agg| {
            let (mut lo, mut hi, mut count) = (f64::INFINITY, 0.0f64, 0);
            for &v in agg.members.ids() {
                for &(u, w) in graph.neighbors(v) {
                    if u > v && agg.members.contains(u) {
                        lo = lo.min(w.abs());
                        hi = hi.max(w.abs());
                        count += 1;
                    }
                }
            }
            let c_w = if count == 0 || lo == 0.0 { 1.0 } else { hi / lo };
            let (dlo, dhi) = agg.members.ids().iter().fold((f64::INFINITY, 0.0f64), |(l, h), &v| (l.min(degrees[v]), h.max(degrees[v])));
            (c_w, dhi / dlo, count)
        })
        .collect()
}

/// Largest pairwise Euclidean distance per aggregate.
pub fn cluster_diameter(coords: &[Point], clusters: &ClusterSet) -> Vec<f64> {
    clusters
        .aggregates()
        .par_iter()
        .map(|agg| {
            let ids = agg.members.ids();
            let mut d2 = 0.0f64;
            for (a, &u) in ids.iter().enumerate() {
                for &v in &ids[a + 1..] {
                    let (p, q) = (coords[u], coords[v]);
                    d2 = d2.max((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2));
                }
            }
            d2.sqrt()
        })
        .collect()
}

/// Degrees with zero entries replaced by `1e-12 * max` (or 1).
fn guarded_degrees(graph: &WeightedGraph) -> Vec<f64> {
    let mut d = graph.degrees();
    let max = d.iter().cloned().fold(0.0, f64::max);
    let eps = if max > 0.0 { 1e-12 * max } else { 1.0 };
    for x in d.iter_mut().filter(|x| **x == 0.0) {
        *x = eps;
    }
    d
}

/// `sqrt(sum f_i^2 / d_i)`.
pub fn dual_norm_f(f: &[f64], graph: &WeightedGraph) -> f64 {
    f.iter().zip(guarded_degrees(graph)).map(|(x, d)| x * x / d).sum::<f64>().sqrt()
}

/// `max |(P^T (f - A u_ms))_j|`.
pub fn galerkin_residual(p: &SparseMatrix, a: &SparseMatrix, f: &[f64], u_ms: &[f64]) -> f64 {
    let r: Vec<f64> = a.matvec(u_ms).iter().zip(f).map(|(x, y)| y - x).collect();
    p.matvec_transpose(&r).iter().fold(0.0, |m, x| m.max(x.abs()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub aggregates: Vec<AggregateStats>,
    pub h: f64,
    pub c_ratio: f64,
    pub c_ratio_degree: f64,
    pub norm_f_dinv: f64,
    /// `||u - u_ms||_A`.
    pub energy_error: f64,
    /// `||u - u_ms||_A / (H C_ratio^{1/2} ||f||_{D^{-1}})`.
    pub c_fit: f64,
    /// `||u - u_ms||_D / (H C_ratio^{1/2} ||u - u_ms||_A)`.
    pub c_lemma: f64,
    pub orthogonality: f64,
    /// Max number of oversampled regions sharing a vertex.
    pub overlap: usize,
}

pub struct BoundInputs<'a> {
    pub graph: &'a WeightedGraph,
    pub a: &'a SparseMatrix,
    pub f: &'a [f64],
    pub clusters: &'a ClusterSet,
    pub p: &'a SparseMatrix,
    pub u: &'a [f64],
    pub u_ms: &'a [f64],
    pub overlap: usize,
}

pub fn verify_bound(inp: &BoundInputs<'_>) -> Result<ConvergenceReport> {
    let coords = inp.graph.coords().ok_or_else(|| MsgrError::MissingCoordinates("aggregate diameters".into()))?;
    let diam = cluster_diameter(coords, inp.clusters);
    let contrast = cluster_contrast(inp.graph, inp.clusters);
    let aggregates: Vec<AggregateStats> = inp
        .clusters
        .aggregates()
        .iter()
        .zip(diam.iter().zip(&contrast))
        .map(|(agg, (&diameter, &(c_ratio, c_ratio_degree, internal_edges)))| AggregateStats {
            subdomain: agg.subdomain,
            index: agg.index,
            size: agg.members.len(),
            diameter,
            c_ratio,
            c_ratio_degree,
            internal_edges,
        })
        .collect();
    let h = diam.iter().cloned().fold(0.0, f64::max);
    let c_ratio = contrast.iter().map(|c| c.0).fold(1.0, f64::max);
    let c_ratio_degree = contrast.iter().map(|c| c.1).fold(1.0, f64::max);

    let e: Vec<f64> = inp.u.iter().zip(inp.u_ms).map(|(x, y)| x - y).collect();
    let energy_error = norm_a(&e, inp.a)?;
    let norm_f_dinv = dual_norm_f(inp.f, inp.graph);
    let scale = h * c_ratio.sqrt();
    let ratio = |num: f64, den: f64| if num == 0.0 { 0.0 } else { num / den };
    Ok(ConvergenceReport {
        aggregates,
        h,
        c_ratio,
        c_ratio_degree,
        norm_f_dinv,
        energy_error,
        c_fit: ratio(energy_error, scale * norm_f_dinv),
        c_lemma: ratio(norm_d_graph(&e, inp.graph), scale * energy_error),
        orthogonality: galerkin_residual(inp.p, inp.a, inp.f, inp.u_ms),
        overlap: inp.overlap,
    })
}

impl ConvergenceReport {
    /// One row per aggregate, then a summary row.
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "row,subdomain,aggregate,size,diameter,c_ratio,c_ratio_degree,norm_f_dinv,energy_error,c_fit,c_lemma,orthogonality,overlap\n",
        );
        for a in &self.aggregates {
            writeln!(s, "aggregate,{},{},{},{:e},{:e},{:e},,,,,,", a.subdomain, a.index, a.size, a.diameter, a.c_ratio, a.c_ratio_degree)
                .unwrap();
        }
        let n: usize = self.aggregates.iter().map(|a| a.size).sum();
        writeln!(
            s,
            "summary,,,{n},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{}",
            self.h,
            self.c_ratio,
            self.c_ratio_degree,
            self.norm_f_dinv,
            self.energy_error,
            self.c_fit,
            self.c_lemma,
            self.orthogonality,
            self.overlap
        )
        .unwrap();
        s
    }
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}
