//! P1 finite elements on structured triangulations of a rectangle.

use crate::error::{MsgrError, Result};
use crate::graph::{DirichletCondition, Edge, Point, WeightedGraph};
use crate::sparse::{CooMatrix, SparseMatrix};

/// Symmetric 2x2 tensor `[[k11, k12], [k12, k22]]`.
pub type Tensor2 = [[f64; 2]; 2];

/// Stiffness entries below this fraction of `max|a_ij|` are treated as zero.
pub const STIFFNESS_DROP_TOL: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, serde::Deserialize, serde::Serialize)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.x0 && p[0] <= self.x1 && p[1] >= self.y0 && p[1] <= self.y1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Deserialize, serde::Serialize)]
pub struct Circle {
    pub cx: f64,
    pub cy: f64,
    pub r: f64,
}

impl Circle {
    pub fn contains(&self, p: [f64; 2]) -> bool {
        (p[0] - self.cx).powi(2) + (p[1] - self.cy).powi(2) < self.r * self.r
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TensorKind {
    Isotropic,
    /// `K = R^T diag(d1, d2) R` with `R` the rotation by `theta`.
    RotatedAnisotropic {
        d1: f64,
        d2: f64,
        theta: f64,
    },
}

/// Piecewise-constant diffusion tensor: a base tensor scaled by a per-region
/// multiplier. Region 0 is the background; region 1 is the union of the
/// channel rectangles.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorField {
    pub kind: TensorKind,
    pub channels: Vec<Rect>,
    pub multipliers: Vec<f64>,
}

impl TensorField {
    pub fn identity() -> Self {
        Self { kind: TensorKind::Isotropic, channels: Vec::new(), multipliers: vec![1.0] }
    }

    pub fn isotropic(k: f64) -> Self {
        Self { kind: TensorKind::Isotropic, channels: Vec::new(), multipliers: vec![k] }
    }

    pub fn rotated(d1: f64, d2: f64, theta: f64) -> Self {
        Self { kind: TensorKind::RotatedAnisotropic { d1, d2, theta }, channels: Vec::new(), multipliers: vec![1.0] }
    }

    pub fn with_channels(mut self, channels: Vec<Rect>, channel_multiplier: f64) -> Self {
        self.channels = channels;
        self.multipliers.truncate(1);
        self.multipliers.push(channel_multiplier);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if let TensorKind::RotatedAnisotropic { d1, d2, theta } = self.kind {
            if !(d1 > 0.0 && d2 > 0.0) || !theta.is_finite() {
                return Err(MsgrError::InvalidParameter(format!("anisotropic tensor needs d1, d2 > 0 (got {d1}, {d2})")));
            }
        }
        if self.multipliers.is_empty() || self.multipliers.iter().any(|&m| !(m > 0.0)) {
            return Err(MsgrError::InvalidParameter("region multipliers must be positive".into()));
        }
        if !self.channels.is_empty() && self.multipliers.len() < 2 {
            return Err(MsgrError::InvalidParameter("channels need a second multiplier".into()));
        }
        Ok(())
    }

    pub fn region(&self, p: [f64; 2]) -> usize {
        usize::from(self.channels.iter().any(|r| r.contains(p)))
    }

    pub fn base(&self) -> Tensor2 {
        match self.kind {
            TensorKind::Isotropic => [[1.0, 0.0], [0.0, 1.0]],
            TensorKind::RotatedAnisotropic { d1, d2, theta } => rotated_tensor(d1, d2, theta),
        }
    }

    pub fn tensor(&self, p: [f64; 2]) -> Tensor2 {
        let s = self.multipliers[self.region(p).min(self.multipliers.len() - 1)];
        let b = self.base();
        [[s * b[0][0], s * b[0][1]], [s * b[1][0], s * b[1][1]]]
    }
}

/// `R^T diag(d1, d2) R` with `R = [[cos, -sin], [sin, cos]]`.
pub fn rotated_tensor(d1: f64, d2: f64, theta: f64) -> Tensor2 {
    let (s, c) = theta.sin_cos();
    let r = [[c, -s], [s, c]];
    let d = [d1, d2];
    let mut k = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            k[i][j] = (0..2).map(|m| r[m][i] * d[m] * r[m][j]).sum();
        }
    }
    k
}

/// Local P1 stiffness `|T| grad(phi_i)^T K grad(phi_j)` on triangle `p`.
pub fn p1_local_stiffness(p: [[f64; 2]; 3], k: Tensor2) -> Result<[[f64; 3]; 3]> {
    let b = [p[1][1] - p[2][1], p[2][1] - p[0][1], p[0][1] - p[1][1]];
    let c = [p[2][0] - p[1][0], p[0][0] - p[2][0], p[1][0] - p[0][0]];
    let twice_area = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
    if twice_area.abs() <= 0.0 {
        return Err(MsgrError::InvalidParameter("degenerate triangle".into()));
    }
    let area = 0.5 * twice_area.abs();
    let grads: Vec<[f64; 2]> = (0..3).map(|i| [b[i] / twice_area, c[i] / twice_area]).collect();
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        let kg = [k[0][0] * grads[i][0] + k[0][1] * grads[i][1], k[1][0] * grads[i][0] + k[1][1] * grads[i][1]];
        for j in 0..3 {
            out[i][j] = area * (kg[0] * grads[j][0] + kg[1] * grads[j][1]);
        }
    }
    Ok(out)
}

/// Structured triangulation of `[0, lx] x [0, ly]` with `nx x ny` vertices.
/// Each cell is split into two right triangles; triangles whose barycenter
/// lies inside a hole are removed together with vertices left without an
/// element.
#[derive(Debug, Clone, PartialEq)]
pub struct FemGrid {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    pub holes: Vec<Circle>,
}

impl FemGrid {
    pub fn unit_square(nx: usize, ny: usize) -> Self {
        Self { nx, ny, lx: 1.0, ly: 1.0, holes: Vec::new() }
    }

    fn validate(&self) -> Result<()> {
        if self.nx < 2 || self.ny < 2 {
            return Err(MsgrError::InvalidParameter(format!("grid needs at least 2x2 vertices (got {}x{})", self.nx, self.ny)));
        }
        if !(self.lx > 0.0 && self.ly > 0.0) {
            return Err(MsgrError::InvalidParameter("grid extents must be positive".into()));
        }
        Ok(())
    }
}

/// Assembled FEM system before boundary conditions. The graph carries
/// `w_ij = -a_ij` on every nonzero off-diagonal and marks the outer boundary
/// of the rectangle as homogeneous Dirichlet.
#[derive(Debug, Clone)]
pub struct FemSystem {
    pub graph: WeightedGraph,
    pub a: SparseMatrix,
    pub f: Vec<f64>,
}

/// Assembles P1 stiffness and lumped load for a tensor evaluated at each
/// triangle barycenter.
pub fn assemble_p1<K>(grid: &FemGrid, tensor: K, source: f64) -> Result<FemSystem>
where
    K: Fn([f64; 2]) -> Result<Tensor2>,
{
    grid.validate()?;
    let (nx, ny) = (grid.nx, grid.ny);
    let hx = grid.lx / (nx - 1) as f64;
    let hy = grid.ly / (ny - 1) as f64;
    let pos = |ix: usize, iy: usize| [ix as f64 * hx, iy as f64 * hy];
    let vid = |ix: usize, iy: usize| iy * nx + ix;

    let mut triangles: Vec<[usize; 3]> = Vec::with_capacity(2 * (nx - 1) * (ny - 1));
    for iy in 0..ny - 1 {
        for ix in 0..nx - 1 {
            let v00 = vid(ix, iy);
            let v10 = vid(ix + 1, iy);
            let v01 = vid(ix, iy + 1);
            let v11 = vid(ix + 1, iy + 1);
            triangles.push([v00, v10, v01]);
            triangles.push([v11, v01, v10]);
        }
    }
    let point = |v: usize| pos(v % nx, v / nx);
    let barycenter = |t: &[usize; 3]| {
        let ps = t.map(point);
        [(ps[0][0] + ps[1][0] + ps[2][0]) / 3.0, (ps[0][1] + ps[1][1] + ps[2][1]) / 3.0]
    };
    triangles.retain(|t| {
        let c = barycenter(t);
        !grid.holes.iter().any(|h| h.contains(c))
    });

    let n_full = nx * ny;
    let mut new_id = vec![usize::MAX; n_full];
    let mut kept = Vec::new();
    for t in &triangles {
        for &v in t {
            if new_id[v] == usize::MAX {
                new_id[v] = 0;
            }
        }
    }
    for v in 0..n_full {
        if new_id[v] != usize::MAX {
            new_id[v] = kept.len();
            kept.push(v);
        }
    }
    let n = kept.len();

    let mut coo = CooMatrix::with_capacity(n, n, 9 * triangles.len());
    let mut f = vec![0.0; n];
    for t in &triangles {
        let ps = t.map(point);
        let k = tensor(barycenter(t))?;
        if !(k[0][0] > 0.0 && k[0][0] * k[1][1] - k[0][1] * k[1][0] > 0.0) {
            return Err(MsgrError::InvalidParameter(format!("diffusion tensor {k:?} is not positive definite")));
        }
        let local = p1_local_stiffness(ps, k)?;
        let area = 0.5 * ((ps[1][0] - ps[0][0]) * (ps[2][1] - ps[0][1]) - (ps[2][0] - ps[0][0]) * (ps[1][1] - ps[0][1])).abs();
        for a in 0..3 {
            f[new_id[t[a]]] += source * area / 3.0;
            for b in 0..3 {
                coo.push(new_id[t[a]], new_id[t[b]], local[a][b]);
            }
        }
    }
    let raw = coo.to_csr();
    let a = raw.pruned(STIFFNESS_DROP_TOL * raw.max_abs());

    let edges = a.triplets().filter(|&(i, j, _)| i < j).map(|(i, j, v)| Edge { i, j, w: -v }).collect();
    let coords: Vec<Point> = kept
        .iter()
        .map(|&v| {
            let p = point(v);
            [p[0], p[1], 0.0]
        })
        .collect();
    let dirichlet = kept
        .iter()
        .enumerate()
        .filter(|&(_, &v)| {
            let (ix, iy) = (v % nx, v / nx);
            ix == 0 || iy == 0 || ix == nx - 1 || iy == ny - 1
        })
        .map(|(i, _)| DirichletCondition { vertex: i, value: 0.0 })
        .collect();
    let graph = WeightedGraph::new(n, edges)?.with_coords(2, coords)?.with_dirichlet(dirichlet)?;
    Ok(FemSystem { graph, a, f })
}

/// P1 system on the unit square for a piecewise-constant tensor field.
pub fn gen_fem_grid(nx: usize, ny: usize, field: &TensorField, source: f64) -> Result<FemSystem> {
    gen_fem_on(&FemGrid::unit_square(nx, ny), field, source)
}

pub fn gen_fem_on(grid: &FemGrid, field: &TensorField, source: f64) -> Result<FemSystem> {
    field.validate()?;
    assemble_p1(grid, |p| Ok(field.tensor(p)), source)
}

/// Direction field of the strong diffusion direction.
#[derive(Debug, Clone, Copy, PartialEq, serde::Deserialize, serde::Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BField {
    /// Constant unit vector.
    Uniform { b: [f64; 2] },
    /// Field lines are circles around `center`; points at the center use `(1, 0)`.
    Circular { center: [f64; 2] },
}

impl BField {
    pub fn at(&self, p: [f64; 2]) -> Result<[f64; 2]> {
        match *self {
            BField::Uniform { b } => {
                let norm = (b[0] * b[0] + b[1] * b[1]).sqrt();
                if (norm - 1.0).abs() > 1e-8 {
                    return Err(MsgrError::InvalidParameter(format!("field direction must be a unit vector (|b| = {norm})")));
                }
                Ok(b)
            }
            BField::Circular { center } => {
                let (dx, dy) = (p[0] - center[0], p[1] - center[1]);
                let r = (dx * dx + dy * dy).sqrt();
                if r < 1e-14 {
                    Ok([1.0, 0.0])
                } else {
                    Ok([-dy / r, dx / r])
                }
            }
        }
    }
}

/// Tensor `k_perp I + (k_par - k_perp) b b^T`.
pub fn field_aligned_tensor(k_par: f64, k_perp: f64, b: [f64; 2]) -> Tensor2 {
    let kd = k_par - k_perp;
    [[k_perp + kd * b[0] * b[0], kd * b[0] * b[1]], [kd * b[1] * b[0], k_perp + kd * b[1] * b[1]]]
}

/// Anisotropic heat conduction along a direction field on the unit square.
pub fn gen_aniso_heat(nx: usize, ny: usize, k_par: f64, k_perp: f64, b: &BField, source: f64) -> Result<FemSystem> {
    if !(k_perp > 0.0 && k_par >= k_perp) {
        return Err(MsgrError::InvalidParameter(format!("need k_par >= k_perp > 0 (got {k_par}, {k_perp})")));
    }
    assemble_p1(&FemGrid::unit_square(nx, ny), |p| Ok(field_aligned_tensor(k_par, k_perp, b.at(p)?)), source)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    /// Integrates grad(phi_i) . K grad(phi_j) over the triangle with
    /// finite-difference gradients of the barycentric basis and a midpoint
    /// rule on a sub-triangulation.
    fn quadrature_oracle(p: [[f64; 2]; 3], k: Tensor2) -> [[f64; 3]; 3] {
        let bary = |x: [f64; 2]| -> [f64; 3] {
            let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
            let l1 = ((x[0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (x[1] - p[0][1])) / det;
            let l2 = ((p[1][0] - p[0][0]) * (x[1] - p[0][1]) - (x[0] - p[0][0]) * (p[1][1] - p[0][1])) / det;
            [1.0 - l1 - l2, l1, l2]
        };
        let h = 1e-6;
        let grad = |i: usize, x: [f64; 2]| {
            [
                (bary([x[0] + h, x[1]])[i] - bary([x[0] - h, x[1]])[i]) / (2.0 * h),
                (bary([x[0], x[1] + h])[i] - bary([x[0], x[1] - h])[i]) / (2.0 * h),
            ]
        };
        let m = 8;
        let mut out = [[0.0; 3]; 3];
        let area = 0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1])).abs();
        let w = area / (m * m) as f64;
        for a in 0..m {
            for b in 0..m - a {
                for up in [false, true] {
                    if up && a + b + 1 >= m {
                        continue;
                    }
                    let (s, t) = if up {
                        ((a as f64 + 2.0 / 3.0) / m as f64, (b as f64 + 2.0 / 3.0) / m as f64)
                    } else {
                        ((a as f64 + 1.0 / 3.0) / m as f64, (b as f64 + 1.0 / 3.0) / m as f64)
                    };
                    let x = [
                        p[0][0] + s * (p[1][0] - p[0][0]) + t * (p[2][0] - p[0][0]),
                        p[0][1] + s * (p[1][1] - p[0][1]) + t * (p[2][1] - p[0][1]),
                    ];
                    for i in 0..3 {
                        let gi = grad(i, x);
                        for j in 0..3 {
                            let gj = grad(j, x);
                            let kg = [k[0][0] * gj[0] + k[0][1] * gj[1], k[1][0] * gj[0] + k[1][1] * gj[1]];
                            out[i][j] += w * (gi[0] * kg[0] + gi[1] * kg[1]);
                        }
                    }
                }
            }
        }
        out
    }

    #[test]
    fn unit_right_triangle_stiffness() {
        let p = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let local = p1_local_stiffness(p, [[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let expected = [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]];
        let oracle = quadrature_oracle(p, [[1.0, 0.0], [0.0, 1.0]]);
        for i in 0..3 {
            for j in 0..3 {
                assert!((local[i][j] - expected[i][j]).abs() < 1e-15);
                assert!((oracle[i][j] - expected[i][j]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn general_triangle_matches_quadrature() {
        let p = [[0.1, 0.2], [0.9, 0.35], [0.3, 0.8]];
        let k = rotated_tensor(1.0, 1e-2, PI / 3.0);
        let local = p1_local_stiffness(p, k).unwrap();
        let oracle = quadrature_oracle(p, k);
        for i in 0..3 {
            for j in 0..3 {
                assert!((local[i][j] - oracle[i][j]).abs() < 1e-6, "{i}{j}");
            }
        }
    }

    #[test]
    fn constants_in_kernel_on_smallest_grid() {
        let sys = gen_fem_grid(2, 2, &TensorField::identity(), 1.0).unwrap();
        let r = sys.a.matvec(&[1.0; 4]);
        assert!(r.iter().all(|x| x.abs() < 1e-14));
        // two triangles of area 1/2, lumped: vertices 0 and 3 touch one, 1 and 2 both
        assert_eq!(sys.f, vec![1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0]);
    }

    #[test]
    fn rotated_identity_is_isotropic() {
        let a = gen_fem_grid(4, 4, &TensorField::identity(), 0.0).unwrap().a;
        let b = gen_fem_grid(4, 4, &TensorField::rotated(1.0, 1.0, PI / 3.0), 0.0).unwrap().a;
        let diff = a.add_scaled(&b, -1.0).unwrap().max_abs();
        assert!(diff < 1e-14, "{diff}");
    }

    #[test]
    fn scaling_the_field_scales_the_matrix() {
        let a = gen_fem_grid(5, 4, &TensorField::identity(), 0.0).unwrap().a;
        let b = gen_fem_grid(5, 4, &TensorField::isotropic(3.0), 0.0).unwrap().a;
        for (i, j, v) in a.triplets() {
            assert!((b.get(i, j) - 3.0 * v).abs() <= 1e-14 * v.abs().max(1.0));
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(gen_fem_grid(1, 3, &TensorField::identity(), 1.0).is_err());
        assert!(gen_fem_grid(3, 3, &TensorField::rotated(1.0, -1.0, 0.0), 1.0).is_err());
        assert!(gen_fem_grid(3, 3, &TensorField::isotropic(0.0), 1.0).is_err());
        let bad = BField::Uniform { b: [1.0, 0.1] };
        assert!(gen_aniso_heat(3, 3, 1.0, 0.1, &bad, 1.0).is_err());
        let ok = BField::Uniform { b: [1.0, 0.0] };
        assert!(gen_aniso_heat(3, 3, 0.1, 1.0, &ok, 1.0).is_err());
    }

    #[test]
    fn equal_conductivities_match_identity_field() {
        let b = BField::Circular { center: [0.5, 0.5] };
        let heat = gen_aniso_heat(6, 6, 1.0, 1.0, &b, 1.0).unwrap();
        let iso = gen_fem_grid(6, 6, &TensorField::identity(), 1.0).unwrap();
        assert!(heat.a.add_scaled(&iso.a, -1.0).unwrap().max_abs() < 1e-14);
    }

    #[test]
    fn vanishing_cross_conductivity_decouples_rows() {
        let b = BField::Uniform { b: [1.0, 0.0] };
        let sys = gen_aniso_heat(3, 3, 1.0, 1e-12, &b, 1.0).unwrap();
        // dense inspection: couplings between grid rows scale with k_perp
        let dense = sys.a.to_dense();
        let mut cross = 0.0f64;
        let mut along = 0.0f64;
        for i in 0..9 {
            for j in 0..9 {
                if i == j {
                    continue;
                }
                if i / 3 == j / 3 {
                    along = along.max(dense[(i, j)].abs());
                } else {
                    cross = cross.max(dense[(i, j)].abs());
                }
            }
        }
        assert!(along > 0.1);
        assert!(cross < 1e-11, "{cross}");
    }

    #[test]
    fn misaligned_anisotropy_gives_signed_weights() {
        let b = BField::Circular { center: [0.5, 0.5] };
        let negative = |k_perp: f64| {
            let sys = gen_aniso_heat(12, 12, 1.0, k_perp, &b, 1.0).unwrap();
            sys.graph.edges().iter().filter(|e| e.w < 0.0).count()
        };
        assert_eq!(negative(1.0), 0);
        assert!(negative(1e-3) > 0);
    }

    #[test]
    fn holes_remove_vertices_and_keep_symmetry() {
        let grid = FemGrid { holes: vec![Circle { cx: 0.5, cy: 0.5, r: 0.2 }], ..FemGrid::unit_square(11, 11) };
        let sys = gen_fem_on(&grid, &TensorField::identity(), 1.0).unwrap();
        assert!(sys.graph.n_vertices() < 121);
        assert!(sys.a.is_symmetric(1e-12));
        let r = sys.a.matvec(&vec![1.0; sys.graph.n_vertices()]);
        assert!(r.iter().all(|x| x.abs() < 1e-12));
        assert_eq!(sys.graph.connected_components().len(), 1);
    }
}
