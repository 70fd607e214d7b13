//! Test-problem generators and the [`Problem`] carrier used by the pipeline.

pub mod fem;
pub mod pore;

use std::f64::consts::PI;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{MsgrError, Result};
use crate::graph::{apply_boundary, assemble_signed_laplacian, eliminate_dirichlet, DirichletReduction, WeightedGraph};
use crate::io;
use crate::sparse::SparseMatrix;

pub use fem::{gen_aniso_heat, gen_fem_grid, gen_fem_on, BField, Circle, FemGrid, FemSystem, Rect, TensorField, TensorKind};
pub use pore::{gen_pore_network, hagen_poiseuille, Channel, PoreNetworkSpec};

/// A boundary-conditioned system `A u = f` on the free vertices of a graph.
#[derive(Debug, Clone)]
pub struct Problem {
    pub name: String,
    /// Graph induced on the free (non-Dirichlet) vertices.
    pub graph: WeightedGraph,
    pub a: SparseMatrix,
    pub f: Vec<f64>,
    pub reduction: DirichletReduction,
}

impl Problem {
    /// Applies Robin terms of `graph` to `(a, f)` and eliminates its
    /// Dirichlet vertices.
    pub fn from_system(name: &str, graph: &WeightedGraph, a: &SparseMatrix, f: &[f64]) -> Result<Self> {
        let (a_b, f_b) = apply_boundary(a, graph)?;
        if f.len() != f_b.len() {
            return Err(MsgrError::DimensionMismatch("rhs length vs graph".into()));
        }
        let f_full: Vec<f64> = f.iter().zip(&f_b).map(|(x, y)| x + y).collect();
        let reduction = eliminate_dirichlet(&a_b, &f_full, graph.dirichlet())?;
        if reduction.free.is_empty() {
            return Err(MsgrError::InvalidParameter("every vertex is dirichlet".into()));
        }
        Ok(Self {
            name: name.to_string(),
            graph: graph.induced(&reduction.free),
            a: reduction.a.clone(),
            f: reduction.f.clone(),
            reduction,
        })
    }

    /// Graph-Laplacian problem `A = L + B` with an optional source term.
    pub fn from_graph(name: &str, graph: &WeightedGraph, source: Option<&[f64]>) -> Result<Self> {
        let l = assemble_signed_laplacian(graph);
        let zero = vec![0.0; graph.n_vertices()];
        Self::from_system(name, graph, &l, source.unwrap_or(&zero))
    }

    pub fn n(&self) -> usize {
        self.a.n_rows()
    }

    /// Node capacities on the free vertices (all ones when absent).
    pub fn capacity(&self) -> Vec<f64> {
        self.graph.capacity().map(<[f64]>::to_vec).unwrap_or_else(|| vec![1.0; self.n()])
    }
}

/// Channels of the high-contrast perforated-domain analogue.
pub fn default_channels() -> Vec<Rect> {
    vec![
        Rect { x0: 0.08, x1: 0.92, y0: 0.24, y1: 0.27 },
        Rect { x0: 0.08, x1: 0.92, y0: 0.73, y1: 0.76 },
        Rect { x0: 0.485, x1: 0.515, y0: 0.3, y1: 0.7 },
    ]
}

pub fn default_holes() -> Vec<Circle> {
    vec![
        Circle { cx: 0.25, cy: 0.5, r: 0.07 },
        Circle { cx: 0.75, cy: 0.5, r: 0.07 },
        Circle { cx: 0.25, cy: 0.1, r: 0.04 },
        Circle { cx: 0.75, cy: 0.9, r: 0.04 },
    ]
}

fn default_n() -> usize {
    40
}
fn default_one() -> f64 {
    1.0
}
fn default_contrast() -> f64 {
    1e4
}
fn default_true() -> bool {
    true
}
fn default_d2() -> f64 {
    1e-4
}
fn default_theta() -> f64 {
    PI / 3.0
}
fn default_k_perp() -> f64 {
    1e-3
}
fn default_field() -> BField {
    BField::Circular { center: [0.5, 0.5] }
}

/// Spatial shape of the FEM load `source * profile(x, y)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LoadProfile {
    #[default]
    Uniform,
    /// `1 + x + sin(2 pi y)`. A load constant on every aggregate is
    /// reproduced exactly by MC-glo; this one is not.
    Smooth,
}

impl LoadProfile {
    pub fn value(&self, p: [f64; 2]) -> f64 {
        match self {
            LoadProfile::Uniform => 1.0,
            LoadProfile::Smooth => 1.0 + p[0] + (2.0 * PI * p[1]).sin(),
        }
    }

    fn apply(&self, sys: &mut FemSystem) {
        if *self == LoadProfile::Uniform {
            return;
        }
        if let Some(coords) = sys.graph.coords() {
            for (f, c) in sys.f.iter_mut().zip(coords) {
                *f *= self.value([c[0], c[1]]);
            }
        }
    }
}

/// Declarative description of a test problem.
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ProblemSpec {
    /// Unit square, `K = 1` background with `K = contrast` channels, optional
    /// circular perforations; homogeneous Dirichlet on the outer boundary.
    Channels {
        #[serde(default = "default_n")]
        nx: usize,
        #[serde(default = "default_n")]
        ny: usize,
        #[serde(default = "default_contrast")]
        contrast: f64,
        #[serde(default = "default_one")]
        source: f64,
        #[serde(default)]
        load: LoadProfile,
        #[serde(default = "default_true")]
        holes: bool,
        /// Rotated anisotropic background (`d1 = 1`, `d2 = 1e-4`, `theta = pi/3`).
        #[serde(default)]
        anisotropic: bool,
    },
    /// Constant rotated anisotropic tensor on the unit square.
    Rotated {
        #[serde(default = "default_n")]
        nx: usize,
        #[serde(default = "default_n")]
        ny: usize,
        #[serde(default = "default_one")]
        d1: f64,
        #[serde(default = "default_d2")]
        d2: f64,
        #[serde(default = "default_theta")]
        theta: f64,
        #[serde(default = "default_one")]
        source: f64,
        #[serde(default)]
        load: LoadProfile,
    },
    /// `K = 1` on the unit square.
    Isotropic {
        #[serde(default = "default_n")]
        nx: usize,
        #[serde(default = "default_n")]
        ny: usize,
        #[serde(default = "default_one")]
        source: f64,
        #[serde(default)]
        load: LoadProfile,
    },
    /// Field-aligned heat conduction.
    AnisoHeat {
        #[serde(default = "default_n")]
        nx: usize,
        #[serde(default = "default_n")]
        ny: usize,
        #[serde(default = "default_one")]
        k_par: f64,
        #[serde(default = "default_k_perp")]
        k_perp: f64,
        #[serde(default = "default_field")]
        field: BField,
        #[serde(default = "default_one")]
        source: f64,
        #[serde(default)]
        load: LoadProfile,
    },
    /// Synthetic pore network, `A = L + B`, zero source.
    Pore {
        #[serde(default)]
        seed: u64,
        #[serde(flatten)]
        spec: PoreNetworkSpec,
    },
    /// Graph file, optionally with an explicit operator (Matrix Market) and
    /// right-hand side (one value per line) on the full vertex set.
    File {
        graph: PathBuf,
        #[serde(default)]
        matrix: Option<PathBuf>,
        #[serde(default)]
        rhs: Option<PathBuf>,
    },
}

fn with_load(sys: Result<FemSystem>, load: LoadProfile) -> Result<FemSystem> {
    let mut sys = sys?;
    load.apply(&mut sys);
    Ok(sys)
}

impl ProblemSpec {
    pub fn label(&self) -> &'static str {
        match self {
            ProblemSpec::Channels { anisotropic: false, .. } => "channels",
            ProblemSpec::Channels { anisotropic: true, .. } => "channels_aniso",
            ProblemSpec::Rotated { .. } => "rotated",
            ProblemSpec::Isotropic { .. } => "isotropic",
            ProblemSpec::AnisoHeat { .. } => "aniso_heat",
            ProblemSpec::Pore { .. } => "pore",
            ProblemSpec::File { .. } => "file",
        }
    }

    /// Full (pre-boundary) graph, operator and load.
    pub fn generate(&self) -> Result<FemSystem> {
        match self {
            &ProblemSpec::Channels { nx, ny, contrast, source, load, holes, anisotropic } => {
                let base = if anisotropic { TensorField::rotated(1.0, 1e-4, PI / 3.0) } else { TensorField::identity() };
                let field = base.with_channels(default_channels(), contrast);
                let grid = FemGrid { holes: if holes { default_holes() } else { Vec::new() }, ..FemGrid::unit_square(nx, ny) };
                with_load(gen_fem_on(&grid, &field, source), load)
            }
            &ProblemSpec::Rotated { nx, ny, d1, d2, theta, source, load } => {
                with_load(gen_fem_grid(nx, ny, &TensorField::rotated(d1, d2, theta), source), load)
            }
            &ProblemSpec::Isotropic { nx, ny, source, load } => with_load(gen_fem_grid(nx, ny, &TensorField::identity(), source), load),
            ProblemSpec::AnisoHeat { nx, ny, k_par, k_perp, field, source, load } => {
                with_load(gen_aniso_heat(*nx, *ny, *k_par, *k_perp, field, *source), *load)
            }
            ProblemSpec::Pore { seed, spec } => {
                let graph = gen_pore_network(spec, *seed)?;
                let a = assemble_signed_laplacian(&graph);
                let f = vec![0.0; graph.n_vertices()];
                Ok(FemSystem { graph, a, f })
            }
            ProblemSpec::File { graph, matrix, rhs } => {
                let graph = io::read_graph(graph)?;
                let a = match matrix {
                    Some(p) => io::read_matrix_market(p)?,
                    None => assemble_signed_laplacian(&graph),
                };
                let f = match rhs {
                    Some(p) => io::read_vector(p)?,
                    None => vec![0.0; graph.n_vertices()],
                };
                if a.n_rows() != graph.n_vertices() || f.len() != graph.n_vertices() {
                    return Err(MsgrError::DimensionMismatch("operator/rhs size vs graph".into()));
                }
                Ok(FemSystem { graph, a, f })
            }
        }
    }

    /// Reads a spec from TOML; relative file paths resolve against the
    /// file's directory.
    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut spec: Self = toml::from_str(&std::fs::read_to_string(path)?).map_err(|e| MsgrError::Config(e.to_string()))?;
        if let Some(dir) = path.parent() {
            spec.resolve_paths(dir);
        }
        Ok(spec)
    }

    pub fn resolve_paths(&mut self, dir: &std::path::Path) {
        if let ProblemSpec::File { graph, matrix, rhs } = self {
            for p in std::iter::once(graph).chain(matrix.iter_mut()).chain(rhs.iter_mut()) {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
        }
    }

    pub fn build(&self) -> Result<Problem> {
        let sys = self.generate()?;
        Problem::from_system(self.label(), &sys.graph, &sys.a, &sys.f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn channel_problem_is_connected_and_spd() {
        let spec = ProblemSpec::Channels {
            nx: 20,
            ny: 20,
            contrast: 1e4,
            source: 1.0,
            load: LoadProfile::Uniform,
            holes: true,
            anisotropic: false,
        };
        let p = spec.build().unwrap();
        assert_eq!(p.graph.connected_components().len(), 1);
        assert!(crate::cholesky::SparseCholesky::factor(&p.a).is_ok());
        let w: Vec<f64> = p.graph.edges().iter().map(|e| e.w).collect();
        let ratio = w.iter().cloned().fold(0.0, f64::max) / w.iter().cloned().fold(f64::MAX, f64::min);
        assert!(ratio >= 1e4 * 0.99);
    }

    #[test]
    fn pore_problem_uses_robin_inlets() {
        let spec = ProblemSpec::Pore {
            seed: 3,
            spec: PoreNetworkSpec { nx: 12, ny: 12, channels: vec![Channel::X { y: 6, z: 0 }], ..Default::default() },
        };
        let p = spec.build().unwrap();
        assert_eq!(p.n(), 144);
        assert!(p.f.iter().filter(|&&x| x != 0.0).count() == 1);
        assert!(crate::cholesky::SparseCholesky::factor(&p.a).is_ok());
    }

    #[test]
    fn smooth_load_scales_the_lumped_source() {
        let uniform: ProblemSpec = toml::from_str("family = \"isotropic\"\nnx = 5\nny = 5").unwrap();
        let smooth: ProblemSpec = toml::from_str("family = \"isotropic\"\nnx = 5\nny = 5\nload = \"smooth\"").unwrap();
        let (a, b) = (uniform.build().unwrap(), smooth.build().unwrap());
        let coords = a.graph.coords().unwrap();
        for ((x, y), c) in a.f.iter().zip(&b.f).zip(coords) {
            // interior node of a 4x4-cell grid: lumped load h^2
            assert!((x - 1.0 / 16.0).abs() < 1e-15);
            assert!((y - x * (1.0 + c[0] + (2.0 * PI * c[1]).sin())).abs() < 1e-15);
        }
    }

    #[test]
    fn weak_cross_conduction_worsens_conditioning() {
        let cond = |src: &str| {
            let p: ProblemSpec = toml::from_str(src).unwrap();
            let ev = p.build().unwrap().a.to_dense().symmetric_eigenvalues();
            ev.max() / ev.min()
        };
        let iso = cond("family = \"isotropic\"\nnx = 10\nny = 10");
        let aniso = cond("family = \"aniso_heat\"\nnx = 10\nny = 10\nk_par = 1.0\nk_perp = 1e-3");
        assert!(aniso > iso, "{aniso} vs {iso}");
    }

    #[test]
    fn spec_parses_from_toml() {
        let spec: ProblemSpec = toml::from_str("family = \"aniso_heat\"\nnx = 12\nk_perp = 0.1").unwrap();
        assert!(matches!(spec, ProblemSpec::AnisoHeat { nx: 12, ny: 40, .. }));
        let spec: ProblemSpec = toml::from_str("family = \"pore\"\nseed = 4\nnx = 10\nny = 10\nchannels = []").unwrap();
        assert!(matches!(spec, ProblemSpec::Pore { seed: 4, .. }));
    }
}
