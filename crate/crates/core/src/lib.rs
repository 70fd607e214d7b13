//! Multiscale reduction of sparse graph operators.
//!
//! A weighted graph with boundary data gives an SPD operator `A`. Vertices
//! are split into balanced subdomains, each subdomain is clustered
//! spectrally into aggregates, and a prolongation `P` with one column per
//! aggregate is built (CF ideal interpolation or mass-constrained
//! minimizers, globally or on oversampled regions). The Galerkin model
//! `P^T A P` is then solved in place of the fine system.
//!
//! ```
//! use msgr::{cluster, galerkin_coarse, mc_global, partition_balanced, solve_steady, ClusteringConfig, ProblemSpec};
//!
//! let spec: ProblemSpec = toml::from_str("family = \"isotropic\"\nnx = 12\nny = 12").unwrap();
//! let problem = spec.build().unwrap();
//! let part = partition_balanced(&problem.graph, 4, 0).unwrap();
//! let clusters = cluster(&problem.graph, &part, &ClusteringConfig::new(2, 0)).unwrap();
//! let p = mc_global(&problem.a, &clusters).unwrap();
//! let model = galerkin_coarse(&problem.a, &problem.f, p.matrix()).unwrap();
//! let (u_c, u_ms) = solve_steady(&model).unwrap();
//! assert_eq!((u_c.len(), u_ms.len()), (8, problem.n()));
//! ```

pub mod analysis;
pub mod cholesky;
pub mod clustering;
pub mod coarse;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod index_set;
pub mod interpolation;
pub mod io;
pub mod kmeans;
pub mod partition;
pub mod problems;
pub mod sparse;

pub use analysis::{verify_bound, BoundInputs, ConvergenceReport};
pub use cholesky::SparseCholesky;
pub use clustering::{cluster, Aggregate, CentroidRule, ClusterSet, ClusteringConfig};
pub use coarse::{errors, galerkin_coarse, solve_fine, solve_parabolic, solve_steady, CoarseModel, Trajectory, TransientConfig};
pub use error::{MsgrError, Result};
pub use experiment::{emit_summary, ExperimentConfig, RunRecord};
pub use graph::{DirichletCondition, Edge, Point, RobinCondition, WeightedGraph};
pub use index_set::IndexSet;
pub use interpolation::{
    build_prolongation, cf_ideal_global, cf_ideal_local, mc_global, mc_local, McLocalOptions, Method, Prolongation, ProlongationKind, Scope,
};
pub use partition::{oversample_with, partition_balanced, OversampleMode, Partition};
pub use problems::{Problem, ProblemSpec};
pub use sparse::SparseMatrix;
