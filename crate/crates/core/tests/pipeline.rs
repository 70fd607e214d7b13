use msgr::analysis::galerkin_residual;
use msgr::interpolation::build_constraints;
use msgr::io;
use msgr::problems::LoadProfile;
use msgr::{
    cluster, errors, galerkin_coarse, oversample_with, partition_balanced, solve_fine, solve_steady, ClusteringConfig, McLocalOptions,
    OversampleMode, ProblemSpec, ProlongationKind,
};
use proptest::prelude::*;

fn grid(nx: usize, ny: usize) -> msgr::Problem {
    ProblemSpec::Rotated { nx, ny, d1: 1.0, d2: 0.05, theta: 0.7, source: 1.0, load: LoadProfile::Smooth }.build().unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn pipeline_invariants(nx in 6usize..14, ny in 6usize..14, n_omega in 1usize..6, m in 1usize..5, seed in 0u64..1000) {
        let problem = grid(nx, ny);
        let n = problem.n();
        let part = partition_balanced(&problem.graph, n_omega, seed).unwrap();
        let clusters = cluster(&problem.graph, &part, &ClusteringConfig::new(m, seed)).unwrap();
        prop_assert!(clusters.covers_all());
        let mut seen = vec![0usize; n];
        for a in clusters.aggregates() {
            prop_assert!(a.members.contains(a.centroid));
            prop_assert!(part.subdomain(a.subdomain).ids().iter().any(|&v| v == a.centroid));
            for &v in a.members.ids() {
                seen[v] += 1;
            }
        }
        prop_assert!(seen.iter().all(|&c| c == 1));

        let u = solve_fine(&problem.a, &problem.f).unwrap();
        let region = oversample_with(&problem.graph, &part, OversampleMode::Hops { hops: 1 }).unwrap();
        let s = build_constraints(&clusters);
        for kind in ProlongationKind::ALL {
            let p = msgr::experiment::prolongation(&problem, &region, &clusters, kind, &McLocalOptions::default()).unwrap();
            prop_assert_eq!(p.n_coarse(), clusters.n_coarse());
            let model = galerkin_coarse(&problem.a, &problem.f, p.matrix()).unwrap();
            let u_ms = solve_steady(&model).unwrap().1;
            let f_inf = problem.f.iter().fold(0.0f64, |a, x| a.max(x.abs()));
            prop_assert!(galerkin_residual(p.matrix(), &problem.a, &problem.f, &u_ms) <= 1e-9 * f_inf);
            let (_, err) = errors(&u, &u_ms, &problem.a).unwrap();
            prop_assert!((0.0..=100.0 + 1e-9).contains(&err));
            if kind == ProlongationKind::MC_GLOBAL {
                let sp = s.mul(p.matrix()).unwrap().to_dense();
                let id = nalgebra::DMatrix::<f64>::identity(sp.nrows(), sp.ncols());
                prop_assert!((sp - id).abs().max() <= 1e-8);
            }
        }
    }

    #[test]
    fn graph_file_round_trip_preserves_the_problem(nx in 4usize..9, seed in 0u64..50) {
        let sys = ProblemSpec::Pore {
            seed,
            spec: msgr::problems::PoreNetworkSpec { nx, ny: nx, channels: vec![], ..Default::default() },
        }
        .generate()
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.txt");
        io::write_graph(&path, &sys.graph).unwrap();
        let spec = ProblemSpec::File { graph: path, matrix: None, rhs: None };
        let back = spec.generate().unwrap();
        prop_assert_eq!(back.graph.n_vertices(), sys.graph.n_vertices());
        prop_assert_eq!(back.a.triplets().count(), sys.a.triplets().count());
        for ((i, j, x), (k, l, y)) in back.a.triplets().zip(sys.a.triplets()) {
            prop_assert_eq!((i, j), (k, l));
            prop_assert!((x - y).abs() <= 1e-12 * y.abs().max(1.0));
        }
    }
}

#[test]
fn mc_global_error_shrinks_under_nested_aggregates() {
    // one aggregate per subdomain is a union of the M = 6 aggregates, so
    // range(S^T) and hence range(A^{-1} S^T) are nested
    let problem = grid(16, 16);
    let u = solve_fine(&problem.a, &problem.f).unwrap();
    let part = partition_balanced(&problem.graph, 4, 3).unwrap();
    let coarse = cluster(&problem.graph, &part, &ClusteringConfig::new(1, 3)).unwrap();
    let fine = cluster(&problem.graph, &part, &ClusteringConfig::new(6, 3)).unwrap();
    let e = |c: &msgr::ClusterSet| {
        let p = msgr::mc_global(&problem.a, c).unwrap();
        let u_ms = solve_steady(&galerkin_coarse(&problem.a, &problem.f, p.matrix()).unwrap()).unwrap().1;
        errors(&u, &u_ms, &problem.a).unwrap().1
    };
    assert!(e(&fine) <= e(&coarse) + 1e-9);
}
