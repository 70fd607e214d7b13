//! Galerkin coarse models `A_c = P^T A P`, steady and backward-Euler
//! solves, and the relative error metrics.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::cholesky::SparseCholesky;
use crate::error::{MsgrError, Result};
use crate::sparse::{SparseMatrix, SYMMETRY_TOL};

/// Above this density the triple product is formed densely.
const DENSE_PRODUCT_FILL: f64 = 0.1;

const REFINEMENT_STEPS: usize = 2;

/// Largest fine system solved by direct factorization; beyond it, CG.
pub const FINE_DIRECT_LIMIT: usize = 200_000;

#[derive(Debug, Clone)]
pub struct CoarseModel {
    /// Fine operator and load, kept for residual refinement.
    pub a: SparseMatrix,
    pub f: Vec<f64>,
    pub p: SparseMatrix,
    pub a_c: SparseMatrix,
    pub f_c: Vec<f64>,
}

impl CoarseModel {
    pub fn n_coarse(&self) -> usize {
        self.a_c.n_rows()
    }

    pub fn prolong(&self, u_c: &[f64]) -> Vec<f64> {
        self.p.matvec(u_c)
    }

    pub fn restrict(&self, v: &[f64]) -> Vec<f64> {
        self.p.matvec_transpose(v)
    }
}

/// `P^T A P`, sparse or dense depending on the fill of `P`.
pub fn triple_product(a: &SparseMatrix, p: &SparseMatrix) -> Result<SparseMatrix> {
    if a.n_cols() != p.n_rows() || !a.is_square() {
        return Err(MsgrError::DimensionMismatch(format!(
            "operator {}x{} vs prolongation {}x{}",
            a.n_rows(),
            a.n_cols(),
            p.n_rows(),
            p.n_cols()
        )));
    }
    let fill = p.nnz() as f64 / (p.n_rows().max(1) * p.n_cols().max(1)) as f64;
    let product = if fill > DENSE_PRODUCT_FILL {
        let pd = p.to_dense();
        let mut ap = DMatrix::zeros(a.n_rows(), p.n_cols());
        for i in 0..a.n_rows() {
            for (k, v) in a.row(i) {
                for j in 0..p.n_cols() {
                    ap[(i, j)] += v * pd[(k, j)];
                }
            }
        }
        SparseMatrix::from_dense(&(pd.transpose() * ap), 0.0)
    } else {
        p.transpose().mul(&a.mul(p)?)?
    };
    Ok(product)
}

/// Checks the asymmetry of a coarse operator built from a symmetric one
/// and averages out the rounding.
fn enforce_symmetry(fine: &SparseMatrix, coarse: SparseMatrix) -> Result<SparseMatrix> {
    if !fine.is_symmetric(SYMMETRY_TOL) {
        return Ok(coarse);
    }
    let asym = coarse.relative_asymmetry();
    if asym > 1e-10 {
        return Err(MsgrError::InvalidParameter(format!("coarse operator asymmetric ({asym:e})")));
    }
    coarse.symmetrized()
}

pub fn galerkin_coarse(a: &SparseMatrix, f: &[f64], p: &SparseMatrix) -> Result<CoarseModel> {
    if f.len() != a.n_rows() {
        return Err(MsgrError::DimensionMismatch("rhs vs operator".into()));
    }
    let a_c = enforce_symmetry(a, triple_product(a, p)?)?;
    let f_c = p.matvec_transpose(f);
    Ok(CoarseModel { a: a.clone(), f: f.to_vec(), p: p.clone(), a_c, f_c })
}

/// Returns `(u_c, u_ms)`.
///
/// The direct solve is followed by iterative refinement on the residual
/// `P^T (f - A P u_c)` taken in the fine space: forming `P^T A P` cancels
/// large terms under high contrast, and refining against `A_c` alone would
/// keep that error.
pub fn solve_steady(model: &CoarseModel) -> Result<(Vec<f64>, Vec<f64>)> {
    let chol = SparseCholesky::factor(&model.a_c)?;
    let mut u_c = chol.solve(&model.f_c);
    let mut u_ms = model.prolong(&u_c);
    for _ in 0..REFINEMENT_STEPS {
        let r: Vec<f64> = model.a.matvec(&u_ms).iter().zip(&model.f).map(|(x, y)| y - x).collect();
        let d = chol.solve(&model.restrict(&r));
        u_c.iter_mut().zip(&d).for_each(|(u, x)| *u += x);
        u_ms = model.prolong(&u_c);
    }
    Ok((u_c, u_ms))
}

pub fn solve_fine(a: &SparseMatrix, f: &[f64]) -> Result<Vec<f64>> {
    if f.len() != a.n_rows() {
        return Err(MsgrError::DimensionMismatch("rhs vs operator".into()));
    }
    if a.n_rows() > FINE_DIRECT_LIMIT {
        return solve_cg(a, f, 1e-12, 10 * a.n_rows());
    }
    let chol = SparseCholesky::factor(a)?;
    let mut u = chol.solve(f);
    for _ in 0..REFINEMENT_STEPS {
        let r: Vec<f64> = a.matvec(&u).iter().zip(f).map(|(x, y)| y - x).collect();
        let d = chol.solve(&r);
        u.iter_mut().zip(&d).for_each(|(x, e)| *x += e);
    }
    Ok(u)
}

/// Conjugate gradients to relative residual `tol`.
pub fn solve_cg(a: &SparseMatrix, f: &[f64], tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>();
    let n = f.len();
    let mut x = vec![0.0; n];
    let mut r = f.to_vec();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let stop = tol * tol * rr;
    for _ in 0..max_iter {
        if rr <= stop {
            return Ok(x);
        }
        let ap = a.matvec(&p);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(MsgrError::IndefiniteOperator(pap));
        }
        let alpha = rr / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let next = dot(&r, &r);
        let beta = next / rr;
        rr = next;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    if rr <= stop {
        Ok(x)
    } else {
        Err(MsgrError::SingularSystem(format!("CG did not converge in {max_iter} iterations")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransientConfig {
    pub tau: f64,
    pub steps: usize,
}

impl TransientConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) || self.steps == 0 {
            return Err(MsgrError::InvalidParameter("transient needs tau > 0 and steps >= 1".into()));
        }
        Ok(())
    }

    pub fn final_time(&self) -> f64 {
        self.tau * self.steps as f64
    }
}

/// States at `t = 0, tau, ..., steps * tau`, in the fine space.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// Coarse states when solved through a prolongation.
    pub coarse: Option<Vec<Vec<f64>>>,
}

impl Trajectory {
    pub fn last(&self) -> &[f64] {
        self.states.last().expect("trajectory has the initial state")
    }
}

fn backward_euler(c: &SparseMatrix, a: &SparseMatrix, f: &[f64], u0: Vec<f64>, cfg: &TransientConfig) -> Result<Vec<Vec<f64>>> {
    let m = a.add_scaled(c, 1.0 / cfg.tau)?;
    let chol = SparseCholesky::factor(&m)?;
    let mut states = vec![u0];
    for _ in 0..cfg.steps {
        let prev = states.last().unwrap();
        let mut rhs = c.matvec(prev);
        for (r, fi) in rhs.iter_mut().zip(f) {
            *r = *r / cfg.tau + fi;
        }
        chol.solve_in_place(&mut rhs);
        states.push(rhs);
    }
    Ok(states)
}

/// Backward Euler for `C u' + A u = f` with diagonal `C`. With `p`, the
/// Galerkin-reduced system is integrated from the least-squares projection
/// of `u0` and mapped back to the fine space.
pub fn solve_parabolic(
    capacity: &[f64],
    a: &SparseMatrix,
    f: &[f64],
    u0: &[f64],
    cfg: &TransientConfig,
    p: Option<&SparseMatrix>,
) -> Result<Trajectory> {
    cfg.validate()?;
    let n = a.n_rows();
    if capacity.len() != n || f.len() != n || u0.len() != n {
        return Err(MsgrError::DimensionMismatch("capacity/rhs/initial state vs operator".into()));
    }
    if let Some(i) = capacity.iter().position(|&x| !(x > 0.0)) {
        return Err(MsgrError::InvalidParameter(format!("capacity at vertex {i} must be positive")));
    }
    let c = SparseMatrix::from_diagonal(capacity);
    let times = (0..=cfg.steps).map(|s| s as f64 * cfg.tau).collect();
    match p {
        None => Ok(Trajectory { times, states: backward_euler(&c, a, f, u0.to_vec(), cfg)?, coarse: None }),
        Some(p) => {
            let model = galerkin_coarse(a, f, p)?;
            let c_c = enforce_symmetry(&c, triple_product(&c, p)?)?;
            let ptp = triple_product(&SparseMatrix::identity(n), p)?;
            let uc0 = SparseCholesky::factor(&ptp)?.solve(&p.matvec_transpose(u0));
            let coarse = backward_euler(&c_c, &model.a_c, &model.f_c, uc0, cfg)?;
            let states = coarse.iter().map(|u| p.matvec(u)).collect();
            Ok(Trajectory { times, states, coarse: Some(coarse) })
        }
    }
}

/// Relative errors in percent: Euclidean `e1` and energy `e2`.
pub fn errors(u: &[f64], u_ms: &[f64], a: &SparseMatrix) -> Result<(f64, f64)> {
    if u.len() != u_ms.len() || u.len() != a.n_rows() {
        return Err(MsgrError::DimensionMismatch("solution lengths".into()));
    }
    let diff: Vec<f64> = u.iter().zip(u_ms).map(|(x, y)| x - y).collect();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nu = norm(u);
    if nu == 0.0 {
        return Err(MsgrError::InvalidParameter("reference solution is zero".into()));
    }
    let e1 = norm(&diff) / nu * 100.0;
    let e2 = crate::graph::norm_a(&diff, a)? / crate::graph::norm_a(u, a)? * 100.0;
    Ok((e1, e2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{apply_boundary, assemble_signed_laplacian, Edge, RobinCondition, WeightedGraph};
    use proptest::prelude::*;

    fn robin_path(n: usize) -> SparseMatrix {
        let g = WeightedGraph::new(n, (0..n - 1).map(|i| Edge { i, j: i + 1, w: 1.0 + i as f64 }).collect())
            .unwrap()
            .with_robin(vec![RobinCondition { vertex: 0, alpha: 0.5, value: 0.0 }])
            .unwrap();
        apply_boundary(&assemble_signed_laplacian(&g), &g).unwrap().0
    }

    #[test]
    fn identity_prolongation_is_exact() {
        let a = robin_path(6);
        let f = vec![1.0, 0.0, -2.0, 0.5, 0.0, 3.0];
        let model = galerkin_coarse(&a, &f, &SparseMatrix::identity(6)).unwrap();
        assert_eq!(model.a_c.triplets().collect::<Vec<_>>(), a.triplets().collect::<Vec<_>>());
        let (_, u_ms) = solve_steady(&model).unwrap();
        let u = solve_fine(&a, &f).unwrap();
        assert!(u.iter().zip(&u_ms).all(|(x, y)| (x - y).abs() < 1e-13));
        assert_eq!(errors(&u, &u_ms, &a).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn single_constant_column() {
        let a = robin_path(5);
        let f = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        let p = SparseMatrix::from_columns(5, &[(0..5).map(|i| (i, 1.0)).collect()]);
        let model = galerkin_coarse(&a, &f, &p).unwrap();
        let ones = vec![1.0; 5];
        assert!((model.a_c.get(0, 0) - a.quadratic_form(&ones)).abs() < 1e-14);
        assert_eq!(model.f_c, vec![15.0]);
    }

    #[test]
    fn dense_and_sparse_products_agree() {
        let a = robin_path(8);
        let dense = SparseMatrix::from_dense(&DMatrix::from_fn(8, 3, |i, j| ((i * 3 + j) as f64).sin()), 0.0);
        let sparse = triple_product(&a, &dense).unwrap();
        let oracle = dense.to_dense().transpose() * a.to_dense() * dense.to_dense();
        assert!((sparse.to_dense() - &oracle).amax() < 1e-12);
        let thin = SparseMatrix::from_columns(8, &[vec![(0, 1.0), (1, 0.5)], vec![(5, 2.0)]]);
        let oracle = thin.to_dense().transpose() * a.to_dense() * thin.to_dense();
        assert!((triple_product(&a, &thin).unwrap().to_dense() - oracle).amax() < 1e-12);
    }

    #[test]
    fn fine_solver_examples() {
        let a = SparseMatrix::from_diagonal(&[2.0]);
        assert!((solve_fine(&a, &[4.0]).unwrap()[0] - 2.0).abs() < 1e-15);
        let id = SparseMatrix::identity(3);
        assert_eq!(solve_fine(&id, &[1.0, 2.0, 3.0]).unwrap(), vec![1.0, 2.0, 3.0]);
        // 5-node path with zero end values and unit interior load
        let poisson = SparseMatrix::from_triplets(
            3,
            3,
            &[(0, 0, 2.0), (0, 1, -1.0), (1, 0, -1.0), (1, 1, 2.0), (1, 2, -1.0), (2, 1, -1.0), (2, 2, 2.0)],
        );
        let u = solve_fine(&poisson, &[1.0; 3]).unwrap();
        assert!(u.iter().zip([1.5, 2.0, 1.5]).all(|(x, y)| (x - y).abs() < 1e-14));
        let a = robin_path(30);
        let f: Vec<f64> = (0..30).map(|i| (i as f64).cos()).collect();
        let direct = solve_fine(&a, &f).unwrap();
        let cg = solve_cg(&a, &f, 1e-13, 1000).unwrap();
        let scale = direct.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        assert!(direct.iter().zip(&cg).all(|(x, y)| (x - y).abs() < 1e-9 * scale));
    }

    #[test]
    fn error_metric_examples() {
        let a = SparseMatrix::identity(2);
        assert_eq!(errors(&[1.0, 0.0], &[0.0, 0.0], &a).unwrap(), (100.0, 100.0));
        assert_eq!(errors(&[3.0, 4.0], &[3.0, 4.0], &a).unwrap(), (0.0, 0.0));
        assert!(errors(&[0.0, 0.0], &[1.0, 0.0], &a).is_err());
    }

    #[test]
    fn pure_mass_keeps_initial_state() {
        let a = SparseMatrix::zeros(3, 3);
        let cfg = TransientConfig { tau: 0.3, steps: 4 };
        let u0 = vec![1.0, -2.0, 0.5];
        let t = solve_parabolic(&[1.0, 2.0, 3.0], &a, &[0.0; 3], &u0, &cfg, None).unwrap();
        assert_eq!(t.states.len(), 5);
        for s in &t.states {
            assert!(s.iter().zip(&u0).all(|(x, y)| (x - y).abs() < 1e-15));
        }
    }

    #[test]
    fn scalar_decay_closed_form() {
        let (c, a, tau) = (2.0, 3.0, 0.25);
        let cfg = TransientConfig { tau, steps: 10 };
        let t = solve_parabolic(&[c], &SparseMatrix::from_diagonal(&[a]), &[0.0], &[1.0], &cfg, None).unwrap();
        for (n, s) in t.states.iter().enumerate() {
            let exact = (1.0 + a * tau / c).powi(-(n as i32));
            assert!((s[0] - exact).abs() < 1e-15 * exact.max(1e-300) + 1e-16);
        }
        assert_eq!(t.times.last(), Some(&2.5));
    }

    #[test]
    fn identity_coarse_trajectory_matches_fine() {
        let a = robin_path(10);
        let cap: Vec<f64> = (0..10).map(|i| 0.1 + 0.07 * i as f64).collect();
        let f: Vec<f64> = (0..10).map(|i| if i == 0 { 1.0 } else { 0.0 }).collect();
        let u0 = vec![0.0; 10];
        let cfg = TransientConfig { tau: 5.0, steps: 20 };
        let fine = solve_parabolic(&cap, &a, &f, &u0, &cfg, None).unwrap();
        let coarse = solve_parabolic(&cap, &a, &f, &u0, &cfg, Some(&SparseMatrix::identity(10))).unwrap();
        for (x, y) in fine.states.iter().zip(&coarse.states) {
            let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
            assert!(x.iter().zip(y).all(|(p, q)| (p - q).abs() <= 1e-12 * scale));
        }
        assert!(solve_parabolic(&[0.0; 10], &a, &f, &u0, &cfg, None).is_err());
    }

    proptest! {
        #[test]
        fn galerkin_solution_is_energy_optimal(seed in 0u64..60, nc in 1usize..5) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let a = robin_path(9);
            let f: Vec<f64> = (0..9).map(|_| rng.random_range(-1.0..1.0)).collect();
            let p = SparseMatrix::from_dense(&DMatrix::from_fn(9, nc, |_, _| rng.random_range(-1.0..1.0)), 0.0);
            let model = galerkin_coarse(&a, &f, &p).unwrap();
            let (u_c, u_ms) = solve_steady(&model).unwrap();
            let u = solve_fine(&a, &f).unwrap();
            let energy = |v: &[f64]| {
                let d: Vec<f64> = u.iter().zip(v).map(|(x, y)| x - y).collect();
                a.quadratic_form(&d)
            };
            let base = energy(&u_ms);
            let residual = model.restrict(&a.matvec(&u_ms).iter().zip(&f).map(|(x, y)| y - x).collect::<Vec<_>>());
            prop_assert!(residual.iter().all(|r| r.abs() < 1e-9 * f.iter().fold(0.0f64, |m, x| m.max(x.abs()))));
            for _ in 0..5 {
                let pert: Vec<f64> = u_c.iter().map(|x| x + rng.random_range(-0.1..0.1)).collect();
                prop_assert!(energy(&p.matvec(&pert)) >= base - 1e-10);
            }
        }
    }
}
