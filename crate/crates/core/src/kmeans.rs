//! Lloyd's k-means with k-means++ seeding on the rows of a dense matrix.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const MAX_ITER: usize = 300;
pub const REL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    /// Cluster label per row, in `0..k`.
    pub labels: Vec<usize>,
    pub inertia: f64,
    pub iterations: usize,
    /// Number of empty clusters that had to be refilled.
    pub repairs: usize,
}

fn dist2(x: &DMatrix<f64>, i: usize, c: &DMatrix<f64>, j: usize) -> f64 {
    (0..x.ncols()).map(|a| (x[(i, a)] - c[(j, a)]).powi(2)).sum()
}

/// Scales each row to unit Euclidean length; zero rows stay zero.
pub fn normalize_rows(x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut y = x.clone();
    for mut row in y.row_iter_mut() {
        let n = row.norm();
        if n > 0.0 {
            row /= n;
        }
    }
    y
}

/// Best of `n_init` seeded runs (lowest inertia, earliest on ties).
pub fn kmeans(x: &DMatrix<f64>, k: usize, seed: u64, n_init: usize) -> KMeans {
    let n = x.nrows();
    assert!(k >= 1 && k <= n, "k = {k} must lie in 1..={n}");
    if k == n {
        return KMeans { labels: (0..n).collect(), inertia: 0.0, iterations: 0, repairs: 0 };
    }
    if k == 1 {
        let centers = centers_of(x, &vec![0; n], 1);
        let inertia = (0..n).map(|i| dist2(x, i, &centers, 0)).sum();
        return KMeans { labels: vec![0; n], inertia, iterations: 0, repairs: 0 };
    }
    let mut best: Option<KMeans> = None;
    for run in 0..n_init.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x100_0000_01b3).wrapping_add(run as u64));
        let r = lloyd(x, plus_plus(x, k, &mut rng));
        if best.as_ref().is_none_or(|b| r.inertia < b.inertia) {
            best = Some(r);
        }
    }
    best.unwrap()
}

fn plus_plus(x: &DMatrix<f64>, k: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let n = x.nrows();
    let mut centers = DMatrix::zeros(k, x.ncols());
    let first = rng.random_range(0..n);
    centers.set_row(0, &x.row(first));
    let mut d: Vec<f64> = (0..n).map(|i| dist2(x, i, &centers, 0)).collect();
    for c in 1..k {
        let total: f64 = d.iter().sum();
        let pick = if total > 0.0 {
            let mut t = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &di) in d.iter().enumerate() {
                if di > 0.0 && t < di {
                    pick = i;
                    break;
                }
                t -= di;
            }
            // guard against rounding past the end onto a zero-weight row
            if d[pick] == 0.0 {
                pick = d.iter().rposition(|&v| v > 0.0).unwrap();
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        centers.set_row(c, &x.row(pick));
        for (i, di) in d.iter_mut().enumerate() {
            *di = di.min(dist2(x, i, &centers, c));
        }
    }
    centers
}

fn centers_of(x: &DMatrix<f64>, labels: &[usize], k: usize) -> DMatrix<f64> {
    let mut c = DMatrix::zeros(k, x.ncols());
    let mut count = vec![0usize; k];
    for (i, &l) in labels.iter().enumerate() {
        count[l] += 1;
        for a in 0..x.ncols() {
            c[(l, a)] += x[(i, a)];
        }
    }
    for (l, &m) in count.iter().enumerate() {
        if m > 0 {
            for a in 0..x.ncols() {
                c[(l, a)] /= m as f64;
            }
        }
    }
    c
}

fn assign(x: &DMatrix<f64>, centers: &DMatrix<f64>, labels: &mut [usize]) -> f64 {
    let mut inertia = 0.0;
    for (i, label) in labels.iter_mut().enumerate() {
        let (mut best, mut bd) = (0, f64::INFINITY);
        for c in 0..centers.nrows() {
            let d = dist2(x, i, centers, c);
            if d < bd {
                best = c;
                bd = d;
            }
        }
        *label = best;
        inertia += bd;
    }
    inertia
}

/// Moves the point of the largest cluster farthest from its center into
/// each empty cluster. Returns the number of refills.
fn repair(x: &DMatrix<f64>, labels: &mut [usize], k: usize) -> usize {
    let mut repairs = 0;
    loop {
        let mut count = vec![0usize; k];
        for &l in labels.iter() {
            count[l] += 1;
        }
        let Some(empty) = count.iter().position(|&c| c == 0) else { return repairs };
        let largest = (0..k).max_by(|&a, &b| count[a].cmp(&count[b]).then(b.cmp(&a))).unwrap();
        let centers = centers_of(x, labels, k);
        let far = (0..labels.len())
            .filter(|&i| labels[i] == largest)
            .max_by(|&a, &b| dist2(x, a, &centers, largest).total_cmp(&dist2(x, b, &centers, largest)).then(b.cmp(&a)))
            .unwrap();
        labels[far] = empty;
        repairs += 1;
    }
}

fn lloyd(x: &DMatrix<f64>, mut centers: DMatrix<f64>) -> KMeans {
    let k = centers.nrows();
    let mut labels = vec![0usize; x.nrows()];
    let mut prev = f64::INFINITY;
    let mut repairs = 0;
    let mut iterations = 0;
    let mut inertia;
    loop {
        iterations += 1;
        assign(x, &centers, &mut labels);
        repairs += repair(x, &mut labels, k);
        centers = centers_of(x, &labels, k);
        inertia = (0..x.nrows()).map(|i| dist2(x, i, &centers, labels[i])).sum::<f64>();
        let converged = inertia == 0.0 || (prev - inertia).abs() <= REL_TOL * prev;
        if converged || iterations >= MAX_ITER {
            break;
        }
        prev = inertia;
    }
    KMeans { labels, inertia, iterations, repairs }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop_assert, prop_assert_eq, proptest};

    fn blobs() -> DMatrix<f64> {
        let pts = [[0.0, 0.0], [0.1, 0.0], [0.0, 0.1], [5.0, 5.0], [5.1, 5.0], [5.0, 5.1], [9.0, 0.0], [9.1, 0.1]];
        DMatrix::from_fn(8, 2, |i, j| pts[i][j])
    }

    #[test]
    fn separates_blobs() {
        let r = kmeans(&blobs(), 3, 0, 4);
        assert_eq!(r.labels[0], r.labels[1]);
        assert_eq!(r.labels[0], r.labels[2]);
        assert_eq!(r.labels[3], r.labels[5]);
        assert_eq!(r.labels[6], r.labels[7]);
        assert_ne!(r.labels[0], r.labels[3]);
        assert_ne!(r.labels[0], r.labels[6]);
        assert_ne!(r.labels[3], r.labels[6]);
    }

    #[test]
    fn trivial_k() {
        let x = blobs();
        assert_eq!(kmeans(&x, 1, 0, 1).labels, vec![0; 8]);
        assert_eq!(kmeans(&x, 8, 0, 1).labels, (0..8).collect::<Vec<_>>());
    }

    #[test]
    fn identical_points_still_fill_every_cluster() {
        let x = DMatrix::from_element(6, 2, 1.0);
        let r = kmeans(&x, 3, 1, 2);
        for c in 0..3 {
            assert!(r.labels.contains(&c));
        }
    }

    #[test]
    fn normalization_keeps_zero_rows() {
        let x = DMatrix::from_row_slice(2, 2, &[3.0, 4.0, 0.0, 0.0]);
        let y = normalize_rows(&x);
        assert!((y[(0, 0)] - 0.6).abs() < 1e-15 && (y[(0, 1)] - 0.8).abs() < 1e-15);
        assert_eq!(y[(1, 0)], 0.0);
    }

    proptest! {
        #[test]
        fn labels_cover_all_clusters(seed in 0u64..100, n in 2usize..30, k in 1usize..8) {
            let k = k.min(n);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = DMatrix::from_fn(n, 3, |_, _| rng.random_range(-1.0..1.0));
            let r = kmeans(&x, k, seed, 2);
            for c in 0..k {
                prop_assert!(r.labels.contains(&c));
            }
            prop_assert_eq!(&r, &kmeans(&x, k, seed, 2));
        }
    }
}
