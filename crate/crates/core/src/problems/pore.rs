//! Synthetic two-scale pore networks with Hagen–Poiseuille throat conductances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{MsgrError, Result};
use crate::graph::{Edge, Point, RobinCondition, WeightedGraph};

/// Conductance of a cylindrical throat: `pi r^4 / (8 mu l)`.
pub fn hagen_poiseuille(radius: f64, viscosity: f64, length: f64) -> f64 {
    std::f64::consts::PI * radius.powi(4) / (8.0 * viscosity * length)
}

/// Straight high-conductance path through the lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(tag = "along", rename_all = "snake_case")]
pub enum Channel {
    /// Row of pores at fixed `(y, z)`, running in x.
    X { y: usize, z: usize },
    /// Column of pores at fixed `(x, z)`, running in y.
    Y { x: usize, z: usize },
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(default)]
pub struct PoreNetworkSpec {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    /// Lattice spacing between pore centers.
    pub spacing: f64,
    /// Uniform pore displacement, as a fraction of the spacing.
    pub jitter: f64,
    /// Probability of an extra diagonal throat per lattice cell (xy-plane).
    pub diagonal_fraction: f64,
    pub fine_radius: (f64, f64),
    pub coarse_radius: (f64, f64),
    pub viscosity: f64,
    pub channels: Vec<Channel>,
    pub capacity: (f64, f64),
    /// Robin coefficient at channel inlets (`x = 0` end of each x-channel).
    pub inlet_alpha: f64,
    pub inlet_value: f64,
}

impl Default for PoreNetworkSpec {
    fn default() -> Self {
        Self {
            nx: 64,
            ny: 64,
            nz: 1,
            spacing: 1.0,
            jitter: 0.2,
            diagonal_fraction: 0.1,
            fine_radius: (0.2, 0.6),
            coarse_radius: (1.2, 1.6),
            viscosity: 1.0,
            channels: vec![Channel::X { y: 21, z: 0 }, Channel::X { y: 42, z: 0 }, Channel::Y { x: 32, z: 0 }],
            capacity: (0.1, 0.82),
            inlet_alpha: 1.0,
            inlet_value: 1.0,
        }
    }
}

impl PoreNetworkSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(MsgrError::InvalidParameter(m.to_string()));
        if self.nx < 2 || self.ny < 1 || self.nz < 1 {
            return bad("lattice needs nx >= 2, ny >= 1, nz >= 1");
        }
        if !(self.spacing > 0.0 && self.viscosity > 0.0) {
            return bad("spacing and viscosity must be positive");
        }
        for (lo, hi) in [self.fine_radius, self.coarse_radius] {
            if !(lo > 0.0 && hi >= lo) {
                return bad("radius ranges need 0 < min <= max");
            }
        }
        if !(self.capacity.0 > 0.0 && self.capacity.1 >= self.capacity.0) {
            return bad("capacity range needs 0 < c_min <= c_max");
        }
        if !(0.0..0.5).contains(&self.jitter) || !(0.0..=1.0).contains(&self.diagonal_fraction) {
            return bad("jitter must be in [0, 0.5) and diagonal_fraction in [0, 1]");
        }
        if !(self.inlet_alpha > 0.0) {
            return bad("inlet_alpha must be positive");
        }
        for c in &self.channels {
            let ok = match *c {
                Channel::X { y, z } => y < self.ny && z < self.nz,
                Channel::Y { x, z } => x < self.nx && z < self.nz,
            };
            if !ok {
                return bad("channel outside the lattice");
            }
        }
        Ok(())
    }

    fn id(&self, x: usize, y: usize, z: usize) -> usize {
        (z * self.ny + y) * self.nx + x
    }

    fn on_channel(&self, a: (usize, usize, usize), b: (usize, usize, usize)) -> bool {
        self.channels.iter().any(|c| match *c {
            Channel::X { y, z } => a.1 == y && b.1 == y && a.2 == z && b.2 == z,
            Channel::Y { x, z } => a.0 == x && b.0 == x && a.2 == z && b.2 == z,
        })
    }
}

/// Generates a lattice pore network. Throats along channels draw radii from
/// the coarse range, all others from the fine range. Deterministic per seed.
pub fn gen_pore_network(spec: &PoreNetworkSpec, seed: u64) -> Result<WeightedGraph> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = spec.nx * spec.ny * spec.nz;

    let mut coords: Vec<Point> = Vec::with_capacity(n);
    for z in 0..spec.nz {
        for y in 0..spec.ny {
            for x in 0..spec.nx {
                let mut p = [x as f64, y as f64, z as f64];
                for (axis, c) in p.iter_mut().enumerate() {
                    let free = match axis {
                        0 => spec.nx > 1,
                        1 => spec.ny > 1,
                        _ => spec.nz > 1,
                    };
                    if free && spec.jitter > 0.0 {
                        *c += rng.random_range(-spec.jitter..spec.jitter);
                    }
                    *c *= spec.spacing;
                }
                coords.push(p);
            }
        }
    }

    let mut sample = |range: (f64, f64)| {
        if range.1 > range.0 {
            rng.random_range(range.0..range.1)
        } else {
            range.0
        }
    };
    let dist = |a: usize, b: usize| {
        let (p, q) = (coords[a], coords[b]);
        ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt()
    };

    let mut edges = Vec::new();
    for z in 0..spec.nz {
        for y in 0..spec.ny {
            for x in 0..spec.nx {
                let a = (x, y, z);
                let mut neighbors = Vec::with_capacity(3);
                if x + 1 < spec.nx {
                    neighbors.push((x + 1, y, z));
                }
                if y + 1 < spec.ny {
                    neighbors.push((x, y + 1, z));
                }
                if z + 1 < spec.nz {
                    neighbors.push((x, y, z + 1));
                }
                for b in neighbors {
                    let range = if spec.on_channel(a, b) { spec.coarse_radius } else { spec.fine_radius };
                    let r = sample(range);
                    let (i, j) = (spec.id(a.0, a.1, a.2), spec.id(b.0, b.1, b.2));
                    edges.push(Edge { i, j, w: hagen_poiseuille(r, spec.viscosity, dist(i, j)) });
                }
            }
        }
    }
    // Diagonal throats are drawn after the lattice so that the lattice part
    // does not depend on diagonal_fraction.
    let mut diag_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    for z in 0..spec.nz {
        for y in 0..spec.ny.saturating_sub(1) {
            for x in 0..spec.nx - 1 {
                if diag_rng.random::<f64>() < spec.diagonal_fraction {
                    let (i, j) = if diag_rng.random::<bool>() {
                        (spec.id(x, y, z), spec.id(x + 1, y + 1, z))
                    } else {
                        (spec.id(x + 1, y, z), spec.id(x, y + 1, z))
                    };
                    let r = diag_rng.random_range(spec.fine_radius.0..=spec.fine_radius.1);
                    edges.push(Edge { i, j, w: hagen_poiseuille(r, spec.viscosity, dist(i, j)) });
                }
            }
        }
    }

    let capacity = (0..n)
        .map(|_| if spec.capacity.1 > spec.capacity.0 { rng.random_range(spec.capacity.0..spec.capacity.1) } else { spec.capacity.0 })
        .collect();

    let mut inlets: Vec<usize> = spec
        .channels
        .iter()
        .filter_map(|c| match *c {
            Channel::X { y, z } => Some(spec.id(0, y, z)),
            Channel::Y { .. } => None,
        })
        .collect();
    if inlets.is_empty() {
        inlets.push(spec.id(0, spec.ny / 2, spec.nz / 2));
    }
    inlets.sort_unstable();
    inlets.dedup();
    let robin = inlets.into_iter().map(|v| RobinCondition { vertex: v, alpha: spec.inlet_alpha, value: spec.inlet_value }).collect();

    let dim = if spec.nz > 1 { 3 } else { 2 };
    WeightedGraph::new(n, edges)?.with_coords(dim, coords)?.with_capacity(capacity)?.with_robin(robin)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conductance_formula() {
        let mu = std::f64::consts::PI / 8.0;
        assert!((hagen_poiseuille(1.0, mu, 1.0) - 1.0).abs() < 1e-15);
        let w = hagen_poiseuille(0.3, 2.0, 1.5);
        assert!((hagen_poiseuille(0.6, 2.0, 1.5) / w - 16.0).abs() < 1e-12);
    }

    #[test]
    fn default_network_contrast_and_structure() {
        let g = gen_pore_network(&PoreNetworkSpec::default(), 0).unwrap();
        assert_eq!(g.n_vertices(), 64 * 64);
        assert!(g.all_weights_positive());
        let (lo, hi) = g.edges().iter().fold((f64::MAX, 0.0f64), |(lo, hi), e| (lo.min(e.w), hi.max(e.w)));
        let ratio = hi / lo;
        assert!((1e3..=1e6).contains(&ratio), "contrast {ratio}");
        assert_eq!(g.connected_components().len(), 1);
        let c = g.capacity().unwrap();
        assert!(c.iter().all(|&x| (0.1..=0.82).contains(&x)));
        assert_eq!(g.robin().len(), 2);
    }

    #[test]
    fn reproducible_per_seed() {
        let spec = PoreNetworkSpec { nx: 10, ny: 8, ..Default::default() };
        let spec = PoreNetworkSpec { channels: vec![Channel::X { y: 3, z: 0 }], ..spec };
        let a = gen_pore_network(&spec, 7).unwrap();
        let b = gen_pore_network(&spec, 7).unwrap();
        let c = gen_pore_network(&spec, 8).unwrap();
        assert_eq!(a.edges(), b.edges());
        assert_eq!(a.coords(), b.coords());
        assert_eq!(a.capacity(), b.capacity());
        assert_ne!(a.edges(), c.edges());
    }

    #[test]
    fn three_dimensional_lattice() {
        let spec = PoreNetworkSpec { nx: 4, ny: 3, nz: 2, channels: vec![], diagonal_fraction: 0.0, ..Default::default() };
        let g = gen_pore_network(&spec, 1).unwrap();
        assert_eq!(g.dim(), 3);
        assert_eq!(g.n_edges(), 3 * 3 * 2 + 4 * 2 * 2 + 4 * 3);
    }

    #[test]
    fn invalid_specs_rejected() {
        let bad = PoreNetworkSpec { viscosity: 0.0, ..Default::default() };
        assert!(gen_pore_network(&bad, 0).is_err());
        let bad = PoreNetworkSpec { capacity: (1.0, 0.5), ..Default::default() };
        assert!(gen_pore_network(&bad, 0).is_err());
        let bad = PoreNetworkSpec { channels: vec![Channel::X { y: 100, z: 0 }], ..Default::default() };
        assert!(gen_pore_network(&bad, 0).is_err());
    }
}
