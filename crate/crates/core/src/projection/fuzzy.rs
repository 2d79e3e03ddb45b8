use std::collections::BTreeMap;

use super::NeighborGraph;

pub const BISECTION_ITERATIONS: usize = 64;
pub const BISECTION_TOLERANCE: f64 = 1e-5;

/// Symmetric fuzzy membership graph.
#[derive(Debug, Clone, PartialEq)]
pub struct FuzzyGraph {
    pub n: usize,
    /// Undirected edges `(i, j, w)` with `i < j`, sorted, weights in (0, 1].
    pub edges: Vec<(usize, usize, f64)>,
    /// Distance to the nearest neighbor of each point.
    pub rho: Vec<f64>,
    pub sigma: Vec<f64>,
    /// Pre-symmetrization memberships, aligned with the neighbor lists.
    pub directed: Vec<Vec<(usize, f64)>>,
    /// Whether the bandwidth search met its tolerance for each point.
    pub converged: Vec<bool>,
}

#[inline]
fn membership(d: f64, rho: f64, sigma: f64) -> f64 {
    (-(d - rho).max(0.0) / sigma).exp()
}

/// Solves sum_j exp(-max(0, d_j - rho) / sigma) = target for sigma by
/// bisection, doubling the upper bracket until it is found.
fn solve_sigma(distances: &[f64], rho: f64, target: f64) -> (f64, bool) {
    let (mut lo, mut hi, mut mid) = (0.0_f64, f64::INFINITY, 1.0_f64);
    for _ in 0..BISECTION_ITERATIONS {
        let psum: f64 = distances.iter().map(|&d| membership(d, rho, mid)).sum();
        if (psum - target).abs() < BISECTION_TOLERANCE {
            return (mid, true);
        }
        if psum > target {
            hi = mid;
            mid = (lo + hi) / 2.0;
        } else {
            lo = mid;
            mid = if hi.is_infinite() { mid * 2.0 } else { (lo + hi) / 2.0 };
        }
    }
    (mid, false)
}

/// Local fuzzy simplicial sets combined by the probabilistic t-conorm
/// `w_ij + w_ji - w_ij * w_ji`.
pub fn fuzzy_simplicial_set(g: &NeighborGraph) -> FuzzyGraph {
    let n = g.n_points();
    let target = (g.k as f64).log2();
    let mut rho = Vec::with_capacity(n);
    let mut sigma = Vec::with_capacity(n);
    let mut converged = Vec::with_capacity(n);
    let mut directed = Vec::with_capacity(n);
    for i in 0..n {
        let dists = &g.distances[i];
        let r = dists[0];
        let (s, ok) = solve_sigma(dists, r, target);
        if !ok {
            log::warn!("bandwidth search for point {i} did not converge; using bracket bound {s}");
        }
        directed.push(
            g.indices[i]
                .iter()
                .zip(dists)
                .map(|(&j, &d)| (j, membership(d, r, s)))
                .collect::<Vec<_>>(),
        );
        rho.push(r);
        sigma.push(s);
        converged.push(ok);
    }

    let edges = symmetrize(&directed);

    FuzzyGraph {
        n,
        edges,
        rho,
        sigma,
        directed,
        converged,
    }
}

/// Probabilistic t-conorm of directed memberships into an undirected edge
/// list; absent directions count as zero.
pub(crate) fn symmetrize(directed: &[Vec<(usize, f64)>]) -> Vec<(usize, usize, f64)> {
    let mut pairs: BTreeMap<(usize, usize), (f64, f64)> = BTreeMap::new();
    for (i, row) in directed.iter().enumerate() {
        for &(j, w) in row {
            if i == j {
                continue;
            }
            let entry = pairs.entry((i.min(j), i.max(j))).or_default();
            if i < j {
                entry.0 = w;
            } else {
                entry.1 = w;
            }
        }
    }
    pairs
        .into_iter()
        .map(|((i, j), (a, b))| (i, j, a + b - a * b))
        .filter(|&(_, _, w)| w > 0.0)
        .collect()
}
