use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{dist2, Point3};
use crate::error::{Error, Result};

/// Neighbor count used for feature interpolation.
pub const INTERP_K: usize = 3;
/// Regularizer in the inverse squared distance weights.
pub const INTERP_EPSILON: f64 = 1e-8;

/// How farthest point sampling picks its first centroid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FpsStart {
    /// Uniform draw from a generator seeded with the value.
    Seeded(u64),
    /// Lexicographically smallest `(x, y, z)`, lower index on ties.
    /// Independent of point order and of translations.
    Canonical,
    /// A fixed point index.
    Index(usize),
}

/// Greedy farthest point sampling; returns indices in selection order.
///
/// Each step picks the point maximizing its squared distance to the
/// already-selected set, lower index on ties.
pub fn farthest_point_sampling(positions: &[Point3], m: usize, start: FpsStart) -> Result<Vec<usize>> {
    let n = positions.len();
    if m == 0 || m > n {
        return Err(Error::invalid(format!("cannot sample {m} centroids from {n} points")));
    }
    let first = match start {
        FpsStart::Seeded(seed) => ChaCha8Rng::seed_from_u64(seed).gen_range(0..n),
        FpsStart::Canonical => canonical_start(positions),
        FpsStart::Index(i) if i < n => i,
        FpsStart::Index(i) => return Err(Error::invalid(format!("start index {i} out of range"))),
    };
    let mut chosen = Vec::with_capacity(m);
    chosen.push(first);
    let mut min_d2: Vec<f64> = positions.iter().map(|p| dist2(p, &positions[first])).collect();
    while chosen.len() < m {
        let mut best = 0;
        let mut best_d = f64::NEG_INFINITY;
        for (i, &d) in min_d2.iter().enumerate() {
            if d > best_d {
                best_d = d;
                best = i;
            }
        }
        chosen.push(best);
        let c = positions[best];
        for (d, p) in min_d2.iter_mut().zip(positions) {
            let nd = dist2(p, &c);
            if nd < *d {
                *d = nd;
            }
        }
    }
    Ok(chosen)
}

fn canonical_start(positions: &[Point3]) -> usize {
    let mut best = 0;
    for (i, p) in positions.iter().enumerate().skip(1) {
        let b = &positions[best];
        let less = p[0]
            .total_cmp(&b[0])
            .then(p[1].total_cmp(&b[1]))
            .then(p[2].total_cmp(&b[2]))
            .is_lt();
        if less {
            best = i;
        }
    }
    best
}

/// Inverse squared distance weights over the `k` nearest known positions.
///
/// Uses all known positions when fewer than `k` exist. Weights sum to 1.
pub fn interpolation_weights(known: &[Point3], query: &Point3, k: usize, epsilon: f64) -> (Vec<usize>, Vec<f64>) {
    let k = k.min(known.len());
    // Insertion into a tiny sorted buffer; k is 3 in practice.
    let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
    for (j, p) in known.iter().enumerate() {
        let d = dist2(p, query);
        if best.len() == k && d >= best[k - 1].0 {
            continue;
        }
        let pos = best.partition_point(|&(bd, _)| bd <= d);
        best.insert(pos, (d, j));
        best.truncate(k);
    }
    let raw: Vec<f64> = best.iter().map(|&(d, _)| 1.0 / (d + epsilon)).collect();
    let total: f64 = raw.iter().sum();
    (best.iter().map(|b| b.1).collect(), raw.iter().map(|w| w / total).collect())
}
