//! Brute-force references for the spatial queries.

#![allow(dead_code)]

use pointsift::geometry::{dist2, octant_of, FpsStart, Point3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Per-octant nearest in-radius neighbor by exhaustive scan.
pub fn s8n_brute(points: &[Point3], q: usize, radius: f64) -> [usize; 8] {
    let mut best = [(f64::INFINITY, q); 8];
    for (j, p) in points.iter().enumerate() {
        if j == q {
            continue;
        }
        let d = dist2(p, &points[q]);
        if d > radius * radius {
            continue;
        }
        let off = [p[0] - points[q][0], p[1] - points[q][1], p[2] - points[q][2]];
        let o = octant_of(&off);
        if d < best[o].0 {
            best[o] = (d, j);
        }
    }
    best.map(|b| b.1)
}

/// First `max_k` in-radius indices, padded with the first.
pub fn ball_brute(points: &[Point3], center: &Point3, radius: f64, max_k: usize) -> Vec<usize> {
    let mut hits: Vec<usize> = (0..points.len())
        .filter(|&j| dist2(&points[j], center) <= radius * radius)
        .take(max_k)
        .collect();
    if let Some(&first) = hits.first() {
        hits.resize(max_k, first);
    }
    hits
}

pub fn knn_brute(points: &[Point3], q: &Point3, k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| dist2(&points[a], q).total_cmp(&dist2(&points[b], q)).then(a.cmp(&b)));
    order.truncate(k);
    order
}

/// Recomputes every distance to the selected set from scratch at each step.
pub fn fps_brute(points: &[Point3], m: usize, first: usize) -> Vec<usize> {
    let mut chosen = vec![first];
    while chosen.len() < m {
        let mut best = (f64::NEG_INFINITY, 0);
        for j in 0..points.len() {
            let d = chosen.iter().map(|&c| dist2(&points[j], &points[c])).fold(f64::INFINITY, f64::min);
            if d > best.0 {
                best = (d, j);
            }
        }
        chosen.push(best.1);
    }
    chosen
}

pub fn canonical_first(points: &[Point3]) -> usize {
    (0..points.len())
        .min_by(|&a, &b| {
            let (p, q) = (points[a], points[b]);
            p[0].total_cmp(&q[0])
                .then(p[1].total_cmp(&q[1]))
                .then(p[2].total_cmp(&q[2]))
                .then(a.cmp(&b))
        })
        .unwrap()
}

pub fn fps_first(points: &[Point3], start: FpsStart) -> usize {
    match start {
        FpsStart::Canonical => canonical_first(points),
        FpsStart::Index(i) => i,
        FpsStart::Seeded(s) => ChaCha8Rng::seed_from_u64(s).gen_range(0..points.len()),
    }
}

/// A cloud mixing uniform points, a tight cluster and exact duplicates.
pub fn mixed_cloud(n: usize, rng: &mut impl Rng) -> Vec<Point3> {
    let mut pts: Vec<Point3> = Vec::with_capacity(n);
    while pts.len() < n {
        let p = match rng.gen_range(0..10) {
            0..=5 => [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
            6..=8 => [0.3 + rng.gen_range(-0.02..0.02), -0.1 + rng.gen_range(-0.02..0.02), rng.gen_range(-0.02..0.02)],
            _ if !pts.is_empty() => pts[rng.gen_range(0..pts.len())],
            _ => [0.0; 3],
        };
        pts.push(p);
    }
    pts
}
