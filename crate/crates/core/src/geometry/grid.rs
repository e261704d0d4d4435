use std::collections::HashMap;

use super::{dist2, octant_of, Point3, PointCloud};
use crate::error::{Error, Result};

type Cell = [i64; 3];

/// Uniform-grid index over an immutable set of positions.
///
/// Each point lives in cell `floor(p / cell_size)`; cell member lists are
/// kept in ascending point-index order.
#[derive(Debug, Clone)]
pub struct SpatialIndex<'a> {
    positions: &'a [Point3],
    cell_size: f64,
    cells: HashMap<Cell, Vec<usize>>,
}

/// Nearest in-radius neighbor per octant of a query point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OctantNeighborhood {
    /// Indexed by octant code (x = bit 0, y = bit 1, z = bit 2).
    pub neighbor_indices: [usize; 8],
    pub self_duplicated: [bool; 8],
}

/// Fixed-length neighbor list; slots past `found` repeat the first hit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborList {
    pub indices: Vec<usize>,
    pub found: usize,
}

impl NeighborList {
    /// True when the query found no point at all; `indices` is then empty.
    pub fn is_empty(&self) -> bool {
        self.found == 0
    }
}

impl<'a> SpatialIndex<'a> {
    pub fn build(cloud: &'a PointCloud, cell_size: f64) -> Result<Self> {
        Self::from_positions(cloud.positions(), cell_size)
    }

    pub fn from_positions(positions: &'a [Point3], cell_size: f64) -> Result<Self> {
        if !(cell_size > 0.0) || !cell_size.is_finite() {
            return Err(Error::invalid(format!("cell_size must be positive, got {cell_size}")));
        }
        if positions.is_empty() {
            return Err(Error::RejectedInput("cannot index an empty cloud".into()));
        }
        let mut cells: HashMap<Cell, Vec<usize>> = HashMap::new();
        for (i, p) in positions.iter().enumerate() {
            if p.iter().any(|c| !c.is_finite()) {
                return Err(Error::RejectedInput(format!("point {i} has a non-finite coordinate")));
            }
            cells.entry(cell_of(p, cell_size)).or_default().push(i);
        }
        Ok(SpatialIndex {
            positions,
            cell_size,
            cells,
        })
    }

    pub fn positions(&self) -> &'a [Point3] {
        self.positions
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn occupied_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn cell_members(&self, cell: [i64; 3]) -> &[usize] {
        self.cells.get(&cell).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Calls `visit` for every point in the cells a radius-`radius` query
    /// around `center` must inspect. Visit order is cell order, not index order.
    fn for_each_candidate(&self, center: &Point3, radius: f64, mut visit: impl FnMut(usize)) {
        let span = (radius / self.cell_size).ceil().max(1.0) as i64;
        let c = cell_of(center, self.cell_size);
        // Sparse clouds with large radii: walking the map beats walking empty cells.
        let window = (2 * span + 1).pow(3) as usize;
        if window > self.cells.len() {
            for (cell, members) in &self.cells {
                if (0..3).all(|k| (cell[k] - c[k]).abs() <= span) {
                    members.iter().for_each(|&i| visit(i));
                }
            }
            return;
        }
        for dz in -span..=span {
            for dy in -span..=span {
                for dx in -span..=span {
                    if let Some(members) = self.cells.get(&[c[0] + dx, c[1] + dy, c[2] + dz]) {
                        members.iter().for_each(|&i| visit(i));
                    }
                }
            }
        }
    }

    /// Stacked 8-neighborhood search around point `query`.
    ///
    /// For each octant, the closest other point within `radius` whose offset
    /// falls in that octant; empty octants fall back to the query itself.
    pub fn s8n(&self, query: usize, radius: f64) -> Result<OctantNeighborhood> {
        if !(radius > 0.0) {
            return Err(Error::invalid(format!("radius must be positive, got {radius}")));
        }
        let q = self
            .positions
            .get(query)
            .ok_or_else(|| Error::invalid(format!("query index {query} out of range")))?;
        let r2 = radius * radius;
        let mut best = [(f64::INFINITY, usize::MAX); 8];
        self.for_each_candidate(q, radius, |j| {
            if j == query {
                return;
            }
            let p = &self.positions[j];
            let off = [p[0] - q[0], p[1] - q[1], p[2] - q[2]];
            let d = dist2(p, q);
            if d > r2 {
                return;
            }
            let o = octant_of(&off);
            if (d, j) < best[o] {
                best[o] = (d, j);
            }
        });
        let mut out = OctantNeighborhood {
            neighbor_indices: [query; 8],
            self_duplicated: [true; 8],
        };
        for (o, &(_, j)) in best.iter().enumerate() {
            if j != usize::MAX {
                out.neighbor_indices[o] = j;
                out.self_duplicated[o] = false;
            }
        }
        Ok(out)
    }

    /// Up to `max_k` in-radius points taken in ascending index order.
    pub fn ball_query(&self, center: &Point3, radius: f64, max_k: usize) -> Result<NeighborList> {
        if !(radius > 0.0) {
            return Err(Error::invalid(format!("radius must be positive, got {radius}")));
        }
        if max_k == 0 {
            return Err(Error::invalid("max_k must be at least 1"));
        }
        let r2 = radius * radius;
        let mut hits = Vec::new();
        self.for_each_candidate(center, radius, |j| {
            if dist2(&self.positions[j], center) <= r2 {
                hits.push(j);
            }
        });
        hits.sort_unstable();
        hits.truncate(max_k);
        let found = hits.len();
        if found > 0 {
            hits.resize(max_k, hits[0]);
        }
        Ok(NeighborList { indices: hits, found })
    }

    /// The `k` nearest points, ascending distance, ties to the lower index.
    pub fn knn(&self, query: &Point3, k: usize) -> Result<NeighborList> {
        let n = self.positions.len();
        if k == 0 || k > n {
            return Err(Error::invalid(format!("k must be in 1..={n}, got {k}")));
        }
        let mut radius = self.cell_size;
        loop {
            let mut cand: Vec<(f64, usize)> = Vec::new();
            self.for_each_candidate(query, radius, |j| {
                cand.push((dist2(&self.positions[j], query), j));
            });
            // Every candidate within `radius` is guaranteed present; beyond it, not.
            let r2 = radius * radius;
            let exhaustive = cand.len() == n;
            if exhaustive || cand.iter().filter(|c| c.0 <= r2).count() >= k {
                cand.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                let indices = cand.into_iter().take(k).map(|c| c.1).collect();
                return Ok(NeighborList { indices, found: k });
            }
            radius *= 2.0;
        }
    }
}

fn cell_of(p: &Point3, cell_size: f64) -> Cell {
    [
        (p[0] / cell_size).floor() as i64,
        (p[1] / cell_size).floor() as i64,
        (p[2] / cell_size).floor() as i64,
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud(points: &[Point3]) -> PointCloud {
        PointCloud::new(points.to_vec()).unwrap()
    }

    fn random_cloud(n: usize, seed: u64) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        cloud(&(0..n).map(|_| [rng.gen(), rng.gen(), rng.gen()]).collect::<Vec<_>>())
    }

    #[test]
    fn single_point_occupies_origin_cell() {
        let c = cloud(&[[0.0, 0.0, 0.0]]);
        let idx = SpatialIndex::build(&c, 1.0).unwrap();
        assert_eq!(idx.occupied_cells(), 1);
        assert_eq!(idx.cell_members([0, 0, 0]), &[0]);
    }

    #[test]
    fn unit_cube_corners_fill_eight_cells() {
        let mut pts = Vec::new();
        for z in 0..2 {
            for y in 0..2 {
                for x in 0..2 {
                    pts.push([x as f64, y as f64, z as f64]);
                }
            }
        }
        let c = cloud(&pts);
        let idx = SpatialIndex::build(&c, 0.5).unwrap();
        assert_eq!(idx.occupied_cells(), 8);
        // floor(1 / 0.5) = 2
        assert_eq!(idx.cell_members([2, 2, 2]), &[7]);
        assert_eq!(idx.cell_members([2, 0, 0]), &[1]);
    }

    #[test]
    fn every_point_lands_in_exactly_one_cell() {
        let c = random_cloud(1000, 3);
        let idx = SpatialIndex::build(&c, 0.13).unwrap();
        let mut seen = vec![0usize; c.len()];
        for members in idx.cells.values() {
            for &i in members {
                seen[i] += 1;
            }
        }
        assert!(seen.iter().all(|&s| s == 1));
        for (cell, members) in &idx.cells {
            for &i in members {
                assert_eq!(cell_of(&c.positions()[i], 0.13), *cell);
            }
        }
    }

    #[test]
    fn rejects_bad_cell_size() {
        let c = cloud(&[[0.0; 3]]);
        assert!(matches!(SpatialIndex::build(&c, 0.0), Err(Error::InvalidArgument(_))));
        assert!(matches!(SpatialIndex::build(&c, -1.0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn s8n_single_point_duplicates_everywhere() {
        let c = cloud(&[[0.3, 0.2, 0.1]]);
        let idx = SpatialIndex::build(&c, 0.5).unwrap();
        let nb = idx.s8n(0, 0.5).unwrap();
        assert_eq!(nb.neighbor_indices, [0; 8]);
        assert_eq!(nb.self_duplicated, [true; 8]);
    }

    #[test]
    fn s8n_positive_octant() {
        let c = cloud(&[[0.0; 3], [0.1, 0.1, 0.1]]);
        let idx = SpatialIndex::build(&c, 1.0).unwrap();
        let nb = idx.s8n(0, 1.0).unwrap();
        for o in 0..7 {
            assert!(nb.self_duplicated[o]);
            assert_eq!(nb.neighbor_indices[o], 0);
        }
        assert!(!nb.self_duplicated[7]);
        assert_eq!(nb.neighbor_indices[7], 1);
    }

    #[test]
    fn s8n_duplicate_point_goes_to_octant_seven() {
        let c = cloud(&[[0.5; 3], [0.5; 3]]);
        let idx = SpatialIndex::build(&c, 1.0).unwrap();
        let nb = idx.s8n(0, 1.0).unwrap();
        assert_eq!(nb.neighbor_indices[7], 1);
        assert!(!nb.self_duplicated[7]);
        assert!(nb.self_duplicated[..7].iter().all(|&d| d));
    }

    #[test]
    fn s8n_respects_radius() {
        let c = cloud(&[[0.0; 3], [0.5, 0.5, 0.5]]);
        let idx = SpatialIndex::build(&c, 0.2).unwrap();
        let nb = idx.s8n(0, 0.2).unwrap();
        assert_eq!(nb.self_duplicated, [true; 8]);
    }

    #[test]
    fn ball_query_pads_isolated_center() {
        let c = cloud(&[[0.0; 3], [5.0, 0.0, 0.0]]);
        let idx = SpatialIndex::build(&c, 0.01).unwrap();
        let nl = idx.ball_query(&[0.0; 3], 0.01, 4).unwrap();
        assert_eq!(nl.found, 1);
        assert_eq!(nl.indices, vec![0, 0, 0, 0]);
    }

    #[test]
    fn ball_query_lowest_indices_first() {
        let c = cloud(&[[0.0; 3], [0.1, 0.0, 0.0], [9.0, 0.0, 0.0], [0.0, 0.1, 0.0]]);
        let idx = SpatialIndex::build(&c, 0.5).unwrap();
        let nl = idx.ball_query(&[0.05, 0.0, 0.0], 0.5, 2).unwrap();
        assert_eq!(nl.found, 2);
        assert_eq!(nl.indices, vec![0, 1]);
    }

    #[test]
    fn ball_query_empty() {
        let c = cloud(&[[0.0; 3]]);
        let idx = SpatialIndex::build(&c, 0.5).unwrap();
        let nl = idx.ball_query(&[3.0, 3.0, 3.0], 0.5, 3).unwrap();
        assert!(nl.is_empty());
        assert!(nl.indices.is_empty());
    }

    #[test]
    fn knn_collinear() {
        let c = cloud(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0], [4.0, 0.0, 0.0]]);
        let idx = SpatialIndex::build(&c, 0.5).unwrap();
        let nl = idx.knn(&[2.9, 0.0, 0.0], 2).unwrap();
        assert_eq!(nl.indices, vec![2, 3]);
        let all = idx.knn(&[2.9, 0.0, 0.0], 4).unwrap();
        assert_eq!(all.indices, vec![2, 3, 1, 0]);
        assert!(idx.knn(&[0.0; 3], 5).is_err());
    }
}
