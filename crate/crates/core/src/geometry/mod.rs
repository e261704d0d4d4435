//! Point clouds and exact spatial queries over them.
//!
//! Every query here is deterministic: distance ties resolve to the lower
//! point index, and scans visit candidates in ascending index order where
//! order matters.

mod cloud;
mod grid;
mod sampling;

pub use cloud::{PointCloud, Point3};
pub use grid::{NeighborList, OctantNeighborhood, SpatialIndex};
pub use sampling::{farthest_point_sampling, interpolation_weights, FpsStart, INTERP_EPSILON, INTERP_K};

/// Squared Euclidean distance, always evaluated in x, y, z order.
#[inline]
pub fn dist2(a: &Point3, b: &Point3) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

/// Octant code of an offset: bit k is set iff component k is `>= 0`
/// (x = bit 0, y = bit 1, z = bit 2). A zero offset maps to octant 7.
#[inline]
pub fn octant_of(offset: &Point3) -> usize {
    (offset[0] >= 0.0) as usize | ((offset[1] >= 0.0) as usize) << 1 | ((offset[2] >= 0.0) as usize) << 2
}
