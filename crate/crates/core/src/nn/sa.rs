//! Set abstraction (downsampling) and feature propagation (upsampling).

use rand::Rng;

use super::mlp::Mlp;
use crate::autodiff::{ParamStore, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::geometry::{farthest_point_sampling, interpolation_weights, FpsStart, Point3, SpatialIndex, INTERP_EPSILON, INTERP_K};

/// Centroids and fixed-size groups of one SA stage.
#[derive(Debug, Clone, PartialEq)]
pub struct SaPlan {
    /// Indices of the centroids among the stage's input points.
    pub centroids: Vec<usize>,
    /// `centroids.len() × group_size` point indices; slot 0 is the centroid.
    pub groups: Vec<usize>,
    pub group_size: usize,
    /// Offsets `neighbor − centroid`, one row per group slot.
    pub offsets: Tensor,
}

impl SaPlan {
    /// Farthest point sampling, then a ball query around each centroid.
    ///
    /// Each group starts with the centroid's own point followed by the other
    /// in-radius points in ascending index order, truncated to `max_k` and
    /// padded by repeating the centroid.
    pub fn build(positions: &[Point3], n_centroids: usize, radius: f64, max_k: usize, start: FpsStart) -> Result<Self> {
        let centroids = farthest_point_sampling(positions, n_centroids, start)?;
        let index = SpatialIndex::from_positions(positions, radius)?;
        let mut groups = Vec::with_capacity(centroids.len() * max_k);
        let mut offsets = Vec::with_capacity(centroids.len() * max_k * 3);
        for &c in &centroids {
            let hits = index.ball_query(&positions[c], radius, max_k)?;
            let start = groups.len();
            groups.push(c);
            groups.extend(hits.indices[..hits.found].iter().copied().filter(|&j| j != c));
            groups.truncate(start + max_k);
            groups.resize(start + max_k, c);
            let pc = positions[c];
            for &j in &groups[start..] {
                let p = positions[j];
                offsets.extend_from_slice(&[p[0] - pc[0], p[1] - pc[1], p[2] - pc[2]]);
            }
        }
        let m = centroids.len();
        Ok(SaPlan {
            centroids,
            groups,
            group_size: max_k,
            offsets: Tensor::new(vec![m * max_k, 3], offsets)?,
        })
    }

    pub fn centroid_positions(&self, positions: &[Point3]) -> Vec<Point3> {
        self.centroids.iter().map(|&c| positions[c]).collect()
    }
}

/// Downsampling layer: group, shared MLP over `[feature, offset]`, max pool.
#[derive(Debug, Clone)]
pub struct SetAbstraction {
    pub n_centroids: usize,
    pub radius: f64,
    pub max_k: usize,
    pub mlp: Mlp,
}

impl SetAbstraction {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        d_in: usize,
        widths: &[usize],
        n_centroids: usize,
        radius: f64,
        max_k: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Ok(SetAbstraction {
            n_centroids,
            radius,
            max_k,
            mlp: Mlp::new(store, name, d_in + 3, widths, rng)?,
        })
    }

    /// Samples centroids and runs the layer; returns the plan (holding the
    /// centroid positions) with the `M×d'` centroid features.
    pub fn forward(&self, tape: &mut Tape, positions: &[Point3], features: Var, start: FpsStart) -> Result<(SaPlan, Var)> {
        if self.n_centroids > positions.len() {
            return Err(Error::invalid(format!(
                "cannot pick {} centroids from {} points",
                self.n_centroids,
                positions.len()
            )));
        }
        let plan = SaPlan::build(positions, self.n_centroids, self.radius, self.max_k, start)?;
        let out = self.forward_with(tape, &plan, features)?;
        Ok((plan, out))
    }

    pub fn forward_with(&self, tape: &mut Tape, plan: &SaPlan, features: Var) -> Result<Var> {
        let grouped = tape.gather_rows(features, &plan.groups)?;
        let offsets = tape.leaf(plan.offsets.clone());
        let x = tape.concat_channels(&[grouped, offsets])?;
        let h = self.mlp.forward(tape, x)?;
        let m = plan.centroids.len();
        let h = tape.reshape(h, &[m, plan.group_size, self.mlp.d_out()])?;
        tape.group_max_pool(h)
    }
}

/// Interpolation neighbors from a sparse level onto a dense one.
#[derive(Debug, Clone, PartialEq)]
pub struct FpPlan {
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
    pub k: usize,
}

impl FpPlan {
    pub fn build(dense: &[Point3], sparse: &[Point3]) -> Result<Self> {
        if sparse.is_empty() {
            return Err(Error::invalid("feature propagation needs at least one sparse point"));
        }
        let k = INTERP_K.min(sparse.len());
        let mut indices = Vec::with_capacity(dense.len() * k);
        let mut weights = Vec::with_capacity(dense.len() * k);
        for q in dense {
            let (i, w) = interpolation_weights(sparse, q, INTERP_K, INTERP_EPSILON);
            indices.extend(i);
            weights.extend(w);
        }
        Ok(FpPlan { indices, weights, k })
    }
}

/// Upsampling layer: inverse-distance interpolation, skip concat, unit MLP.
#[derive(Debug, Clone)]
pub struct FeaturePropagation {
    pub mlp: Mlp,
}

impl FeaturePropagation {
    pub fn new(store: &mut ParamStore, name: &str, d_sparse: usize, d_skip: usize, widths: &[usize], rng: &mut impl Rng) -> Result<Self> {
        Ok(FeaturePropagation {
            mlp: Mlp::new(store, name, d_sparse + d_skip, widths, rng)?,
        })
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        dense: &[Point3],
        sparse: &[Point3],
        sparse_features: Var,
        skip: Option<Var>,
    ) -> Result<Var> {
        let plan = FpPlan::build(dense, sparse)?;
        self.forward_with(tape, &plan, sparse_features, skip)
    }

    pub fn forward_with(&self, tape: &mut Tape, plan: &FpPlan, sparse_features: Var, skip: Option<Var>) -> Result<Var> {
        let interp = tape.weighted_gather(sparse_features, &plan.indices, &plan.weights, plan.k)?;
        let x = match skip {
            Some(s) => tape.concat_channels(&[interp, s])?,
            None => interp,
        };
        self.mlp.forward(tape, x)
    }
}
