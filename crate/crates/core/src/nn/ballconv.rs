use rand::Rng;

use super::mlp::Dense;
use crate::autodiff::{ParamStore, Tape, Var};
use crate::error::Result;
use crate::geometry::{dist2, Point3, SpatialIndex};

/// `k` ball-query neighbors per point, nearest first (the point itself
/// leads), padded with the point itself.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BallGather {
    pub indices: Vec<usize>,
    pub k: usize,
}

impl BallGather {
    pub fn build(positions: &[Point3], radius: f64, k: usize) -> Result<Self> {
        let index = SpatialIndex::from_positions(positions, radius)?;
        let mut indices = Vec::with_capacity(positions.len() * k);
        let mut all = Vec::new();
        for (q, p) in positions.iter().enumerate() {
            // Every in-radius point, so the nearest k can be chosen.
            let hits = index.ball_query(p, radius, positions.len())?;
            all.clear();
            all.extend(hits.indices[..hits.found].iter().map(|&j| (dist2(&positions[j], p), j)));
            all.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then((a.1 != q).cmp(&(b.1 != q))).then(a.1.cmp(&b.1)));
            let start = indices.len();
            indices.extend(all.iter().take(k).map(|e| e.1));
            indices.resize(start + k, q);
        }
        Ok(BallGather { indices, k })
    }
}

/// Ball-query grouping followed by a point-wise convolution spanning the
/// whole `k×d` group.
#[derive(Debug, Clone)]
pub struct BallConv {
    pub conv: Dense,
    pub k: usize,
    pub radius: f64,
}

impl BallConv {
    pub fn new(store: &mut ParamStore, name: &str, d_in: usize, d_out: usize, k: usize, radius: f64, rng: &mut impl Rng) -> Result<Self> {
        Ok(BallConv {
            conv: Dense::new(store, &format!("{name}.conv"), k * d_in, d_out, rng)?,
            k,
            radius,
        })
    }

    pub fn forward_with(&self, tape: &mut Tape, gather: &BallGather, features: Var) -> Result<Var> {
        let n = gather.indices.len() / gather.k;
        let d = tape.value(features).channels();
        let g = tape.gather_rows(features, &gather.indices)?;
        let flat = tape.reshape(g, &[n, gather.k * d])?;
        let y = self.conv.forward(tape, flat)?;
        Ok(tape.relu(y))
    }
}
