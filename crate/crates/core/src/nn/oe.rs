//! Orientation-encoding units and the multi-scale module stacking them.

use rand::Rng;

use super::mlp::Dense;
use crate::autodiff::{ParamId, ParamStore, Tape, Var};
use crate::error::{Error, Result};
use crate::geometry::SpatialIndex;

/// Row indices of the eight octant neighbors of every point, laid out so
/// that slot `4·bx + 2·by + bz` holds the neighbor whose offset has sign
/// bits `(bx, by, bz)`. Viewed as `N×2×2×2`, the x axis is outermost, so
/// the stage convolutions collapse x, then y, then z.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OctantGather {
    pub indices: Vec<usize>,
}

impl OctantGather {
    pub fn build(index: &SpatialIndex, radius: f64) -> Result<Self> {
        let n = index.positions().len();
        let mut indices = Vec::with_capacity(n * 8);
        for q in 0..n {
            let nb = index.s8n(q, radius)?;
            for slot in 0..8 {
                indices.push(nb.neighbor_indices[slot_to_octant(slot)]);
            }
        }
        Ok(OctantGather { indices })
    }

    pub fn points(&self) -> usize {
        self.indices.len() / 8
    }
}

/// Octant code (x = bit 0) stored in cube slot `4·bx + 2·by + bz`.
pub fn slot_to_octant(slot: usize) -> usize {
    let (bx, by, bz) = ((slot >> 2) & 1, (slot >> 1) & 1, slot & 1);
    bx | (by << 1) | (bz << 2)
}

/// One orientation-encoding unit: octant gather plus three axis convolutions.
#[derive(Debug, Clone)]
pub struct OeUnit {
    pub wx: ParamId,
    pub wy: ParamId,
    pub wz: ParamId,
    pub bx: ParamId,
    pub by: ParamId,
    pub bz: ParamId,
    pub d_in: usize,
    pub d_out: usize,
    pub radius: f64,
}

impl OeUnit {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        d_in: usize,
        d_out: usize,
        radius: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::invalid(format!("OE radius must be positive, got {radius}")));
        }
        let mut conv = |axis: &str, din: usize| {
            store.add_glorot(format!("{name}.W{axis}"), &[2, din, d_out], 2 * din, 2 * d_out, rng)
        };
        let wx = conv("x", d_in)?;
        let wy = conv("y", d_out)?;
        let wz = conv("z", d_out)?;
        Ok(OeUnit {
            wx,
            wy,
            wz,
            bx: store.add_zeros(format!("{name}.bx"), &[d_out])?,
            by: store.add_zeros(format!("{name}.by"), &[d_out])?,
            bz: store.add_zeros(format!("{name}.bz"), &[d_out])?,
            d_in,
            d_out,
            radius,
        })
    }

    /// Runs the octant search over `index` (built with cell size equal to
    /// the unit radius) and applies the unit.
    pub fn forward(&self, tape: &mut Tape, index: &SpatialIndex, features: Var) -> Result<Var> {
        let gather = OctantGather::build(index, self.radius)?;
        self.forward_with(tape, &gather, features)
    }

    /// Applies the unit given precomputed octant neighbors.
    pub fn forward_with(&self, tape: &mut Tape, gather: &OctantGather, features: Var) -> Result<Var> {
        let fv = tape.value(features);
        let n = gather.points();
        if fv.rank() != 2 || fv.shape()[0] != n || fv.shape()[1] != self.d_in {
            return Err(Error::invalid(format!(
                "OE unit expects {n}×{} features, got {:?}",
                self.d_in,
                fv.shape()
            )));
        }
        let d = self.d_out;
        let cube = tape.gather_rows(features, &gather.indices)?;
        let v = tape.reshape(cube, &[n, 2, 4, self.d_in])?;
        let (w, b) = (tape.param(self.wx), tape.param(self.bx));
        let vx = tape.axis_conv2(v, w, Some(b))?;
        let vx = tape.relu(vx);
        let v = tape.reshape(vx, &[n, 2, 2, d])?;
        let (w, b) = (tape.param(self.wy), tape.param(self.by));
        let vxy = tape.axis_conv2(v, w, Some(b))?;
        let vxy = tape.relu(vxy);
        let v = tape.reshape(vxy, &[n, 2, 1, d])?;
        let (w, b) = (tape.param(self.wz), tape.param(self.bz));
        let vxyz = tape.axis_conv2(v, w, Some(b))?;
        let vxyz = tape.relu(vxyz);
        tape.reshape(vxyz, &[n, d])
    }
}

/// Stacked OE units whose outputs are concatenated and fused by a
/// point-wise layer. Point count is preserved.
#[derive(Debug, Clone)]
pub struct PointSift {
    pub units: Vec<OeUnit>,
    pub fusion: Dense,
    pub fusion_activation: bool,
}

impl PointSift {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        d_in: usize,
        oe_dims: &[usize],
        d_out: usize,
        radius: f64,
        fusion_activation: bool,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if oe_dims.is_empty() {
            return Err(Error::invalid("PointSIFT module needs at least one OE unit"));
        }
        let mut units = Vec::with_capacity(oe_dims.len());
        let mut d = d_in;
        for (i, &o) in oe_dims.iter().enumerate() {
            units.push(OeUnit::new(store, &format!("{name}.oe{i}"), d, o, radius, rng)?);
            d = o;
        }
        let fused: usize = oe_dims.iter().sum();
        let fusion = Dense::new(store, &format!("{name}.fusion"), fused, d_out, rng)?;
        Ok(PointSift {
            units,
            fusion,
            fusion_activation,
        })
    }

    pub fn radius(&self) -> f64 {
        self.units[0].radius
    }

    pub fn d_out(&self) -> usize {
        self.fusion.d_out
    }

    pub fn forward(&self, tape: &mut Tape, index: &SpatialIndex, features: Var) -> Result<Var> {
        let gather = OctantGather::build(index, self.radius())?;
        self.forward_with(tape, &gather, features)
    }

    pub fn forward_with(&self, tape: &mut Tape, gather: &OctantGather, features: Var) -> Result<Var> {
        let mut outs = Vec::with_capacity(self.units.len());
        let mut x = features;
        for u in &self.units {
            x = u.forward_with(tape, gather, x)?;
            outs.push(x);
        }
        let cat = tape.concat_channels(&outs)?;
        let y = self.fusion.forward(tape, cat)?;
        Ok(if self.fusion_activation { tape.relu(y) } else { y })
    }
}
