//! The full encoder/decoder segmentation network.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::ballconv::{BallConv, BallGather};
use super::config::{BlockKind, NetworkConfig};
use super::mlp::{Dense, Mlp};
use super::oe::{OctantGather, PointSift};
use super::sa::{FeaturePropagation, FpPlan, SaPlan, SetAbstraction};
use crate::autodiff::{ParamStore, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::geometry::{Point3, PointCloud, SpatialIndex};

/// Neighborhood block inserted next to an SA or FP layer.
#[derive(Debug, Clone)]
pub enum Block {
    PointSift(PointSift),
    BallConv(Vec<BallConv>),
}

impl Block {
    fn new(
        kind: BlockKind,
        store: &mut ParamStore,
        name: &str,
        width: usize,
        dims: &[usize],
        radius: f64,
        cfg: &NetworkConfig,
        rng: &mut ChaCha8Rng,
    ) -> Result<Option<Self>> {
        Ok(match kind {
            BlockKind::None => None,
            BlockKind::PointSift => Some(Block::PointSift(PointSift::new(
                store,
                &format!("{name}.pointsift"),
                width,
                dims,
                width,
                radius,
                cfg.fusion_activation,
                rng,
            )?)),
            BlockKind::BallConv => {
                // One ball convolution per listed dim; the last one maps back to `width`.
                let mut convs = Vec::with_capacity(dims.len());
                let mut d = width;
                for (i, &o) in dims.iter().enumerate() {
                    let out = if i + 1 == dims.len() { width } else { o };
                    convs.push(BallConv::new(store, &format!("{name}.ballconv{i}"), d, out, cfg.ball_conv_k, radius, rng)?);
                    d = out;
                }
                Some(Block::BallConv(convs))
            }
        })
    }

    fn plan(&self, positions: &[Point3]) -> Result<BlockPlan> {
        Ok(match self {
            Block::PointSift(p) => {
                let index = SpatialIndex::from_positions(positions, p.radius())?;
                BlockPlan::Octant(OctantGather::build(&index, p.radius())?)
            }
            Block::BallConv(b) => BlockPlan::Ball(BallGather::build(positions, b[0].radius, b[0].k)?),
        })
    }

    fn forward(&self, tape: &mut Tape, plan: &BlockPlan, x: Var) -> Result<Var> {
        match (self, plan) {
            (Block::PointSift(p), BlockPlan::Octant(g)) => p.forward_with(tape, g, x),
            (Block::BallConv(convs), BlockPlan::Ball(g)) => {
                let mut x = x;
                for c in convs {
                    x = c.forward_with(tape, g, x)?;
                }
                Ok(x)
            }
            _ => Err(Error::invalid("block plan does not match block kind")),
        }
    }
}

/// Precomputed neighbor lists for one block.
#[derive(Debug, Clone, PartialEq)]
pub enum BlockPlan {
    Octant(OctantGather),
    Ball(BallGather),
}

#[derive(Debug, Clone)]
pub struct DownStage {
    pub block: Option<Block>,
    pub sa: SetAbstraction,
}

#[derive(Debug, Clone)]
pub struct UpStage {
    pub fp: FeaturePropagation,
    pub block: Option<Block>,
}

/// Every geometric query a forward pass needs for one cloud. Depends only
/// on positions and configuration, so it can be reused across epochs.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenePlan {
    /// Positions per level, input level first.
    pub levels: Vec<Vec<Point3>>,
    pub down_blocks: Vec<Option<BlockPlan>>,
    pub sa: Vec<SaPlan>,
    pub bottleneck: Option<BlockPlan>,
    /// One per up stage, coarsest first.
    pub fp: Vec<FpPlan>,
    pub up_blocks: Vec<Option<BlockPlan>>,
}

/// Handles to the intermediate values of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub input: Var,
    /// Features entering each down stage (before its block).
    pub stage_inputs: Vec<Var>,
    /// Block output per down stage (or the stage input when no block).
    pub down_features: Vec<Var>,
    pub sa_outputs: Vec<Var>,
    pub bottleneck: Option<Var>,
    pub up_features: Vec<Var>,
    pub logits: Var,
}

impl ForwardTrace {
    /// Outputs of the encoder-side blocks in hierarchy order (finest level
    /// first), including the bottleneck block when present.
    pub fn encoder_blocks(&self, net: &Network) -> Vec<Var> {
        let mut out: Vec<Var> = net
            .down
            .iter()
            .zip(&self.down_features)
            .filter(|(d, _)| d.block.is_some())
            .map(|(_, v)| *v)
            .collect();
        out.extend(self.bottleneck);
        out
    }
}

/// Where an influence query looks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    /// The input MLP's output, over the input points.
    Input,
    /// Output of SA stage `k` (1-based), over that stage's input points.
    Down(usize),
}

/// Parameters plus the layout that interprets them.
#[derive(Debug, Clone)]
pub struct Network {
    pub config: NetworkConfig,
    pub store: ParamStore,
    pub input_mlp: Mlp,
    pub down: Vec<DownStage>,
    pub bottleneck: Option<Block>,
    pub up: Vec<UpStage>,
    pub classifier: Dense,
}

impl Network {
    /// Builds the network with seeded initialization.
    pub fn new(config: NetworkConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut store = ParamStore::new();
        let c = &config;
        let w = &c.channel_widths;
        let s = c.stages();

        let input_mlp = Mlp::new(&mut store, "input", c.input_dim(), &[w[0]], &mut rng)?;
        let mut down = Vec::with_capacity(s);
        for k in 0..s {
            let name = format!("down{}", k + 1);
            let block = match &c.down_oe_dims[k] {
                Some(dims) => Block::new(c.block, &mut store, &name, w[k], dims, c.oe_radii[k], c, &mut rng)?,
                None => None,
            };
            let sa = SetAbstraction::new(
                &mut store,
                &format!("{name}.sa"),
                w[k],
                &vec![w[k + 1]; c.sa_mlp_layers],
                c.stage_sizes[k],
                c.sa_radii[k],
                c.max_k,
                &mut rng,
            )?;
            down.push(DownStage { block, sa });
        }
        let bottleneck = match &c.bottleneck_oe_dims {
            Some(dims) => Block::new(c.block, &mut store, "bottleneck", w[s], dims, c.oe_radii[s], c, &mut rng)?,
            None => None,
        };
        let mut up = Vec::with_capacity(s);
        let mut d = w[s];
        for j in 0..s {
            let level = s - 1 - j;
            let name = format!("up{}", j + 1);
            let fp = FeaturePropagation::new(
                &mut store,
                &format!("{name}.fp"),
                d,
                w[level],
                &vec![w[level]; c.fp_mlp_layers],
                &mut rng,
            )?;
            d = w[level];
            let block = match &c.up_oe_dims[j] {
                Some(dims) => Block::new(c.block, &mut store, &name, d, dims, c.oe_radii[level], c, &mut rng)?,
                None => None,
            };
            up.push(UpStage { fp, block });
        }
        let classifier = Dense::new(&mut store, "classifier", d, c.num_classes, &mut rng)?;
        Ok(Network {
            config,
            store,
            input_mlp,
            down,
            bottleneck,
            up,
            classifier,
        })
    }

    /// Input features: coordinates (or a constant channel when coordinates
    /// may only enter as relative offsets), then RGB when enabled.
    pub fn input_features(&self, cloud: &PointCloud) -> Result<Tensor> {
        let c = &self.config;
        if cloud.len() != c.input_points {
            return Err(Error::invalid(format!(
                "network expects {} points, cloud has {}",
                c.input_points,
                cloud.len()
            )));
        }
        let colors = match (c.use_rgb, cloud.colors()) {
            (true, None) => return Err(Error::invalid("network uses RGB but the cloud has no colors")),
            (true, Some(col)) => Some(col),
            (false, _) => None,
        };
        let d = c.input_dim();
        let mut data = Vec::with_capacity(cloud.len() * d);
        for (i, p) in cloud.positions().iter().enumerate() {
            if c.relative_coords_only {
                data.push(1.0);
            } else {
                data.extend_from_slice(p);
            }
            if let Some(col) = colors {
                data.extend_from_slice(&col[i]);
            }
        }
        Tensor::new(vec![cloud.len(), d], data)
    }

    /// Runs every geometric query for `positions`.
    pub fn plan(&self, positions: &[Point3]) -> Result<ScenePlan> {
        let c = &self.config;
        if positions.len() != c.input_points {
            return Err(Error::invalid(format!(
                "network expects {} points, cloud has {}",
                c.input_points,
                positions.len()
            )));
        }
        let start = c.fps_start();
        let mut levels = vec![positions.to_vec()];
        let mut down_blocks = Vec::with_capacity(self.down.len());
        let mut sa = Vec::with_capacity(self.down.len());
        for stage in &self.down {
            let pos = levels.last().unwrap();
            down_blocks.push(stage.block.as_ref().map(|b| b.plan(pos)).transpose()?);
            let p = SaPlan::build(pos, stage.sa.n_centroids, stage.sa.radius, stage.sa.max_k, start)?;
            levels.push(p.centroid_positions(pos));
            sa.push(p);
        }
        let bottleneck = self.bottleneck.as_ref().map(|b| b.plan(levels.last().unwrap())).transpose()?;
        let s = self.down.len();
        let mut fp = Vec::with_capacity(s);
        let mut up_blocks = Vec::with_capacity(s);
        for (j, stage) in self.up.iter().enumerate() {
            let level = s - 1 - j;
            fp.push(FpPlan::build(&levels[level], &levels[level + 1])?);
            up_blocks.push(stage.block.as_ref().map(|b| b.plan(&levels[level])).transpose()?);
        }
        Ok(ScenePlan {
            levels,
            down_blocks,
            sa,
            bottleneck,
            fp,
            up_blocks,
        })
    }

    /// Records the forward pass on `tape`; `input` is `N×input_dim`.
    pub fn forward_with(&self, tape: &mut Tape, plan: &ScenePlan, input: Var) -> Result<ForwardTrace> {
        let mut x = self.input_mlp.forward(tape, input)?;
        let mut stage_inputs = Vec::new();
        let mut down_features = Vec::new();
        let mut sa_outputs = Vec::new();
        for (k, stage) in self.down.iter().enumerate() {
            stage_inputs.push(x);
            if let (Some(b), Some(p)) = (&stage.block, &plan.down_blocks[k]) {
                x = b.forward(tape, p, x)?;
            }
            down_features.push(x);
            x = stage.sa.forward_with(tape, &plan.sa[k], x)?;
            sa_outputs.push(x);
        }
        let mut bottleneck = None;
        if let (Some(b), Some(p)) = (&self.bottleneck, &plan.bottleneck) {
            x = b.forward(tape, p, x)?;
            bottleneck = Some(x);
        }
        let s = self.down.len();
        let mut up_features = Vec::new();
        for (j, stage) in self.up.iter().enumerate() {
            let level = s - 1 - j;
            x = stage.fp.forward_with(tape, &plan.fp[j], x, Some(down_features[level]))?;
            if let (Some(b), Some(p)) = (&stage.block, &plan.up_blocks[j]) {
                x = b.forward(tape, p, x)?;
            }
            up_features.push(x);
        }
        let logits = self.classifier.forward(tape, x)?;
        Ok(ForwardTrace {
            input,
            stage_inputs,
            down_features,
            sa_outputs,
            bottleneck,
            up_features,
            logits,
        })
    }

    /// Per-point class scores for `cloud`.
    pub fn forward(&self, cloud: &PointCloud) -> Result<Tensor> {
        let plan = self.plan(cloud.positions())?;
        let features = self.input_features(cloud)?;
        let mut tape = Tape::new(&self.store);
        let input = tape.leaf(features);
        let trace = self.forward_with(&mut tape, &plan, input)?;
        Ok(tape.value(trace.logits).clone())
    }

    /// Argmax class per point.
    pub fn predict(&self, cloud: &PointCloud) -> Result<Vec<u32>> {
        Ok(argmax_rows(&self.forward(cloud)?))
    }

    /// Points of the stage's input set that have a gradient path into the
    /// stage's output. For [`Stage::Input`] those are input points; for
    /// [`Stage::Down`]`(k)` they index the points entering SA stage `k`.
    pub fn influence_mask(&self, cloud: &PointCloud, stage: Stage) -> Result<Vec<usize>> {
        let plan = self.plan(cloud.positions())?;
        self.influence_mask_with(&plan, &self.input_features(cloud)?, stage)
    }

    pub fn influence_mask_with(&self, plan: &ScenePlan, features: &Tensor, stage: Stage) -> Result<Vec<usize>> {
        let mut tape = Tape::new(&self.store);
        let input = tape.leaf(features.clone());
        let trace = self.forward_with(&mut tape, plan, input)?;
        let (source, target) = match stage {
            Stage::Input => (input, self.input_mlp_output(&trace)),
            Stage::Down(k) if (1..=self.down.len()).contains(&k) => (trace.stage_inputs[k - 1], trace.sa_outputs[k - 1]),
            Stage::Down(k) => return Err(Error::invalid(format!("no SA stage {k}"))),
        };
        let rows = tape.dependency_rows(target, source);
        Ok(rows.iter().enumerate().filter(|(_, &r)| r).map(|(i, _)| i).collect())
    }

    fn input_mlp_output(&self, trace: &ForwardTrace) -> Var {
        trace.stage_inputs[0]
    }

    pub fn parameter_count(&self) -> usize {
        self.store.scalar_count()
    }
}

pub fn argmax_rows(logits: &Tensor) -> Vec<u32> {
    let c = logits.channels();
    logits
        .data()
        .chunks_exact(c)
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best as u32
        })
        .collect()
}
