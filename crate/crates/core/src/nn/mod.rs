//! Learnable building blocks and the segmentation network.

mod ballconv;
mod check;
mod config;
mod mlp;
mod network;
mod oe;
mod sa;

pub use ballconv::{BallConv, BallGather};
pub use check::{tiny_network_config, tiny_network_gradcheck};
pub use config::{BlockKind, KeyValues, NetworkConfig};
pub use mlp::{Dense, Mlp};
pub use network::{argmax_rows, Block, BlockPlan, DownStage, ForwardTrace, Network, ScenePlan, Stage, UpStage};
pub use oe::{slot_to_octant, OctantGather, OeUnit, PointSift};
pub use sa::{FeaturePropagation, FpPlan, SaPlan, SetAbstraction};
