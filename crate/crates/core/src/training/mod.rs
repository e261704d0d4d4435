//! Optimization, metrics, checkpoints and the ablation experiments.

mod experiments;
mod metrics;
mod optim;
mod trainer;

pub use experiments::*;
pub use metrics::{metrics, ConfusionMatrix, MetricsReport};
pub use optim::{Optimizer, OptimizerKind};
pub use trainer::{
    evaluate, format_log, load_checkpoint, parse_config, predict, prepare, prepare_all, save_checkpoint,
    scene_gradients, scene_loss, train, Example, LogRow, TrainConfig, LOG_HEADER,
};
