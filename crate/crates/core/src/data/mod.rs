//! Synthetic labeled scenes, point file I/O and room block sampling.

mod blocks;
mod scene;
mod shapes;
mod xyzl;

pub use blocks::{block_sample, Block, BlockSample};
pub use scene::{
    class_of, generate_scene, multiscale_shape, toy_scene, toy_scene_specs, MultiScaleConfig, Scene, ToySceneConfig,
};
pub use shapes::{generate_shape, ShapeKind, ShapeSpec};
pub use xyzl::{format_xyzl, load_xyzl, parse_xyzl, save_xyzl};
