//! Orientation-encoding point cloud segmentation.
//!
//! The crate bundles exact spatial queries ([`geometry`]), a small
//! reverse-mode differentiation engine ([`autodiff`]), the network building
//! blocks built on both ([`nn`]), synthetic data and point file I/O
//! ([`data`]), and training, metrics and experiment drivers ([`training`]).

pub mod autodiff;
pub mod data;
mod error;
pub mod geometry;
pub mod nn;
pub mod training;

pub use error::{Error, Result};
pub use geometry::{PointCloud, Point3};
