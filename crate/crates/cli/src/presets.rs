//! Named network configurations used by the commands when no config file
//! is given, and by the acceptance suite.

use pointsift::nn::{BlockKind, NetworkConfig};

/// Desk-scale segmentation network for the toy scenes: widths
/// `w, 2w, 4w, 8w`, one OE unit per block before every SA stage and after
/// the two coarsest FP stages.
pub fn segmentation(width: usize) -> NetworkConfig {
    NetworkConfig {
        channel_widths: vec![width, 2 * width, 4 * width, 8 * width],
        ..NetworkConfig::default()
    }
    .with_uniform_blocks(1, 2)
}

/// The coverage pipelines: four SA stages over 1024/256/64/16 input
/// points, SA radii doubling from 0.3 with 32 neighbors, and either three
/// stacked OE units before each stage or nothing.
///
/// Three units are needed for every point to be reached: with fewer,
/// points whose octant neighbors all lie in one region can be cut off by
/// the index-ordered truncation of crowded ball queries.
pub fn coverage_pipelines() -> Vec<(String, NetworkConfig)> {
    let stages = 4;
    let width = 4;
    let cfg = NetworkConfig {
        stage_sizes: vec![256, 64, 16, 4],
        channel_widths: vec![width; stages + 1],
        oe_radii: (0..=stages).map(|i| 0.2 * 2f64.powi(i as i32)).collect(),
        sa_radii: (0..stages).map(|i| 0.3 * 2f64.powi(i as i32)).collect(),
        down_oe_dims: vec![Some(vec![width; 3]); stages],
        up_oe_dims: vec![None; stages],
        max_k: 32,
        ..NetworkConfig::default()
    };
    with_ball_only(cfg)
}

/// `cfg` under the name `pointsift` followed by its block-free twin
/// `ball_query`, which groups by ball query alone.
pub fn with_ball_only(cfg: NetworkConfig) -> Vec<(String, NetworkConfig)> {
    let ball = NetworkConfig {
        block: BlockKind::None,
        ..cfg.clone()
    };
    vec![("pointsift".into(), cfg), ("ball_query".into(), ball)]
}

/// Two-class single-shape network with one OE module before each of the
/// three SA stages and one at the coarsest level, four in all; their
/// radii double from 0.1.
pub fn scale_network(width: usize, points: usize) -> NetworkConfig {
    NetworkConfig {
        input_points: points,
        num_classes: 2,
        stage_sizes: vec![points / 4, points / 16, points / 64],
        channel_widths: vec![width, 2 * width, 4 * width, 8 * width],
        oe_radii: vec![0.1, 0.2, 0.4, 0.8],
        down_oe_dims: vec![Some(vec![width]), Some(vec![2 * width]), Some(vec![4 * width])],
        bottleneck_oe_dims: Some(vec![8 * width]),
        up_oe_dims: vec![None; 3],
        ..NetworkConfig::default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        segmentation(8).validate().unwrap();
        scale_network(8, 1024).validate().unwrap();
        for (_, c) in coverage_pipelines() {
            c.validate().unwrap();
            assert_eq!(c.level_sizes(), vec![1024, 256, 64, 16, 4]);
        }
    }
}
