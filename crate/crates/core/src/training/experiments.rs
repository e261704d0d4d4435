use std::fmt::Write as _;

use super::trainer::{evaluate, prepare_all, train, Example, LogRow, TrainConfig};
use crate::autodiff::Tape;
use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::nn::{BlockKind, Network, NetworkConfig, Stage};

/// Captured-point statistics of one pipeline at one SA stage.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageRow {
    pub variant: String,
    /// 1-based SA stage.
    pub stage: usize,
    /// Points entering the stage.
    pub stage_size: usize,
    pub mean_captured: f64,
    pub min_captured: usize,
    pub max_captured: usize,
    /// Scenes where some stage input point reached no output.
    pub scenes_below_full: usize,
    pub scenes: usize,
}

impl CoverageRow {
    pub fn mean_uncovered_fraction(&self) -> f64 {
        1.0 - self.mean_captured / self.stage_size as f64
    }
}

/// For every pipeline and every SA stage, counts the stage input points
/// whose features can reach the stage output, over all `scenes`.
pub fn coverage_experiment(variants: &[(String, NetworkConfig)], scenes: &[PointCloud]) -> Result<Vec<CoverageRow>> {
    if scenes.is_empty() {
        return Err(Error::invalid("coverage needs at least one scene"));
    }
    let mut rows = Vec::new();
    for (name, cfg) in variants {
        let net = Network::new(cfg.clone())?;
        let sizes = cfg.level_sizes();
        let stages = cfg.stages();
        let mut counts = vec![Vec::with_capacity(scenes.len()); stages];
        for cloud in scenes {
            let plan = net.plan(cloud.positions())?;
            let features = net.input_features(cloud)?;
            for (k, c) in counts.iter_mut().enumerate() {
                c.push(net.influence_mask_with(&plan, &features, Stage::Down(k + 1))?.len());
            }
        }
        for (k, c) in counts.iter().enumerate() {
            rows.push(CoverageRow {
                variant: name.clone(),
                stage: k + 1,
                stage_size: sizes[k],
                mean_captured: c.iter().sum::<usize>() as f64 / c.len() as f64,
                min_captured: *c.iter().min().unwrap(),
                max_captured: *c.iter().max().unwrap(),
                scenes_below_full: c.iter().filter(|&&n| n < sizes[k]).count(),
                scenes: c.len(),
            });
        }
    }
    Ok(rows)
}

pub fn format_coverage(rows: &[CoverageRow]) -> String {
    let mut s = String::from("variant,stage,stage_size,mean_captured,min_captured,max_captured,scenes_below_full,scenes\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.variant, r.stage, r.stage_size, r.mean_captured, r.min_captured, r.max_captured, r.scenes_below_full, r.scenes
        );
    }
    s
}

/// Index of the log-uniform bin of `[min, max]` holding `scale`, one bin
/// per module; out-of-range scales clamp to the end bins.
pub fn scale_bin(scale: f64, min: f64, max: f64, bins: usize) -> usize {
    if bins <= 1 || !(max > min) {
        return 0;
    }
    let t = (scale.ln() - min.ln()) / (max.ln() - min.ln());
    ((t * bins as f64).floor().max(0.0) as usize).min(bins - 1)
}

/// How per-module activations are compared across modules.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActivationNorm {
    /// Raw mean absolute activation.
    Raw,
    /// Each module's activation standardized over the evaluated shapes.
    Standardized,
}

/// Fraction of shapes whose most active module matches their scale bin.
///
/// `activations[i][m]` is module `m`'s activation on shape `i`, modules in
/// hierarchy order (finest first).
pub fn alignment_rate(activations: &[Vec<f64>], scales: &[f64], min: f64, max: f64, norm: ActivationNorm) -> Result<f64> {
    if activations.len() != scales.len() || activations.is_empty() {
        return Err(Error::invalid("need one activation vector per scale"));
    }
    let m = activations[0].len();
    if m == 0 || activations.iter().any(|a| a.len() != m) {
        return Err(Error::invalid("every shape needs the same positive number of modules"));
    }
    let table: Vec<Vec<f64>> = match norm {
        ActivationNorm::Raw => activations.to_vec(),
        ActivationNorm::Standardized => {
            let n = activations.len() as f64;
            let stats: Vec<(f64, f64)> = (0..m)
                .map(|j| {
                    let mean = activations.iter().map(|a| a[j]).sum::<f64>() / n;
                    let var = activations.iter().map(|a| (a[j] - mean).powi(2)).sum::<f64>() / n;
                    (mean, var.sqrt().max(1e-300))
                })
                .collect();
            activations
                .iter()
                .map(|a| a.iter().zip(&stats).map(|(v, (mu, sd))| (v - mu) / sd).collect())
                .collect()
        }
    };
    let hits = table
        .iter()
        .zip(scales)
        .filter(|(a, &s)| {
            let mut best = 0;
            for (j, &v) in a.iter().enumerate() {
                if v > a[best] {
                    best = j;
                }
            }
            best == scale_bin(s, min, max, m)
        })
        .count();
    Ok(hits as f64 / scales.len() as f64)
}

/// Mean absolute activation of every encoder-side block on one scene,
/// finest level first.
pub fn module_activations(net: &Network, ex: &Example) -> Result<Vec<f64>> {
    let mut tape = Tape::new(&net.store);
    let input = tape.leaf(ex.features.clone());
    let trace = net.forward_with(&mut tape, &ex.plan, input)?;
    let blocks = trace.encoder_blocks(net);
    if blocks.is_empty() {
        return Err(Error::invalid("network has no encoder blocks"));
    }
    Ok(blocks.iter().map(|&v| tape.value(v).mean_abs()).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaleReport {
    pub rate: f64,
    pub modules: usize,
    pub scales: Vec<f64>,
    pub activations: Vec<Vec<f64>>,
}

impl ScaleReport {
    pub fn to_csv(&self, min: f64, max: f64) -> String {
        let m = self.modules;
        let mut s = String::from("shape,scale,expected_module");
        for j in 0..m {
            let _ = write!(s, ",module{}", j + 1);
        }
        s.push('\n');
        for (i, (sc, a)) in self.scales.iter().zip(&self.activations).enumerate() {
            let _ = write!(s, "{i},{sc},{}", scale_bin(*sc, min, max, m) + 1);
            for v in a {
                let _ = write!(s, ",{v}");
            }
            s.push('\n');
        }
        s
    }
}

/// Measures module activations of `net` on shapes of known scale and
/// reports how often the most active module matches the scale bin.
pub fn scale_awareness_experiment(
    net: &Network,
    shapes: &[PointCloud],
    scales: &[f64],
    min: f64,
    max: f64,
    norm: ActivationNorm,
) -> Result<ScaleReport> {
    let examples = prepare_all(net, shapes, 1)?;
    let activations = examples
        .iter()
        .map(|ex| module_activations(net, ex))
        .collect::<Result<Vec<_>>>()?;
    Ok(ScaleReport {
        rate: alignment_rate(&activations, scales, min, max, norm)?,
        modules: activations[0].len(),
        scales: scales.to_vec(),
        activations,
    })
}

/// Scales every channel width by `factor`, rounding, at least 1.
fn scaled_widths(widths: &[usize], factor: f64) -> Vec<usize> {
    widths.iter().map(|&w| ((w as f64 * factor).round() as usize).max(1)).collect()
}

/// Rescales the widths of `cfg` (and its block dims, which follow the
/// widths) to bring its parameter count as close as possible to `target`.
pub fn match_parameter_budget(cfg: &NetworkConfig, target: usize) -> Result<NetworkConfig> {
    let base = cfg.channel_widths.clone();
    let mut best: Option<(usize, NetworkConfig)> = None;
    let mut seen = Vec::new();
    for step in 0..=700 {
        let f = 0.25 + step as f64 * 0.01;
        let widths = scaled_widths(&base, f);
        if seen.contains(&widths) {
            continue;
        }
        seen.push(widths.clone());
        let c = with_widths(cfg, &widths);
        let n = Network::new(c.clone())?.parameter_count();
        let gap = n.abs_diff(target);
        if best.as_ref().is_none_or(|(g, _)| gap < *g) {
            best = Some((gap, c));
        }
    }
    Ok(best.unwrap().1)
}

fn with_widths(cfg: &NetworkConfig, widths: &[usize]) -> NetworkConfig {
    let old = &cfg.channel_widths;
    let rescale = |dims: &Option<Vec<usize>>, level: usize| {
        dims.as_ref()
            .map(|d| d.iter().map(|&x| (x * widths[level]).div_ceil(old[level]).max(1)).collect())
    };
    let s = cfg.stages();
    NetworkConfig {
        channel_widths: widths.to_vec(),
        down_oe_dims: cfg.down_oe_dims.iter().enumerate().map(|(l, d)| rescale(d, l)).collect(),
        up_oe_dims: cfg.up_oe_dims.iter().enumerate().map(|(j, d)| rescale(d, s - 1 - j)).collect(),
        bottleneck_oe_dims: rescale(&cfg.bottleneck_oe_dims, s),
        ..cfg.clone()
    }
}

/// The three grouping variants at a shared parameter budget: the plain
/// SA/FP network, ball-query point-wise convolution blocks, and
/// PointSIFT blocks (`reference`, whose budget the others match).
pub fn grouping_variants(reference: &NetworkConfig) -> Result<Vec<(String, NetworkConfig)>> {
    let mut ps = reference.clone();
    ps.block = BlockKind::PointSift;
    let target = Network::new(ps.clone())?.parameter_count();
    let baseline = match_parameter_budget(
        &NetworkConfig {
            block: BlockKind::None,
            ..ps.clone()
        },
        target,
    )?;
    let ball = match_parameter_budget(
        &NetworkConfig {
            block: BlockKind::BallConv,
            ..ps.clone()
        },
        target,
    )?;
    Ok(vec![("baseline".into(), baseline), ("ball_query".into(), ball), ("pointsift".into(), ps)])
}

/// Training curves of one variant under one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupingRun {
    pub variant: String,
    pub seed: u64,
    pub parameters: usize,
    pub log: Vec<LogRow>,
}

impl GroupingRun {
    pub fn final_accuracy(&self) -> f64 {
        self.log.last().map_or(0.0, |r| r.accuracy)
    }
}

/// Trains every variant under every seed on `train_set` and logs held-out
/// metrics on `test_set` after each epoch. The seed drives both parameter
/// initialization and the shuffle.
pub fn compare_grouping(
    variants: &[(String, NetworkConfig)],
    train_set: &[PointCloud],
    test_set: &[PointCloud],
    train_cfg: &TrainConfig,
    seeds: &[u64],
) -> Result<Vec<GroupingRun>> {
    let mut runs = Vec::new();
    for &seed in seeds {
        for (name, cfg) in variants {
            let mut net = Network::new(NetworkConfig {
                seed,
                ..cfg.clone()
            })?;
            let tr = prepare_all(&net, train_set, train_cfg.threads)?;
            let te = prepare_all(&net, test_set, train_cfg.threads)?;
            let tc = TrainConfig {
                shuffle_seed: seed,
                ..train_cfg.clone()
            };
            let log = if tc.epochs == 0 {
                let r = evaluate(&net, &te, tc.threads)?;
                vec![LogRow {
                    epoch: 0,
                    step: 0,
                    loss: f64::NAN,
                    accuracy: r.overall_accuracy,
                    miou: r.mean_iou,
                }]
            } else {
                train(&mut net, &tr, &tc, Some(&te), |_| {})?
            };
            runs.push(GroupingRun {
                variant: name.clone(),
                seed,
                parameters: net.parameter_count(),
                log,
            });
        }
    }
    Ok(runs)
}

pub fn format_grouping(runs: &[GroupingRun]) -> String {
    let mut s = String::from("variant,seed,parameters,epoch,step,loss,accuracy,miou\n");
    for r in runs {
        for l in &r.log {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                r.variant, r.seed, r.parameters, l.epoch, l.step, l.loss, l.accuracy, l.miou
            );
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn scale_bins() {
        assert_eq!(scale_bin(0.1, 0.1, 3.2, 4), 0);
        assert_eq!(scale_bin(3.2, 0.1, 3.2, 4), 3);
        // Bin edges sit at 0.1 * 32^(k/4).
        assert_eq!(scale_bin(0.1 * 32f64.powf(0.25) * 1.0001, 0.1, 3.2, 4), 1);
        assert_eq!(scale_bin(0.1 * 32f64.powf(0.75) * 0.9999, 0.1, 3.2, 4), 2);
        assert_eq!(scale_bin(50.0, 0.1, 3.2, 4), 3);
        assert_eq!(scale_bin(0.01, 0.1, 3.2, 4), 0);
    }

    #[test]
    fn aligned_activations_score_one() {
        let scales = [0.12, 0.3, 0.9, 3.0];
        let acts: Vec<Vec<f64>> = (0..4).map(|i| (0..4).map(|j| if i == j { 2.0 } else { 1.0 }).collect()).collect();
        for norm in [ActivationNorm::Raw, ActivationNorm::Standardized] {
            assert_eq!(alignment_rate(&acts, &scales, 0.1, 3.2, norm).unwrap(), 1.0);
        }
    }

    #[test]
    fn random_activations_near_chance() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 4000;
        let scales: Vec<f64> = (0..n).map(|_| (rng.gen_range(0.1f64.ln()..3.2f64.ln())).exp()).collect();
        let acts: Vec<Vec<f64>> = (0..n).map(|_| (0..4).map(|_| rng.gen()).collect()).collect();
        let rate = alignment_rate(&acts, &scales, 0.1, 3.2, ActivationNorm::Raw).unwrap();
        assert!((rate - 0.25).abs() < 0.03, "{rate}");
    }

    fn coverage_config(block: BlockKind) -> NetworkConfig {
        NetworkConfig {
            input_points: 128,
            stage_sizes: vec![32, 8],
            channel_widths: vec![4, 4, 4],
            oe_radii: vec![0.3, 0.6, 1.2],
            sa_radii: vec![0.2, 0.4],
            down_oe_dims: vec![Some(vec![4, 4]), Some(vec![4, 4])],
            up_oe_dims: vec![None, None],
            block,
            max_k: 8,
            ..NetworkConfig::default()
        }
    }

    fn random_clouds(n: usize, count: usize, seed: u64) -> Vec<PointCloud> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| PointCloud::new((0..n).map(|_| [rng.gen(), rng.gen(), rng.gen()]).collect()).unwrap())
            .collect()
    }

    #[test]
    fn unbounded_ball_query_captures_everything() {
        let mut cfg = coverage_config(BlockKind::None);
        cfg.sa_radii = vec![1e6, 1e6];
        cfg.max_k = 128;
        let rows = coverage_experiment(&[("ball".into(), cfg)], &random_clouds(128, 3, 1)).unwrap();
        for r in rows {
            assert_eq!((r.min_captured, r.scenes_below_full), (r.stage_size, 0));
        }
    }

    /// Captured counts per scene and stage as one `param` grows.
    fn captured_along(clouds: &[PointCloud], configs: impl Iterator<Item = NetworkConfig>) -> Vec<Vec<usize>> {
        configs
            .map(|cfg| {
                let net = Network::new(cfg).unwrap();
                clouds
                    .iter()
                    .flat_map(|c| (1..=2).map(|k| net.influence_mask(c, Stage::Down(k)).unwrap().len()).collect::<Vec<_>>())
                    .collect()
            })
            .collect()
    }

    fn never_decreasing(series: &[Vec<usize>]) -> bool {
        series.windows(2).all(|w| w[1].iter().zip(&w[0]).all(|(a, b)| a >= b))
    }

    #[test]
    fn max_k_never_lowers_coverage() {
        let clouds = random_clouds(128, 4, 2);
        let configs = [1, 2, 4, 8, 16, 32].into_iter().map(|k| NetworkConfig {
            max_k: k,
            ..coverage_config(BlockKind::None)
        });
        assert!(never_decreasing(&captured_along(&clouds, configs)));
    }

    #[test]
    fn radius_never_lowers_coverage_without_truncation() {
        // With max_k at the point count no group is cut short. Under
        // truncation a wider ball can admit a lower-index point that
        // displaces another, so the property needs this condition.
        let clouds = random_clouds(128, 4, 3);
        let configs = [0.02, 0.05, 0.1, 0.2, 0.4].into_iter().map(|r| NetworkConfig {
            sa_radii: vec![r, 2.0 * r],
            max_k: 128,
            ..coverage_config(BlockKind::None)
        });
        assert!(never_decreasing(&captured_along(&clouds, configs)));
    }

    #[test]
    fn budget_matching_lands_within_ten_percent() {
        let reference = NetworkConfig {
            channel_widths: vec![8, 16, 32, 64],
            ..NetworkConfig::default()
        }
        .with_uniform_blocks(1, 2);
        let variants = grouping_variants(&reference).unwrap();
        let target = Network::new(reference).unwrap().parameter_count() as f64;
        for (name, cfg) in &variants {
            let n = Network::new(cfg.clone()).unwrap().parameter_count() as f64;
            assert!((n - target).abs() / target < 0.1, "{name}: {n} vs {target}");
        }
    }

    #[test]
    fn grouping_runs_repeat_exactly() {
        let cfg = NetworkConfig {
            input_points: 64,
            stage_sizes: vec![16],
            channel_widths: vec![4, 8],
            oe_radii: vec![0.3, 0.6],
            sa_radii: vec![0.4],
            down_oe_dims: vec![Some(vec![4])],
            up_oe_dims: vec![None],
            max_k: 8,
            ..NetworkConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let clouds: Vec<PointCloud> = random_clouds(64, 3, 5)
            .into_iter()
            .map(|c| c.with_labels((0..64).map(|_| rng.gen_range(0..3)).collect()).unwrap())
            .collect();
        let variants = grouping_variants(&cfg).unwrap();
        let tc = TrainConfig {
            epochs: 2,
            ..TrainConfig::default()
        };
        let a = compare_grouping(&variants, &clouds[..2], &clouds[2..], &tc, &[1]).unwrap();
        let b = compare_grouping(&variants, &clouds[..2], &clouds[2..], &tc, &[1]).unwrap();
        assert_eq!(format_grouping(&a), format_grouping(&b));
        assert_eq!(a.len(), 3);
    }
}
