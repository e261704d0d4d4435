use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::shapes::{generate_shape, ShapeKind, ShapeSpec};
use crate::error::{Error, Result};
use crate::geometry::PointCloud;

/// A labeled cloud composed of shapes, with per-point provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub cloud: PointCloud,
    /// Index into `specs` of the shape each point was drawn from.
    pub provenance: Vec<usize>,
    pub specs: Vec<ShapeSpec>,
    pub seed: u64,
}

/// Merges the shapes and resamples the union to exactly `n_points`.
///
/// Each shape is drawn with its own point count; the merged cloud is then
/// uniformly subsampled (without replacement) or padded (with
/// replacement). Every shape's proportional share of `n_points` must be at
/// least 8.
pub fn generate_scene(specs: &[ShapeSpec], n_points: usize, seed: u64) -> Result<Scene> {
    if specs.is_empty() {
        return Err(Error::invalid("a scene needs at least one shape"));
    }
    let total: usize = specs.iter().map(|s| s.points).sum();
    for (i, s) in specs.iter().enumerate() {
        s.validate()?;
        if s.points * n_points < 8 * total {
            return Err(Error::invalid(format!(
                "shape {i} would receive fewer than 8 of {n_points} points"
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut positions = Vec::with_capacity(total);
    let mut labels = Vec::with_capacity(total);
    let mut provenance = Vec::with_capacity(total);
    for (i, s) in specs.iter().enumerate() {
        let c = generate_shape(s, rng.gen())?;
        positions.extend_from_slice(c.positions());
        labels.extend_from_slice(c.labels().unwrap());
        provenance.extend(std::iter::repeat_n(i, s.points));
    }
    let picks: Vec<usize> = if total >= n_points {
        let mut p = sample(&mut rng, total, n_points).into_vec();
        p.sort_unstable();
        p
    } else {
        let mut p: Vec<usize> = (0..total).collect();
        p.extend((total..n_points).map(|_| rng.gen_range(0..total)));
        p
    };
    let cloud = PointCloud::new(picks.iter().map(|&i| positions[i]).collect())?
        .with_labels(picks.iter().map(|&i| labels[i]).collect())?;
    Ok(Scene {
        cloud,
        provenance: picks.iter().map(|&i| provenance[i]).collect(),
        specs: specs.to_vec(),
        seed,
    })
}

/// Class id of each shape kind in the toy segmentation task.
pub fn class_of(kind: ShapeKind) -> u32 {
    match kind {
        ShapeKind::Sphere => 0,
        ShapeKind::Cuboid => 1,
        ShapeKind::Plane => 2,
    }
}

/// Parameters of the toy segmentation scenes.
#[derive(Debug, Clone, PartialEq)]
pub struct ToySceneConfig {
    pub points: usize,
    /// 2: sphere and cuboid; 3: adds a floor plane.
    pub classes: usize,
    pub scale_min: f64,
    pub scale_max: f64,
    /// Side of the square floor the objects are scattered over.
    pub floor: f64,
}

impl Default for ToySceneConfig {
    fn default() -> Self {
        ToySceneConfig {
            points: 1024,
            classes: 3,
            scale_min: 0.3,
            scale_max: 0.6,
            floor: 2.0,
        }
    }
}

/// Shape list of one toy scene: a sphere and a cuboid at random,
/// non-overlapping floor positions, hovering above an optional floor plane.
/// Point budgets follow surface area so density is roughly uniform.
pub fn toy_scene_specs(cfg: &ToySceneConfig, rng: &mut impl Rng) -> Result<Vec<ShapeSpec>> {
    if !(2..=3).contains(&cfg.classes) {
        return Err(Error::invalid(format!("toy scenes have 2 or 3 classes, got {}", cfg.classes)));
    }
    if !(cfg.scale_min > 0.0) || cfg.scale_min > cfg.scale_max {
        return Err(Error::invalid("invalid scale range"));
    }
    let half = cfg.floor * 0.5;
    let mut objects: Vec<(ShapeKind, f64, [f64; 2])> = Vec::new();
    for kind in [ShapeKind::Sphere, ShapeKind::Cuboid] {
        let scale = rng.gen_range(cfg.scale_min..=cfg.scale_max);
        let lim = (half - scale * 0.5).max(0.0);
        let mut xy = [0.0; 2];
        for _ in 0..100 {
            xy = [rng.gen_range(-lim..=lim), rng.gen_range(-lim..=lim)];
            let clear = objects.iter().all(|(_, s, o)| {
                let d = ((xy[0] - o[0]).powi(2) + (xy[1] - o[1]).powi(2)).sqrt();
                d > (s + scale) * 0.75
            });
            if clear {
                break;
            }
        }
        objects.push((kind, scale, xy));
    }
    let lift = 0.1;
    let mut specs: Vec<ShapeSpec> = objects
        .iter()
        .map(|&(kind, scale, xy)| ShapeSpec {
            kind,
            center: [xy[0], xy[1], lift + scale * 0.5],
            scale,
            points: 0,
            label: class_of(kind),
        })
        .collect();
    if cfg.classes == 3 {
        specs.push(ShapeSpec {
            kind: ShapeKind::Plane,
            center: [0.0, 0.0, 0.0],
            scale: cfg.floor,
            points: 0,
            label: class_of(ShapeKind::Plane),
        });
    }
    // The floor counts at half its area so the objects keep a fair share.
    let weight = |s: &ShapeSpec| if s.kind == ShapeKind::Plane { 0.5 * s.area() } else { s.area() };
    let total: f64 = specs.iter().map(weight).sum();
    if cfg.points < 8 * specs.len() {
        return Err(Error::invalid(format!("{} points cannot hold {} shapes", cfg.points, specs.len())));
    }
    for s in &mut specs {
        s.points = ((cfg.points as f64 * weight(s) / total).round() as usize).max(8);
    }
    // Take any excess from the largest share so every shape keeps 8 points.
    let sum: usize = specs.iter().map(|s| s.points).sum();
    if sum > cfg.points {
        let big = (0..specs.len()).max_by_key(|&i| specs[i].points).unwrap();
        specs[big].points -= sum - cfg.points;
    }
    Ok(specs)
}

/// One toy scene drawn from `seed`.
pub fn toy_scene(cfg: &ToySceneConfig, seed: u64) -> Result<Scene> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let specs = toy_scene_specs(cfg, &mut rng)?;
    generate_scene(&specs, cfg.points, rng.gen())
}

/// Parameters of the single-shape multi-scale dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiScaleConfig {
    pub points: usize,
    pub scale_min: f64,
    pub scale_max: f64,
}

impl Default for MultiScaleConfig {
    fn default() -> Self {
        MultiScaleConfig {
            points: 1024,
            scale_min: 0.1,
            scale_max: 3.2,
        }
    }
}

/// One sphere or cuboid centered at the origin, with its scale drawn
/// log-uniformly from the configured range.
pub fn multiscale_shape(cfg: &MultiScaleConfig, seed: u64) -> Result<Scene> {
    if !(cfg.scale_min > 0.0) || cfg.scale_min > cfg.scale_max {
        return Err(Error::invalid("invalid scale range"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kind = if rng.gen() { ShapeKind::Sphere } else { ShapeKind::Cuboid };
    let (lo, hi) = (cfg.scale_min.ln(), cfg.scale_max.ln());
    let scale = if hi > lo { rng.gen_range(lo..hi).exp() } else { cfg.scale_min };
    let spec = ShapeSpec {
        kind,
        center: [0.0; 3],
        scale,
        points: cfg.points,
        label: class_of(kind),
    };
    generate_scene(&[spec], cfg.points, rng.gen())
}
