use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::geometry::{Point3, PointCloud};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ShapeKind {
    Sphere,
    Cuboid,
    Plane,
}

impl ShapeKind {
    pub fn name(self) -> &'static str {
        match self {
            ShapeKind::Sphere => "sphere",
            ShapeKind::Cuboid => "cuboid",
            ShapeKind::Plane => "plane",
        }
    }

    /// Surface area of the unit-scale shape.
    pub fn unit_area(self) -> f64 {
        match self {
            ShapeKind::Sphere => std::f64::consts::PI,
            ShapeKind::Cuboid => 6.0,
            ShapeKind::Plane => 1.0,
        }
    }
}

impl std::str::FromStr for ShapeKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sphere" => Ok(ShapeKind::Sphere),
            "cuboid" => Ok(ShapeKind::Cuboid),
            "plane" => Ok(ShapeKind::Plane),
            _ => Err(Error::invalid(format!("unknown shape kind `{s}`"))),
        }
    }
}

/// A labeled primitive. `scale` is the sphere diameter, the cube side, or
/// the side of the horizontal square plane.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeSpec {
    pub kind: ShapeKind,
    pub center: Point3,
    pub scale: f64,
    pub points: usize,
    pub label: u32,
}

impl ShapeSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0) || !self.scale.is_finite() {
            return Err(Error::invalid(format!("shape scale must be positive, got {}", self.scale)));
        }
        if self.points < 8 {
            return Err(Error::invalid(format!("a shape needs at least 8 points, got {}", self.points)));
        }
        if self.center.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("shape center must be finite"));
        }
        Ok(())
    }

    pub fn area(&self) -> f64 {
        self.kind.unit_area() * self.scale * self.scale
    }
}

/// Points drawn uniformly on the shape's surface, labeled with `spec.label`.
pub fn generate_shape(spec: &ShapeSpec, seed: u64) -> Result<PointCloud> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = spec.scale * 0.5;
    let c = spec.center;
    let mut pts = Vec::with_capacity(spec.points);
    for _ in 0..spec.points {
        let local: Point3 = match spec.kind {
            ShapeKind::Sphere => loop {
                let v: Point3 = [
                    rng.sample(StandardNormal),
                    rng.sample(StandardNormal),
                    rng.sample(StandardNormal),
                ];
                let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
                if n > 1e-12 {
                    break [v[0] / n * h, v[1] / n * h, v[2] / n * h];
                }
            },
            ShapeKind::Cuboid => {
                // Six equal faces: pick one, then a uniform point on it.
                let face = rng.gen_range(0..6);
                let axis = face / 2;
                let sign = if face % 2 == 0 { -h } else { h };
                let u = rng.gen_range(-h..=h);
                let v = rng.gen_range(-h..=h);
                match axis {
                    0 => [sign, u, v],
                    1 => [u, sign, v],
                    _ => [u, v, sign],
                }
            }
            ShapeKind::Plane => [rng.gen_range(-h..=h), rng.gen_range(-h..=h), 0.0],
        };
        pts.push([local[0] + c[0], local[1] + c[1], local[2] + c[2]]);
    }
    PointCloud::new(pts)?.with_labels(vec![spec.label; spec.points])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(kind: ShapeKind, scale: f64) -> ShapeSpec {
        ShapeSpec {
            kind,
            center: [1.0, -2.0, 0.5],
            scale,
            points: 500,
            label: 3,
        }
    }

    #[test]
    fn sphere_points_on_surface() {
        let s = spec(ShapeKind::Sphere, 0.7);
        let c = generate_shape(&s, 1).unwrap();
        for p in c.positions() {
            let d = crate::geometry::dist2(p, &s.center).sqrt();
            assert!((d - 0.35).abs() < 1e-12, "{d}");
        }
        assert!(c.labels().unwrap().iter().all(|&l| l == 3));
    }

    #[test]
    fn cuboid_points_on_boundary() {
        let s = spec(ShapeKind::Cuboid, 2.0);
        let c = generate_shape(&s, 2).unwrap();
        for p in c.positions() {
            let m = (0..3).map(|k| (p[k] - s.center[k]).abs()).fold(0.0, f64::max);
            assert!((m - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn plane_is_flat_square() {
        let s = spec(ShapeKind::Plane, 3.0);
        let c = generate_shape(&s, 3).unwrap();
        for p in c.positions() {
            assert_eq!(p[2], 0.5);
            assert!((p[0] - 1.0).abs() <= 1.5 && (p[1] + 2.0).abs() <= 1.5);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let s = spec(ShapeKind::Cuboid, 1.0);
        assert_eq!(generate_shape(&s, 9).unwrap(), generate_shape(&s, 9).unwrap());
        assert_ne!(generate_shape(&s, 9).unwrap(), generate_shape(&s, 10).unwrap());
    }

    #[test]
    fn rejects_invalid_specs() {
        let mut s = spec(ShapeKind::Sphere, 0.0);
        assert!(generate_shape(&s, 0).is_err());
        s.scale = 1.0;
        s.points = 7;
        assert!(generate_shape(&s, 0).is_err());
    }
}
