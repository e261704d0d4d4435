use crate::error::{Error, Result};

pub type Point3 = [f64; 3];

/// Positions with optional per-point colors and labels.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    positions: Vec<Point3>,
    colors: Option<Vec<[f64; 3]>>,
    labels: Option<Vec<u32>>,
}

impl PointCloud {
    pub fn new(positions: Vec<Point3>) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::RejectedInput("point cloud is empty".into()));
        }
        if let Some(i) = positions.iter().position(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(Error::RejectedInput(format!("point {i} has a non-finite coordinate")));
        }
        Ok(PointCloud {
            positions,
            colors: None,
            labels: None,
        })
    }

    pub fn with_labels(mut self, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != self.positions.len() {
            return Err(Error::RejectedInput(format!(
                "{} labels for {} points",
                labels.len(),
                self.positions.len()
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn with_colors(mut self, colors: Vec<[f64; 3]>) -> Result<Self> {
        if colors.len() != self.positions.len() {
            return Err(Error::RejectedInput(format!(
                "{} colors for {} points",
                colors.len(),
                self.positions.len()
            )));
        }
        if colors.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::RejectedInput("non-finite color value".into()));
        }
        self.colors = Some(colors);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[Point3] {
        &self.positions
    }

    pub fn colors(&self) -> Option<&[[f64; 3]]> {
        self.colors.as_deref()
    }

    pub fn labels(&self) -> Option<&[u32]> {
        self.labels.as_deref()
    }

    /// Sub-cloud made of the given point indices (repeats allowed).
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let positions = indices.iter().map(|&i| self.positions[i]).collect();
        let mut out = PointCloud::new(positions)?;
        if let Some(c) = &self.colors {
            out.colors = Some(indices.iter().map(|&i| c[i]).collect());
        }
        if let Some(l) = &self.labels {
            out.labels = Some(indices.iter().map(|&i| l[i]).collect());
        }
        Ok(out)
    }

    /// Same cloud with every position shifted by `offset`.
    pub fn translated(&self, offset: Point3) -> Result<Self> {
        let mut out = self.clone();
        for p in &mut out.positions {
            for k in 0..3 {
                p[k] += offset[k];
            }
        }
        if out.positions.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::RejectedInput("translation produced a non-finite coordinate".into()));
        }
        Ok(out)
    }

    /// Axis-aligned bounding box as `(min, max)`.
    pub fn bounds(&self) -> (Point3, Point3) {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in &self.positions {
            for k in 0..3 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        (lo, hi)
    }
}
