//! Point clouds, input validation and preprocessing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point3 = [f64; 3];

/// An N×3 cloud with optional per-point part labels and a shape category.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Point3>,
    labels: Option<Vec<u16>>,
    category: Option<u16>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyCloud);
        }
        if let Some(index) = points.iter().position(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(Error::NonFiniteInput { index });
        }
        Ok(Self {
            points,
            labels: None,
            category: None,
        })
    }

    pub fn with_labels(mut self, labels: Vec<u16>) -> Result<Self> {
        if labels.len() != self.points.len() {
            return Err(Error::ShapeMismatch {
                left: (self.points.len(), 3),
                right: (labels.len(), 1),
            });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn with_category(mut self, category: u16) -> Self {
        self.category = Some(category);
        self
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn labels(&self) -> Option<&[u16]> {
        self.labels.as_deref()
    }

    pub fn category(&self) -> Option<u16> {
        self.category
    }

    pub fn centroid(&self) -> Point3 {
        let n = self.points.len() as f64;
        let mut c = [0.0; 3];
        for p in &self.points {
            for a in 0..3 {
                c[a] += p[a];
            }
        }
        c.map(|v| v / n)
    }

    /// Keeps the points at `indices` (in that order), carrying labels along.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::EmptyCloud);
        }
        let points = indices.iter().map(|&i| self.points[i]).collect();
        let labels = self
            .labels
            .as_ref()
            .map(|l| indices.iter().map(|&i| l[i]).collect());
        Ok(Self {
            points,
            labels,
            category: self.category,
        })
    }

    fn map_points(&self, f: impl Fn(&Point3) -> Point3) -> Self {
        Self {
            points: self.points.iter().map(f).collect(),
            labels: self.labels.clone(),
            category: self.category,
        }
    }

    /// Translates the centroid to the origin without rescaling.
    pub fn centered(&self) -> Self {
        let c = self.centroid();
        self.map_points(|p| [p[0] - c[0], p[1] - c[1], p[2] - c[2]])
    }

    /// Centers the cloud and scales it so the farthest point sits on the unit
    /// sphere. A cloud of identical points collapses to the origin.
    pub fn canonicalize(&self) -> Self {
        let centered = self.centered();
        let max_norm = centered
            .points
            .iter()
            .map(norm)
            .fold(0.0_f64, f64::max);
        if max_norm <= 1e-12 {
            return centered.map_points(|_| [0.0; 3]);
        }
        centered.map_points(|p| p.map(|v| v / max_norm))
    }

    /// Uniformly scales every coordinate by `factor` about the origin.
    pub fn scaled(&self, factor: f64) -> Self {
        self.map_points(|p| p.map(|v| v * factor))
    }

    pub fn translated(&self, t: Point3) -> Self {
        self.map_points(|p| [p[0] + t[0], p[1] + t[1], p[2] + t[2]])
    }
}

pub(crate) fn norm(p: &Point3) -> f64 {
    (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DispersionStats {
    /// Mean of the three per-axis population standard deviations.
    pub sigma_g: f64,
}

/// Mean per-axis population standard deviation of the cloud.
pub fn global_dispersion(cloud: &PointCloud) -> DispersionStats {
    // Welford accumulation per axis.
    let mut mean = [0.0_f64; 3];
    let mut m2 = [0.0_f64; 3];
    for (i, p) in cloud.points().iter().enumerate() {
        let n = (i + 1) as f64;
        for a in 0..3 {
            let delta = p[a] - mean[a];
            mean[a] += delta / n;
            m2[a] += delta * (p[a] - mean[a]);
        }
    }
    let n = cloud.len() as f64;
    let sigma_g = m2.iter().map(|v| (v.max(0.0) / n).sqrt()).sum::<f64>() / 3.0;
    DispersionStats { sigma_g }
}

/// A class id together with the size of the label space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClassLabel {
    pub class_id: usize,
    pub num_classes: usize,
}

impl ClassLabel {
    pub fn new(class_id: usize, num_classes: usize) -> Result<Self> {
        if class_id >= num_classes {
            return Err(Error::ClassOutOfRange {
                class: class_id,
                classes: num_classes,
            });
        }
        Ok(Self {
            class_id,
            num_classes,
        })
    }

    pub fn one_hot(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.num_classes];
        v[self.class_id] = 1.0;
        v
    }
}
