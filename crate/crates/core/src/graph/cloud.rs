use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One radar return: camera-frame position in meters, its projection in image
/// pixels, and its depth along the optical axis in millimeters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadarPoint {
    pub xyz: [f64; 3],
    pub u: f64,
    pub v: f64,
    pub range_mm: f64,
}

/// Non-empty set of radar returns for one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadarPointCloud {
    points: Vec<RadarPoint>,
}

impl RadarPointCloud {
    pub fn new(points: Vec<RadarPoint>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Data("radar point cloud must hold at least one point".into()));
        }
        if let Some((i, p)) = points.iter().enumerate().find(|(_, p)| !(p.range_mm > 0.0)) {
            return Err(Error::Data(format!("radar point {i} has non-positive range {}", p.range_mm)));
        }
        Ok(Self { points })
    }

    /// Checks that every projected column lies in `[0, width)`.
    pub fn check_columns(&self, width: usize) -> Result<()> {
        match self.points.iter().position(|p| !(p.u >= 0.0 && p.u < width as f64)) {
            Some(i) => Err(Error::Data(format!(
                "radar point {i} projects to column {} outside [0, {width})",
                self.points[i].u
            ))),
            None => Ok(()),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[RadarPoint] {
        &self.points
    }

    pub fn columns(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.u).collect()
    }

    /// The cloud reordered so that new point `i` is old point `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            points: perm.iter().map(|&i| self.points[i]).collect(),
        }
    }

    /// The cloud without point `i`; `None` if that would leave it empty.
    pub fn without(&self, i: usize) -> Option<Self> {
        if self.points.len() < 2 {
            return None;
        }
        let mut points = self.points.clone();
        points.remove(i);
        Some(Self { points })
    }
}
