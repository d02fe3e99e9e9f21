use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{RadarPoint, RadarPointCloud};
use crate::model::DepthMap;

use super::Camera;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RadarNoiseModel {
    pub range_sigma_mm: f64,
    /// Standard deviation of the vertical projection jitter, in pixels.
    pub height_ambiguity_sigma_px: f64,
    pub outlier_fraction: f64,
    /// Outlier ranges are uniform over `[min, max]` mm.
    pub outlier_range_mm: [f64; 2],
    pub points_per_scene: usize,
}

impl Default for RadarNoiseModel {
    fn default() -> Self {
        Self {
            range_sigma_mm: 100.0,
            height_ambiguity_sigma_px: 1.0,
            outlier_fraction: 0.05,
            outlier_range_mm: [1_000.0, 60_000.0],
            points_per_scene: 30,
        }
    }
}

impl RadarNoiseModel {
    pub fn noiseless(points: usize) -> Self {
        Self {
            range_sigma_mm: 0.0,
            height_ambiguity_sigma_px: 0.0,
            outlier_fraction: 0.0,
            outlier_range_mm: [1_000.0, 60_000.0],
            points_per_scene: points,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.outlier_fraction) {
            return Err(Error::Config(format!("outlier fraction {} outside [0, 1]", self.outlier_fraction)));
        }
        if !(self.range_sigma_mm >= 0.0 && self.height_ambiguity_sigma_px >= 0.0) {
            return Err(Error::Config("noise sigmas must be non-negative".into()));
        }
        let [lo, hi] = self.outlier_range_mm;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::Config(format!("bad outlier range [{lo}, {hi}]")));
        }
        if self.points_per_scene == 0 {
            return Err(Error::Config("at least one radar point per scene is required".into()));
        }
        Ok(())
    }
}

/// Samples surface pixels of `gt` and turns them into noisy radar returns.
/// Ranges are depths along the optical axis; `xyz` is re-derived from the
/// noisy range and the jittered image row.
pub fn simulate_radar(camera: &Camera, gt: &DepthMap, noise: &RadarNoiseModel, seed: u64) -> Result<RadarPointCloud> {
    noise.validate()?;
    let pixels: Vec<usize> = (0..gt.valid().len()).filter(|&i| gt.valid()[i]).collect();
    if pixels.is_empty() {
        return Err(Error::Data("no valid depth to place radar points on".into()));
    }
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let k = noise.points_per_scene;
    let picks: Vec<usize> = if k <= pixels.len() {
        index::sample(&mut r, pixels.len(), k).into_vec()
    } else {
        (0..k).map(|_| r.random_range(0..pixels.len())).collect()
    };
    let n_out = (noise.outlier_fraction * k as f64).round() as usize;
    let outliers: Vec<bool> = {
        let chosen = index::sample(&mut r, k, n_out).into_vec();
        let mut o = vec![false; k];
        for i in chosen {
            o[i] = true;
        }
        o
    };
    let range = Normal::new(0.0, noise.range_sigma_mm).expect("validated sigma");
    let height = Normal::new(0.0, noise.height_ambiguity_sigma_px).expect("validated sigma");
    let w = gt.width();
    let points = picks
        .into_iter()
        .zip(outliers)
        .map(|(j, outlier)| {
            let i = pixels[j];
            let (x, y) = ((i % w) as f64, (i / w) as f64);
            let mut z = gt.values().data()[i];
            if noise.range_sigma_mm > 0.0 {
                z += range.sample(&mut r);
            }
            if outlier {
                z = r.random_range(noise.outlier_range_mm[0]..=noise.outlier_range_mm[1]);
            }
            let z = z.max(1.0);
            let mut v = y;
            if noise.height_ambiguity_sigma_px > 0.0 {
                v += height.sample(&mut r);
            }
            let ray = camera.ray(x, v);
            let zm = z / 1000.0;
            RadarPoint {
                xyz: [ray[0] * zm, ray[1] * zm, zm],
                u: x,
                v,
                range_mm: z,
            }
        })
        .collect();
    RadarPointCloud::new(points)
}
