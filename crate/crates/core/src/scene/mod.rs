//! Synthetic scenes: parametric geometry, depth and image rendering, radar
//! simulation, derived depth maps, metrics and on-disk formats.

mod dataset;
mod io;
mod maps;
mod metrics;
mod radar;
mod render;

pub use dataset::{
    derive_seed, generate_dataset, hash_bytes, hash_file, load_dataset, load_sample, read_scene, Artifact, DatasetEntry, GenConfig,
    Manifest, ManifestFile, SceneData, MANIFEST,
};
pub use io::{
    read_depth_pgm, read_mask, read_pgm16, read_radar_csv, write_depth_pgm, write_mask, write_pgm16, write_pgm8,
    write_radar_csv, MaskDescriptor,
};
pub use maps::{make_accumulated, make_relative, Distortion, RelativeDepth};
pub use metrics::{compute_metrics, MetricsReport};
pub use radar::{simulate_radar, RadarNoiseModel};
pub use render::{render, render_depth, render_rgb, Rendered};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pinhole intrinsics in pixels; pixel `(x, y)` is centered at `(x, y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Camera {
    pub fn validate(&self) -> Result<()> {
        if self.fx == 0.0 || self.fy == 0.0 || !self.fx.is_finite() || !self.fy.is_finite() {
            return Err(Error::Config(format!("degenerate focal lengths {} × {}", self.fx, self.fy)));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::Config("camera image is empty".into()));
        }
        Ok(())
    }

    /// Ray direction with unit depth through image point `(u, v)`.
    pub fn ray(&self, u: f64, v: f64) -> [f64; 3] {
        [(u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0]
    }

    pub fn project(&self, p: [f64; 3]) -> (f64, f64) {
        (self.fx * p[0] / p[2] + self.cx, self.fy * p[1] / p[2] + self.cy)
    }
}

/// `normal · p = offset` with a single albedo; camera frame is x right,
/// y down, z forward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plane {
    pub normal: [f64; 3],
    pub offset: f64,
    pub albedo: [f64; 3],
}

/// Axis-aligned box with one albedo per face, ordered
/// `-x, +x, -y, +y, -z, +z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneBox {
    pub min: [f64; 3],
    pub max: [f64; 3],
    pub albedo: [[f64; 3]; 6],
}

/// One synthetic frame. Geometry is in meters before `global_scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub camera: Camera,
    pub planes: Vec<Plane>,
    pub boxes: Vec<SceneBox>,
    pub global_scale: f64,
    /// Unit vector towards the light.
    pub light: [f64; 3],
    pub ambient: f64,
    pub sky: [f64; 3],
    /// Hits farther than this are not valid depth (16-bit maps stop at 65.5 m).
    pub max_depth_mm: f64,
    pub seed: u64,
    pub noise: RadarNoiseModel,
    pub distortion: Distortion,
    pub acc_stride: usize,
}

/// Ranges the random scene generator draws from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneRanges {
    pub width: usize,
    pub height: usize,
    pub scale: [f64; 2],
    pub boxes: [usize; 2],
    pub camera_height_m: f64,
    pub wall_distance_m: f64,
}

impl Default for SceneRanges {
    fn default() -> Self {
        Self {
            width: 160,
            height: 96,
            scale: [0.5, 2.5],
            boxes: [2, 5],
            camera_height_m: 1.5,
            wall_distance_m: 25.0,
        }
    }
}

fn color(r: &mut ChaCha8Rng) -> [f64; 3] {
    [r.random_range(0.2..1.0), r.random_range(0.2..1.0), r.random_range(0.2..1.0)]
}

impl Scene {
    /// Ground plane, back wall and a few boxes resting on the ground.
    pub fn random(ranges: &SceneRanges, noise: RadarNoiseModel, distortion: Distortion, acc_stride: usize, seed: u64) -> Result<Self> {
        if !(ranges.scale[0] > 0.0 && ranges.scale[0] <= ranges.scale[1]) {
            return Err(Error::Config(format!("bad scale range {:?}", ranges.scale)));
        }
        if ranges.boxes[0] > ranges.boxes[1] {
            return Err(Error::Config(format!("bad box count range {:?}", ranges.boxes)));
        }
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let (w, h) = (ranges.width, ranges.height);
        let f = 0.9 * w as f64;
        let camera = Camera {
            fx: f,
            fy: f,
            cx: (w as f64 - 1.0) / 2.0,
            cy: 0.4 * (h as f64 - 1.0),
            width: w,
            height: h,
        };
        let ground = ranges.camera_height_m;
        let wall = ranges.wall_distance_m;
        let planes = vec![
            Plane {
                normal: [0.0, 1.0, 0.0],
                offset: ground,
                albedo: color(&mut r),
            },
            Plane {
                normal: [0.0, 0.0, 1.0],
                offset: wall,
                albedo: color(&mut r),
            },
        ];
        let n = r.random_range(ranges.boxes[0]..=ranges.boxes[1]);
        let boxes = (0..n)
            .map(|_| {
                let z = r.random_range(0.2 * wall..0.8 * wall);
                let half_fov = camera.cx / camera.fx;
                let x = r.random_range(-0.8 * half_fov * z..0.8 * half_fov * z);
                let (sx, sy, sz) = (r.random_range(1.0..4.0), r.random_range(1.0..3.5), r.random_range(1.0..3.0));
                let mut albedo = [[0.0; 3]; 6];
                for a in albedo.iter_mut() {
                    *a = color(&mut r);
                }
                SceneBox {
                    min: [x - sx / 2.0, ground - sy, z - sz / 2.0],
                    max: [x + sx / 2.0, ground, z + sz / 2.0],
                    albedo,
                }
            })
            .collect();
        let l: [f64; 3] = [-0.3, -1.0, -0.6];
        let norm = l.iter().map(|v| v * v).sum::<f64>().sqrt();
        Ok(Self {
            camera,
            planes,
            boxes,
            global_scale: r.random_range(ranges.scale[0]..=ranges.scale[1]),
            light: l.map(|v| v / norm),
            ambient: 0.3,
            sky: [0.6, 0.8, 1.0],
            max_depth_mm: 65_000.0,
            seed,
            noise,
            distortion,
            acc_stride,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.camera.validate()?;
        if !(self.global_scale > 0.0) {
            return Err(Error::Config(format!("global scale must be positive, got {}", self.global_scale)));
        }
        if !(self.max_depth_mm > 0.0) {
            return Err(Error::Config("max depth must be positive".into()));
        }
        if self.acc_stride == 0 {
            return Err(Error::Config("accumulation stride must be at least 1".into()));
        }
        self.noise.validate()?;
        self.distortion.validate()
    }
}
