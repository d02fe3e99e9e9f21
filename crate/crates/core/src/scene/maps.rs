use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::DepthMap;
use crate::tensor::Tensor;

/// `a / D + b + N(0, σ²)` before per-map normalisation; `D` in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Distortion {
    pub a: f64,
    pub b: f64,
    pub noise_sigma: f64,
}

impl Default for Distortion {
    fn default() -> Self {
        Self {
            a: 1.0,
            b: 0.0,
            noise_sigma: 0.0,
        }
    }
}

impl Distortion {
    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0) {
            return Err(Error::Config(format!("distortion gain must be positive, got {}", self.a)));
        }
        if !(self.noise_sigma >= 0.0) || !self.b.is_finite() {
            return Err(Error::Config("distortion offset and noise must be finite, noise ≥ 0".into()));
        }
        Ok(())
    }
}

/// Disparity-like map in `[0, 1]`; 0 where the source depth is invalid.
#[derive(Debug, Clone, PartialEq)]
pub struct RelativeDepth {
    pub values: Tensor,
    pub valid: Vec<bool>,
}

/// Stride-grid samples of `gt`, linearly interpolated over the two triangles
/// of every grid cell whose corners are all valid.
pub fn make_accumulated(gt: &DepthMap, stride: usize) -> Result<DepthMap> {
    if stride == 0 {
        return Err(Error::Config("stride must be at least 1".into()));
    }
    let (h, w) = (gt.height(), gt.width());
    let samples = (0..h)
        .step_by(stride)
        .flat_map(|y| (0..w).step_by(stride).map(move |x| (y, x)))
        .filter(|&(y, x)| gt.get(y, x).is_some())
        .count();
    if samples < 3 {
        return Err(Error::Data(format!("{samples} valid samples at stride {stride}; need 3")));
    }
    let mut out = vec![0.0; h * w];
    let mut valid = vec![false; h * w];
    if stride == 1 {
        for y in 0..h {
            for x in 0..w {
                if let Some(d) = gt.get(y, x) {
                    out[y * w + x] = d;
                    valid[y * w + x] = true;
                }
            }
        }
        return DepthMap::new(Tensor::new([h, w], out)?, valid);
    }
    let s = stride as f64;
    for y0 in (0..h).step_by(stride) {
        let y1 = y0 + stride;
        if y1 >= h {
            break;
        }
        for x0 in (0..w).step_by(stride) {
            let x1 = x0 + stride;
            if x1 >= w {
                break;
            }
            let (v00, v10, v01, v11) = (gt.get(y0, x0), gt.get(y0, x1), gt.get(y1, x0), gt.get(y1, x1));
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let i = y * w + x;
                    if valid[i] {
                        continue;
                    }
                    let (fx, fy) = ((x - x0) as f64 / s, (y - y0) as f64 / s);
                    // upper triangle (00, 10, 11), then lower (00, 01, 11)
                    let upper = match (fx >= fy, v00, v10, v11) {
                        (true, Some(a), Some(b), Some(c)) => Some(a + fx * (b - a) + fy * (c - b)),
                        _ => None,
                    };
                    let lower = match (fx <= fy, v00, v01, v11) {
                        (true, Some(a), Some(b), Some(c)) => Some(a + fy * (b - a) + fx * (c - b)),
                        _ => None,
                    };
                    if let Some(v) = upper.or(lower) {
                        out[i] = v;
                        valid[i] = true;
                    }
                }
            }
        }
    }
    DepthMap::new(Tensor::new([h, w], out)?, valid)
}

/// Simulated relative-depth prediction: distorted disparity normalised to
/// `[0, 1]` over the valid pixels. A constant map normalises to 0.5.
pub fn make_relative(gt: &DepthMap, distortion: &Distortion, seed: u64) -> Result<RelativeDepth> {
    distortion.validate()?;
    let noise = Normal::new(0.0, distortion.noise_sigma).expect("validated sigma");
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let raw: Vec<Option<f64>> = gt
        .values()
        .data()
        .iter()
        .zip(gt.valid())
        .map(|(&d, &ok)| {
            ok.then(|| {
                let mut v = distortion.a * 1000.0 / d + distortion.b;
                if distortion.noise_sigma > 0.0 {
                    v += noise.sample(&mut r);
                }
                v
            })
        })
        .collect();
    let (lo, hi) = raw
        .iter()
        .flatten()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = hi - lo;
    let values = raw
        .iter()
        .map(|v| match v {
            Some(v) if span > 0.0 => (v - lo) / span,
            Some(_) => 0.5,
            None => 0.0,
        })
        .collect();
    Ok(RelativeDepth {
        values: Tensor::new([gt.height(), gt.width()], values)?,
        valid: gt.valid().to_vec(),
    })
}
