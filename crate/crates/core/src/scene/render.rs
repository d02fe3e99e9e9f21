use crate::error::Result;
use crate::model::DepthMap;
use crate::tensor::Tensor;

use super::Scene;

/// Depth, shading and the id of the surface seen at every pixel.
#[derive(Debug, Clone)]
pub struct Rendered {
    pub depth: DepthMap,
    /// `3×H×W` in `[0, 1]`.
    pub rgb: Tensor,
    /// Planes are `0..P`, box faces `P + 6·b + face`; `-1` where nothing is hit.
    pub surface: Vec<i64>,
}

pub(crate) struct Hit {
    pub t: f64,
    pub normal: [f64; 3],
    pub albedo: [f64; 3],
    pub surface: i64,
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Nearest intersection along `d` (with `d.z = 1`, so `t` is depth) in
/// meters after global scaling.
pub(crate) fn trace(scene: &Scene, d: [f64; 3]) -> Option<Hit> {
    let s = scene.global_scale;
    let mut best: Option<Hit> = None;
    let mut offer = |h: Hit| {
        if h.t > 0.0 && best.as_ref().is_none_or(|b| h.t < b.t) {
            best = Some(h);
        }
    };
    for (i, p) in scene.planes.iter().enumerate() {
        let nd = dot(p.normal, d);
        if nd != 0.0 {
            let t = p.offset * s / nd;
            let normal = if nd > 0.0 { p.normal.map(|v| -v) } else { p.normal };
            offer(Hit {
                t,
                normal,
                albedo: p.albedo,
                surface: i as i64,
            });
        }
    }
    let np = scene.planes.len() as i64;
    for (bi, b) in scene.boxes.iter().enumerate() {
        let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
        let mut face = 0usize;
        let mut ok = true;
        for ax in 0..3 {
            let (lo, hi) = (b.min[ax] * s, b.max[ax] * s);
            if d[ax] == 0.0 {
                if !(0.0 > lo && 0.0 < hi) {
                    ok = false;
                    break;
                }
                continue;
            }
            let (mut a, mut c) = ((lo) / d[ax], (hi) / d[ax]);
            let mut entry_face = 2 * ax;
            if a > c {
                std::mem::swap(&mut a, &mut c);
                entry_face = 2 * ax + 1;
            }
            if a > t0 {
                t0 = a;
                face = entry_face;
            }
            t1 = t1.min(c);
        }
        if ok && t0 <= t1 && t0 > 0.0 {
            let mut normal = [0.0; 3];
            normal[face / 2] = if face.is_multiple_of(2) { -1.0 } else { 1.0 };
            offer(Hit {
                t: t0,
                normal,
                albedo: b.albedo[face],
                surface: np + 6 * bi as i64 + face as i64,
            });
        }
    }
    best
}

/// Ray-casts every pixel center.
pub fn render(scene: &Scene) -> Result<Rendered> {
    scene.camera.validate()?;
    let cam = scene.camera;
    let (w, h) = (cam.width, cam.height);
    let mut depth = vec![0.0; h * w];
    let mut valid = vec![false; h * w];
    let mut rgb = vec![0.0; 3 * h * w];
    let mut surface = vec![-1; h * w];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let col = match trace(scene, cam.ray(x as f64, y as f64)) {
                Some(hit) => {
                    let mm = hit.t * 1000.0;
                    if mm <= scene.max_depth_mm {
                        depth[i] = mm;
                        valid[i] = true;
                    }
                    surface[i] = hit.surface;
                    let shade = scene.ambient + (1.0 - scene.ambient) * dot(hit.normal, scene.light).max(0.0);
                    hit.albedo.map(|a| (a * shade).clamp(0.0, 1.0))
                }
                None => scene.sky,
            };
            for c in 0..3 {
                rgb[c * h * w + i] = col[c];
            }
        }
    }
    Ok(Rendered {
        depth: DepthMap::new(Tensor::new([h, w], depth)?, valid)?,
        rgb: Tensor::new([3, h, w], rgb)?,
        surface,
    })
}

/// Ground-truth depth in millimeters.
pub fn render_depth(scene: &Scene) -> Result<DepthMap> {
    Ok(render(scene)?.depth)
}

pub fn render_rgb(scene: &Scene) -> Result<Tensor> {
    Ok(render(scene)?.rgb)
}
