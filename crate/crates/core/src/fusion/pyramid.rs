use std::rc::Rc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{concat, Var};
use crate::error::{Error, Result};
use crate::graph::RadarGraph;
use crate::params::{Bound, ModelParams};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::attention::{windowed_attention, RowEval};
use super::select::column_keys;

/// Multi-scale image features `F_1..F_2L`, each `C_i×h_i×w_i`.
pub struct FeaturePyramid<'t, T: Scalar = f64> {
    pub levels: Vec<Var<'t, T>>,
    /// `w_i / W` for each level.
    pub level_scale: Vec<f64>,
}

/// Pyramid after radar fusion; shapes match the input pyramid.
pub struct FusedPyramid<'t, T: Scalar = f64> {
    pub levels: Vec<Var<'t, T>>,
}

/// Window half-widths `a_l`, one per fusion layer, in level pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub half_widths: Vec<f64>,
}

impl WindowSpec {
    /// `{48, 32, 16}`, the three-layer setting the method was tuned with.
    pub fn reference() -> Self {
        Self {
            half_widths: vec![48.0, 32.0, 16.0],
        }
    }

    /// Every half-width multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            half_widths: self.half_widths.iter().map(|a| a * factor).collect(),
        }
    }

    pub fn validate(&self, layers: usize) -> Result<()> {
        if self.half_widths.len() != layers {
            return Err(Error::Config(format!(
                "{} window half-widths for {layers} fusion layers",
                self.half_widths.len()
            )));
        }
        if let Some(a) = self.half_widths.iter().find(|a| !(**a > 0.0)) {
            return Err(Error::Config(format!("window half-width must be positive, got {a}")));
        }
        Ok(())
    }
}

/// Evaluation and sizing knobs for the fusion layers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    /// Keys processed per online-softmax step.
    pub tile: usize,
    /// Hidden width of the residual MLP relative to the level channels.
    pub mlp_expansion: usize,
    /// Column count edge rows are zero-padded to; the largest supported K.
    pub max_points: usize,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            tile: 8,
            mlp_expansion: 2,
            max_points: 64,
        }
    }
}

fn level_prefix(level: usize) -> String {
    format!("fusion{level}")
}

/// Adds attention and residual-MLP parameters for every pyramid level.
/// Level `2l` attends over node features (`node_widths[l]` wide), level
/// `2l + 1` over zero-padded adjacency rows (`max_points` wide).
pub fn init_fusion_params<T: Scalar, R: Rng + ?Sized>(
    params: &mut ModelParams<T>,
    channels: &[usize],
    node_widths: &[usize],
    cfg: &FusionConfig,
    rng: &mut R,
) {
    for (i, &c) in channels.iter().enumerate() {
        let f = if i % 2 == 0 { node_widths[i / 2] } else { cfg.max_points };
        let p = level_prefix(i);
        let xavier = |fan_in: usize| (3.0 / fan_in as f64).sqrt();
        params.insert(format!("{p}.wq"), Tensor::uniform([c, c], -xavier(c), xavier(c), rng));
        params.insert(format!("{p}.wk"), Tensor::uniform([f, c], -xavier(f), xavier(f), rng));
        params.insert(format!("{p}.wv"), Tensor::uniform([f, c], -xavier(f), xavier(f), rng));
        let hidden = cfg.mlp_expansion * c;
        params.init_linear(&format!("{p}.mlp1"), c, hidden, true, rng);
        // the residual branch starts small so the pyramid starts near identity
        let lim = 0.1 * (6.0 / hidden as f64).sqrt();
        params.insert(format!("{p}.mlp2.w"), Tensor::uniform([hidden, c], -lim, lim, rng));
        params.insert(format!("{p}.mlp2.b"), Tensor::zeros([c]));
    }
}

/// Pixels of a `h×w` level whose column retains at least one point, in
/// row-major order, with each one's retained point list.
fn retained_pixels(h: usize, w: usize, radar_u: &[f64], a: f64) -> (Vec<usize>, Vec<Vec<usize>>) {
    let keys = column_keys(w, radar_u, a);
    let mut idx = Vec::new();
    let mut lists = Vec::new();
    for y in 0..h {
        for (x, k) in keys.iter().enumerate() {
            if !k.is_empty() {
                idx.push(y * w + x);
                lists.push(k.clone());
            }
        }
    }
    (idx, lists)
}

/// Radar-centered attention on one level.
///
/// `level` is `C×h×w`; `kv_source` is `K×f` with one row per radar point;
/// `radar_u` holds the points' columns in this level's coordinates. Each
/// retained pixel queries the points inside its window; the attention output
/// goes through the residual MLP and is added to the pixel. Every other
/// pixel is passed through untouched.
pub fn radar_centered_attention<'t, T: Scalar>(
    level: &Var<'t, T>,
    kv_source: &Var<'t, T>,
    radar_u: &[f64],
    a: f64,
    params: &Bound<'t, T>,
    level_index: usize,
    eval: RowEval,
) -> Result<Var<'t, T>> {
    let (c, h, w) = match level.shape()[..] {
        [c, h, w] => (c, h, w),
        ref s => return Err(Error::shape("radar_centered_attention", s, &[])),
    };
    let kv_shape = kv_source.shape();
    if kv_shape.len() != 2 || kv_shape[0] != radar_u.len() {
        return Err(Error::shape("radar_centered_attention kv rows", &kv_shape, &[radar_u.len()]));
    }
    let (idx, lists) = retained_pixels(h, w, radar_u, a);
    if idx.is_empty() {
        return Ok(*level);
    }
    let p = level_prefix(level_index);
    let pixels = level.reshape(&[c, h * w])?.transpose()?;
    let queries = pixels.gather_rows(&idx)?.matmul(&params.get(&format!("{p}.wq"))?)?;
    let keys = kv_source.matmul(&params.get(&format!("{p}.wk"))?)?;
    let values = kv_source.matmul(&params.get(&format!("{p}.wv"))?)?;
    let attended = windowed_attention(&queries, &keys, &values, Rc::new(lists), eval)?;
    let hidden = params.linear(&attended, &format!("{p}.mlp1"))?.relu();
    let update = params.linear(&hidden, &format!("{p}.mlp2"))?;
    pixels
        .scatter_add_rows(&update, &idx)?
        .transpose()?
        .reshape(&[c, h, w])
}

/// Per-point attention probabilities on one level, `K×h×w`, zero wherever
/// the pixel lies outside the point's window.
pub fn attention_scores<T: Scalar>(
    level: &Tensor<T>,
    kv_source: &Tensor<T>,
    radar_u: &[f64],
    a: f64,
    params: &ModelParams<T>,
    level_index: usize,
) -> Result<Tensor<T>> {
    let (c, h, w) = match *level.shape() {
        [c, h, w] => (c, h, w),
        _ => return Err(Error::shape("attention_scores", level.shape(), &[])),
    };
    let k = radar_u.len();
    if kv_source.shape().first() != Some(&k) {
        return Err(Error::shape("attention_scores kv rows", kv_source.shape(), &[k]));
    }
    let p = level_prefix(level_index);
    let get = |n: &str| {
        params
            .get(&format!("{p}.{n}"))
            .ok_or_else(|| Error::Config(format!("missing parameter `{p}.{n}`")))
    };
    let (wq, wk) = (get("wq")?, get("wk")?);
    let f = kv_source.shape()[1];
    let keys = crate::kernels::matmul(kv_source.data(), wk.data(), k, f, c);
    let scale = T::one() / T::of_usize(c).sqrt();
    let col_keys = column_keys(w, radar_u, a);
    let mut out = Tensor::zeros([k, h, w]);
    let mut pixel = vec![T::zero(); c];
    for y in 0..h {
        for (x, list) in col_keys.iter().enumerate() {
            if list.is_empty() {
                continue;
            }
            for (ch, v) in pixel.iter_mut().enumerate() {
                *v = level.data()[(ch * h + y) * w + x];
            }
            let q = crate::kernels::matmul(&pixel, wq.data(), 1, c, c);
            let logits: Vec<T> = list
                .iter()
                .map(|&j| crate::kernels::dot(&q, &keys[j * c..(j + 1) * c]) * scale)
                .collect();
            let mx = logits.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
            let s: T = logits.iter().map(|&l| (l - mx).exp()).sum();
            for (&j, &l) in list.iter().zip(&logits) {
                out.set(&[j, y, x], (l - mx).exp() / s);
            }
        }
    }
    Ok(out)
}

/// Fuses node features `N_l` into level `2l` and padded adjacency rows `E_l`
/// into level `2l + 1`, with the layer's half-width applied in each level's
/// own coordinates.
pub fn fuse_pyramid<'t, T: Scalar>(
    pyramid: &FeaturePyramid<'t, T>,
    graph: &RadarGraph<'t, T>,
    radar_u: &[f64],
    windows: &WindowSpec,
    params: &Bound<'t, T>,
    cfg: &FusionConfig,
) -> Result<FusedPyramid<'t, T>> {
    let layers = graph.layers();
    if pyramid.levels.len() != 2 * layers || pyramid.level_scale.len() != pyramid.levels.len() {
        return Err(Error::Config(format!(
            "pyramid has {} levels but the radar graph has {layers} layers",
            pyramid.levels.len()
        )));
    }
    windows.validate(layers)?;
    let k = radar_u.len();
    if k > cfg.max_points {
        return Err(Error::Config(format!("{k} radar points exceed the supported {}", cfg.max_points)));
    }
    let mut levels = Vec::with_capacity(2 * layers);
    for l in 0..layers {
        let a = windows.half_widths[l];
        let nodes = graph.node_features[l];
        let mut edges = graph.edge_features[l];
        if cfg.max_points > k {
            let pad = edges.tape().constant(Tensor::zeros([k, cfg.max_points - k]));
            edges = concat(&[edges, pad], 1)?;
        }
        for (i, kv) in [(2 * l, nodes), (2 * l + 1, edges)] {
            let s = pyramid.level_scale[i];
            let u: Vec<f64> = radar_u.iter().map(|&u| u * s).collect();
            levels.push(radar_centered_attention(
                &pyramid.levels[i],
                &kv,
                &u,
                a,
                params,
                i,
                RowEval::Streaming { tile: cfg.tile },
            )?);
        }
    }
    Ok(FusedPyramid { levels })
}

/// Non-differentiable evaluation of [`radar_centered_attention`].
pub fn radar_centered_attention_values<T: Scalar>(
    level: &Tensor<T>,
    kv_source: &Tensor<T>,
    radar_u: &[f64],
    a: f64,
    params: &ModelParams<T>,
    level_index: usize,
    eval: RowEval,
) -> Result<Tensor<T>> {
    let tape = crate::autodiff::Tape::new();
    let bound = params.bind(&tape, false);
    let out = radar_centered_attention(
        &tape.constant(level.clone()),
        &tape.constant(kv_source.clone()),
        radar_u,
        a,
        &bound,
        level_index,
        eval,
    )?;
    Ok(out.value().as_ref().clone())
}
