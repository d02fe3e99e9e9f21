//! Encoder, decoder, auxiliary relative-depth branch and the full forward pass.

mod checkpoint;
mod depth;

pub use checkpoint::{check_compatible, read_checkpoint, write_checkpoint, Checkpoint};
pub use depth::DepthMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{concat, Tape, Var};
use crate::error::{Error, Result};
use crate::fusion::{attention_scores, fuse_pyramid, init_fusion_params, FeaturePyramid, FusedPyramid, FusionConfig, WindowSpec};
use crate::graph::{self, GraphConfig, RadarPointCloud};
use crate::params::{Bound, ModelParams};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Image width the reference window half-widths were chosen for.
pub const REFERENCE_WIDTH: f64 = 1600.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Fusion layer count `L`; the pyramid has `2L` levels.
    pub layers: usize,
    pub encoder_channels: Vec<usize>,
    pub windows: WindowSpec,
    pub graph: GraphConfig,
    pub fusion: FusionConfig,
    pub height: usize,
    pub width: usize,
    /// Whether the auxiliary relative-depth stem exists.
    pub plugin_branch_enabled: bool,
    /// `false` skips graph extraction and fusion (RGB-only ablation).
    pub radar_branch_enabled: bool,
    /// Output head: `D = output_scale_mm · softplus(z)`.
    pub output_scale_mm: f64,
}

impl Default for ModelConfig {
    /// Three layers at 96×160.
    fn default() -> Self {
        Self::with_size(96, 160)
    }
}

impl ModelConfig {
    /// Default three-layer network at `height×width`, windows scaled from the
    /// reference width.
    pub fn with_size(height: usize, width: usize) -> Self {
        Self {
            layers: 3,
            encoder_channels: vec![16, 32, 32, 64, 64, 128],
            windows: WindowSpec::reference().scaled(width as f64 / REFERENCE_WIDTH),
            graph: GraphConfig::default(),
            fusion: FusionConfig::default(),
            height,
            width,
            plugin_branch_enabled: true,
            radar_branch_enabled: true,
            output_scale_mm: 10_000.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.layers;
        if l == 0 {
            return Err(Error::Config("at least one fusion layer is required".into()));
        }
        if self.encoder_channels.len() != 2 * l {
            return Err(Error::Config(format!(
                "{} encoder channel counts for {} pyramid levels",
                self.encoder_channels.len(),
                2 * l
            )));
        }
        if self.encoder_channels.contains(&0) {
            return Err(Error::Config("encoder channel counts must be positive".into()));
        }
        if self.graph.layers() != l {
            return Err(Error::Config(format!(
                "{} node widths for {l} fusion layers",
                self.graph.layers()
            )));
        }
        self.graph.validate()?;
        self.windows.validate(l)?;
        let f = 1 << l;
        if self.height == 0 || self.width == 0 || !self.height.is_multiple_of(f) || !self.width.is_multiple_of(f) {
            return Err(Error::Config(format!(
                "image {}×{} is not divisible by {f}",
                self.height, self.width
            )));
        }
        if self.fusion.tile == 0 || self.fusion.mlp_expansion == 0 || self.fusion.max_points == 0 {
            return Err(Error::Config("fusion tile, expansion and max_points must be positive".into()));
        }
        if !(self.output_scale_mm > 0.0) {
            return Err(Error::Config("output scale must be positive".into()));
        }
        Ok(())
    }

    /// `(h, w)` of every pyramid level; odd stages halve the resolution.
    pub fn level_sizes(&self) -> Vec<(usize, usize)> {
        (0..2 * self.layers)
            .map(|i| {
                let s = i.div_ceil(2);
                (self.height >> s, self.width >> s)
            })
            .collect()
    }

    fn stride(i: usize) -> usize {
        if i % 2 == 1 {
            2
        } else {
            1
        }
    }

    /// Fresh parameters from `seed`.
    pub fn init_params<T: Scalar>(&self, seed: u64) -> Result<ModelParams<T>> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ModelParams::new();
        let ch = &self.encoder_channels;
        let mut c_in = 3;
        for (i, &c) in ch.iter().enumerate() {
            p.init_conv(&format!("enc{i}"), c_in, c, 3, true, &mut rng);
            c_in = c;
        }
        if self.plugin_branch_enabled {
            p.init_conv("aux.stem", 1, ch[0], 3, false, &mut rng);
        }
        p.init_conv("enc0.merge", 2 * ch[0], ch[0], 1, true, &mut rng);
        if self.radar_branch_enabled {
            self.graph.init_params(&mut p, &mut rng);
            init_fusion_params(&mut p, ch, &self.graph.node_widths, &self.fusion, &mut rng);
        }
        let mut c_cur = ch[2 * self.layers - 1];
        for i in (0..2 * self.layers - 1).rev() {
            p.init_conv(&format!("dec{i}"), c_cur + ch[i], ch[i], 3, true, &mut rng);
            c_cur = ch[i];
        }
        p.init_conv("head", c_cur, 1, 1, true, &mut rng);
        Ok(p)
    }

    /// Names of parameters that only the auxiliary branch uses.
    pub fn is_aux_param(name: &str) -> bool {
        name.starts_with("aux.")
    }
}

fn check_image<T: Scalar>(cfg: &ModelConfig, image: &Tensor<T>) -> Result<()> {
    let want = [3, cfg.height, cfg.width];
    if image.shape() != want {
        return Err(Error::shape("image", image.shape(), &want));
    }
    Ok(())
}

/// Runs the encoder. A missing `aux` embeds as zeros, exactly like an
/// all-zero map.
pub fn encode<'t, T: Scalar>(
    image: &Var<'t, T>,
    aux: Option<&Var<'t, T>>,
    params: &Bound<'t, T>,
    cfg: &ModelConfig,
) -> Result<FeaturePyramid<'t, T>> {
    let tape = image.tape();
    if aux.is_some() && !cfg.plugin_branch_enabled {
        return Err(Error::Config(
            "auxiliary depth given but the plug-in branch is disabled".into(),
        ));
    }
    let (h, w) = (cfg.height, cfg.width);
    let mut levels = Vec::with_capacity(2 * cfg.layers);
    let mut x = *image;
    for i in 0..2 * cfg.layers {
        x = params.conv(&x, &format!("enc{i}"), ModelConfig::stride(i), 1)?.relu();
        if i == 0 {
            let emb = if cfg.plugin_branch_enabled {
                let a = match aux {
                    Some(a) => {
                        if a.shape() != [h, w] {
                            return Err(Error::shape("auxiliary depth", &a.shape(), &[h, w]));
                        }
                        a.reshape(&[1, h, w])?
                    }
                    None => tape.constant(Tensor::zeros([1, h, w])),
                };
                params.conv(&a, "aux.stem", 1, 1)?.relu()
            } else {
                tape.constant(Tensor::zeros(x.shape()))
            };
            x = params.conv(&concat(&[x, emb], 0)?, "enc0.merge", 1, 0)?.relu();
        }
        levels.push(x);
    }
    let level_scale = cfg.level_sizes().iter().map(|&(_, lw)| lw as f64 / w as f64).collect();
    Ok(FeaturePyramid { levels, level_scale })
}

/// Coarse-to-fine decoder with skip connections and a positive output head;
/// returns `[H×W]` depth in millimeters.
pub fn decode<'t, T: Scalar>(fused: &FusedPyramid<'t, T>, params: &Bound<'t, T>, cfg: &ModelConfig) -> Result<Var<'t, T>> {
    let n = fused.levels.len();
    if n != 2 * cfg.layers {
        return Err(Error::Config(format!("decoder expects {} levels, got {n}", 2 * cfg.layers)));
    }
    let mut x = fused.levels[n - 1];
    for i in (0..n - 1).rev() {
        let skip = fused.levels[i];
        if x.shape()[1] != skip.shape()[1] {
            x = x.upsample2x()?;
        }
        x = params.conv(&concat(&[x, skip], 0)?, &format!("dec{i}"), 1, 1)?.relu();
    }
    let z = params.conv(&x, "head", 1, 0)?;
    z.softplus()
        .scale(T::of(cfg.output_scale_mm))
        .reshape(&[cfg.height, cfg.width])
}

/// Full pass on a tape: encode, extract the radar graph, fuse, decode.
pub fn forward_var<'t, T: Scalar>(
    image: &Var<'t, T>,
    cloud: &RadarPointCloud,
    aux: Option<&Var<'t, T>>,
    params: &Bound<'t, T>,
    cfg: &ModelConfig,
) -> Result<Var<'t, T>> {
    cfg.validate()?;
    check_image(cfg, &image.value())?;
    let pyramid = encode(image, aux, params, cfg)?;
    let fused = if cfg.radar_branch_enabled {
        cloud.check_columns(cfg.width)?;
        let g = graph::extract(cloud, params, &cfg.graph)?;
        fuse_pyramid(&pyramid, &g, &cloud.columns(), &cfg.windows, params, &cfg.fusion)?
    } else {
        FusedPyramid { levels: pyramid.levels }
    };
    decode(&fused, params, cfg)
}

/// Inference with frozen parameters. `aux = None` is independent mode.
pub fn forward<T: Scalar>(
    image: &Tensor<T>,
    cloud: &RadarPointCloud,
    aux: Option<&Tensor<T>>,
    params: &ModelParams<T>,
    cfg: &ModelConfig,
) -> Result<DepthMap> {
    let tape = Tape::new();
    let bound = params.bind(&tape, false);
    let img = tape.constant(image.clone());
    let aux = aux.map(|a| tape.constant(a.clone()));
    let d = forward_var(&img, cloud, aux.as_ref(), &bound, cfg)?;
    DepthMap::dense(d.value().cast())
}

/// Attention probability of every radar point at every pixel of the
/// full-resolution level, `[K×H×W]`; zero outside each point's window.
pub fn attention_maps<T: Scalar>(
    image: &Tensor<T>,
    cloud: &RadarPointCloud,
    aux: Option<&Tensor<T>>,
    params: &ModelParams<T>,
    cfg: &ModelConfig,
) -> Result<Tensor<T>> {
    cfg.validate()?;
    if !cfg.radar_branch_enabled {
        return Err(Error::Config("attention maps need the radar branch".into()));
    }
    check_image(cfg, image)?;
    cloud.check_columns(cfg.width)?;
    let tape = Tape::new();
    let bound = params.bind(&tape, false);
    let aux = aux.map(|a| tape.constant(a.clone()));
    let pyramid = encode(&tape.constant(image.clone()), aux.as_ref(), &bound, cfg)?;
    let g = graph::extract(cloud, &bound, &cfg.graph)?;
    let u: Vec<f64> = cloud.columns().iter().map(|&u| u * pyramid.level_scale[0]).collect();
    attention_scores(
        &pyramid.levels[0].value(),
        &g.node_features[0].value(),
        &u,
        cfg.windows.half_widths[0],
        params,
        0,
    )
}
