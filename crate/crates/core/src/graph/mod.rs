//! Graph-based radar structure extraction.
//!
//! Radar points are graph nodes. A kNN neighbourhood feeds the node
//! generator (per-edge MLP, max-pool over neighbours, concatenated with a
//! per-point embedding); each layer then derives a row-stochastic soft
//! adjacency from the node features and passes messages along it.

mod cloud;

pub use cloud::{RadarPoint, RadarPointCloud};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{concat, Tape, Var};
use crate::error::{Error, Result};
use crate::params::{Bound, ModelParams};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Shape of the graph extractor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphConfig {
    /// Node feature width per layer; its length is the layer count.
    pub node_widths: Vec<usize>,
    /// Neighbour count; `None` means `min(4, K − 1)`.
    pub knn_k: Option<usize>,
    /// Width of the projections compared in the soft adjacency.
    pub edge_width: usize,
    /// Meters per unit of normalised point coordinates.
    pub geometry_unit_m: f64,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self {
            node_widths: vec![32, 64, 128],
            knn_k: None,
            edge_width: 16,
            geometry_unit_m: 10.0,
        }
    }
}

impl GraphConfig {
    pub fn layers(&self) -> usize {
        self.node_widths.len()
    }

    pub fn neighbours(&self, points: usize) -> usize {
        self.knn_k.unwrap_or_else(|| 4.min(points.saturating_sub(1)))
    }

    pub fn validate(&self) -> Result<()> {
        if self.node_widths.is_empty() {
            return Err(Error::Config("graph needs at least one layer".into()));
        }
        if self.node_widths[0] < 2 || !self.node_widths[0].is_multiple_of(2) {
            return Err(Error::Config(format!(
                "first node width must be even and ≥ 2, got {}",
                self.node_widths[0]
            )));
        }
        if self.node_widths.contains(&0) || self.edge_width == 0 || !(self.geometry_unit_m > 0.0) {
            return Err(Error::Config("graph widths and geometry unit must be positive".into()));
        }
        Ok(())
    }

    /// Adds freshly initialised extractor parameters under `graph.`.
    pub fn init_params<T: Scalar, R: Rng + ?Sized>(&self, params: &mut ModelParams<T>, rng: &mut R) {
        let half = self.node_widths[0] / 2;
        params.init_linear("graph.node.edge1", 4, half, true, rng);
        params.init_linear("graph.node.edge2", half, half, true, rng);
        params.init_linear("graph.node.center", 4, half, true, rng);
        for (l, &d) in self.node_widths.iter().enumerate() {
            params.init_linear(&format!("graph.edge{l}.hidden"), d, d, true, rng);
            params.init_linear(&format!("graph.edge{l}.query"), d, self.edge_width, false, rng);
            params.init_linear(&format!("graph.edge{l}.key"), d, self.edge_width, false, rng);
            if let Some(&next) = self.node_widths.get(l + 1) {
                params.init_linear(&format!("graph.agg{l}.msg"), d, next, false, rng);
                params.init_linear(&format!("graph.agg{l}.self"), d, next, true, rng);
            }
        }
    }
}

/// Per-layer node features `N_l` (K×d_l) and soft adjacencies `E_l` (K×K).
pub struct RadarGraph<'t, T: Scalar = f64> {
    pub node_features: Vec<Var<'t, T>>,
    pub edge_features: Vec<Var<'t, T>>,
    pub knn_index: Vec<Vec<usize>>,
}

impl<T: Scalar> RadarGraph<'_, T> {
    pub fn layers(&self) -> usize {
        self.node_features.len()
    }
}

/// Indices of the `k` nearest other points (Euclidean over xyz), nearest
/// first, ties broken by lower index.
pub fn build_knn(cloud: &RadarPointCloud, k: usize) -> Result<Vec<Vec<usize>>> {
    let n = cloud.len();
    if k >= n {
        return Err(Error::Config(format!("knn: k = {k} needs more than {n} points")));
    }
    let pts = cloud.points();
    Ok((0..n)
        .map(|i| {
            let mut others: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (dist2(&pts[i].xyz, &pts[j].xyz), j))
                .collect();
            others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            others.into_iter().take(k).map(|(_, j)| j).collect()
        })
        .collect())
}

fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (0..3).map(|i| (a[i] - b[i]).powi(2)).sum()
}

/// Normalised `(x, y, z, range)` of every point, `K×4`.
fn point_inputs<T: Scalar>(cloud: &RadarPointCloud, unit_m: f64) -> Tensor<T> {
    let mut d = Vec::with_capacity(cloud.len() * 4);
    for p in cloud.points() {
        d.extend(p.xyz.iter().map(|&c| T::of(c / unit_m)));
        d.push(T::of(p.range_mm / (1000.0 * unit_m)));
    }
    Tensor::new([cloud.len(), 4], d).expect("K×4")
}

/// Per-edge inputs: neighbour offset and neighbour range, `(K·k)×4`, grouped by
/// centre point.
fn edge_inputs<T: Scalar>(cloud: &RadarPointCloud, knn: &[Vec<usize>], unit_m: f64) -> Tensor<T> {
    let pts = cloud.points();
    let k = knn.first().map_or(0, Vec::len);
    let mut d = Vec::with_capacity(pts.len() * k * 4);
    for (i, nb) in knn.iter().enumerate() {
        for &j in nb {
            d.extend((0..3).map(|c| T::of((pts[j].xyz[c] - pts[i].xyz[c]) / unit_m)));
            d.push(T::of(pts[j].range_mm / (1000.0 * unit_m)));
        }
    }
    Tensor::new([pts.len() * k, 4], d).expect("(K·k)×4")
}

/// First-layer node features `N_1`.
pub fn node_generator<'t, T: Scalar>(
    cloud: &RadarPointCloud,
    knn: &[Vec<usize>],
    params: &Bound<'t, T>,
    cfg: &GraphConfig,
) -> Result<Var<'t, T>> {
    let tape = params.get("graph.node.center.w")?.tape();
    let n = cloud.len();
    let k = knn.first().map_or(0, Vec::len);
    if knn.len() != n || knn.iter().any(|r| r.len() != k) {
        return Err(Error::Config("knn index does not match the cloud".into()));
    }
    let half = cfg.node_widths[0] / 2;
    let pooled = if k == 0 {
        tape.constant(Tensor::zeros([n, half]))
    } else {
        let e = tape.constant(edge_inputs(cloud, knn, cfg.geometry_unit_m));
        let h = params.linear(&e, "graph.node.edge1")?.relu();
        let h = params.linear(&h, "graph.node.edge2")?.relu();
        h.segment_max(k)?
    };
    let c = tape.constant(point_inputs(cloud, cfg.geometry_unit_m));
    let center = params.linear(&c, "graph.node.center")?.relu();
    concat(&[pooled, center], 1)
}

/// Soft adjacency `E_l`: row-wise softmax of scaled dot products between
/// projected node features. The diagonal is kept.
pub fn edge_generator<'t, T: Scalar>(nodes: &Var<'t, T>, layer: usize, params: &Bound<'t, T>, cfg: &GraphConfig) -> Result<Var<'t, T>> {
    let h = params.linear(nodes, &format!("graph.edge{layer}.hidden"))?.relu();
    let q = params.linear(&h, &format!("graph.edge{layer}.query"))?;
    let k = params.linear(&h, &format!("graph.edge{layer}.key"))?;
    let logits = q
        .matmul(&k.transpose()?)?
        .scale(T::one() / T::of_usize(cfg.edge_width).sqrt());
    logits.softmax(1)
}

/// Message passing along the soft adjacency with a self projection:
/// `relu(E·N·W_msg + N·W_self + b)`.
pub fn aggregate<'t, T: Scalar>(nodes: &Var<'t, T>, edges: &Var<'t, T>, layer: usize, params: &Bound<'t, T>) -> Result<Var<'t, T>> {
    let msg = edges
        .matmul(nodes)?
        .matmul(&params.get(&format!("graph.agg{layer}.msg.w"))?)?;
    let own = params.linear(nodes, &format!("graph.agg{layer}.self"))?;
    Ok(msg.add(&own)?.relu())
}

/// Runs the node generator, then `L` rounds of edge generation with
/// aggregation between them, recording `(N_l, E_l)` for every layer.
pub fn extract<'t, T: Scalar>(cloud: &RadarPointCloud, params: &Bound<'t, T>, cfg: &GraphConfig) -> Result<RadarGraph<'t, T>> {
    cfg.validate()?;
    let knn = build_knn(cloud, cfg.neighbours(cloud.len()))?;
    let mut nodes = node_generator(cloud, &knn, params, cfg)?;
    let mut node_features = Vec::with_capacity(cfg.layers());
    let mut edge_features = Vec::with_capacity(cfg.layers());
    for l in 0..cfg.layers() {
        let edges = edge_generator(&nodes, l, params, cfg)?;
        node_features.push(nodes);
        edge_features.push(edges);
        if l + 1 < cfg.layers() {
            nodes = aggregate(&nodes, &edges, l, params)?;
        }
    }
    Ok(RadarGraph {
        node_features,
        edge_features,
        knn_index: knn,
    })
}

/// Convenience: extract on a private tape and return plain tensors.
pub fn extract_values<T: Scalar>(
    cloud: &RadarPointCloud,
    params: &ModelParams<T>,
    cfg: &GraphConfig,
) -> Result<(Vec<Tensor<T>>, Vec<Tensor<T>>, Vec<Vec<usize>>)> {
    let tape = Tape::new();
    let bound = params.bind(&tape, false);
    let g = extract(cloud, &bound, cfg)?;
    Ok((
        g.node_features.iter().map(|v| v.value().as_ref().clone()).collect(),
        g.edge_features.iter().map(|v| v.value().as_ref().clone()).collect(),
        g.knn_index,
    ))
}
