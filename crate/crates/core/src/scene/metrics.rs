use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::DepthMap;

/// Depth errors in millimeters, inverse-depth errors in 1/km.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mae: f64,
    pub rmse: f64,
    pub imae: f64,
    pub irmse: f64,
    pub rel: f64,
    pub delta1: f64,
    pub range_cap: f64,
    pub pixels: usize,
}

/// All six metrics over pixels valid in both maps with `D_gt ≤ range_cap`
/// (meters).
pub fn compute_metrics(d: &DepthMap, gt: &DepthMap, range_cap: f64) -> Result<MetricsReport> {
    if d.values().shape() != gt.values().shape() {
        return Err(Error::shape("compute_metrics", d.values().shape(), gt.values().shape()));
    }
    let cap_mm = range_cap * 1000.0;
    let (mut ae, mut se, mut iae, mut ise, mut rel, mut hits, mut n) = (0.0, 0.0, 0.0, 0.0, 0.0, 0usize, 0usize);
    let pairs = d.values().data().iter().zip(gt.values().data());
    for (((&p, &g), &vp), &vg) in pairs.zip(d.valid()).zip(gt.valid()) {
        if !(vp && vg && g <= cap_mm) {
            continue;
        }
        let e = (p - g).abs();
        // 1/mm → 1/km
        let ie = (1e6 / p - 1e6 / g).abs();
        ae += e;
        se += e * e;
        iae += ie;
        ise += ie * ie;
        rel += e / g;
        if (p / g).max(g / p) < 1.25 {
            hits += 1;
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::Data(format!("no valid pixels within {range_cap} m")));
    }
    let nf = n as f64;
    Ok(MetricsReport {
        mae: ae / nf,
        rmse: (se / nf).sqrt(),
        imae: iae / nf,
        irmse: (ise / nf).sqrt(),
        rel: rel / nf,
        delta1: hits as f64 / nf,
        range_cap,
        pixels: n,
    })
}

impl MetricsReport {
    /// Pixel-weighted mean of per-scene reports at the same cap; RMSEs are
    /// pooled over pixels.
    pub fn pooled(reports: &[MetricsReport]) -> Result<MetricsReport> {
        let n: usize = reports.iter().map(|r| r.pixels).sum();
        if n == 0 {
            return Err(Error::Data("no pixels to pool".into()));
        }
        let nf = n as f64;
        let wsum = |f: &dyn Fn(&MetricsReport) -> f64| reports.iter().map(|r| f(r) * r.pixels as f64).sum::<f64>() / nf;
        Ok(MetricsReport {
            mae: wsum(&|r| r.mae),
            rmse: wsum(&|r| r.rmse * r.rmse).sqrt(),
            imae: wsum(&|r| r.imae),
            irmse: wsum(&|r| r.irmse * r.irmse).sqrt(),
            rel: wsum(&|r| r.rel),
            delta1: wsum(&|r| r.delta1),
            range_cap: reports[0].range_cap,
            pixels: n,
        })
    }
}
