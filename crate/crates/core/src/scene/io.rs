use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{RadarPoint, RadarPointCloud};
use crate::model::DepthMap;
use crate::tensor::Tensor;

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn pgm_bytes(width: usize, height: usize, maxval: u32, body: Vec<u8>) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n{maxval}\n").into_bytes();
    out.extend(body);
    out
}

/// 16-bit binary PGM, big-endian samples.
pub fn write_pgm16(path: impl AsRef<Path>, width: usize, height: usize, samples: &[u16]) -> Result<()> {
    assert_eq!(samples.len(), width * height);
    let body = samples.iter().flat_map(|s| s.to_be_bytes()).collect();
    write(path.as_ref(), &pgm_bytes(width, height, 65535, body))
}

pub fn write_pgm8(path: impl AsRef<Path>, width: usize, height: usize, samples: &[u8]) -> Result<()> {
    assert_eq!(samples.len(), width * height);
    write(path.as_ref(), &pgm_bytes(width, height, 255, samples.to_vec()))
}

/// Reads a binary PGM with 16-bit samples: `(width, height, samples)`.
pub fn read_pgm16(path: impl AsRef<Path>) -> Result<(usize, usize, Vec<u16>)> {
    let path = path.as_ref();
    let bytes = read(path)?;
    let bad = |m: &str| Error::Data(format!("{}: {m}", path.display()));
    // magic, width, height, maxval separated by whitespace, then one byte
    let mut fields = Vec::new();
    let mut i = 0;
    while fields.len() < 4 {
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if i < bytes.len() && bytes[i] == b'#' {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if start == i {
            return Err(bad("truncated header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..i]).into_owned());
    }
    i += 1;
    if fields[0] != "P5" {
        return Err(bad("not a binary PGM"));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad("bad header number"));
    let (w, h, maxval) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
    if maxval != 65535 {
        return Err(bad(&format!("expected 16-bit samples, maxval is {maxval}")));
    }
    let body = bytes.get(i..).unwrap_or_default();
    if body.len() != 2 * w * h {
        return Err(bad(&format!("{} data bytes for {w}×{h}", body.len())));
    }
    Ok((w, h, body.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect()))
}

/// Sidecar describing which pixels of a map are valid, as `[start, length]`
/// runs over the row-major pixel index, and the value of one sample unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskDescriptor {
    pub width: usize,
    pub height: usize,
    pub unit: f64,
    pub valid_runs: Vec<[usize; 2]>,
}

impl MaskDescriptor {
    pub fn from_mask(width: usize, height: usize, unit: f64, mask: &[bool]) -> Self {
        let mut runs = Vec::new();
        let mut i = 0;
        while i < mask.len() {
            if mask[i] {
                let s = i;
                while i < mask.len() && mask[i] {
                    i += 1;
                }
                runs.push([s, i - s]);
            } else {
                i += 1;
            }
        }
        Self {
            width,
            height,
            unit,
            valid_runs: runs,
        }
    }

    pub fn to_mask(&self) -> Result<Vec<bool>> {
        let n = self.width * self.height;
        let mut m = vec![false; n];
        for &[s, len] in &self.valid_runs {
            let e = s.checked_add(len).filter(|&e| e <= n).ok_or_else(|| Error::Data(format!("mask run [{s}, {len}] out of range")))?;
            m[s..e].iter_mut().for_each(|v| *v = true);
        }
        Ok(m)
    }
}

pub fn write_mask(path: impl AsRef<Path>, desc: &MaskDescriptor) -> Result<()> {
    write(path.as_ref(), &serde_json::to_vec(desc)?)
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<MaskDescriptor> {
    let bytes = read(path.as_ref())?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Data(format!("{}: {e}", path.as_ref().display())))
}

/// Quantises `values / unit` to 16 bits; invalid pixels store 0.
fn quantise(values: &[f64], valid: &[bool], unit: f64) -> Result<Vec<u16>> {
    values
        .iter()
        .zip(valid)
        .map(|(&v, &ok)| {
            if !ok {
                return Ok(0);
            }
            let q = (v / unit).round();
            if !(0.0..=65535.0).contains(&q) {
                return Err(Error::Data(format!("value {v} does not fit a 16-bit map at unit {unit}")));
            }
            Ok(q as u16)
        })
        .collect()
}

/// Writes `values` (with `unit` per sample step) as a 16-bit PGM at `pgm`
/// and its mask descriptor at `mask`.
pub fn write_depth_pgm(pgm: impl AsRef<Path>, mask: impl AsRef<Path>, values: &Tensor, valid: &[bool], unit: f64) -> Result<()> {
    let (h, w) = (values.shape()[0], values.shape()[1]);
    write_pgm16(pgm, w, h, &quantise(values.data(), valid, unit)?)?;
    write_mask(mask, &MaskDescriptor::from_mask(w, h, unit, valid))
}

/// Inverse of [`write_depth_pgm`]: `(values [h×w], valid)`.
pub fn read_depth_pgm(pgm: impl AsRef<Path>, mask: impl AsRef<Path>) -> Result<(Tensor, Vec<bool>)> {
    let (w, h, samples) = read_pgm16(&pgm)?;
    let desc = read_mask(&mask)?;
    if (desc.width, desc.height) != (w, h) {
        return Err(Error::Data(format!(
            "{}: mask is {}×{} but map is {w}×{h}",
            mask.as_ref().display(),
            desc.width,
            desc.height
        )));
    }
    let valid = desc.to_mask()?;
    let values = samples.iter().map(|&s| s as f64 * desc.unit).collect();
    Ok((Tensor::new([h, w], values)?, valid))
}

impl DepthMap {
    /// Millimeter depth at 1 mm per sample.
    pub fn write_pgm(&self, pgm: impl AsRef<Path>, mask: impl AsRef<Path>) -> Result<()> {
        write_depth_pgm(pgm, mask, self.values(), self.valid(), 1.0)
    }

    pub fn read_pgm(pgm: impl AsRef<Path>, mask: impl AsRef<Path>) -> Result<Self> {
        let (v, m) = read_depth_pgm(pgm, mask)?;
        DepthMap::new(v, m)
    }
}

pub fn write_radar_csv(path: impl AsRef<Path>, cloud: &RadarPointCloud) -> Result<()> {
    let mut s = String::from("x,y,z,u,v,range_mm\n");
    for p in cloud.points() {
        writeln!(s, "{},{},{},{},{},{}", p.xyz[0], p.xyz[1], p.xyz[2], p.u, p.v, p.range_mm).unwrap();
    }
    write(path.as_ref(), s.as_bytes())
}

pub fn read_radar_csv(path: impl AsRef<Path>) -> Result<RadarPointCloud> {
    let path = path.as_ref();
    let text = String::from_utf8(read(path)?).map_err(|_| Error::Data(format!("{}: not UTF-8", path.display())))?;
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("x,y,z,u,v,range_mm") {
        return Err(Error::Data(format!("{}: expected header x,y,z,u,v,range_mm", path.display())));
    }
    let mut points = Vec::new();
    for (n, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let v: Vec<f64> = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Data(format!("{}:{}: {e}", path.display(), n + 2)))?;
        if v.len() != 6 {
            return Err(Error::Data(format!("{}:{}: expected 6 fields", path.display(), n + 2)));
        }
        points.push(RadarPoint {
            xyz: [v[0], v[1], v[2]],
            u: v[3],
            v: v[4],
            range_mm: v[5],
        });
    }
    RadarPointCloud::new(points)
}
