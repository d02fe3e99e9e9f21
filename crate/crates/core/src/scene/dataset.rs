use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::graph::RadarPointCloud;
use crate::model::DepthMap;
use crate::train::Sample;

use super::io::{read_depth_pgm, read_radar_csv, write_depth_pgm, write_radar_csv};
use super::{make_accumulated, make_relative, render, simulate_radar, Distortion, RadarNoiseModel, RelativeDepth, Rendered, Scene, SceneRanges};

pub const MANIFEST: &str = "manifest.json";
const FORMAT: &str = "radcam-dataset/1";
const REL_UNIT: f64 = 1.0 / 65535.0;

/// Dataset generation settings. The radar noise fields sit at the top level
/// so a bare noise-model file is a valid configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    #[serde(flatten)]
    pub noise: RadarNoiseModel,
    pub scene: SceneRanges,
    pub distortion: Distortion,
    pub acc_stride: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            noise: RadarNoiseModel::default(),
            scene: SceneRanges::default(),
            distortion: Distortion::default(),
            acc_stride: 4,
        }
    }
}

/// A file relative to the dataset root with its SHA-256.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestFile {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub kind: String,
    pub file: ManifestFile,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mask: Option<ManifestFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub name: String,
    pub scene: ManifestFile,
    pub artifacts: Vec<Artifact>,
}

impl DatasetEntry {
    fn artifact(&self, kind: &str) -> Result<&Artifact> {
        self.artifacts
            .iter()
            .find(|a| a.kind == kind)
            .ok_or_else(|| Error::Data(format!("scene `{}` has no `{kind}` artifact", self.name)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub seed: u64,
    pub config: GenConfig,
    pub scenes: Vec<DatasetEntry>,
}

impl Manifest {
    pub fn read(dir: impl AsRef<Path>) -> Result<Self> {
        let path = dir.as_ref().join(MANIFEST);
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let m: Manifest = serde_json::from_slice(&bytes).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        if m.format != FORMAT {
            return Err(Error::Data(format!("{}: unknown format `{}`", path.display(), m.format)));
        }
        Ok(m)
    }

    /// Every listed file must exist and hash to its recorded digest.
    pub fn verify(&self, dir: impl AsRef<Path>) -> Result<()> {
        for e in &self.scenes {
            let files = std::iter::once(&e.scene).chain(e.artifacts.iter().flat_map(|a| std::iter::once(&a.file).chain(a.mask.as_ref())));
            for f in files {
                let got = hash_file(&dir.as_ref().join(&f.path))?;
                if got != f.sha256 {
                    return Err(Error::Data(format!(
                        "hash mismatch for {}: manifest {}, file {got}",
                        f.path, f.sha256
                    )));
                }
            }
        }
        Ok(())
    }

    /// SHA-256 of the manifest's own serialisation.
    pub fn digest(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(serde_json::to_vec_pretty(self)?)))
    }
}

pub fn hash_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn hash_file(path: &Path) -> Result<String> {
    Ok(hash_bytes(&std::fs::read(path).map_err(|e| Error::io(path, e))?))
}

/// Seed of item `index` in the family rooted at `seed`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(index + 1);
    r.random()
}

/// Everything simulated for one scene.
#[derive(Debug, Clone)]
pub struct SceneData {
    pub rendered: Rendered,
    pub cloud: RadarPointCloud,
    pub accumulated: DepthMap,
    pub relative: RelativeDepth,
}

impl SceneData {
    pub fn simulate(scene: &Scene) -> Result<Self> {
        scene.validate()?;
        let rendered = render(scene)?;
        let cloud = simulate_radar(&scene.camera, &rendered.depth, &scene.noise, derive_seed(scene.seed, 0))?;
        let accumulated = make_accumulated(&rendered.depth, scene.acc_stride)?;
        let relative = make_relative(&rendered.depth, &scene.distortion, derive_seed(scene.seed, 1))?;
        Ok(Self {
            rendered,
            cloud,
            accumulated,
            relative,
        })
    }
}

fn put(dir: &Path, name: String, bytes: &[u8]) -> Result<ManifestFile> {
    let path = dir.join(&name);
    std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    Ok(ManifestFile {
        path: name,
        sha256: hash_bytes(bytes),
    })
}

fn recorded(dir: &Path, name: String) -> Result<ManifestFile> {
    Ok(ManifestFile {
        sha256: hash_file(&dir.join(&name))?,
        path: name,
    })
}

/// Writes `n` scenes with their depth maps and radar returns plus a
/// manifest, all determined by `seed`.
pub fn generate_dataset(dir: impl AsRef<Path>, n: usize, seed: u64, cfg: &GenConfig) -> Result<Manifest> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut scenes = Vec::with_capacity(n);
    for i in 0..n {
        let name = format!("scene_{i:04}");
        let scene = Scene::random(&cfg.scene, cfg.noise, cfg.distortion, cfg.acc_stride, derive_seed(seed, i as u64))?;
        let data = SceneData::simulate(&scene)?;
        let scene_file = put(dir, format!("{name}.json"), &serde_json::to_vec_pretty(&scene)?)?;
        let mut artifacts = Vec::new();
        let maps: [(&str, &crate::Tensor, &[bool], f64); 3] = [
            ("gt", data.rendered.depth.values(), data.rendered.depth.valid(), 1.0),
            ("acc", data.accumulated.values(), data.accumulated.valid(), 1.0),
            ("rel", &data.relative.values, &data.relative.valid, REL_UNIT),
        ];
        for (kind, values, valid, unit) in maps {
            let (pgm, mask) = (format!("{name}_{kind}.pgm"), format!("{name}_{kind}.json"));
            write_depth_pgm(dir.join(&pgm), dir.join(&mask), values, valid, unit)?;
            artifacts.push(Artifact {
                kind: kind.into(),
                file: recorded(dir, pgm)?,
                mask: Some(recorded(dir, mask)?),
            });
        }
        let csv = format!("{name}_radar.csv");
        write_radar_csv(dir.join(&csv), &data.cloud)?;
        artifacts.push(Artifact {
            kind: "radar".into(),
            file: recorded(dir, csv)?,
            mask: None,
        });
        scenes.push(DatasetEntry {
            name,
            scene: scene_file,
            artifacts,
        });
    }
    let manifest = Manifest {
        format: FORMAT.into(),
        seed,
        config: cfg.clone(),
        scenes,
    };
    let path = dir.join(MANIFEST);
    std::fs::write(&path, serde_json::to_vec_pretty(&manifest)?).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

fn map_paths(dir: &Path, a: &Artifact) -> Result<(PathBuf, PathBuf)> {
    let mask = a
        .mask
        .as_ref()
        .ok_or_else(|| Error::Data(format!("artifact {} has no mask", a.file.path)))?;
    Ok((dir.join(&a.file.path), dir.join(&mask.path)))
}

pub fn read_scene(path: impl AsRef<Path>) -> Result<Scene> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

/// Loads one manifest entry; the image is re-rendered from the scene file.
pub fn load_sample(dir: impl AsRef<Path>, entry: &DatasetEntry) -> Result<(Scene, Sample)> {
    let dir = dir.as_ref();
    let scene = read_scene(dir.join(&entry.scene.path))?;
    let image = render(&scene)?.rgb;
    let (p, m) = map_paths(dir, entry.artifact("gt")?)?;
    let gt = DepthMap::read_pgm(p, m)?;
    let (p, m) = map_paths(dir, entry.artifact("acc")?)?;
    let acc = DepthMap::read_pgm(p, m)?;
    let (p, m) = map_paths(dir, entry.artifact("rel")?)?;
    let (relative, _) = read_depth_pgm(p, m)?;
    let cloud = read_radar_csv(dir.join(&entry.artifact("radar")?.file.path))?;
    Ok((
        scene,
        Sample {
            name: entry.name.clone(),
            image,
            cloud,
            gt,
            acc,
            relative,
        },
    ))
}

/// Reads and verifies the manifest, then loads every scene in order.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<(Manifest, Vec<Sample>)> {
    let manifest = Manifest::read(&dir)?;
    manifest.verify(&dir)?;
    let samples = manifest
        .scenes
        .iter()
        .map(|e| load_sample(&dir, e).map(|(_, s)| s))
        .collect::<Result<_>>()?;
    Ok((manifest, samples))
}
