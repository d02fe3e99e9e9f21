//! Commands behind the `radcam` binary. Each returns the machine-readable
//! lines (artifact paths or CSV) the binary prints to standard output;
//! progress goes to standard error.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use radcam::flops::FlopCounter;
use radcam::fusion::{column_keys, dense_masked_attention, windowed_attention_values, RowEval};
use radcam::model::{attention_maps, forward, read_checkpoint, write_checkpoint, ModelConfig};
use radcam::scene::{
    compute_metrics, generate_dataset, hash_file, load_dataset, read_scene, write_depth_pgm, write_pgm8, GenConfig,
    ManifestFile, MetricsReport, SceneData,
};
use radcam::train::{train_epoch, LossConfig, Mode, TrainState};
use radcam::{Error, Tensor};

#[derive(Debug, Parser)]
#[command(name = "radcam", version, about = "Radar-camera metric depth: data, training, evaluation, benchmarks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset with a hashed manifest.
    Gen(GenArgs),
    /// Train a model on a dataset.
    Train(TrainArgs),
    /// Evaluate a checkpoint at the 50, 70 and 80 m caps.
    Eval(EvalArgs),
    /// Compare windowed and dense attention cost.
    Bench(BenchArgs),
    /// Write per-point attention maps for one scene.
    Attn(AttnArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub scenes: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Radar noise model JSON; may also carry `scene`, `distortion` and
    /// `acc_stride` sections.
    #[arg(long)]
    pub noise: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Run configuration JSON (model, loss, seed, optional resume path).
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "independent")]
    pub mode: String,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Evaluation caps in meters.
    #[arg(long = "range-cap", value_delimiter = ',', default_values_t = [50.0, 70.0, 80.0])]
    pub range_cap: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Window half-widths `a`.
    #[arg(long, value_delimiter = ',', required = true)]
    pub widths: Vec<f64>,
    /// Radar point counts `K`.
    #[arg(long, value_delimiter = ',', required = true)]
    pub points: Vec<usize>,
    #[arg(long = "level-width")]
    pub level_width: usize,
}

#[derive(Debug, Args)]
pub struct AttnArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

/// Contents of the `--config` file given to `train`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub loss: LossConfig,
    /// Seeds parameter initialisation, epoch splits and visiting order.
    pub seed: u64,
    /// Continue from this checkpoint until `loss.epochs`.
    pub resume: Option<PathBuf>,
}

/// Hashes of every file a command wrote.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputManifest {
    pub command: String,
    pub files: Vec<ManifestFile>,
}

impl OutputManifest {
    fn write(command: &str, root: &Path, files: &[PathBuf], to: &Path) -> Result<()> {
        let mut listed = Vec::with_capacity(files.len());
        for f in files {
            let rel = f.strip_prefix(root).unwrap_or(f);
            listed.push(ManifestFile {
                path: rel.to_string_lossy().into_owned(),
                sha256: hash_file(f)?,
            });
        }
        let m = OutputManifest {
            command: command.into(),
            files: listed,
        };
        std::fs::write(to, serde_json::to_vec_pretty(&m)?).with_context(|| format!("writing {}", to.display()))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        Ok(serde_json::from_slice(&bytes)?)
    }

    /// Fails if any listed file is missing or altered.
    pub fn verify(&self, root: impl AsRef<Path>) -> Result<()> {
        for f in &self.files {
            let got = hash_file(&root.as_ref().join(&f.path))?;
            if got != f.sha256 {
                return Err(Error::Data(format!("hash mismatch for {}", f.path)).into());
            }
        }
        Ok(())
    }
}

/// Exit status for a failed command: 1 for configuration and usage
/// problems, 2 for data, integrity and IO problems.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    match err.chain().find_map(|e| e.downcast_ref::<Error>()) {
        Some(Error::Config(_)) => 1,
        _ => 2,
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Config(format!("{}: {e}", path.display())).into())
}

fn path_line(p: &Path) -> String {
    p.display().to_string()
}

pub fn run(cli: Cli) -> Result<Vec<String>> {
    match cli.command {
        Command::Gen(a) => cmd_gen(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Bench(a) => cmd_bench(&a),
        Command::Attn(a) => cmd_attn(&a),
    }
}

pub fn cmd_gen(args: &GenArgs) -> Result<Vec<String>> {
    let cfg: GenConfig = match &args.noise {
        Some(p) => read_json(p)?,
        None => GenConfig::default(),
    };
    let start = Instant::now();
    let manifest = generate_dataset(&args.out, args.scenes, args.seed, &cfg)?;
    eprintln!(
        "generated {} scenes in {:.2?} under {}",
        manifest.scenes.len(),
        start.elapsed(),
        args.out.display()
    );
    Ok(vec![path_line(&args.out.join(radcam::scene::MANIFEST))])
}

/// `<ckpt>.log.jsonl` and `<ckpt>.manifest.json`.
pub fn train_outputs(ckpt: &Path) -> (PathBuf, PathBuf) {
    let s = ckpt.as_os_str().to_string_lossy();
    (PathBuf::from(format!("{s}.log.jsonl")), PathBuf::from(format!("{s}.manifest.json")))
}

pub fn cmd_train(args: &TrainArgs) -> Result<Vec<String>> {
    let run: RunConfig = read_json(&args.config)?;
    let mode: Mode = args.mode.parse()?;
    let (mut state, model, loss) = match &run.resume {
        Some(p) => {
            let (state, model, loss, saved) = TrainState::from_checkpoint(&read_checkpoint(p)?)?;
            if saved != mode {
                return Err(Error::Config(format!("checkpoint was trained in {saved:?} mode, not {mode:?}")).into());
            }
            (state, model, loss)
        }
        None => {
            run.model.validate()?;
            let params = run.model.init_params(run.seed)?;
            (TrainState::new(params, run.seed, run.loss.adam), run.model.clone(), run.loss.clone())
        }
    };
    if mode == Mode::Plugin && !model.plugin_branch_enabled {
        return Err(Error::Config("plugin mode requires plugin_branch_enabled".into()).into());
    }
    loss.validate()?;
    let (_, samples) = load_dataset(&args.data)?;
    if let Some(s) = samples.first() {
        if s.image.shape() != [3, model.height, model.width] {
            return Err(Error::Config(format!(
                "dataset images are {:?} but the model expects [3, {}, {}]",
                s.image.shape(),
                model.height,
                model.width
            ))
            .into());
        }
    }
    let (log_path, manifest_path) = train_outputs(&args.out);
    let mut log = String::new();
    while state.epoch < loss.epochs {
        let start = Instant::now();
        let rec = train_epoch(&mut state, &samples, &model, &loss, mode)?;
        eprintln!(
            "epoch {:>3}  lr {:.2e}  loss {:.1}  ({:.1?})",
            rec.epoch,
            rec.lr,
            rec.mean_loss,
            start.elapsed()
        );
        writeln!(log, "{}", serde_json::to_string(&rec)?).unwrap();
    }
    write_checkpoint(&args.out, &state.to_checkpoint(&model, &loss, mode)?)?;
    std::fs::write(&log_path, log).map_err(|e| Error::io(&log_path, e))?;
    let root = args.out.parent().unwrap_or(Path::new(""));
    OutputManifest::write("train", root, &[args.out.clone(), log_path.clone()], &manifest_path)?;
    Ok(vec![path_line(&args.out), path_line(&log_path), path_line(&manifest_path)])
}

/// Report file written by `eval`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: Mode,
    pub scenes: usize,
    pub reports: Vec<MetricsReport>,
}

/// `<ckpt>.eval/`.
pub fn eval_dir(ckpt: &Path) -> PathBuf {
    PathBuf::from(format!("{}.eval", ckpt.as_os_str().to_string_lossy()))
}

pub fn cmd_eval(args: &EvalArgs) -> Result<Vec<String>> {
    if args.range_cap.is_empty() || args.range_cap.iter().any(|c| !(*c > 0.0)) {
        return Err(Error::Config("range caps must be positive".into()).into());
    }
    let (state, model, _, mode) = TrainState::from_checkpoint(&read_checkpoint(&args.ckpt)?)?;
    let (_, samples) = load_dataset(&args.data)?;
    let out = eval_dir(&args.ckpt);
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let mut per_cap: Vec<Vec<MetricsReport>> = vec![Vec::new(); args.range_cap.len()];
    let mut files = Vec::new();
    for s in &samples {
        let aux = (mode == Mode::Plugin).then_some(&s.relative);
        let d = forward(&s.image, &s.cloud, aux, &state.params, &model)?;
        for (i, &cap) in args.range_cap.iter().enumerate() {
            per_cap[i].push(compute_metrics(&d, &s.gt, cap)?);
        }
        // 16-bit maps saturate at 65 535 mm
        let clipped = d.values().map(|v| v.min(65_535.0));
        let (pgm, mask) = (out.join(format!("{}_pred.pgm", s.name)), out.join(format!("{}_pred.json", s.name)));
        write_depth_pgm(&pgm, &mask, &clipped, d.valid(), 1.0)?;
        files.push(pgm);
        files.push(mask);
    }
    let report = EvalReport {
        mode,
        scenes: samples.len(),
        reports: per_cap.iter().map(|r| MetricsReport::pooled(r)).collect::<radcam::Result<_>>()?,
    };
    for r in &report.reports {
        eprintln!(
            "0-{:.0} m: MAE {:.1}  RMSE {:.1}  iMAE {:.3}  iRMSE {:.3}  Rel {:.4}  δ1 {:.4}",
            r.range_cap, r.mae, r.rmse, r.imae, r.irmse, r.rel, r.delta1
        );
    }
    let metrics = out.join("metrics.json");
    std::fs::write(&metrics, serde_json::to_vec_pretty(&report)?).map_err(|e| Error::io(&metrics, e))?;
    files.push(metrics.clone());
    let manifest = out.join("manifest.json");
    OutputManifest::write("eval", &out, &files, &manifest)?;
    Ok(vec![path_line(&metrics), path_line(&manifest)])
}

/// One row of the `bench` table.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub half_width: f64,
    pub points: usize,
    pub method: &'static str,
    pub flops: u64,
    pub dense_flops: u64,
    pub wall_us: f64,
    pub max_abs_diff: f64,
}

pub const BENCH_ROWS: usize = 4;
pub const BENCH_CHANNELS: usize = 32;

/// Points spread evenly over the level: `u_j = (j + ½)·W/K`.
pub fn spread_columns(width: usize, k: usize) -> Vec<f64> {
    (0..k).map(|j| (j as f64 + 0.5) * width as f64 / k as f64).collect()
}

/// Streaming, two-pass and dense attention on identical random inputs.
pub fn bench_cell(width: usize, a: f64, k: usize, seed: u64) -> Result<Vec<BenchRow>> {
    let m = BENCH_ROWS * width;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q: Tensor<f64> = Tensor::uniform([m, BENCH_CHANNELS], -1.0, 1.0, &mut rng);
    let keys = Tensor::uniform([k, BENCH_CHANNELS], -1.0, 1.0, &mut rng);
    let vals = Tensor::uniform([k, BENCH_CHANNELS], -1.0, 1.0, &mut rng);
    let u = spread_columns(width, k);
    let cols = column_keys(width, &u, a);
    let lists: Vec<Vec<usize>> = (0..m).map(|i| cols[i % width].clone()).collect();
    let mask: Vec<bool> = lists.iter().flat_map(|l| (0..k).map(move |j| l.contains(&j))).collect();

    let fc = FlopCounter;
    let t = Instant::now();
    let (dense, dense_flops) = fc.measure(|| dense_masked_attention(&q, &keys, &vals, &mask));
    let dense_us = t.elapsed().as_secs_f64() * 1e6;
    let dense = dense?;
    let mut rows = vec![BenchRow {
        half_width: a,
        points: k,
        method: "dense",
        flops: dense_flops,
        dense_flops,
        wall_us: dense_us,
        max_abs_diff: 0.0,
    }];
    for (method, eval) in [("streaming", RowEval::Streaming { tile: 8 }), ("two_pass", RowEval::TwoPass)] {
        let t = Instant::now();
        let (out, flops) = fc.measure(|| windowed_attention_values(&q, &keys, &vals, &lists, eval));
        let wall_us = t.elapsed().as_secs_f64() * 1e6;
        rows.push(BenchRow {
            half_width: a,
            points: k,
            method,
            flops,
            dense_flops,
            wall_us,
            max_abs_diff: out?.max_abs_diff(&dense),
        });
    }
    Ok(rows)
}

pub fn cmd_bench(args: &BenchArgs) -> Result<Vec<String>> {
    if args.widths.is_empty() || args.points.is_empty() || args.level_width == 0 {
        return Err(Error::Config("bench needs non-empty --widths, --points and a positive --level-width".into()).into());
    }
    if let Some(a) = args.widths.iter().find(|a| !(**a > 0.0)) {
        return Err(Error::Config(format!("window half-width must be positive, got {a}")).into());
    }
    if args.points.contains(&0) {
        return Err(Error::Config("point counts must be positive".into()).into());
    }
    let mut lines = vec!["half_width,points,level_width,method,flops,flop_ratio,wall_us,max_abs_diff".to_string()];
    for &a in &args.widths {
        for &k in &args.points {
            for r in bench_cell(args.level_width, a, k, 0)? {
                lines.push(format!(
                    "{},{},{},{},{},{:.6},{:.1},{:e}",
                    r.half_width,
                    r.points,
                    args.level_width,
                    r.method,
                    r.flops,
                    r.flops as f64 / r.dense_flops.max(1) as f64,
                    r.wall_us,
                    r.max_abs_diff
                ));
            }
        }
    }
    eprintln!("{} cells", args.widths.len() * args.points.len());
    Ok(lines)
}

/// Per-point summary written by `attn`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointAttention {
    pub index: usize,
    pub u: f64,
    pub v: f64,
    pub range_mm: f64,
    /// Mean probability over all pixels of the full-resolution level.
    pub mean_score: f64,
    pub map: String,
}

/// 8-bit rendering of one map scaled so its maximum is 255.
pub fn quantise_map(scores: &[f64]) -> Vec<u8> {
    let max = scores.iter().cloned().fold(0.0, f64::max);
    scores
        .iter()
        .map(|&s| if max > 0.0 { (s / max * 255.0).round() as u8 } else { 0 })
        .collect()
}

pub fn cmd_attn(args: &AttnArgs) -> Result<Vec<String>> {
    let (state, model, _, mode) = TrainState::from_checkpoint(&read_checkpoint(&args.ckpt)?)?;
    let scene = read_scene(&args.scene)?;
    if (scene.camera.height, scene.camera.width) != (model.height, model.width) {
        bail!(Error::Config(format!(
            "scene is {}×{} but the model expects {}×{}",
            scene.camera.height, scene.camera.width, model.height, model.width
        )));
    }
    let data = SceneData::simulate(&scene)?;
    let aux = (mode == Mode::Plugin).then_some(&data.relative.values);
    let maps = attention_maps(&data.rendered.rgb, &data.cloud, aux, &state.params, &model)?;
    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let (h, w) = (model.height, model.width);
    let mut files = Vec::new();
    let mut summary = Vec::new();
    for (j, p) in data.cloud.points().iter().enumerate() {
        let scores = &maps.data()[j * h * w..(j + 1) * h * w];
        let name = format!("point_{j:03}.pgm");
        let path = args.out.join(&name);
        write_pgm8(&path, w, h, &quantise_map(scores))?;
        files.push(path);
        summary.push(PointAttention {
            index: j,
            u: p.u,
            v: p.v,
            range_mm: p.range_mm,
            mean_score: scores.iter().sum::<f64>() / (h * w) as f64,
            map: name,
        });
    }
    let json = args.out.join("attention.json");
    std::fs::write(&json, serde_json::to_vec_pretty(&summary)?).map_err(|e| Error::io(&json, e))?;
    files.push(json.clone());
    let manifest = args.out.join("manifest.json");
    OutputManifest::write("attn", &args.out, &files, &manifest)?;
    eprintln!("{} attention maps in {}", summary.len(), args.out.display());
    Ok(vec![path_line(&json), path_line(&manifest)])
}
