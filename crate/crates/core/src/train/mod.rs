//! Masked dual-term L1 loss, Adam and the epoch schedule.

mod adam;

pub use adam::{Adam, AdamConfig};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::graph::RadarPointCloud;
use crate::model::{check_compatible, forward_var, Checkpoint, DepthMap, ModelConfig};
use crate::params::ModelParams;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    /// Weight of the accumulated-depth term.
    pub lambda: f64,
    pub learning_rate: f64,
    /// Subtracted from the learning rate after every ten epochs.
    pub lr_decay_per_10_epochs: f64,
    /// The schedule never goes below this.
    pub min_learning_rate: f64,
    pub epochs: usize,
    /// Scenes whose gradients are averaged per Adam step.
    pub batch_size: usize,
    pub adam: AdamConfig,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            learning_rate: 1e-4,
            lr_decay_per_10_epochs: 1e-5,
            min_learning_rate: 1e-6,
            epochs: 30,
            batch_size: 1,
            adam: AdamConfig::default(),
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) {
            return Err(Error::Config(format!("lambda must be non-negative, got {}", self.lambda)));
        }
        if !(self.learning_rate > 0.0) || !(self.min_learning_rate > 0.0) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if !(self.lr_decay_per_10_epochs >= 0.0) {
            return Err(Error::Config("learning-rate decay must be non-negative".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        Ok(())
    }

    /// Step size for 1-based `epoch`: constant within each block of ten.
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        let blocks = epoch.saturating_sub(1) / 10;
        (self.learning_rate - blocks as f64 * self.lr_decay_per_10_epochs).max(self.min_learning_rate)
    }
}

/// `(1/|Ω_gt|)·Σ|D − D_gt| + (λ/|Ω_acc|)·Σ|D − D_acc|`.
pub fn l1_loss<'t>(d: &Var<'t>, gt: &DepthMap, acc: &DepthMap, lambda: f64) -> Result<Var<'t>> {
    if gt.valid_count() == 0 {
        return Err(Error::Data("ground-truth mask is empty".into()));
    }
    if acc.valid_count() == 0 {
        return Err(Error::Data("accumulated-depth mask is empty".into()));
    }
    let t = d.masked_abs_mean(gt.values(), gt.valid())?;
    let a = d.masked_abs_mean(acc.values(), acc.valid())?;
    t.add(&a.scale(lambda))
}

/// [`l1_loss`] on plain values.
pub fn l1_loss_value(d: &Tensor, gt: &DepthMap, acc: &DepthMap, lambda: f64) -> Result<f64> {
    let tape = Tape::new();
    Ok(l1_loss(&tape.constant(d.clone()), gt, acc, lambda)?.value().item())
}

/// Everything one training scene contributes.
#[derive(Debug, Clone)]
pub struct Sample {
    pub name: String,
    pub image: Tensor,
    pub cloud: RadarPointCloud,
    pub gt: DepthMap,
    pub acc: DepthMap,
    /// Relative depth in `[0, 1]`, `H×W`.
    pub relative: Tensor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Always trained and run without relative depth.
    Independent,
    /// Half of each epoch's scenes get their relative depth, half a zero map.
    Plugin,
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "independent" => Ok(Mode::Independent),
            "plugin" => Ok(Mode::Plugin),
            _ => Err(Error::Config(format!("unknown mode `{s}` (independent | plugin)"))),
        }
    }
}

/// One record of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub mean_loss: f64,
    pub split_seed: u64,
}

/// Seed for the split and visiting order of 1-based `epoch`.
pub fn split_seed(seed: u64, epoch: usize) -> u64 {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(epoch as u64);
    rand::Rng::random(&mut r)
}

/// Random partition of `0..n` into the half fed relative depth and the half
/// fed zeros; an odd extra scene joins the zero half.
pub fn epoch_split(n: usize, split_seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(split_seed));
    let zero = idx.split_off(n / 2);
    (idx, zero)
}

/// Parameters, optimizer moments and position in the schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub params: ModelParams,
    pub adam: Adam,
    /// Completed epochs.
    pub epoch: usize,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
struct StateMeta {
    model: ModelConfig,
    loss: LossConfig,
    mode: Mode,
    epoch: usize,
    seed: u64,
    adam_steps: u64,
}

impl TrainState {
    pub fn new(params: ModelParams, seed: u64, adam: AdamConfig) -> Self {
        Self {
            adam: Adam::new(&params, adam),
            params,
            epoch: 0,
            seed,
        }
    }

    /// Checkpoint holding the parameters, the moments under `adam.m/` and
    /// `adam.v/`, and the configuration needed to resume.
    pub fn to_checkpoint(&self, model: &ModelConfig, loss: &LossConfig, mode: Mode) -> Result<Checkpoint> {
        let mut all = self.params.clone();
        for (n, t) in self.adam.m.iter() {
            all.insert(format!("adam.m/{n}"), t.clone());
        }
        for (n, t) in self.adam.v.iter() {
            all.insert(format!("adam.v/{n}"), t.clone());
        }
        let meta = serde_json::to_value(StateMeta {
            model: model.clone(),
            loss: loss.clone(),
            mode,
            epoch: self.epoch,
            seed: self.seed,
            adam_steps: self.adam.steps,
        })?;
        Ok(Checkpoint { params: all, meta })
    }

    /// Inverse of [`TrainState::to_checkpoint`].
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<(Self, ModelConfig, LossConfig, Mode)> {
        let meta: StateMeta = serde_json::from_value(ck.meta.clone())
            .map_err(|e| Error::Checkpoint(format!("bad training metadata: {e}")))?;
        let mut params = ModelParams::new();
        let mut m = ModelParams::new();
        let mut v = ModelParams::new();
        for (n, t) in ck.params.iter() {
            if let Some(rest) = n.strip_prefix("adam.m/") {
                m.insert(rest, t.clone());
            } else if let Some(rest) = n.strip_prefix("adam.v/") {
                v.insert(rest, t.clone());
            } else {
                params.insert(n.clone(), t.clone());
            }
        }
        let expected = meta.model.init_params::<f64>(0)?;
        check_compatible(&params, &expected)?;
        let adam = if m.is_empty() && v.is_empty() {
            Adam::new(&params, meta.loss.adam)
        } else {
            check_compatible(&m, &expected)?;
            check_compatible(&v, &expected)?;
            Adam {
                config: meta.loss.adam,
                m,
                v,
                steps: meta.adam_steps,
            }
        };
        Ok((
            Self {
                params,
                adam,
                epoch: meta.epoch,
                seed: meta.seed,
            },
            meta.model,
            meta.loss,
            meta.mode,
        ))
    }
}

/// Loss and parameter gradients for one scene.
pub fn scene_gradients(
    params: &ModelParams,
    sample: &Sample,
    with_relative: bool,
    model: &ModelConfig,
    lambda: f64,
) -> Result<(f64, ModelParams)> {
    let tape = Tape::new();
    let bound = params.bind(&tape, true);
    let image = tape.constant(sample.image.clone());
    let aux = with_relative.then(|| tape.constant(sample.relative.clone()));
    let d = forward_var(&image, &sample.cloud, aux.as_ref(), &bound, model)?;
    let loss = l1_loss(&d, &sample.gt, &sample.acc, lambda)?;
    let value = loss.value().item();
    if !value.is_finite() {
        return Err(Error::Training(format!("non-finite loss {value} on scene `{}`", sample.name)));
    }
    let mut grads = tape.backward(loss);
    Ok((value, bound.gradients(&mut grads)))
}

/// One pass over `samples` in a seeded order. In plug-in mode the first half
/// of the epoch's split is fed relative depth, the rest a zero map.
pub fn train_epoch(
    state: &mut TrainState,
    samples: &[Sample],
    model: &ModelConfig,
    loss: &LossConfig,
    mode: Mode,
) -> Result<EpochRecord> {
    loss.validate()?;
    if samples.len() < 2 {
        return Err(Error::Data(format!("training needs at least 2 scenes, got {}", samples.len())));
    }
    if mode == Mode::Plugin && !model.plugin_branch_enabled {
        return Err(Error::Config("plug-in training needs the plug-in branch".into()));
    }
    let epoch = state.epoch + 1;
    let lr = loss.learning_rate_at(epoch);
    let seed = split_seed(state.seed, epoch);
    let (fed, _) = epoch_split(samples.len(), seed);
    let mut with_rel = vec![false; samples.len()];
    if mode == Mode::Plugin {
        for i in fed {
            with_rel[i] = true;
        }
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5eed));

    let mut total = 0.0;
    for batch in order.chunks(loss.batch_size) {
        let mut acc: Option<ModelParams> = None;
        for &i in batch {
            let (l, g) = scene_gradients(&state.params, &samples[i], with_rel[i], model, loss.lambda)?;
            total += l;
            match acc.as_mut() {
                None => acc = Some(g),
                Some(a) => {
                    for (n, t) in a.iter_mut() {
                        t.add_assign(g.get(n).expect("same parameter set"));
                    }
                }
            }
        }
        let mut g = acc.expect("non-empty batch");
        let inv = 1.0 / batch.len() as f64;
        for (_, t) in g.iter_mut() {
            t.data_mut().iter_mut().for_each(|v| *v *= inv);
        }
        state.adam.step(&mut state.params, &g, lr)?;
    }
    state.epoch = epoch;
    Ok(EpochRecord {
        epoch,
        lr,
        mean_loss: total / samples.len() as f64,
        split_seed: seed,
    })
}
