use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::{save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
use super::optim::{apply_update, OptimizerConfig, OptimizerState};
use super::HarnessError;
use crate::autodiff::{Gradients, ParamSet, Tensor};
use crate::convexify::{dlc_loss, DlcConfig, PredictionVector};
use crate::tasks::{self, PointCloudPair, SequenceSample, Task};

/// A training datapoint that carries its own ground-truth prediction.
pub trait Supervised {
    fn omega_star(&self) -> PredictionVector;
}

impl Supervised for PointCloudPair {
    fn omega_star(&self) -> PredictionVector {
        self.omega_star.clone()
    }
}

impl Supervised for SequenceSample {
    fn omega_star(&self) -> PredictionVector {
        SequenceSample::omega_star(self)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", deny_unknown_fields)]
pub enum BatchMode {
    /// One optimizer step per selected datapoint.
    PerDatapoint,
    /// Gradients averaged over `size` consecutive datapoints of the shuffled
    /// order before each step.
    Mean { size: usize },
}

/// Independent streams drawn from one seed so that, for instance, drawing
/// DLC neighbors never shifts the shuffle order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RngStream {
    Init = 0,
    Shuffle = 1,
    Sampler = 2,
    Audit = 3,
    Data = 4,
}

pub fn stream_rng(seed: u64, stream: RngStream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Task id echo; filled from the task when absent and checked otherwise.
    pub task: Option<String>,
    pub optimizer: OptimizerConfig,
    pub epochs: usize,
    pub batch: BatchMode,
    /// `None` trains on the plain loss `h(omega*)`. A `[train]` table
    /// without a `dlc` entry is a baseline, so serialized baselines read
    /// back as baselines.
    #[serde(default)]
    pub dlc: Option<DlcConfig>,
    pub seed: u64,
    /// Checkpoints after every epoch and on a numeric abort.
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            task: None,
            optimizer: OptimizerConfig::adam(),
            epochs: 10,
            batch: BatchMode::PerDatapoint,
            dlc: Some(DlcConfig::registration_preset()),
            seed: 0,
            checkpoint_dir: None,
        }
    }
}

impl TrainConfig {
    pub fn baseline() -> Self {
        Self { dlc: None, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.optimizer.validate()?;
        if self.epochs == 0 {
            return Err(HarnessError::InvalidConfig("epochs must be >= 1".into()));
        }
        if let BatchMode::Mean { size: 0 } = self.batch {
            return Err(HarnessError::InvalidConfig("batch size must be >= 1".into()));
        }
        if let Some(d) = &self.dlc {
            d.validate()?;
        }
        Ok(())
    }

    pub fn rho(&self) -> f64 {
        self.dlc.as_ref().map_or(0.0, |d| d.rho)
    }
}

/// Loss terms of one datapoint visit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub epoch: usize,
    /// Optimizer step this datapoint contributed to (0-based).
    pub step: u64,
    pub index: usize,
    pub total: f64,
    /// `h(omega*)`.
    pub base: f64,
    /// Mean hinge sum over the neighbor samples (0 without DLC).
    pub hinge_mean: f64,
}

/// Resumable trainer running Alg. 1: shuffle, then per datapoint sample
/// neighbors, build the hinge objective and take an optimizer step.
pub struct Trainer<'a, T: Task> {
    task: &'a T,
    cfg: TrainConfig,
    params: ParamSet,
    optimizer: OptimizerState,
    epoch: usize,
    cursor: usize,
    order: Vec<usize>,
    shuffle_rng: ChaCha8Rng,
    sampler_rng: ChaCha8Rng,
    history: Vec<StepRecord>,
    step_times: Vec<Duration>,
}

impl<'a, T: Task> Trainer<'a, T> {
    pub fn new(task: &'a T, cfg: &TrainConfig) -> Result<Self, HarnessError> {
        let cfg = resolve(task, cfg)?;
        let mut params = task.init_params(&mut stream_rng(cfg.seed, RngStream::Init));
        if let Some(d) = &cfg.dlc {
            d.add_trainable_params(&mut params)?;
        }
        Ok(Self {
            task,
            params,
            optimizer: OptimizerState::default(),
            epoch: 0,
            cursor: 0,
            order: Vec::new(),
            shuffle_rng: stream_rng(cfg.seed, RngStream::Shuffle),
            sampler_rng: stream_rng(cfg.seed, RngStream::Sampler),
            history: Vec::new(),
            step_times: Vec::new(),
            cfg,
        })
    }

    /// Restores the exact trainer state; `epochs` (if given) extends the
    /// run beyond the echoed configuration.
    pub fn from_checkpoint(task: &'a T, ckpt: &Checkpoint, epochs: Option<usize>) -> Result<Self, HarnessError> {
        let mut cfg = resolve(task, &ckpt.config)?;
        if let Some(e) = epochs {
            cfg.epochs = e;
            cfg.validate()?;
        }
        Ok(Self {
            task,
            params: ckpt.params.clone(),
            optimizer: ckpt.optimizer.clone(),
            epoch: ckpt.epoch,
            cursor: ckpt.cursor,
            order: ckpt.order.clone(),
            shuffle_rng: ckpt.shuffle_rng.clone(),
            sampler_rng: ckpt.sampler_rng.clone(),
            history: ckpt.history.clone(),
            step_times: Vec::new(),
            cfg,
        })
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn history(&self) -> &[StepRecord] {
        &self.history
    }

    /// Wall time of each optimizer step taken by this trainer instance.
    pub fn step_times(&self) -> &[Duration] {
        &self.step_times
    }

    pub fn epochs_done(&self) -> usize {
        self.epoch
    }

    pub fn is_done(&self) -> bool {
        self.epoch >= self.cfg.epochs
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            config: self.cfg.clone(),
            params: self.params.clone(),
            optimizer: self.optimizer.clone(),
            epoch: self.epoch,
            cursor: self.cursor,
            order: self.order.clone(),
            shuffle_rng: self.shuffle_rng.clone(),
            sampler_rng: self.sampler_rng.clone(),
            history: self.history.clone(),
        }
    }

    /// Takes one optimizer step (one datapoint, or one batch). Returns
    /// `false` once every epoch has run.
    pub fn step<D>(&mut self, data: &[D]) -> Result<bool, HarnessError>
    where
        D: Supervised,
        T: Task<Input = D>,
    {
        if self.is_done() {
            return Ok(false);
        }
        if data.is_empty() {
            return Err(HarnessError::InvalidConfig("training set is empty".into()));
        }
        if self.cursor == 0 {
            let mut order: Vec<usize> = (0..data.len()).collect();
            order.shuffle(&mut self.shuffle_rng);
            self.order = order;
        } else if self.order.len() != data.len() {
            return Err(HarnessError::InvalidConfig(format!(
                "checkpoint shuffle covers {} datapoints, dataset has {}",
                self.order.len(),
                data.len()
            )));
        }
        let size = match self.cfg.batch {
            BatchMode::PerDatapoint => 1,
            BatchMode::Mean { size } => size,
        };
        let end = (self.cursor + size).min(self.order.len());
        let started = Instant::now();
        // everything below works on copies until the step is known finite,
        // so an abort leaves the trainer at its last good state
        let mut sampler_rng = self.sampler_rng.clone();
        let mut records = Vec::with_capacity(end - self.cursor);
        let mut acc: Option<Gradients> = None;
        for &index in &self.order[self.cursor..end] {
            let (rec, grads) = match self.visit(&data[index], index, &mut sampler_rng) {
                Ok(v) => v,
                Err(e) if e.is_numeric_abort() => return Err(self.abort(e.to_string())),
                Err(e) => return Err(e),
            };
            if !(rec.total.is_finite() && rec.base.is_finite() && rec.hinge_mean.is_finite()) {
                return Err(self.abort(format!("non-finite loss at datapoint {index}")));
            }
            records.push(rec);
            acc = Some(match acc {
                None => grads,
                Some(a) => add_grads(a, &grads),
            });
        }
        let n = records.len();
        let mut grads = acc.expect("batch is non-empty");
        if n > 1 {
            scale_grads(&mut grads, 1.0 / n as f64);
        }
        if !grads.params.values().all(Tensor::is_finite) {
            return Err(self.abort("non-finite gradient".into()));
        }
        let (params, optimizer) = apply_update(&self.cfg.optimizer, &self.params, &self.optimizer, &grads);
        if !params.is_finite() || !optimizer.is_finite() {
            return Err(self.abort("non-finite parameters after update".into()));
        }
        self.params = params;
        self.optimizer = optimizer;
        self.sampler_rng = sampler_rng;
        self.history.extend(records);
        self.step_times.push(started.elapsed());
        self.cursor = end;
        if self.cursor == self.order.len() {
            self.cursor = 0;
            self.order.clear();
            self.epoch += 1;
            if let Some(dir) = &self.cfg.checkpoint_dir {
                save_checkpoint(&dir.join(format!("epoch_{:04}.ckpt", self.epoch)), &self.checkpoint())?;
            }
        }
        Ok(true)
    }

    /// Runs the remaining epochs.
    pub fn run<D>(&mut self, data: &[D]) -> Result<(), HarnessError>
    where
        D: Supervised,
        T: Task<Input = D>,
    {
        while self.step(data)? {}
        Ok(())
    }

    fn visit(
        &self,
        x: &T::Input,
        index: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<(StepRecord, Gradients), HarnessError>
    where
        T::Input: Supervised,
    {
        let star = x.omega_star();
        let step = self.optimizer.steps;
        match &self.cfg.dlc {
            Some(d) => {
                let out = dlc_loss(self.task, x, &star, &self.params, d, rng)?;
                let rec = StepRecord { epoch: self.epoch, step, index, total: out.loss, base: out.base, hinge_mean: out.hinge_mean };
                Ok((rec, out.grads))
            }
            None => {
                let (loss, grads) = tasks::value_and_grad(self.task, x, &self.params, star.values())?;
                Ok((StepRecord { epoch: self.epoch, step, index, total: loss, base: loss, hinge_mean: 0.0 }, grads))
            }
        }
    }

    fn abort(&self, reason: String) -> HarnessError {
        let ckpt = self.checkpoint();
        let saved = self.cfg.checkpoint_dir.as_ref().and_then(|dir| {
            let path = dir.join("last_good.ckpt");
            save_checkpoint(&path, &ckpt).ok().map(|_| path)
        });
        HarnessError::NumericAbort { epoch: self.epoch, step: self.optimizer.steps, reason, checkpoint: Box::new(ckpt), saved }
    }
}

fn resolve<T: Task>(task: &T, cfg: &TrainConfig) -> Result<TrainConfig, HarnessError> {
    cfg.validate()?;
    let name = task.name();
    let mut cfg = cfg.clone();
    match &cfg.task {
        Some(t) if *t != name => {
            return Err(HarnessError::InvalidConfig(format!("config is for task `{t}`, trainer runs `{name}`")));
        }
        Some(_) => {}
        None => cfg.task = Some(name),
    }
    Ok(cfg)
}

fn add_grads(mut a: Gradients, b: &Gradients) -> Gradients {
    for (name, g) in &b.params {
        match a.params.get_mut(name) {
            Some(t) => t.data_mut().iter_mut().zip(g.data()).for_each(|(x, y)| *x += y),
            None => {
                a.params.insert(name.clone(), g.clone());
            }
        }
    }
    a
}

fn scale_grads(g: &mut Gradients, s: f64) {
    for t in g.params.values_mut() {
        t.data_mut().iter_mut().for_each(|v| *v *= s);
    }
}

/// Trains from scratch for `cfg.epochs` epochs.
pub fn train<T, D>(task: &T, cfg: &TrainConfig, data: &[D]) -> Result<Checkpoint, HarnessError>
where
    D: Supervised,
    T: Task<Input = D>,
{
    train_timed(task, cfg, data).map(|(c, _)| c)
}

/// [`train`] that also returns the wall time of every optimizer step.
pub fn train_timed<T, D>(task: &T, cfg: &TrainConfig, data: &[D]) -> Result<(Checkpoint, Vec<Duration>), HarnessError>
where
    D: Supervised,
    T: Task<Input = D>,
{
    if data.is_empty() {
        return Err(HarnessError::InvalidConfig("training set is empty".into()));
    }
    let mut t = Trainer::new(task, cfg)?;
    t.run(data)?;
    Ok((t.checkpoint(), t.step_times().to_vec()))
}

/// Continues a checkpointed run up to `epochs` total epochs (the echoed
/// count when `None`).
pub fn resume<T, D>(task: &T, ckpt: &Checkpoint, epochs: Option<usize>, data: &[D]) -> Result<Checkpoint, HarnessError>
where
    D: Supervised,
    T: Task<Input = D>,
{
    let mut t = Trainer::from_checkpoint(task, ckpt, epochs)?;
    t.run(data)?;
    Ok(t.checkpoint())
}
