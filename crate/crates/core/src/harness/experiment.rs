use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use super::metrics::{median, motion_error, MotionError, RegistrationMetrics};
use super::optim::OptimizerConfig;
use super::train::{stream_rng, train_timed, RngStream, StepRecord, TrainConfig};
use super::HarnessError;
use crate::analyzer::{audit_star_convexity, simulate_averaging, slice_landscape, AuditConfig, AuditReport, SliceSpec};
use crate::autodiff::ParamSet;
use crate::convexify::{DlcConfig, PredictionVector};
use crate::inference::{icp_refine, infer, InferenceConfig, InferenceMode, Trajectory};
use crate::tasks::io::write_dataset;
use crate::tasks::oracles::oracle_by_name;
use crate::tasks::{
    generate_registration_dataset, generate_sequence_dataset, PointCloudPair, RegistrationDataConfig,
    RegistrationTask, RigidMotion, SequenceDataConfig, SequenceSample, SequenceTask, Task,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    TrainRegistration,
    TrainSequence,
    Audit,
    Slice,
    InferSweep,
    AveragingSim,
    IcpAblation,
    GridSearch,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 8] = [
        Self::TrainRegistration,
        Self::TrainSequence,
        Self::Audit,
        Self::Slice,
        Self::InferSweep,
        Self::AveragingSim,
        Self::IcpAblation,
        Self::GridSearch,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::TrainRegistration => "train-registration",
            Self::TrainSequence => "train-sequence",
            Self::Audit => "audit",
            Self::Slice => "slice",
            Self::InferSweep => "infer-sweep",
            Self::AveragingSim => "averaging-sim",
            Self::IcpAblation => "icp-ablation",
            Self::GridSearch => "grid-search",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| HarnessError::UnknownExperiment(s.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegistrationSetup {
    /// `n_pairs` and `seed` are overridden by the split sizes and the
    /// experiment seed.
    pub data: RegistrationDataConfig,
    pub task: RegistrationTask,
    pub n_train: usize,
    pub n_test: usize,
}

impl Default for RegistrationSetup {
    fn default() -> Self {
        Self { data: RegistrationDataConfig::default(), task: RegistrationTask::default(), n_train: 200, n_test: 50 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SequenceSetup {
    pub data: SequenceDataConfig,
    pub task: SequenceTask,
    pub n_train: usize,
    pub n_test: usize,
}

impl Default for SequenceSetup {
    fn default() -> Self {
        Self { data: SequenceDataConfig::default(), task: SequenceTask::default(), n_train: 200, n_test: 100 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditSettings {
    /// Audit an analytic oracle instead of the registration model.
    pub oracle: Option<String>,
    /// Test pairs audited (from the front of the split).
    pub n_pairs: usize,
    pub params: AuditConfig,
}

impl Default for AuditSettings {
    fn default() -> Self {
        Self { oracle: None, n_pairs: 50, params: AuditConfig::learned() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SliceSettings {
    pub oracle: Option<String>,
    /// Test pair sliced around its ground truth.
    pub pair_index: usize,
    pub dim_x: usize,
    pub dim_y: usize,
    pub half_width: [f64; 2],
    pub resolution: usize,
    pub svg: bool,
}

impl Default for SliceSettings {
    fn default() -> Self {
        Self { oracle: None, pair_index: 0, dim_x: 0, dim_y: 1, half_width: [1.0, 1.0], resolution: 41, svg: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AveragingSettings {
    pub t_max: usize,
    pub error_std: f64,
    pub omega_dim: usize,
    pub n_trials: usize,
}

impl Default for AveragingSettings {
    fn default() -> Self {
        Self { t_max: 64, error_std: 1.0, omega_dim: 3, n_trials: 10_000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IcpSettings {
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for IcpSettings {
    fn default() -> Self {
        Self { max_iters: 50, tol: 1e-12 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSettings {
    pub max_t: usize,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self { max_t: 5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSettings {
    pub rho: Vec<f64>,
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
}

impl Default for GridSettings {
    fn default() -> Self {
        Self { rho: vec![0.2, 0.6, 1.0], lambda: vec![0.5], mu: vec![1.0, 4.0] }
    }
}

/// `(rho, lambda, mu)` triples in row-major order of the three lists.
pub fn grid_points(g: &GridSettings) -> Vec<(f64, f64, f64)> {
    let mut out = Vec::new();
    for &r in &g.rho {
        for &l in &g.lambda {
            for &m in &g.mu {
                out.push((r, l, m));
            }
        }
    }
    out
}

/// One structured-text file describing every experiment; each experiment
/// reads the sections it needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Option<ExperimentKind>,
    /// Master seed; overrides the data and training seeds.
    pub seed: u64,
    /// Trained registration model reused by audit, slice, infer-sweep and
    /// icp-ablation; trained from `[train]` when absent.
    pub checkpoint: Option<PathBuf>,
    pub registration: RegistrationSetup,
    pub sequence: SequenceSetup,
    pub train: TrainConfig,
    pub inference: InferenceConfig,
    pub audit: AuditSettings,
    pub slice: SliceSettings,
    pub averaging: AveragingSettings,
    pub icp: IcpSettings,
    pub sweep: SweepSettings,
    pub grid: GridSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: None,
            seed: 0,
            checkpoint: None,
            registration: RegistrationSetup::default(),
            sequence: SequenceSetup::default(),
            train: TrainConfig::default(),
            inference: InferenceConfig::default(),
            audit: AuditSettings::default(),
            slice: SliceSettings::default(),
            averaging: AveragingSettings::default(),
            icp: IcpSettings::default(),
            sweep: SweepSettings::default(),
            grid: GridSettings::default(),
        }
    }
}

impl ExperimentConfig {
    /// Point-cloud registration defaults: `n_samples = 3`, `T = 5`, `rho = 0.6`.
    pub fn registration_preset() -> Self {
        Self::default()
    }

    /// Recurrent-registration defaults: as above with `rho = 1`.
    pub fn recurrent_preset() -> Self {
        let mut c = Self::default();
        c.train.dlc = Some(DlcConfig::recurrent_preset());
        c
    }

    /// Alignment defaults: `mu = 4`, `lambda = 0.5`, `rho = 0.2`.
    pub fn alignment_preset() -> Self {
        let mut c = Self::default();
        c.train.dlc = Some(DlcConfig::alignment_preset());
        c
    }

    /// Registration defaults without convexification.
    pub fn baseline_preset() -> Self {
        let mut c = Self::default();
        c.train.dlc = None;
        c
    }

    /// Sequence classifier trained with plain SGD.
    pub fn sequence_preset() -> Self {
        let mut c = Self { experiment: Some(ExperimentKind::TrainSequence), ..Self::default() };
        c.train.optimizer = OptimizerConfig::sgd(0.05);
        c.train.dlc = Some(DlcConfig::recurrent_preset());
        c
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "registration" => Some(Self::registration_preset()),
            "baseline" => Some(Self::baseline_preset()),
            "recurrent" => Some(Self::recurrent_preset()),
            "alignment" => Some(Self::alignment_preset()),
            "sequence" => Some(Self::sequence_preset()),
            _ => None,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::InvalidConfig(format!("malformed config: {e}")))
    }

    pub fn to_toml(&self) -> Result<String, HarnessError> {
        toml::to_string(self).map_err(|e| HarnessError::InvalidConfig(format!("cannot serialize config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml(&text)
    }

    /// Applies the master seed and split sizes to the nested configs.
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        c.registration.data.seed = c.seed;
        c.registration.data.n_pairs = c.registration.n_train + c.registration.n_test;
        c.sequence.data.seed = c.seed;
        c.sequence.data.n_samples = c.sequence.n_train + c.sequence.n_test;
        c.train.seed = c.seed;
        c
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let r = &self.registration;
        if r.n_train == 0 || r.n_test == 0 {
            return Err(HarnessError::InvalidConfig("registration splits must be non-empty".into()));
        }
        if r.data.dim != r.task.dim {
            return Err(HarnessError::InvalidConfig(format!("{}-D data for a {}-D task", r.data.dim, r.task.dim)));
        }
        r.data.validate()?;
        if self.sequence.n_train == 0 || self.sequence.n_test == 0 {
            return Err(HarnessError::InvalidConfig("sequence splits must be non-empty".into()));
        }
        self.train.validate()?;
        self.inference.validate()?;
        self.audit.params.validate()?;
        if self.sweep.max_t == 0 {
            return Err(HarnessError::InvalidConfig("sweep.max_t must be >= 1".into()));
        }
        Ok(())
    }
}

/// Headline numbers of one experiment run, written as `summary.json`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub experiment: String,
    pub seed: u64,
    pub metrics: BTreeMap<String, f64>,
    pub notes: BTreeMap<String, String>,
}

impl Summary {
    fn new(kind: ExperimentKind, seed: u64) -> Self {
        Self { experiment: kind.name().to_string(), seed, ..Self::default() }
    }

    fn put(&mut self, key: &str, v: f64) {
        self.metrics.insert(key.to_string(), v);
    }

    fn note(&mut self, key: &str, v: impl Into<String>) {
        self.notes.insert(key.to_string(), v.into());
    }

    pub fn metric(&self, key: &str) -> Option<f64> {
        self.metrics.get(key).copied()
    }
}

/// Seventeen significant digits.
pub(crate) fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes a CSV file with a header row; callers format floats with 17
/// significant digits.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), HarnessError> {
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        s.push_str(&r.join(","));
        s.push('\n');
    }
    fs::write(path, s).map_err(|e| HarnessError::io(path, e))
}

struct Artifacts {
    dir: PathBuf,
    timings: BTreeMap<String, f64>,
}

impl Artifacts {
    fn create(dir: &Path) -> Result<Self, HarnessError> {
        fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        Ok(Self { dir: dir.to_path_buf(), timings: BTreeMap::new() })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn text(&self, name: &str, contents: &str) -> Result<(), HarnessError> {
        let p = self.path(name);
        fs::write(&p, contents).map_err(|e| HarnessError::io(&p, e))
    }

    fn csv(&self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<(), HarnessError> {
        write_csv(&self.path(name), header, rows)
    }

    fn json<S: Serialize>(&self, name: &str, v: &S) -> Result<(), HarnessError> {
        let s = serde_json::to_string_pretty(v).map_err(|e| HarnessError::InvalidConfig(e.to_string()))?;
        self.text(name, &(s + "\n"))
    }

    fn time(&mut self, key: &str, seconds: f64) {
        self.timings.insert(key.to_string(), seconds);
    }

    /// Wall-clock data lives only in `metadata.json`, so every other file is
    /// reproducible byte for byte.
    fn finish(&self) -> Result<(), HarnessError> {
        let stamp = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
        let meta = serde_json::json!({ "finished_unix_s": stamp, "wall_time_s": self.timings });
        self.json("metadata.json", &meta)
    }
}

/// Reads a config file and runs the named experiment into `out`.
pub fn run_experiment_file(name: &str, config: &Path, out: &Path) -> Result<Summary, HarnessError> {
    let kind: ExperimentKind = name.parse()?;
    run_experiment(kind, &ExperimentConfig::load(config)?, out)
}

pub fn run_experiment(kind: ExperimentKind, cfg: &ExperimentConfig, out: &Path) -> Result<Summary, HarnessError> {
    let cfg = ExperimentConfig { experiment: Some(kind), ..cfg.resolved() };
    cfg.validate()?;
    let mut art = Artifacts::create(out)?;
    art.text("config.toml", &cfg.to_toml()?)?;
    let seeds: BTreeMap<&str, u64> = [("seed", cfg.seed), ("data", cfg.registration.data.seed), ("train", cfg.train.seed)]
        .into_iter()
        .collect();
    art.json("seeds.json", &seeds)?;
    let started = Instant::now();
    let summary = match kind {
        ExperimentKind::TrainRegistration => train_registration(&cfg, &mut art)?,
        ExperimentKind::TrainSequence => train_sequence(&cfg, &mut art)?,
        ExperimentKind::Audit => audit(&cfg, &mut art)?,
        ExperimentKind::Slice => slice(&cfg, &mut art)?,
        ExperimentKind::InferSweep => infer_sweep(&cfg, &mut art)?,
        ExperimentKind::AveragingSim => averaging(&cfg, &art)?,
        ExperimentKind::IcpAblation => icp_ablation(&cfg, &mut art)?,
        ExperimentKind::GridSearch => grid_search(&cfg, &mut art)?,
    };
    art.time("total", started.elapsed().as_secs_f64());
    art.json("summary.json", &summary)?;
    art.finish()?;
    Ok(summary)
}

/// Writes the registration train/test splits as point-cloud files under
/// `out/train` and `out/test`.
pub fn generate_data(cfg: &ExperimentConfig, out: &Path) -> Result<(usize, usize), HarnessError> {
    let cfg = cfg.resolved();
    cfg.validate()?;
    let (train, test) = registration_split(&cfg)?;
    write_dataset(&out.join("train"), &train, &cfg.registration.data)?;
    write_dataset(&out.join("test"), &test, &cfg.registration.data)?;
    Ok((train.len(), test.len()))
}

fn registration_split(cfg: &ExperimentConfig) -> Result<(Vec<PointCloudPair>, Vec<PointCloudPair>), HarnessError> {
    let mut all = generate_registration_dataset(&cfg.registration.data)?;
    let test = all.split_off(cfg.registration.n_train);
    Ok((all, test))
}

fn sequence_split(cfg: &ExperimentConfig) -> Result<(Vec<SequenceSample>, Vec<SequenceSample>), HarnessError> {
    let mut all = generate_sequence_dataset(&cfg.sequence.data)?;
    let test = all.split_off(cfg.sequence.n_train);
    Ok((all, test))
}

fn history_rows(h: &[StepRecord]) -> Vec<Vec<String>> {
    h.iter()
        .map(|r| {
            vec![
                r.epoch.to_string(),
                r.step.to_string(),
                r.index.to_string(),
                num(r.total),
                num(r.base),
                num(r.hinge_mean),
            ]
        })
        .collect()
}

const HISTORY_HEADER: [&str; 6] = ["epoch", "step", "index", "total", "base", "hinge_mean"];

fn train_and_save<T, D>(
    task: &T,
    cfg: &TrainConfig,
    data: &[D],
    art: &mut Artifacts,
    prefix: &str,
) -> Result<Checkpoint, HarnessError>
where
    D: super::train::Supervised,
    T: Task<Input = D>,
{
    let started = Instant::now();
    let (ckpt, times) = train_timed(task, cfg, data)?;
    art.time(&format!("{prefix}train"), started.elapsed().as_secs_f64());
    let mean_step = times.iter().map(|d| d.as_secs_f64()).sum::<f64>() / times.len().max(1) as f64;
    art.time(&format!("{prefix}mean_step"), mean_step);
    save_checkpoint(&art.path(&format!("{prefix}checkpoint.ckpt")), &ckpt)?;
    art.csv(&format!("{prefix}loss_history.csv"), &HISTORY_HEADER, &history_rows(&ckpt.history))?;
    Ok(ckpt)
}

fn last_epoch_means(h: &[StepRecord]) -> (f64, f64) {
    let last = h.last().map_or(0, |r| r.epoch);
    let tail: Vec<&StepRecord> = h.iter().filter(|r| r.epoch == last).collect();
    let n = tail.len().max(1) as f64;
    (tail.iter().map(|r| r.base).sum::<f64>() / n, tail.iter().map(|r| r.hinge_mean).sum::<f64>() / n)
}

/// The registration model: loaded from `cfg.checkpoint`, or trained on the
/// training split.
fn registration_model(
    cfg: &ExperimentConfig,
    train: &[PointCloudPair],
    art: &mut Artifacts,
) -> Result<ParamSet, HarnessError> {
    let task = &cfg.registration.task;
    match &cfg.checkpoint {
        Some(p) => {
            let ckpt = load_checkpoint(p)?;
            if ckpt.config.task.as_deref().is_some_and(|t| t != task.name()) {
                return Err(HarnessError::InvalidConfig(format!(
                    "checkpoint was trained for `{}`, config describes `{}`",
                    ckpt.config.task.unwrap_or_default(),
                    task.name()
                )));
            }
            Ok(ckpt.params)
        }
        None => Ok(train_and_save(task, &cfg.train, train, art, "")?.params),
    }
}

/// Test-time predictions with their errors against the ground truth.
#[derive(Clone, Debug)]
pub struct RegistrationEval {
    pub predictions: Vec<PredictionVector>,
    pub trajectories: Vec<Trajectory>,
    pub errors: Vec<MotionError>,
    pub metrics: RegistrationMetrics,
}

/// Runs fixed-point inference on every pair (in parallel; results keep
/// pair order).
pub fn evaluate_registration(
    task: &RegistrationTask,
    params: &ParamSet,
    pairs: &[PointCloudPair],
    cfg: &InferenceConfig,
) -> Result<RegistrationEval, HarnessError> {
    let runs: Vec<(PredictionVector, Trajectory)> =
        pairs.par_iter().map(|p| infer(task, p, params, cfg)).collect::<Result<_, _>>()?;
    let errors: Vec<MotionError> = runs
        .iter()
        .zip(pairs)
        .map(|((w, _), p)| Ok(motion_error(&RigidMotion::from_omega(w.values(), p.dim())?, &p.motion())))
        .collect::<Result<_, HarnessError>>()?;
    let metrics = RegistrationMetrics::from_errors(&errors);
    let (predictions, trajectories) = runs.into_iter().unzip();
    Ok(RegistrationEval { predictions, trajectories, errors, metrics })
}

fn audit_pairs(
    task: &RegistrationTask,
    params: &ParamSet,
    pairs: &[PointCloudPair],
    settings: &AuditSettings,
    seed: u64,
) -> Result<Vec<AuditReport>, HarnessError> {
    let mut rng = stream_rng(seed, RngStream::Audit);
    let sampler = task.default_sampler();
    pairs
        .iter()
        .take(settings.n_pairs.max(1))
        .map(|p| Ok(audit_star_convexity(task, p, params, &p.omega_star, &sampler, &settings.params, &mut rng)?))
        .collect()
}

/// Pooled con2 violation rate over several audits.
fn pooled_con2(reports: &[AuditReport]) -> f64 {
    let v: usize = reports.iter().map(|r| r.con2.violations).sum();
    let t: usize = reports.iter().map(|r| r.con2.tested).sum();
    v as f64 / t.max(1) as f64
}

fn audit_rows(reports: &[AuditReport]) -> Vec<Vec<String>> {
    reports
        .iter()
        .enumerate()
        .map(|(i, r)| {
            vec![
                i.to_string(),
                num(r.con1.violation_rate),
                num(r.con2.violation_rate),
                num(r.con3.violation_rate),
                num(r.lem1.violation_rate),
                num(r.mu_hat),
                num(r.l_hat),
            ]
        })
        .collect()
}

const AUDIT_HEADER: [&str; 7] = ["pair", "con1_rate", "con2_rate", "con3_rate", "lem1_rate", "mu_hat", "l_hat"];

fn error_rows(errs: &[MotionError]) -> Vec<Vec<String>> {
    errs.iter().enumerate().map(|(i, e)| vec![i.to_string(), num(e.se_r), num(e.se_euler_deg), num(e.se_t)]).collect()
}

fn put_metrics(s: &mut Summary, prefix: &str, m: &RegistrationMetrics) {
    s.put(&format!("{prefix}mse_r"), m.mse_r);
    s.put(&format!("{prefix}mse_euler_deg"), m.mse_euler_deg);
    s.put(&format!("{prefix}mse_t"), m.mse_t);
}

fn train_registration(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<Summary, HarnessError> {
    let task = &cfg.registration.task;
    let (train, test) = registration_split(cfg)?;
    let ckpt = train_and_save(task, &cfg.train, &train, art, "")?;
    let started = Instant::now();
    let eval = evaluate_registration(task, &ckpt.params, &test, &cfg.inference)?;
    art.csv("test_errors.csv", &["pair", "se_r", "se_euler_deg", "se_t"], &error_rows(&eval.errors))?;
    let reports = audit_pairs(task, &ckpt.params, &test, &cfg.audit, cfg.seed)?;
    art.csv("audit.csv", &AUDIT_HEADER, &audit_rows(&reports))?;
    art.time("evaluate", started.elapsed().as_secs_f64());

    let mut s = Summary::new(ExperimentKind::TrainRegistration, cfg.seed);
    put_metrics(&mut s, "", &eval.metrics);
    s.put("con2_violation_rate", pooled_con2(&reports));
    s.put("mu_hat_median", median(&reports.iter().map(|r| r.mu_hat).collect::<Vec<_>>()));
    let (base, hinge) = last_epoch_means(&ckpt.history);
    s.put("final_epoch_base_loss", base);
    s.put("final_epoch_hinge_mean", hinge);
    s.put("inference_iters", cfg.inference.max_iters as f64);
    s.note("mode", if cfg.train.dlc.is_some() { "dlc" } else { "baseline" });
    Ok(s)
}

fn train_sequence(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<Summary, HarnessError> {
    let task = &cfg.sequence.task;
    let (train, test) = sequence_split(cfg)?;
    let ckpt = train_and_save(task, &cfg.train, &train, art, "")?;
    let mut infer_cfg = cfg.inference.clone();
    infer_cfg.init = crate::inference::InitPolicy::ZeroMotion;
    let rows: Vec<(usize, Vec<f64>, Vec<f64>)> = test
        .par_iter()
        .map(|x| -> Result<_, HarnessError> {
            let p = task.predict_proba(&ckpt.params, x)?;
            let (w, _) = infer(task, x, &ckpt.params, &infer_cfg)?;
            Ok((x.label(), p, w.into_values()))
        })
        .collect::<Result<_, _>>()?;
    let argmax = |v: &[f64]| v.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map_or(0, |(i, _)| i);
    let mut csv = Vec::new();
    let (mut direct, mut inferred, mut ce) = (0usize, 0usize, 0.0);
    for (i, (label, p, w)) in rows.iter().enumerate() {
        direct += (argmax(p) == *label) as usize;
        inferred += (argmax(w) == *label) as usize;
        ce -= p[*label].max(f64::MIN_POSITIVE).ln();
        let mut r = vec![i.to_string(), label.to_string()];
        r.extend(p.iter().map(|v| num(*v)));
        r.extend(w.iter().map(|v| num(*v)));
        csv.push(r);
    }
    let k = task.classes;
    let mut header: Vec<String> = vec!["index".into(), "label".into()];
    header.extend((0..k).map(|c| format!("p_{c}")));
    header.extend((0..k).map(|c| format!("omega_{c}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    art.csv("test_predictions.csv", &header, &csv)?;

    let n = test.len() as f64;
    let mut s = Summary::new(ExperimentKind::TrainSequence, cfg.seed);
    s.put("accuracy_direct", direct as f64 / n);
    s.put("accuracy_inferred", inferred as f64 / n);
    s.put("test_cross_entropy", ce / n);
    let (base, hinge) = last_epoch_means(&ckpt.history);
    s.put("final_epoch_base_loss", base);
    s.put("final_epoch_hinge_mean", hinge);
    Ok(s)
}

fn oracle(name: &str) -> Result<crate::tasks::OracleEntry, HarnessError> {
    oracle_by_name(name).ok_or_else(|| HarnessError::InvalidConfig(format!("unknown oracle `{name}`")))
}

fn audit(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<Summary, HarnessError> {
    let mut s = Summary::new(ExperimentKind::Audit, cfg.seed);
    let reports = match &cfg.audit.oracle {
        Some(name) => {
            let e = oracle(name)?;
            let star = PredictionVector::new(e.omega_star.clone(), e.oracle.layout())?;
            let mut rng = stream_rng(cfg.seed, RngStream::Audit);
            let r = audit_star_convexity(
                &e.oracle,
                &(),
                &ParamSet::new(),
                &star,
                &e.oracle.default_sampler(),
                &cfg.audit.params,
                &mut rng,
            )?;
            let rows: Vec<Vec<String>> = r
                .rays
                .iter()
                .map(|ray| vec![ray.index.to_string(), num(ray.h_omega), num(ray.dist_sq), num(ray.grad_norm)])
                .collect();
            art.csv("audit_rays.csv", &["ray", "h_omega", "dist_sq", "grad_norm"], &rows)?;
            s.note("target", format!("oracle:{name}"));
            vec![r]
        }
        None => {
            let (train, test) = registration_split(cfg)?;
            let params = registration_model(cfg, &train, art)?;
            s.note("target", cfg.registration.task.name());
            audit_pairs(&cfg.registration.task, &params, &test, &cfg.audit, cfg.seed)?
        }
    };
    art.csv("audit.csv", &AUDIT_HEADER, &audit_rows(&reports))?;
    let pooled = |f: fn(&AuditReport) -> (usize, usize)| {
        let (v, t) = reports.iter().map(f).fold((0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
        v as f64 / t.max(1) as f64
    };
    s.put("con1_violation_rate", pooled(|r| (r.con1.violations, r.con1.tested)));
    s.put("con2_violation_rate", pooled(|r| (r.con2.violations, r.con2.tested)));
    s.put("con3_violation_rate", pooled(|r| (r.con3.violations, r.con3.tested)));
    s.put("lem1_violation_rate", pooled(|r| (r.lem1.violations, r.lem1.tested)));
    s.put("mu_hat_median", median(&reports.iter().map(|r| r.mu_hat).collect::<Vec<_>>()));
    s.put("l_hat_max", reports.iter().map(|r| r.l_hat).fold(0.0, f64::max));
    Ok(s)
}

fn slice(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<Summary, HarnessError> {
    let ss = &cfg.slice;
    let spec = |center: PredictionVector| SliceSpec {
        dim_x: ss.dim_x,
        dim_y: ss.dim_y,
        half_width: ss.half_width,
        resolution: ss.resolution,
        center,
    };
    let mut s = Summary::new(ExperimentKind::Slice, cfg.seed);
    let grid = match &ss.oracle {
        Some(name) => {
            let e = oracle(name)?;
            s.note("target", format!("oracle:{name}"));
            let center = PredictionVector::new(e.omega_star.clone(), e.oracle.layout())?;
            slice_landscape(&e.oracle, &(), &ParamSet::new(), &spec(center))?
        }
        None => {
            let (train, test) = registration_split(cfg)?;
            let params = registration_model(cfg, &train, art)?;
            let pair = test
                .get(ss.pair_index)
                .ok_or_else(|| HarnessError::InvalidConfig(format!("pair_index {} beyond test split", ss.pair_index)))?;
            s.note("target", format!("{} pair {}", cfg.registration.task.name(), ss.pair_index));
            slice_landscape(&cfg.registration.task, pair, &params, &spec(pair.omega_star.clone()))?
        }
    };
    art.text("slice.csv", &grid.to_csv())?;
    if ss.svg {
        art.text("slice.svg", &grid.to_svg())?;
    }
    s.put("center_loss", grid.center_loss());
    s.put("center_is_global_min", grid.center_is_global_min() as u8 as f64);
    s.put("strict_local_minima", grid.local_minima.len() as f64);
    Ok(s)
}

fn infer_sweep(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<Summary, HarnessError> {
    let task = &cfg.registration.task;
    let (train, test) = registration_split(cfg)?;
    let params = registration_model(cfg, &train, art)?;
    let mut rows = Vec::new();
    let mut s = Summary::new(ExperimentKind::InferSweep, cfg.seed);
    for mode in [InferenceMode::LastIterate, InferenceMode::Averaged] {
        let ic = InferenceConfig { max_iters: cfg.sweep.max_t, mode, stop_tol: 0.0, ..cfg.inference.clone() };
        let eval = evaluate_registration(task, &params, &test, &ic)?;
        let label = match mode {
            InferenceMode::LastIterate => "last-iterate",
            InferenceMode::Averaged => "averaged",
        };
        // iterate t of a T_max run is exactly the budget-t prediction
        for t in 0..=cfg.sweep.max_t {
            let errs: Vec<MotionError> = eval
                .trajectories
                .iter()
                .zip(&test)
                .map(|(tr, p)| {
                    let w = &tr.iterates[t.min(tr.iterates.len() - 1)];
                    Ok(motion_error(&RigidMotion::from_omega(w.values(), p.dim())?, &p.motion()))
                })
                .collect::<Result<_, HarnessError>>()?;
            let m = RegistrationMetrics::from_errors(&errs);
            let mean_loss = eval.trajectories.iter().map(|tr| tr.losses[t.min(tr.losses.len() - 1)]).sum::<f64>()
                / eval.trajectories.len() as f64;
            rows.push(vec![t.to_string(), label.to_string(), num(m.mse_r), num(m.mse_euler_deg), num(m.mse_t), num(mean_loss)]);
            if t == cfg.sweep.max_t {
                put_metrics(&mut s, &format!("{label}_"), &m);
            }
        }
    }
    art.csv("infer_sweep.csv", &["t", "mode", "mse_r", "mse_euler_deg", "mse_t", "mean_loss"], &rows)?;
    Ok(s)
}

fn averaging(cfg: &ExperimentConfig, art: &Artifacts) -> Result<Summary, HarnessError> {
    let a = &cfg.averaging;
    let curve = simulate_averaging(a.t_max, a.error_std, a.omega_dim, a.n_trials, &mut stream_rng(cfg.seed, RngStream::Audit))?;
    let rows: Vec<Vec<String>> =
        curve.t.iter().zip(&curve.mse).zip(&curve.theory).map(|((t, m), th)| vec![t.to_string(), num(*m), num(*th)]).collect();
    art.csv("averaging.csv", &["t", "mse", "theory"], &rows)?;
    let mut s = Summary::new(ExperimentKind::AveragingSim, cfg.seed);
    if let (Some(b), Some(c)) = (curve.slope, curve.intercept) {
        s.put("slope", b);
        s.put("intercept", c);
    }
    s.put("mse_t1", curve.mse[0]);
    s.put("mse_tmax", *curve.mse.last().expect("t_max >= 1"));
    Ok(s)
}

fn icp_ablation(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<Summary, HarnessError> {
    let task = &cfg.registration.task;
    let (train, test) = registration_split(cfg)?;
    let params = registration_model(cfg, &train, art)?;
    let eval = evaluate_registration(task, &params, &test, &cfg.inference)?;
    let refined: Vec<(MotionError, usize, bool)> = test
        .par_iter()
        .zip(&eval.predictions)
        .map(|(p, w)| -> Result<_, HarnessError> {
            let r = icp_refine(p, w, cfg.icp.max_iters, cfg.icp.tol)?;
            Ok((motion_error(&r.motion, &p.motion()), r.iterations, r.converged))
        })
        .collect::<Result<_, _>>()?;
    let identity: Vec<MotionError> = test
        .par_iter()
        .map(|p| -> Result<_, HarnessError> {
            let w0 = PredictionVector::new(task.neutral_omega(), task.layout())?;
            let r = icp_refine(p, &w0, cfg.icp.max_iters, cfg.icp.tol)?;
            Ok(motion_error(&r.motion, &p.motion()))
        })
        .collect::<Result<_, _>>()?;
    let with: Vec<MotionError> = refined.iter().map(|r| r.0).collect();
    let m_without = eval.metrics;
    let m_with = RegistrationMetrics::from_errors(&with);
    let m_icp = RegistrationMetrics::from_errors(&identity);

    let table = [
        (task.name(), "w/o ICP refinement", m_without),
        (task.name(), "with ICP refinement", m_with),
        ("icp-only".to_string(), "with ICP refinement", m_icp),
    ];
    let rows: Vec<Vec<String>> = table
        .iter()
        .map(|(method, col, m)| vec![method.clone(), col.to_string(), num(m.mse_r), num(m.mse_euler_deg), num(m.mse_t)])
        .collect();
    art.csv("icp_ablation.csv", &["method", "refinement", "mse_r", "mse_euler_deg", "mse_t"], &rows)?;
    let per_pair: Vec<Vec<String>> = eval
        .errors
        .iter()
        .zip(&refined)
        .enumerate()
        .map(|(i, (a, (b, iters, conv)))| {
            vec![i.to_string(), num(a.se_euler_deg), num(b.se_euler_deg), num(a.se_t), num(b.se_t), iters.to_string(), conv.to_string()]
        })
        .collect();
    art.csv(
        "icp_pairs.csv",
        &["pair", "se_euler_deg_without", "se_euler_deg_with", "se_t_without", "se_t_with", "icp_iterations", "converged"],
        &per_pair,
    )?;
    let mut s = Summary::new(ExperimentKind::IcpAblation, cfg.seed);
    put_metrics(&mut s, "without_", &m_without);
    put_metrics(&mut s, "with_", &m_with);
    put_metrics(&mut s, "icp_only_", &m_icp);
    Ok(s)
}

fn grid_search(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<Summary, HarnessError> {
    let task = &cfg.registration.task;
    let (train, test) = registration_split(cfg)?;
    let base = cfg.train.dlc.clone().unwrap_or_default();
    let mut rows = Vec::new();
    let mut best: Option<(f64, (f64, f64, f64))> = None;
    for (i, &(rho, lambda, mu)) in grid_points(&cfg.grid).iter().enumerate() {
        let dlc = DlcConfig { rho, lambda, mu, ..base.clone() };
        let tc = TrainConfig { dlc: Some(dlc), ..cfg.train.clone() };
        let ckpt = train_and_save(task, &tc, &train, art, &format!("grid_{i:03}_"))?;
        let eval = evaluate_registration(task, &ckpt.params, &test, &cfg.inference)?;
        let reports = audit_pairs(task, &ckpt.params, &test, &cfg.audit, cfg.seed)?;
        let con2 = pooled_con2(&reports);
        let m = eval.metrics;
        rows.push(vec![i.to_string(), num(rho), num(lambda), num(mu), num(m.mse_r), num(m.mse_euler_deg), num(m.mse_t), num(con2)]);
        if best.is_none_or(|(b, _)| m.mse_euler_deg < b) {
            best = Some((m.mse_euler_deg, (rho, lambda, mu)));
        }
    }
    art.csv("grid.csv", &["index", "rho", "lambda", "mu", "mse_r", "mse_euler_deg", "mse_t", "con2_violation_rate"], &rows)?;
    let mut s = Summary::new(ExperimentKind::GridSearch, cfg.seed);
    if let Some((score, (r, l, m))) = best {
        s.put("best_mse_euler_deg", score);
        s.put("best_rho", r);
        s.put("best_lambda", l);
        s.put("best_mu", m);
    }
    s.put("points", rows.len() as f64);
    Ok(s)
}
