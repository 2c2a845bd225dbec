//! A tiny recurrent classifier over synthetic random-walk sequences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Task, TaskError};
use crate::autodiff::{self, AdError, Bindings, ParamSet, Tape, Tensor, Var};
use crate::convexify::{project_to_simplex, Layout, NeighborhoodSampler, PredictionVector, SamplerMode};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceSample {
    pub sequence: Vec<f64>,
    pub label_one_hot: Vec<f64>,
}

impl SequenceSample {
    pub fn label(&self) -> usize {
        self.label_one_hot.iter().position(|&v| v == 1.0).unwrap_or(0)
    }

    pub fn omega_star(&self) -> PredictionVector {
        PredictionVector::new(self.label_one_hot.clone(), Layout::probabilities(self.label_one_hot.len()))
            .expect("one-hot labels are distributions")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SequenceDataConfig {
    pub n_samples: usize,
    pub steps: usize,
    /// Magnitude of the per-step drift; its sign is the label.
    pub drift: f64,
    pub noise: f64,
    pub seed: u64,
}

impl Default for SequenceDataConfig {
    fn default() -> Self {
        Self { n_samples: 200, steps: 16, drift: 0.3, noise: 1.0, seed: 0 }
    }
}

/// Random walks `x_t = (1/sqrt T) sum_{s<=t} (d + noise * z_s)` with
/// `d = +-drift`; class 1 when the drift is positive.
pub fn generate_sequence_dataset(cfg: &SequenceDataConfig) -> Result<Vec<SequenceSample>, TaskError> {
    if cfg.steps == 0 {
        return Err(TaskError::InvalidConfig("steps must be >= 1".into()));
    }
    if !(cfg.noise >= 0.0) || !cfg.drift.is_finite() {
        return Err(TaskError::InvalidConfig(format!("drift {} / noise {}", cfg.drift, cfg.noise)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let scale = 1.0 / (cfg.steps as f64).sqrt();
    Ok((0..cfg.n_samples)
        .map(|_| {
            let up = rng.random_bool(0.5);
            let d = if up { cfg.drift } else { -cfg.drift };
            let mut acc = 0.0;
            let sequence = (0..cfg.steps)
                .map(|_| {
                    acc += d + cfg.noise * rng.sample::<f64, _>(StandardNormal);
                    acc * scale
                })
                .collect();
            let label_one_hot = if up { vec![0.0, 1.0] } else { vec![1.0, 0.0] };
            SequenceSample { sequence, label_one_hot }
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SequenceTask {
    pub hidden: usize,
    pub classes: usize,
    pub sigma: f64,
}

impl Default for SequenceTask {
    fn default() -> Self {
        Self { hidden: 8, classes: 2, sigma: 1.0 }
    }
}

impl SequenceTask {
    /// Predicted class distribution `p_theta(x)`.
    pub fn predict_proba(&self, params: &ParamSet, sample: &SequenceSample) -> Result<Vec<f64>, AdError> {
        let (mut tape, b) = autodiff::bind(params, &vec![0.0; self.classes])?;
        let p = self.logits(&mut tape, &b, sample)?;
        let p = tape.softmax(p)?;
        Ok(tape.value(p).data().to_vec())
    }

    fn logits(&self, tape: &mut Tape, b: &Bindings, x: &SequenceSample) -> Result<Var, AdError> {
        let wx = b.param("rnn.wx")?;
        let wh = b.param("rnn.wh")?;
        let bias = b.param("rnn.b")?;
        let mut h = tape.constant(Tensor::zeros(vec![1, self.hidden]))?;
        for &xt in &x.sequence {
            let a = tape.scale(wx, xt)?;
            let r = tape.matmul(h, wh)?;
            let z = tape.add(a, r)?;
            let z = tape.add_row(z, bias)?;
            h = tape.tanh(z)?;
        }
        let o = tape.matmul(h, b.param("rnn.wo")?)?;
        let o = tape.add_row(o, b.param("rnn.bo")?)?;
        tape.reshape(o, vec![self.classes])
    }
}

impl Task for SequenceTask {
    type Input = SequenceSample;
    /// Log class probabilities.
    type Encoded = Var;

    fn name(&self) -> String {
        format!("sequence-rnn{}", self.hidden)
    }

    fn layout(&self) -> Layout {
        Layout::probabilities(self.classes)
    }

    fn default_sampler(&self) -> NeighborhoodSampler {
        NeighborhoodSampler::new(vec![self.sigma], SamplerMode::NoisyOneHotSoftmax).expect("sigma is positive")
    }

    fn init_params<R: Rng + ?Sized>(&self, rng: &mut R) -> ParamSet {
        let (h, k) = (self.hidden, self.classes);
        let mut normal = |n: usize, scale: f64| -> Vec<f64> {
            (0..n).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
        };
        let mut p = ParamSet::new();
        let entries = [
            ("rnn.wx", Tensor::matrix(1, h, normal(h, 1.0))),
            ("rnn.wh", Tensor::matrix(h, h, normal(h * h, (1.0 / h as f64).sqrt()))),
            ("rnn.b", Ok(Tensor::vector(vec![0.0; h]))),
            ("rnn.wo", Tensor::matrix(h, k, normal(h * k, (1.0 / h as f64).sqrt()))),
            ("rnn.bo", Ok(Tensor::vector(vec![0.0; k]))),
        ];
        for (name, t) in entries {
            p.insert(name, t.expect("shapes agree")).expect("fresh parameter set");
        }
        p
    }

    fn encode(&self, tape: &mut Tape, bindings: &Bindings, x: &SequenceSample) -> Result<Var, AdError> {
        let logits = self.logits(tape, bindings, x)?;
        tape.log_softmax(logits)
    }

    fn loss_at(&self, tape: &mut Tape, _b: &Bindings, _x: &SequenceSample, logp: &Var, omega: Var) -> Result<Var, AdError> {
        let terms = tape.mul(omega, *logp)?;
        let s = tape.sum(terms)?;
        tape.neg(s)
    }

    fn neutral_omega(&self) -> Vec<f64> {
        vec![1.0 / self.classes as f64; self.classes]
    }

    fn project(&self, omega: &mut [f64]) {
        project_to_simplex(omega);
    }
}

/// Builder for `-sum_k omega_k log p_theta(x)_k` at the bound prediction.
pub fn sequence_loss<'a>(
    task: &'a SequenceTask,
    sample: &'a SequenceSample,
    omega: &PredictionVector,
) -> Result<impl Fn(&mut Tape, &Bindings) -> Result<Var, AdError> + 'a, TaskError> {
    task.layout().validate(omega.values())?;
    Ok(super::loss_builder(task, sample))
}
