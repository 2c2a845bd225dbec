use rand::Rng;
use serde::{Deserialize, Serialize};

use super::hinge::{hinge_vars, HingeTriple, HingeVars};
use super::prediction::PredictionVector;
use super::sampler::{sample_neighborhood, NeighborhoodSampler};
use super::DlcError;
use crate::autodiff::{self, AdError, Bindings, Gradients, ParamSet, Tape, Tensor, Var};
use crate::tasks::Task;

pub const LAMBDA_PARAM: &str = "dlc.lambda_logit";
pub const MU_PARAM: &str = "dlc.log_mu";

/// Hyperparameters of the hinge-augmented objective.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DlcConfig {
    pub lambda: f64,
    pub mu: f64,
    pub rho: f64,
    pub n_samples: usize,
    /// `None` uses the task's default neighborhood.
    pub sampler: Option<NeighborhoodSampler>,
    /// Learn `lambda = sigmoid(a)` and `mu = exp(b)` alongside the weights;
    /// `lambda` and `mu` above then only seed `a` and `b`.
    pub trainable: bool,
}

impl Default for DlcConfig {
    fn default() -> Self {
        Self { lambda: 0.5, mu: 1.0, rho: 1.0, n_samples: 3, sampler: None, trainable: false }
    }
}

impl DlcConfig {
    /// Point-cloud registration preset (`rho = 0.6`).
    pub fn registration_preset() -> Self {
        Self { rho: 0.6, ..Self::default() }
    }

    /// Recurrent-registration preset (`rho = 1`).
    pub fn recurrent_preset() -> Self {
        Self { rho: 1.0, ..Self::default() }
    }

    /// Image-alignment preset (`mu = 4, lambda = 0.5, rho = 0.2`).
    pub fn alignment_preset() -> Self {
        Self { mu: 4.0, lambda: 0.5, rho: 0.2, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), DlcError> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(DlcError::InvalidConfig(format!("lambda {} outside [0, 1]", self.lambda)));
        }
        if !(self.mu >= 0.0) || !(self.rho >= 0.0) || !self.mu.is_finite() || !self.rho.is_finite() {
            return Err(DlcError::InvalidConfig(format!("mu {} and rho {} must be >= 0", self.mu, self.rho)));
        }
        if self.n_samples == 0 {
            return Err(DlcError::InvalidConfig("n_samples must be >= 1".into()));
        }
        if self.trainable && (self.mu <= 0.0 || self.lambda <= 0.0 || self.lambda >= 1.0) {
            return Err(DlcError::InvalidConfig("trainable lambda/mu need 0 < lambda < 1 and mu > 0".into()));
        }
        if let Some(s) = &self.sampler {
            s.validate()?;
        }
        Ok(())
    }

    pub fn sampler_for<T: Task>(&self, task: &T) -> NeighborhoodSampler {
        self.sampler.clone().unwrap_or_else(|| task.default_sampler())
    }

    /// Registers the trainable `lambda`/`mu` parameters when enabled.
    pub fn add_trainable_params(&self, params: &mut ParamSet) -> Result<(), DlcError> {
        if self.trainable {
            let logit = (self.lambda / (1.0 - self.lambda)).ln();
            params.insert(LAMBDA_PARAM, Tensor::scalar(logit))?;
            params.insert(MU_PARAM, Tensor::scalar(self.mu.ln()))?;
        }
        Ok(())
    }

    /// Current `(lambda, mu)`, reading trainable values from `params`.
    pub fn effective_lambda_mu(&self, params: &ParamSet) -> (f64, f64) {
        if self.trainable {
            let a = params.get(LAMBDA_PARAM).map_or(0.0, |t| t.data()[0]);
            let b = params.get(MU_PARAM).map_or(0.0, |t| t.data()[0]);
            (1.0 / (1.0 + (-a).exp()), b.exp())
        } else {
            (self.lambda, self.mu)
        }
    }
}

/// Tape nodes of the composite objective for one datapoint.
#[derive(Clone, Debug)]
pub struct DlcTerms {
    pub total: Var,
    pub base: Var,
    pub hinge_mean: Var,
    pub hinges: Vec<HingeVars>,
    pub tildes: Vec<Var>,
}

/// Builds `h(omega*) + rho * mean_i(eps_i + gamma_i + xi_i)` on the tape.
/// The prediction leaf of `bindings` holds `omega*`; `samples` are the
/// pre-drawn neighbors. One encoding and one `h(omega*)` node are shared
/// by the base term and every hinge.
pub fn build_dlc_objective<T: Task>(
    task: &T,
    tape: &mut Tape,
    bindings: &Bindings,
    x: &T::Input,
    samples: &[Vec<f64>],
    cfg: &DlcConfig,
) -> Result<DlcTerms, AdError> {
    let enc = task.encode(tape, bindings, x)?;
    let star = bindings.omega();
    let base = task.loss_at(tape, bindings, x, &enc, star)?;

    let (lambda, mu) = if cfg.trainable {
        let a = tape.reshape(bindings.param(LAMBDA_PARAM)?, vec![])?;
        let b = tape.reshape(bindings.param(MU_PARAM)?, vec![])?;
        (tape.sigmoid(a)?, tape.exp(b)?)
    } else {
        (tape.constant_scalar(cfg.lambda)?, tape.constant_scalar(cfg.mu)?)
    };

    let mut hinges = Vec::with_capacity(samples.len());
    let mut tildes = Vec::with_capacity(samples.len());
    let mut acc: Option<Var> = None;
    for w in samples {
        let w = tape.constant_vector(w)?;
        let h_omega = task.loss_at(tape, bindings, x, &enc, w)?;
        let one = tape.constant_scalar(1.0)?;
        let keep = tape.sub(one, lambda)?;
        let a = tape.mul(keep, star)?;
        let b = tape.mul(lambda, w)?;
        let tilde = tape.add(a, b)?;
        let h_tilde = task.loss_at(tape, bindings, x, &enc, tilde)?;
        let diff = tape.sub(star, w)?;
        let dist_sq = tape.squared_norm(diff)?;
        let hv = hinge_vars(tape, base, h_omega, h_tilde, dist_sq, lambda, mu)?;
        let s = tape.add(hv.epsilon, hv.gamma)?;
        let s = tape.add(s, hv.xi)?;
        acc = Some(match acc {
            Some(prev) => tape.add(prev, s)?,
            None => s,
        });
        hinges.push(hv);
        tildes.push(tilde);
    }
    let hinge_mean = match acc {
        Some(sum) => tape.scale(sum, 1.0 / samples.len() as f64)?,
        None => tape.constant_scalar(0.0)?,
    };
    // rho = 0 leaves the hinge branch disconnected so the objective and its
    // gradient reduce exactly to the plain task loss.
    let total = if cfg.rho == 0.0 {
        base
    } else {
        let weighted = tape.scale(hinge_mean, cfg.rho)?;
        tape.add(base, weighted)?
    };
    Ok(DlcTerms { total, base, hinge_mean, hinges, tildes })
}

/// Builder form of [`build_dlc_objective`] for gradient checking.
pub fn dlc_builder<'a, T: Task>(
    task: &'a T,
    x: &'a T::Input,
    samples: &'a [Vec<f64>],
    cfg: &'a DlcConfig,
) -> impl Fn(&mut Tape, &Bindings) -> Result<Var, AdError> + 'a {
    move |tape, b| build_dlc_objective(task, tape, b, x, samples, cfg).map(|t| t.total)
}

#[derive(Clone, Debug)]
pub struct DlcOutput {
    pub loss: f64,
    /// `h(omega*)`.
    pub base: f64,
    /// Mean over samples of `eps + gamma + xi`.
    pub hinge_mean: f64,
    pub grads: Gradients,
    pub diagnostics: Vec<HingeTriple>,
}

/// Samples the neighborhood, evaluates the composite objective and returns
/// its gradient with respect to the parameters.
pub fn dlc_loss<T: Task, R: Rng + ?Sized>(
    task: &T,
    x: &T::Input,
    omega_star: &PredictionVector,
    params: &ParamSet,
    cfg: &DlcConfig,
    rng: &mut R,
) -> Result<DlcOutput, DlcError> {
    cfg.validate()?;
    let sampler = cfg.sampler_for(task);
    let samples: Vec<Vec<f64>> = sample_neighborhood(omega_star, &sampler, cfg.n_samples, rng)?
        .into_iter()
        .map(PredictionVector::into_values)
        .collect();
    dlc_loss_with_samples(task, x, omega_star, params, cfg, &samples)
}

/// [`dlc_loss`] with caller-supplied neighbor samples.
pub fn dlc_loss_with_samples<T: Task>(
    task: &T,
    x: &T::Input,
    omega_star: &PredictionVector,
    params: &ParamSet,
    cfg: &DlcConfig,
    samples: &[Vec<f64>],
) -> Result<DlcOutput, DlcError> {
    let layout = omega_star.layout();
    let (mut tape, bindings) = autodiff::bind(params, omega_star.values())?;
    let terms = build_dlc_objective(task, &mut tape, &bindings, x, samples, cfg)?;
    tape.set_loss(terms.total)?;

    let mut diagnostics = Vec::with_capacity(samples.len());
    for ((hv, tilde), w) in terms.hinges.iter().zip(&terms.tildes).zip(samples) {
        diagnostics.push(HingeTriple {
            epsilon: tape.scalar(hv.epsilon),
            gamma: tape.scalar(hv.gamma),
            xi: tape.scalar(hv.xi),
            omega_sample: PredictionVector::new(w.clone(), layout.clone())?,
            omega_tilde: PredictionVector::new(tape.value(*tilde).data().to_vec(), layout.clone())
                .or_else(|_| PredictionVector::new(normalize(tape.value(*tilde).data()), layout.clone()))?,
        });
    }
    let loss = tape.scalar(terms.total);
    let base = tape.scalar(terms.base);
    let hinge_mean = tape.scalar(terms.hinge_mean);
    let grads = tape.backward()?;
    Ok(DlcOutput { loss, base, hinge_mean, grads, diagnostics })
}

// Interpolating two distributions can drift off the simplex by roundoff.
fn normalize(p: &[f64]) -> Vec<f64> {
    let s: f64 = p.iter().sum();
    p.iter().map(|v| v / s).collect()
}
