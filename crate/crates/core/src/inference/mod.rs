//! Test-time prediction: fixed-point gradient iteration (last-iterate or
//! averaged) and ICP post-refinement for registration.

mod icp;
mod kabsch;
mod trajectory;

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{AdError, ParamSet};
use crate::convexify::{DlcError, PredictionVector};
use crate::tasks::{self, Task};

pub use icp::{icp_objective, icp_refine, nearest_neighbors, IcpResult};
pub use kabsch::{kabsch, matched_objective};
pub use trajectory::Trajectory;

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error("invalid inference configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("degenerate geometry: {0}")]
    Degenerate(String),
    #[error("iteration {iter} aborted: {reason}")]
    Aborted { iter: usize, reason: String, partial: Box<Trajectory> },
    #[error(transparent)]
    Autodiff(#[from] AdError),
    #[error(transparent)]
    Dlc(#[from] DlcError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InferenceMode {
    /// `w_t = g(w_{t-1})`.
    LastIterate,
    /// `D_t = g(w_{t-1})`, `w_t = (1/t) sum_{s<=t} D_s`.
    Averaged,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "omega")]
pub enum InitPolicy {
    /// The task's neutral prediction (zero motion for registration).
    ZeroMotion,
    Provided(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferenceConfig {
    pub max_iters: usize,
    pub step_size: f64,
    pub mode: InferenceMode,
    pub init: InitPolicy,
    /// Stop once `||w_t - w_{t-1}|| < stop_tol`; 0 runs all iterations.
    pub stop_tol: f64,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self { max_iters: 5, step_size: 0.1, mode: InferenceMode::LastIterate, init: InitPolicy::ZeroMotion, stop_tol: 0.0 }
    }
}

impl InferenceConfig {
    pub fn validate(&self) -> Result<(), InferenceError> {
        if self.max_iters == 0 {
            return Err(InferenceError::InvalidConfig("max_iters must be >= 1".into()));
        }
        if !(self.step_size > 0.0) || !self.step_size.is_finite() {
            return Err(InferenceError::InvalidConfig(format!("step_size {} must be > 0", self.step_size)));
        }
        if !(self.stop_tol >= 0.0) {
            return Err(InferenceError::InvalidConfig(format!("stop_tol {} must be >= 0", self.stop_tol)));
        }
        Ok(())
    }
}

/// One application of `g`: a gradient step on the prediction, mapped back
/// to the valid set. Also returns `h(omega_prev)`.
pub fn fixed_point_step_with_loss<T: Task>(
    task: &T,
    x: &T::Input,
    omega_prev: &PredictionVector,
    params: &ParamSet,
    eta: f64,
) -> Result<(PredictionVector, f64), InferenceError> {
    if !(eta > 0.0) {
        return Err(InferenceError::InvalidConfig(format!("step size {eta} must be > 0")));
    }
    let (loss, grads) = tasks::value_and_grad(task, x, params, omega_prev.values())?;
    let g = grads.omega.unwrap_or_else(|| vec![0.0; omega_prev.dim()]);
    if let Some(bad) = g.iter().position(|v| !v.is_finite()) {
        return Err(InferenceError::InvalidInput(format!("non-finite gradient at coordinate {bad}")));
    }
    let mut next: Vec<f64> = omega_prev.values().iter().zip(&g).map(|(w, d)| w - eta * d).collect();
    task.project(&mut next);
    Ok((PredictionVector::new(next, omega_prev.layout().clone())?, loss))
}

pub fn fixed_point_step<T: Task>(
    task: &T,
    x: &T::Input,
    omega_prev: &PredictionVector,
    params: &ParamSet,
    eta: f64,
) -> Result<PredictionVector, InferenceError> {
    fixed_point_step_with_loss(task, x, omega_prev, params, eta).map(|(w, _)| w)
}

fn initial<T: Task>(task: &T, cfg: &InferenceConfig) -> Result<PredictionVector, InferenceError> {
    let v = match &cfg.init {
        InitPolicy::ZeroMotion => task.neutral_omega(),
        InitPolicy::Provided(v) => v.clone(),
    };
    Ok(PredictionVector::new(v, task.layout())?)
}

/// Runs up to `max_iters` applications of `g`. The trajectory records the
/// initial prediction followed by every iterate, with the loss at each.
pub fn infer<T: Task>(
    task: &T,
    x: &T::Input,
    params: &ParamSet,
    cfg: &InferenceConfig,
) -> Result<(PredictionVector, Trajectory), InferenceError> {
    cfg.validate()?;
    let start = Instant::now();
    let w0 = initial(task, cfg)?;
    let layout = w0.layout().clone();
    let mut traj = Trajectory::default();
    let mut current = w0.clone();
    let mut mean = vec![0.0; w0.dim()];

    for t in 1..=cfg.max_iters {
        let (proposal, loss_prev) = match fixed_point_step_with_loss(task, x, &current, params, cfg.step_size) {
            Ok(r) => r,
            Err(e) => {
                return Err(InferenceError::Aborted { iter: t, reason: e.to_string(), partial: Box::new(traj) });
            }
        };
        // g evaluates h at the current iterate, so its loss comes for free
        if t == 1 {
            traj.push(w0.clone(), loss_prev, start.elapsed(), w0.values().to_vec());
        } else if let Some(l) = traj.losses.last_mut() {
            *l = loss_prev;
        }
        let next = match cfg.mode {
            InferenceMode::LastIterate => proposal.clone(),
            InferenceMode::Averaged => {
                // incremental mean: exact when every proposal is the same
                for (m, v) in mean.iter_mut().zip(proposal.values()) {
                    *m += (v - *m) / t as f64;
                }
                PredictionVector::new(mean.clone(), layout.clone())?
            }
        };
        let change = next.distance(&current);
        traj.push(next.clone(), f64::NAN, start.elapsed(), proposal.into_values());
        current = next;
        if change < cfg.stop_tol {
            break;
        }
    }
    let last = tasks::evaluate(task, x, params, current.values())
        .map_err(|e| InferenceError::Aborted { iter: traj.len(), reason: e.to_string(), partial: Box::new(traj.clone()) })?;
    if let Some(l) = traj.losses.last_mut() {
        *l = last;
    }
    if let Some(i) = traj.losses.iter().position(|l| !l.is_finite()) {
        return Err(InferenceError::Aborted { iter: i, reason: "non-finite loss".into(), partial: Box::new(traj) });
    }
    Ok((current, traj))
}
