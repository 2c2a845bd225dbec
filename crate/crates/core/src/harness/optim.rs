use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::autodiff::{Gradients, ParamSet};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", deny_unknown_fields)]
pub enum OptimizerConfig {
    Sgd {
        lr: f64,
        #[serde(default)]
        weight_decay: f64,
        #[serde(default)]
        momentum: f64,
    },
    /// Adam with coupled (L2) weight decay: `g += weight_decay * theta`.
    Adam {
        lr: f64,
        #[serde(default)]
        weight_decay: f64,
        #[serde(default = "default_betas")]
        betas: [f64; 2],
        #[serde(default = "default_eps")]
        eps: f64,
    },
}

fn default_betas() -> [f64; 2] {
    [0.9, 0.999]
}

fn default_eps() -> f64 {
    1e-8
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self::adam()
    }
}

impl OptimizerConfig {
    /// `Adam(lr = 1e-3, weight_decay = 1e-4)`.
    pub fn adam() -> Self {
        Self::Adam { lr: 1e-3, weight_decay: 1e-4, betas: default_betas(), eps: default_eps() }
    }

    /// Plain SGD without momentum or decay, as used for the recurrent task.
    pub fn sgd(lr: f64) -> Self {
        Self::Sgd { lr, weight_decay: 0.0, momentum: 0.0 }
    }

    pub fn lr(&self) -> f64 {
        match self {
            Self::Sgd { lr, .. } | Self::Adam { lr, .. } => *lr,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::InvalidConfig(m));
        let lr = self.lr();
        if !(lr > 0.0) || !lr.is_finite() {
            return bad(format!("learning rate {lr} must be > 0"));
        }
        match self {
            Self::Sgd { weight_decay, momentum, .. } => {
                if !(*weight_decay >= 0.0) || !(0.0..1.0).contains(momentum) {
                    return bad(format!("weight_decay {weight_decay} must be >= 0 and momentum {momentum} in [0, 1)"));
                }
            }
            Self::Adam { weight_decay, betas, eps, .. } => {
                if !(*weight_decay >= 0.0) || !(*eps > 0.0) {
                    return bad(format!("weight_decay {weight_decay} must be >= 0 and eps {eps} > 0"));
                }
                if betas.iter().any(|b| !(0.0..1.0).contains(b)) {
                    return bad(format!("betas {betas:?} must lie in [0, 1)"));
                }
            }
        }
        Ok(())
    }
}

/// Moment buffers, keyed like the parameter set they belong to.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub steps: u64,
    pub first: BTreeMap<String, Vec<f64>>,
    pub second: BTreeMap<String, Vec<f64>>,
}

impl OptimizerState {
    pub fn is_finite(&self) -> bool {
        self.first.values().chain(self.second.values()).flatten().all(|v| v.is_finite())
    }
}

/// Computes the updated parameters and optimizer state without touching
/// the inputs, so a non-finite result can be discarded.
pub fn apply_update(
    cfg: &OptimizerConfig,
    params: &ParamSet,
    state: &OptimizerState,
    grads: &Gradients,
) -> (ParamSet, OptimizerState) {
    let mut next = params.clone();
    let mut st = state.clone();
    st.steps += 1;
    let t = st.steps as f64;
    for (name, tensor) in params.iter() {
        let theta = tensor.data();
        let zero;
        let g = match grads.param(name) {
            Some(g) => g.data(),
            None => {
                zero = vec![0.0; theta.len()];
                &zero
            }
        };
        let out = next.data_mut(name).expect("cloned from params");
        match cfg {
            OptimizerConfig::Sgd { lr, weight_decay, momentum } => {
                let buf = st.first.entry(name.to_string()).or_insert_with(|| vec![0.0; theta.len()]);
                for i in 0..theta.len() {
                    let gi = g[i] + weight_decay * theta[i];
                    buf[i] = momentum * buf[i] + gi;
                    out[i] = theta[i] - lr * buf[i];
                }
            }
            OptimizerConfig::Adam { lr, weight_decay, betas, eps } => {
                let [b1, b2] = *betas;
                let m = st.first.entry(name.to_string()).or_insert_with(|| vec![0.0; theta.len()]);
                let v = st.second.entry(name.to_string()).or_insert_with(|| vec![0.0; theta.len()]);
                let c1 = 1.0 - b1.powf(t);
                let c2 = 1.0 - b2.powf(t);
                for i in 0..theta.len() {
                    let gi = g[i] + weight_decay * theta[i];
                    m[i] = b1 * m[i] + (1.0 - b1) * gi;
                    v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
                    out[i] = theta[i] - lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
                }
            }
        }
    }
    (next, st)
}
