//! PointNet-lite: a shared per-point MLP whose outputs are concatenated with
//! a max-pooled global feature.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::autodiff::{AdError, Bindings, ParamSet, Tape, Tensor, Var};

pub const LAYERS: [(&str, &str); 3] = [("phi.w1", "phi.b1"), ("phi.w2", "phi.b2"), ("phi.w3", "phi.b3")];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointNetLite {
    pub in_dim: usize,
    pub width: usize,
    pub feat_dim: usize,
}

impl PointNetLite {
    pub fn new(in_dim: usize, width: usize, feat_dim: usize) -> Self {
        Self { in_dim, width, feat_dim }
    }

    /// Width of each output row: per-point plus global feature.
    pub fn out_dim(&self) -> usize {
        2 * self.feat_dim
    }

    fn dims(&self) -> [(usize, usize); 3] {
        [(self.in_dim, self.width), (self.width, self.width), (self.width, self.feat_dim)]
    }

    /// LeCun-normal weights, zero biases.
    pub fn init_params<R: Rng + ?Sized>(&self, rng: &mut R, params: &mut ParamSet) -> Result<(), AdError> {
        for ((w, b), (fan_in, fan_out)) in LAYERS.iter().zip(self.dims()) {
            let scale = (1.0 / fan_in as f64).sqrt();
            let data: Vec<f64> = (0..fan_in * fan_out).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
            params.insert(*w, Tensor::matrix(fan_in, fan_out, data)?)?;
            params.insert(*b, Tensor::vector(vec![0.0; fan_out]))?;
        }
        Ok(())
    }

    /// `points` is `[n, in_dim]`; returns `[n, 2 * feat_dim]`.
    pub fn apply(&self, tape: &mut Tape, bindings: &Bindings, points: Var) -> Result<Var, AdError> {
        let mut h = points;
        for (i, (w, b)) in LAYERS.iter().enumerate() {
            let z = tape.matmul(h, bindings.param(w)?)?;
            let z = tape.add_row(z, bindings.param(b)?)?;
            h = if i + 1 < LAYERS.len() { tape.tanh(z)? } else { z };
        }
        let global = tape.max_rows(h)?;
        tape.concat_broadcast(h, global)
    }
}
