//! Rigid point-cloud registration with a learned per-point feature map.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::geometry::{apply_transform, euler_len, rotation_on_tape, Points, RigidMotion};
use super::pointnet::PointNetLite;
use super::{Task, TaskError};
use crate::autodiff::{AdError, Bindings, ParamSet, Tape, Var};
use crate::convexify::{Layout, NeighborhoodSampler, PredictionVector};

/// A source/target pair with ground truth. Row `i` of `target` corresponds
/// to row `correspondence[i]` of `source`:
/// `target[i] = R source[correspondence[i]] + t` (+ jitter).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointCloudPair {
    pub source: Points,
    pub target: Points,
    pub omega_star: PredictionVector,
    pub correspondence: Vec<usize>,
}

impl PointCloudPair {
    pub fn dim(&self) -> usize {
        self.source.dim()
    }

    pub fn motion(&self) -> RigidMotion {
        RigidMotion::from_omega(self.omega_star.values(), self.dim()).expect("pair layout is rigid")
    }

    /// Source rows reordered to line up with the target rows.
    pub fn matched_source(&self) -> Points {
        self.source.select(&self.correspondence)
    }

    /// Largest deviation from `target[i] = R source[c(i)] + t`.
    pub fn exactness_residual(&self) -> f64 {
        let moved = apply_transform(&self.matched_source(), &self.motion()).expect("dims agree");
        moved.coords().iter().zip(self.target.coords()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    pub fn validate(&self) -> Result<(), TaskError> {
        let d = self.dim();
        if self.target.dim() != d {
            return Err(TaskError::Dimension(format!("source {d}-D, target {}-D", self.target.dim())));
        }
        if self.correspondence.len() != self.target.len() {
            return Err(TaskError::Dimension(format!(
                "{} correspondences for {} target points",
                self.correspondence.len(),
                self.target.len()
            )));
        }
        if let Some(&bad) = self.correspondence.iter().find(|&&c| c >= self.source.len()) {
            return Err(TaskError::Dimension(format!("correspondence index {bad} out of range")));
        }
        if self.omega_star.dim() != euler_len(d) + d {
            return Err(TaskError::Dimension(format!("omega* of length {}", self.omega_star.dim())));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegistrationTask {
    pub dim: usize,
    pub width: usize,
    pub feat_dim: usize,
    /// Replace the feature map by the identity (plain correspondence MSE).
    pub bypass: bool,
    /// Nearest-neighbor (one-sided Chamfer) matching instead of known
    /// correspondences, for partial overlap.
    pub chamfer: bool,
    pub sigma_angle: f64,
    pub sigma_translation: f64,
}

impl Default for RegistrationTask {
    fn default() -> Self {
        Self { dim: 2, width: 32, feat_dim: 16, bypass: false, chamfer: false, sigma_angle: 0.5, sigma_translation: 0.5 }
    }
}

impl RegistrationTask {
    pub fn new(dim: usize) -> Self {
        Self { dim, ..Self::default() }
    }

    pub fn network(&self) -> PointNetLite {
        PointNetLite::new(self.dim, self.width, self.feat_dim)
    }

    fn features(&self, tape: &mut Tape, bindings: &Bindings, points: Var) -> Result<Var, AdError> {
        if self.bypass {
            Ok(points)
        } else {
            self.network().apply(tape, bindings, points)
        }
    }
}

/// Per-pair tape state shared across predictions.
#[derive(Clone, Copy, Debug)]
pub struct RegistrationEncoding {
    /// Source points (matched rows, or all rows under Chamfer).
    pub source: Var,
    pub target_features: Var,
}

impl Task for RegistrationTask {
    type Input = PointCloudPair;
    type Encoded = RegistrationEncoding;

    fn name(&self) -> String {
        format!("registration-{}d", self.dim)
    }

    fn layout(&self) -> Layout {
        Layout::rigid(self.dim)
    }

    fn default_sampler(&self) -> NeighborhoodSampler {
        let mut sigmas = vec![self.sigma_angle];
        sigmas.push(self.sigma_translation);
        NeighborhoodSampler::gaussian(sigmas).expect("configured sigmas are positive")
    }

    fn init_params<R: Rng + ?Sized>(&self, rng: &mut R) -> ParamSet {
        let mut p = ParamSet::new();
        if !self.bypass {
            self.network().init_params(rng, &mut p).expect("fresh parameter set");
        }
        p
    }

    fn encode(&self, tape: &mut Tape, bindings: &Bindings, x: &PointCloudPair) -> Result<RegistrationEncoding, AdError> {
        let src = if self.chamfer { x.source.clone() } else { x.matched_source() };
        let source = tape.constant(src.to_tensor())?;
        let target = tape.constant(x.target.to_tensor())?;
        let target_features = self.features(tape, bindings, target)?;
        Ok(RegistrationEncoding { source, target_features })
    }

    fn loss_at(
        &self,
        tape: &mut Tape,
        bindings: &Bindings,
        _x: &PointCloudPair,
        enc: &RegistrationEncoding,
        omega: Var,
    ) -> Result<Var, AdError> {
        let (rt, t) = rotation_on_tape(tape, omega, self.dim)?;
        let moved = tape.matmul(enc.source, rt)?;
        let moved = tape.add_row(moved, t)?;
        let feat = self.features(tape, bindings, moved)?;
        if self.chamfer {
            let d = tape.pairwise_sq_dist(enc.target_features, feat)?;
            let nearest = tape.min_cols(d)?;
            tape.mean(nearest)
        } else {
            let n = tape.value(feat).as_matrix_dims().map_or(1, |(m, _)| m.max(1));
            let diff = tape.sub(feat, enc.target_features)?;
            let sq = tape.squared_norm(diff)?;
            tape.scale(sq, 1.0 / n as f64)
        }
    }
}

/// Builder for the registration loss at the bound prediction leaf.
pub fn registration_loss<'a>(
    task: &'a RegistrationTask,
    pair: &'a PointCloudPair,
) -> Result<impl Fn(&mut Tape, &Bindings) -> Result<Var, AdError> + 'a, TaskError> {
    pair.validate()?;
    if pair.dim() != task.dim {
        return Err(TaskError::Dimension(format!("{}-D task on {}-D pair", task.dim, pair.dim())));
    }
    Ok(super::loss_builder(task, pair))
}
