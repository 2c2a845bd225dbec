use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::kabsch::kabsch;
use super::trajectory::Trajectory;
use super::InferenceError;
use crate::convexify::PredictionVector;
use crate::tasks::{apply_transform, PointCloudPair, Points, RigidMotion};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IcpResult {
    pub motion: RigidMotion,
    /// Objective after each accepted iteration; entry 0 is at the initial motion.
    pub trajectory: Trajectory,
    pub iterations: usize,
    pub converged: bool,
    /// Set when a correspondence set was too degenerate to fit; the result
    /// is the best motion found before that.
    pub degenerate: bool,
}

impl IcpResult {
    pub fn objectives(&self) -> &[f64] {
        &self.trajectory.losses
    }
}

/// Index of the nearest target row for every moved source row, ties to
/// the lowest index, and the mean squared nearest distance.
pub fn nearest_neighbors(moved: &Points, target: &Points) -> (Vec<usize>, f64) {
    let mut idx = Vec::with_capacity(moved.len());
    let mut total = 0.0;
    for p in moved.iter() {
        let mut best = (0usize, f64::INFINITY);
        for (j, q) in target.iter().enumerate() {
            let d: f64 = p.iter().zip(q).map(|(a, b)| (a - b).powi(2)).sum();
            if d < best.1 {
                best = (j, d);
            }
        }
        idx.push(best.0);
        total += best.1;
    }
    (idx, total / moved.len().max(1) as f64)
}

/// Mean squared source-to-nearest-target distance under `motion`.
pub fn icp_objective(source: &Points, target: &Points, motion: &RigidMotion) -> f64 {
    let moved = apply_transform(source, motion).expect("dims agree");
    nearest_neighbors(&moved, target).1
}

/// Point-to-point ICP started from `omega_init`. A step that would raise
/// the objective is rejected, so the recorded objective never increases.
pub fn icp_refine(
    pair: &PointCloudPair,
    omega_init: &PredictionVector,
    max_iters: usize,
    tol: f64,
) -> Result<IcpResult, InferenceError> {
    if max_iters == 0 {
        return Err(InferenceError::InvalidConfig("max_iters must be >= 1".into()));
    }
    if !(tol >= 0.0) {
        return Err(InferenceError::InvalidConfig(format!("tol {tol} must be >= 0")));
    }
    let dim = pair.dim();
    let layout = omega_init.layout().clone();
    let mut motion = RigidMotion::from_omega(omega_init.values(), dim).map_err(|e| InferenceError::InvalidInput(e.to_string()))?;
    let start = Instant::now();
    let mut traj = Trajectory::default();
    let moved = apply_transform(&pair.source, &motion).expect("dims agree");
    let (mut matches, mut objective) = nearest_neighbors(&moved, &pair.target);
    traj.push(omega_init.clone(), objective, start.elapsed(), omega_init.values().to_vec());

    let mut converged = false;
    let mut degenerate = false;
    let mut iterations = 0;
    while iterations < max_iters {
        iterations += 1;
        let matched_target = pair.target.select(&matches);
        let candidate = match kabsch(&pair.source, &matched_target) {
            Ok(m) => m,
            Err(InferenceError::Degenerate(_)) => {
                degenerate = true;
                break;
            }
            Err(e) => return Err(e),
        };
        let moved = apply_transform(&pair.source, &candidate).expect("dims agree");
        let (next_matches, next_obj) = nearest_neighbors(&moved, &pair.target);
        if !(next_obj <= objective) {
            converged = true;
            break;
        }
        let decrease = objective - next_obj;
        motion = candidate;
        matches = next_matches;
        objective = next_obj;
        let w = motion.to_prediction();
        let values = w.values().to_vec();
        traj.push(PredictionVector::new(values.clone(), layout.clone())?, objective, start.elapsed(), values);
        if decrease <= tol {
            converged = true;
            break;
        }
    }
    Ok(IcpResult { motion, trajectory: traj, iterations, converged, degenerate })
}
