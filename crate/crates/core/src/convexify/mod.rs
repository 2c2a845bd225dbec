//! Star-convexity constraints and the hinge-augmented training objective.

mod hinge;
mod objective;
mod prediction;
mod sampler;

use thiserror::Error;

use crate::autodiff::AdError;

pub use hinge::{hinge_con1, hinge_con2, hinge_con3, hinge_local_min, hinge_vars, HingeTriple, HingeVars};
pub use objective::{
    build_dlc_objective, dlc_builder, dlc_loss, dlc_loss_with_samples, DlcConfig, DlcOutput, DlcTerms, LAMBDA_PARAM,
    MU_PARAM,
};
pub use prediction::{interpolate, wrap_angle, Layout, PredictionVector, Segment, SegmentKind, PROBABILITY_TOL};
pub use sampler::{project_to_simplex, sample_neighborhood, NeighborhoodSampler, SamplerMode};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DlcError {
    #[error("prediction layout mismatch: expected {expected} values, got {got}")]
    LayoutMismatch { expected: usize, got: usize },
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("probability segment is not a distribution (sum {sum})")]
    NotAProbability { sum: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Autodiff(#[from] AdError),
}
