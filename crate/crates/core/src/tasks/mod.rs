//! Concrete iterative-model tasks.
//!
//! A [`Task`] owns a prediction layout and a differentiable loss
//! `h_theta(omega) = loss(f(x; theta), omega)`. The loss is split into an
//! `encode` step that depends only on `(x, theta)` and a `loss_at` step per
//! prediction, so several predictions can share one encoding on a tape.

pub mod dataset;
pub mod geometry;
pub mod io;
pub mod oracles;
pub mod pointnet;
pub mod registration;
pub mod sequence;

use rand::Rng;
use thiserror::Error;

use crate::autodiff::{self, AdError, Bindings, Gradients, ParamSet, Tape, Var};
use crate::convexify::{DlcError, Layout, NeighborhoodSampler};

pub use dataset::{generate_registration_dataset, RegistrationDataConfig, ShapeKind};
pub use geometry::{apply_transform, rotation_matrix, Points, RigidMotion};
pub use oracles::{analytic_oracles, AnalyticOracle, OracleEntry, OracleKind, StarConvexity};
pub use registration::{registration_loss, PointCloudPair, RegistrationTask};
pub use sequence::{generate_sequence_dataset, sequence_loss, SequenceDataConfig, SequenceSample, SequenceTask};

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("degenerate configuration: {0}")]
    Degenerate(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed file {path}: {detail}")]
    Parse { path: String, detail: String },
    #[error(transparent)]
    Autodiff(#[from] AdError),
    #[error(transparent)]
    Dlc(#[from] DlcError),
}

pub trait Task {
    type Input;
    type Encoded;

    fn name(&self) -> String;

    fn layout(&self) -> Layout;

    fn omega_dim(&self) -> usize {
        self.layout().dim()
    }

    fn default_sampler(&self) -> NeighborhoodSampler;

    fn init_params<R: Rng + ?Sized>(&self, rng: &mut R) -> ParamSet;

    fn encode(&self, tape: &mut Tape, bindings: &Bindings, x: &Self::Input) -> Result<Self::Encoded, AdError>;

    fn loss_at(
        &self,
        tape: &mut Tape,
        bindings: &Bindings,
        x: &Self::Input,
        encoded: &Self::Encoded,
        omega: Var,
    ) -> Result<Var, AdError>;

    /// Starting prediction for test-time iteration ("zero motion").
    fn neutral_omega(&self) -> Vec<f64> {
        vec![0.0; self.omega_dim()]
    }

    /// Maps an iterate back onto the valid prediction set.
    fn project(&self, omega: &mut [f64]) {
        self.layout().wrap(omega);
    }
}

/// Builder evaluating `h_theta` at the bound prediction leaf.
pub fn loss_builder<'a, T: Task>(
    task: &'a T,
    x: &'a T::Input,
) -> impl Fn(&mut Tape, &Bindings) -> Result<Var, AdError> + 'a {
    move |tape, b| {
        let enc = task.encode(tape, b, x)?;
        task.loss_at(tape, b, x, &enc, b.omega())
    }
}

pub fn evaluate<T: Task>(task: &T, x: &T::Input, params: &ParamSet, omega: &[f64]) -> Result<f64, AdError> {
    autodiff::forward(params, omega, loss_builder(task, x)).map(|(v, _)| v)
}

/// Evaluates several predictions against one shared encoding.
pub fn evaluate_many<T: Task>(
    task: &T,
    x: &T::Input,
    params: &ParamSet,
    omegas: &[&[f64]],
) -> Result<Vec<f64>, AdError> {
    let first = omegas.first().map_or(&[][..], |w| *w);
    let (mut tape, b) = autodiff::bind(params, first)?;
    let enc = task.encode(&mut tape, &b, x)?;
    let mut out = Vec::with_capacity(omegas.len());
    for (i, w) in omegas.iter().enumerate() {
        let v = if i == 0 { b.omega() } else { tape.constant_vector(w)? };
        let l = task.loss_at(&mut tape, &b, x, &enc, v)?;
        out.push(tape.scalar(l));
    }
    Ok(out)
}

/// Loss and full gradient (parameters and prediction).
pub fn value_and_grad<T: Task>(
    task: &T,
    x: &T::Input,
    params: &ParamSet,
    omega: &[f64],
) -> Result<(f64, Gradients), AdError> {
    autodiff::value_and_grad(params, omega, loss_builder(task, x))
}
