//! Minimal dense reverse-mode automatic differentiation.
//!
//! Losses are written as builder closures over a fresh [`Tape`]; the tape
//! binds every tensor of a [`ParamSet`] and the prediction vector as leaves,
//! so one backward sweep yields gradients for both.

mod gradcheck;
mod params;
mod tape;
mod tensor;

use std::collections::BTreeMap;

use thiserror::Error;

pub use gradcheck::{check_gradient, Coordinate, CoordinateCheck, GradientReport};
pub use params::ParamSet;
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdError {
    #[error("shape mismatch in {op} (node {node:?}): {detail}")]
    ShapeMismatch { node: Option<usize>, op: &'static str, detail: String },
    #[error("non-finite value produced by {op} at node {node}")]
    NonFinite { node: usize, op: &'static str },
    #[error("loss node must be scalar, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },
    #[error("tape was already consumed by a backward pass")]
    TapeConsumed,
    #[error("tape has no loss node")]
    NoLoss,
    #[error("duplicate parameter name `{0}`")]
    DuplicateParam(String),
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Leaves bound on a tape for one evaluation.
#[derive(Clone, Debug)]
pub struct Bindings {
    params: BTreeMap<String, Var>,
    omega: Var,
}

impl Bindings {
    pub fn param(&self, name: &str) -> Result<Var, AdError> {
        self.params.get(name).copied().ok_or_else(|| AdError::UnknownParam(name.to_string()))
    }

    pub fn omega(&self) -> Var {
        self.omega
    }
}

/// Binds `params` and `omega` as leaves of a new tape.
pub fn bind(params: &ParamSet, omega: &[f64]) -> Result<(Tape, Bindings), AdError> {
    let mut tape = Tape::new();
    let mut vars = BTreeMap::new();
    for (name, t) in params.iter() {
        let v = tape.param_leaf(name, t.clone())?;
        vars.insert(name.to_string(), v);
    }
    let omega = tape.omega_leaf(omega)?;
    Ok((tape, Bindings { params: vars, omega }))
}

/// Runs `build` on a fresh tape and returns the scalar loss with the tape.
pub fn forward<F>(params: &ParamSet, omega: &[f64], build: F) -> Result<(f64, Tape), AdError>
where
    F: FnOnce(&mut Tape, &Bindings) -> Result<Var, AdError>,
{
    let (mut tape, bindings) = bind(params, omega)?;
    let loss = build(&mut tape, &bindings)?;
    tape.set_loss(loss)?;
    let value = tape.scalar(loss);
    Ok((value, tape))
}

/// Forward followed by backward.
pub fn value_and_grad<F>(params: &ParamSet, omega: &[f64], build: F) -> Result<(f64, Gradients), AdError>
where
    F: FnOnce(&mut Tape, &Bindings) -> Result<Var, AdError>,
{
    let (value, mut tape) = forward(params, omega, build)?;
    let grads = tape.backward()?;
    Ok((value, grads))
}
