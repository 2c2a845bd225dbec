//! Closed-form slacks of the three soft-margin star-convexity constraints.
//!
//! Each slack is the smallest non-negative value that makes its inequality
//! hold, i.e. `max(0, lhs - rhs)`.

use serde::{Deserialize, Serialize};

use super::prediction::PredictionVector;
use super::DlcError;
use crate::autodiff::{AdError, Tape, Var};

fn finite(values: &[f64]) -> Result<(), DlcError> {
    match values.iter().find(|v| !v.is_finite()) {
        Some(v) => Err(DlcError::NonFinite(format!("hinge input {v}"))),
        None => Ok(()),
    }
}

fn check_lambda_mu(lambda: Option<f64>, mu: f64, dist_sq: f64) -> Result<(), DlcError> {
    if let Some(l) = lambda {
        if !(0.0..=1.0).contains(&l) {
            return Err(DlcError::InvalidConfig(format!("lambda {l} outside [0, 1]")));
        }
    }
    if mu < 0.0 || dist_sq < 0.0 {
        return Err(DlcError::InvalidConfig(format!("mu {mu} and dist_sq {dist_sq} must be non-negative")));
    }
    Ok(())
}

/// Local-minimum slack: `h(omega*) <= h(omega~) + eps`.
pub fn hinge_con1(h_star: f64, h_tilde: f64) -> Result<f64, DlcError> {
    finite(&[h_star, h_tilde])?;
    Ok((h_star - h_tilde).max(0.0))
}

/// Quadratic lower-envelope slack:
/// `h(omega*) <= h(omega) - mu/2 ||omega* - omega||^2 + gamma`.
pub fn hinge_con2(h_star: f64, h_omega: f64, dist_sq: f64, mu: f64) -> Result<f64, DlcError> {
    finite(&[h_star, h_omega, dist_sq, mu])?;
    check_lambda_mu(None, mu, dist_sq)?;
    Ok((h_star - h_omega + 0.5 * mu * dist_sq).max(0.0))
}

/// Strong convexity along the segment from `omega*` to `omega`:
/// `h(omega~) <= (1-l) h(omega*) + l h(omega) - l(1-l) mu/2 ||omega* - omega||^2 + xi`.
pub fn hinge_con3(h_tilde: f64, h_star: f64, h_omega: f64, lambda: f64, dist_sq: f64, mu: f64) -> Result<f64, DlcError> {
    finite(&[h_tilde, h_star, h_omega, lambda, dist_sq, mu])?;
    check_lambda_mu(Some(lambda), mu, dist_sq)?;
    let rhs = (1.0 - lambda) * h_star + lambda * h_omega - 0.5 * lambda * (1.0 - lambda) * mu * dist_sq;
    Ok((h_tilde - rhs).max(0.0))
}

/// Gradient-free local-minimum condition posed at the interpolated point:
/// `h(omega*) <= h(omega~) - mu/2 ||omega* - omega~||^2`.
pub fn hinge_local_min(h_star: f64, h_tilde: f64, tilde_dist_sq: f64, mu: f64) -> Result<f64, DlcError> {
    finite(&[h_star, h_tilde, tilde_dist_sq, mu])?;
    check_lambda_mu(None, mu, tilde_dist_sq)?;
    Ok((h_star - h_tilde + 0.5 * mu * tilde_dist_sq).max(0.0))
}

/// The three slacks evaluated for one sampled prediction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HingeTriple {
    pub epsilon: f64,
    pub gamma: f64,
    pub xi: f64,
    pub omega_sample: PredictionVector,
    pub omega_tilde: PredictionVector,
}

impl HingeTriple {
    pub fn sum(&self) -> f64 {
        self.epsilon + self.gamma + self.xi
    }
}

/// Tape nodes of the three hinges for one sample.
#[derive(Clone, Copy, Debug)]
pub struct HingeVars {
    pub epsilon: Var,
    pub gamma: Var,
    pub xi: Var,
}

/// Builds the three hinges on the tape. `lambda` and `mu` are scalar nodes
/// so that they may be trainable.
pub fn hinge_vars(
    tape: &mut Tape,
    h_star: Var,
    h_omega: Var,
    h_tilde: Var,
    dist_sq: Var,
    lambda: Var,
    mu: Var,
) -> Result<HingeVars, AdError> {
    let d1 = tape.sub(h_star, h_tilde)?;
    let epsilon = tape.relu(d1)?;

    let half_mu_d = tape.mul(mu, dist_sq)?;
    let half_mu_d = tape.scale(half_mu_d, 0.5)?;
    let d2 = tape.sub(h_star, h_omega)?;
    let d2 = tape.add(d2, half_mu_d)?;
    let gamma = tape.relu(d2)?;

    let one = tape.constant_scalar(1.0)?;
    let one_minus = tape.sub(one, lambda)?;
    let a = tape.mul(one_minus, h_star)?;
    let b = tape.mul(lambda, h_omega)?;
    let curv = tape.mul(lambda, one_minus)?;
    let curv = tape.mul(curv, half_mu_d)?;
    let rhs = tape.add(a, b)?;
    let rhs = tape.sub(rhs, curv)?;
    let d3 = tape.sub(h_tilde, rhs)?;
    let xi = tape.relu(d3)?;
    Ok(HingeVars { epsilon, gamma, xi })
}
