//! Closed-form test functions with known star-convexity.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Task;
use crate::autodiff::{AdError, Bindings, ParamSet, Tape, Var};
use crate::convexify::{Layout, NeighborhoodSampler};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum OracleKind {
    /// `||w - c||^2`.
    Quadratic,
    /// `a ||w - c||^2`.
    ScaledQuadratic { a: f64 },
    /// `-||w - c||^2`.
    Concave,
    /// `((w_1 - c_1)^2 - 1)^2 + sum_{j>1} (w_j - c_j)^2`, minimizers `c +- e_1`.
    DoubleWell,
    /// `||d||^2 + d_1^2 d_2^2` with `d = w - c`: nonconvex (the Hessian is
    /// indefinite at `d = (2, 2)`) yet 2-strongly star-convex about `c`.
    CoupledQuartic,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum StarConvexity {
    Strong { mu: f64 },
    NotStarConvex,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalyticOracle {
    pub kind: OracleKind,
    pub center: Vec<f64>,
    pub sigma: f64,
}

impl AnalyticOracle {
    pub fn new(kind: OracleKind, center: Vec<f64>) -> Self {
        Self { kind, center, sigma: 1.0 }
    }

    /// Plain evaluation, independent of the tape.
    pub fn value(&self, w: &[f64]) -> f64 {
        let d: Vec<f64> = w.iter().zip(&self.center).map(|(a, b)| a - b).collect();
        let sq: f64 = d.iter().map(|v| v * v).sum();
        match self.kind {
            OracleKind::Quadratic => sq,
            OracleKind::ScaledQuadratic { a } => a * sq,
            OracleKind::Concave => -sq,
            OracleKind::DoubleWell => {
                let rest: f64 = d.iter().skip(1).map(|v| v * v).sum();
                (d[0] * d[0] - 1.0).powi(2) + rest
            }
            OracleKind::CoupledQuartic => sq + d[0] * d[0] * d.get(1).map_or(0.0, |v| v * v),
        }
    }
}

impl Task for AnalyticOracle {
    type Input = ();
    type Encoded = ();

    fn name(&self) -> String {
        match self.kind {
            OracleKind::Quadratic => "quadratic".into(),
            OracleKind::ScaledQuadratic { a } => format!("scaled-quadratic-{a}"),
            OracleKind::Concave => "concave".into(),
            OracleKind::DoubleWell => "double-well".into(),
            OracleKind::CoupledQuartic => "coupled-quartic".into(),
        }
    }

    fn layout(&self) -> Layout {
        Layout::free(self.center.len())
    }

    fn default_sampler(&self) -> NeighborhoodSampler {
        NeighborhoodSampler::gaussian(vec![self.sigma]).expect("sigma is positive")
    }

    fn init_params<R: Rng + ?Sized>(&self, _rng: &mut R) -> ParamSet {
        ParamSet::new()
    }

    fn encode(&self, _tape: &mut Tape, _b: &Bindings, _x: &()) -> Result<(), AdError> {
        Ok(())
    }

    fn loss_at(&self, tape: &mut Tape, _b: &Bindings, _x: &(), _e: &(), omega: Var) -> Result<Var, AdError> {
        let c = tape.constant_vector(&self.center)?;
        let d = tape.sub(omega, c)?;
        let sq = tape.squared_norm(d)?;
        match self.kind {
            OracleKind::Quadratic => Ok(sq),
            OracleKind::ScaledQuadratic { a } => tape.scale(sq, a),
            OracleKind::Concave => tape.neg(sq),
            OracleKind::DoubleWell => {
                let d0 = tape.select(d, 0)?;
                let d0sq = tape.mul(d0, d0)?;
                let one = tape.constant_scalar(1.0)?;
                let inner = tape.sub(d0sq, one)?;
                let well = tape.mul(inner, inner)?;
                let rest = tape.sub(sq, d0sq)?;
                tape.add(well, rest)
            }
            OracleKind::CoupledQuartic => {
                if self.center.len() < 2 {
                    return Ok(sq);
                }
                let d0 = tape.select(d, 0)?;
                let d1 = tape.select(d, 1)?;
                let p = tape.mul(d0, d1)?;
                let p2 = tape.mul(p, p)?;
                tape.add(sq, p2)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleEntry {
    pub name: String,
    pub oracle: AnalyticOracle,
    /// Point about which star-convexity is assessed.
    pub omega_star: Vec<f64>,
    pub truth: StarConvexity,
}

fn entry(kind: OracleKind, center: Vec<f64>, omega_star: Vec<f64>, truth: StarConvexity) -> OracleEntry {
    let oracle = AnalyticOracle::new(kind, center);
    OracleEntry { name: oracle.name(), oracle, omega_star, truth }
}

/// Fixed registry of 2-D test functions with their true star-convexity.
pub fn analytic_oracles() -> Vec<OracleEntry> {
    let c = vec![0.5, -0.25];
    vec![
        entry(OracleKind::Quadratic, c.clone(), c.clone(), StarConvexity::Strong { mu: 2.0 }),
        entry(OracleKind::ScaledQuadratic { a: 3.0 }, c.clone(), c.clone(), StarConvexity::Strong { mu: 6.0 }),
        entry(OracleKind::Concave, c.clone(), c.clone(), StarConvexity::NotStarConvex),
        entry(OracleKind::DoubleWell, vec![0.0, 0.0], vec![1.0, 0.0], StarConvexity::NotStarConvex),
        entry(OracleKind::CoupledQuartic, c.clone(), c, StarConvexity::Strong { mu: 2.0 }),
    ]
}

pub fn oracle_by_name(name: &str) -> Option<OracleEntry> {
    analytic_oracles().into_iter().find(|e| e.name == name)
}
