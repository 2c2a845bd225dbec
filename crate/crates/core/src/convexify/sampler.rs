use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::prediction::{PredictionVector, SegmentKind};
use super::DlcError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerMode {
    /// `omega* + sigma * z` per coordinate, angles re-wrapped.
    GaussianAdditive,
    /// Probability segments become `softmax(omega* + sigma * z)`; other
    /// segments are perturbed additively.
    NoisyOneHotSoftmax,
}

/// Neighborhood of a ground-truth prediction from which training and audit
/// points are drawn.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeighborhoodSampler {
    /// One standard deviation per layout segment, in task units.
    pub sigmas: Vec<f64>,
    pub mode: SamplerMode,
}

impl NeighborhoodSampler {
    pub fn new(sigmas: Vec<f64>, mode: SamplerMode) -> Result<Self, DlcError> {
        let s = Self { sigmas, mode };
        s.validate()?;
        Ok(s)
    }

    pub fn gaussian(sigmas: Vec<f64>) -> Result<Self, DlcError> {
        Self::new(sigmas, SamplerMode::GaussianAdditive)
    }

    pub fn validate(&self) -> Result<(), DlcError> {
        if self.sigmas.is_empty() || self.sigmas.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(DlcError::InvalidConfig(format!("sampler sigmas must be positive: {:?}", self.sigmas)));
        }
        Ok(())
    }

    /// Draws one sample around `omega_star`.
    pub fn sample<R: Rng + ?Sized>(&self, omega_star: &PredictionVector, rng: &mut R) -> Result<PredictionVector, DlcError> {
        let layout = omega_star.layout();
        if layout.segments().len() != self.sigmas.len() {
            return Err(DlcError::InvalidConfig(format!(
                "sampler has {} sigmas for {} segments",
                self.sigmas.len(),
                layout.segments().len()
            )));
        }
        let mut out = omega_star.values().to_vec();
        for (seg, &sigma) in layout.segments().iter().zip(&self.sigmas) {
            let block = &mut out[seg.range()];
            for v in block.iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *v += sigma * z;
            }
            if seg.kind == SegmentKind::Probability {
                match self.mode {
                    SamplerMode::NoisyOneHotSoftmax => softmax_in_place(block),
                    SamplerMode::GaussianAdditive => project_to_simplex(block),
                }
            }
        }
        layout.wrap(&mut out);
        PredictionVector::new(out, layout.clone())
    }
}

/// Draws `n` samples; deterministic for a given rng state.
pub fn sample_neighborhood<R: Rng + ?Sized>(
    omega_star: &PredictionVector,
    sampler: &NeighborhoodSampler,
    n: usize,
    rng: &mut R,
) -> Result<Vec<PredictionVector>, DlcError> {
    if n == 0 {
        return Err(DlcError::InvalidConfig("sample count must be at least 1".into()));
    }
    sampler.validate()?;
    (0..n).map(|_| sampler.sample(omega_star, rng)).collect()
}

pub(crate) fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        z += *x;
    }
    for x in v.iter_mut() {
        *x /= z;
    }
}

/// Euclidean projection onto the probability simplex (sort-based).
pub fn project_to_simplex(v: &mut [f64]) {
    let mut u: Vec<f64> = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (i, &ui) in u.iter().enumerate() {
        cumsum += ui;
        let t = (cumsum - 1.0) / (i + 1) as f64;
        if ui - t > 0.0 {
            theta = t;
        }
    }
    for x in v.iter_mut() {
        *x = (*x - theta).max(0.0);
    }
    let s: f64 = v.iter().sum();
    if s > 0.0 {
        for x in v.iter_mut() {
            *x /= s;
        }
    }
}
