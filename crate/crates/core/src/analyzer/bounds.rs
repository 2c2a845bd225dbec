use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::AnalyzerError;
use crate::autodiff::ParamSet;
use crate::convexify::{NeighborhoodSampler, PredictionVector};
use crate::tasks::{self, Task};

/// Near-optimality radius check. Bounds computed from a sampled L are
/// indicative only, since the sampled maximum under-estimates L.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub distance: f64,
    /// `2 L / mu`.
    pub bound_value: f64,
    pub gamma_observed: f64,
    /// `(L/mu) [1 + sqrt(1 + 2 mu gamma / L^2)]`.
    pub inflated_bound: f64,
    /// `distance <= inflated_bound` (which equals `bound_value` at gamma 0).
    pub satisfied: bool,
    pub indicative: bool,
}

pub fn check_lemma2(
    omega_pred: &PredictionVector,
    omega_star: &PredictionVector,
    l_hat: f64,
    mu: f64,
    gamma_observed: f64,
) -> Result<BoundCheck, AnalyzerError> {
    if !(mu > 0.0) {
        return Err(AnalyzerError::UndefinedBound(format!("mu = {mu}")));
    }
    if !(l_hat >= 0.0) || !(gamma_observed >= 0.0) {
        return Err(AnalyzerError::InvalidSpec(format!("L = {l_hat} and gamma = {gamma_observed} must be >= 0")));
    }
    if omega_pred.dim() != omega_star.dim() {
        return Err(AnalyzerError::InvalidSpec("prediction and ground truth differ in length".into()));
    }
    let distance = omega_pred.distance(omega_star);
    let bound_value = 2.0 * l_hat / mu;
    let inflated_bound = if gamma_observed == 0.0 {
        bound_value
    } else if l_hat == 0.0 {
        // limit of the inflated form as L -> 0
        (2.0 * gamma_observed / mu).sqrt()
    } else {
        (l_hat / mu) * (1.0 + (1.0 + 2.0 * mu * gamma_observed / (l_hat * l_hat)).sqrt())
    };
    Ok(BoundCheck {
        distance,
        bound_value,
        gamma_observed,
        inflated_bound,
        satisfied: distance <= inflated_bound,
        indicative: true,
    })
}

/// `max ||grad_w h||` over `w*` and `n_samples` neighbors: a lower
/// estimate of the local Lipschitz constant.
pub fn estimate_lipschitz<T: Task, R: Rng + ?Sized>(
    task: &T,
    x: &T::Input,
    params: &ParamSet,
    omega_star: &PredictionVector,
    sampler: &NeighborhoodSampler,
    n_samples: usize,
    rng: &mut R,
) -> Result<f64, AnalyzerError> {
    if n_samples == 0 {
        return Err(AnalyzerError::InvalidSpec("n_samples must be >= 1".into()));
    }
    let mut best = 0.0f64;
    let mut probe = |w: &[f64]| -> Result<(), AnalyzerError> {
        let (_, g) = tasks::value_and_grad(task, x, params, w)?;
        let n = g.omega.map_or(0.0, |g| g.iter().map(|v| v * v).sum::<f64>().sqrt());
        best = best.max(n);
        Ok(())
    };
    probe(omega_star.values())?;
    for _ in 0..n_samples {
        let w = sampler.sample(omega_star, rng)?;
        probe(w.values())?;
    }
    Ok(best)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AveragingCurve {
    pub t: Vec<usize>,
    /// Empirical `E ||mean_T||^2`.
    pub mse: Vec<f64>,
    /// `dim * std^2 / T` for uncorrelated errors.
    pub theory: Vec<f64>,
    /// Least-squares slope of `log mse` against `log T`; `None` when the
    /// curve is identically zero.
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
}

/// Least-squares fit `y = a + b x`, returning `(b, a)`.
pub fn fit_line(xs: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    let b = sxy / sxx;
    Some((b, my - b * mx))
}

/// Monte-Carlo MSE of running means of i.i.d. zero-mean errors.
pub fn simulate_averaging<R: Rng + ?Sized>(
    t_max: usize,
    error_std: f64,
    omega_dim: usize,
    n_trials: usize,
    rng: &mut R,
) -> Result<AveragingCurve, AnalyzerError> {
    if t_max == 0 || omega_dim == 0 || n_trials == 0 || !(error_std >= 0.0) {
        return Err(AnalyzerError::InvalidSpec("t_max, omega_dim, n_trials must be >= 1 and error_std >= 0".into()));
    }
    let mut acc = vec![0.0; t_max];
    let mut sum = vec![0.0; omega_dim];
    for _ in 0..n_trials {
        sum.iter_mut().for_each(|s| *s = 0.0);
        for (t, a) in acc.iter_mut().enumerate() {
            let mut sq = 0.0;
            for s in sum.iter_mut() {
                *s += error_std * rng.sample::<f64, _>(StandardNormal);
                let m = *s / (t + 1) as f64;
                sq += m * m;
            }
            *a += sq;
        }
    }
    let mse: Vec<f64> = acc.iter().map(|a| a / n_trials as f64).collect();
    let t: Vec<usize> = (1..=t_max).collect();
    let theory = t.iter().map(|&k| omega_dim as f64 * error_std * error_std / k as f64).collect();
    let fit = if mse.iter().all(|&m| m > 0.0) {
        let lx: Vec<f64> = t.iter().map(|&k| (k as f64).ln()).collect();
        let ly: Vec<f64> = mse.iter().map(|m| m.ln()).collect();
        fit_line(&lx, &ly)
    } else {
        None
    };
    Ok(AveragingCurve { t, mse, theory, slope: fit.map(|f| f.0), intercept: fit.map(|f| f.1) })
}
