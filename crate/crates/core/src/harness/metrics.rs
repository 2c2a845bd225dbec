use serde::{Deserialize, Serialize};

use crate::convexify::wrap_angle;
use crate::tasks::RigidMotion;

/// Per-pair squared errors of one registration estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionError {
    /// Mean over the D*D rotation-matrix entries.
    pub se_r: f64,
    /// Mean over Euler components, in squared degrees; angle differences
    /// are wrapped into (-180, 180].
    pub se_euler_deg: f64,
    /// Mean over translation components.
    pub se_t: f64,
}

pub fn motion_error(pred: &RigidMotion, truth: &RigidMotion) -> MotionError {
    assert_eq!(pred.dim(), truth.dim(), "motions of different dimension");
    let (rp, rt) = (pred.rotation(), truth.rotation());
    let se_r = (&rp - &rt).iter().map(|v| v * v).sum::<f64>() / rp.len() as f64;
    let se_euler_deg = pred
        .euler
        .iter()
        .zip(&truth.euler)
        .map(|(a, b)| wrap_angle(a - b).to_degrees().powi(2))
        .sum::<f64>()
        / pred.euler.len() as f64;
    let se_t = pred.translation.iter().zip(&truth.translation).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
        / pred.translation.len() as f64;
    MotionError { se_r, se_euler_deg, se_t }
}

/// MSE(R), MSE(Euler, degrees) and MSE(T) over a test split.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegistrationMetrics {
    pub mse_r: f64,
    pub mse_euler_deg: f64,
    pub mse_t: f64,
    pub n: usize,
}

impl RegistrationMetrics {
    pub fn from_errors(errors: &[MotionError]) -> Self {
        let n = errors.len().max(1) as f64;
        Self {
            mse_r: errors.iter().map(|e| e.se_r).sum::<f64>() / n,
            mse_euler_deg: errors.iter().map(|e| e.se_euler_deg).sum::<f64>() / n,
            mse_t: errors.iter().map(|e| e.se_t).sum::<f64>() / n,
            n: errors.len(),
        }
    }
}

pub fn registration_metrics(preds: &[RigidMotion], truths: &[RigidMotion]) -> RegistrationMetrics {
    assert_eq!(preds.len(), truths.len(), "one prediction per ground truth");
    let errs: Vec<MotionError> = preds.iter().zip(truths).map(|(p, t)| motion_error(p, t)).collect();
    RegistrationMetrics::from_errors(&errs)
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    match v.len() {
        0 => f64::NAN,
        n if n % 2 == 1 => v[n / 2],
        n => 0.5 * (v[n / 2 - 1] + v[n / 2]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_motions_have_zero_error() {
        let m = RigidMotion { euler: vec![0.3, -0.2, 1.0], translation: vec![1.0, 2.0, 3.0] };
        assert_eq!(motion_error(&m, &m), MotionError { se_r: 0.0, se_euler_deg: 0.0, se_t: 0.0 });
    }

    #[test]
    fn euler_error_is_in_degrees_and_wrapped() {
        let a = RigidMotion { euler: vec![std::f64::consts::PI - 0.01], translation: vec![0.0, 0.0] };
        let b = RigidMotion { euler: vec![-std::f64::consts::PI + 0.01], translation: vec![0.0, 1.0] };
        let e = motion_error(&a, &b);
        assert!((e.se_euler_deg - (0.02f64).to_degrees().powi(2)).abs() < 1e-9);
        assert_eq!(e.se_t, 0.5);
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
