use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::AnalyzerError;
use crate::autodiff::ParamSet;
use crate::convexify::{hinge_con1, hinge_con2, hinge_con3, hinge_local_min, interpolate, NeighborhoodSampler, PredictionVector};
use crate::tasks::{self, Task};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditConfig {
    pub n_rays: usize,
    pub points_per_ray: usize,
    pub mu: f64,
    /// Hinge magnitudes above this count as violations.
    pub audit_tol: f64,
    pub mu_max: f64,
    pub mu_resolution: f64,
}

impl Default for AuditConfig {
    fn default() -> Self {
        Self { n_rays: 64, points_per_ray: 8, mu: 1.0, audit_tol: 1e-9, mu_max: 64.0, mu_resolution: 0.05 }
    }
}

impl AuditConfig {
    /// Tolerance suited to learned losses (float accumulation headroom).
    pub fn learned() -> Self {
        Self { audit_tol: 1e-6, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), AnalyzerError> {
        if self.n_rays == 0 {
            return Err(AnalyzerError::InvalidSpec("n_rays must be >= 1".into()));
        }
        if self.points_per_ray < 2 {
            return Err(AnalyzerError::InvalidSpec("points_per_ray must be >= 2".into()));
        }
        if !(self.audit_tol >= 0.0) || !(self.mu >= 0.0) {
            return Err(AnalyzerError::InvalidSpec(format!("audit_tol {} and mu {} must be >= 0", self.audit_tol, self.mu)));
        }
        if !(self.mu_max > 0.0) || !(self.mu_resolution > 0.0) {
            return Err(AnalyzerError::InvalidSpec("mu_max and mu_resolution must be > 0".into()));
        }
        Ok(())
    }

    /// Interior interpolation weights `j / (m + 1)`, `j = 1..=m`.
    pub fn lambdas(&self) -> Vec<f64> {
        let m = self.points_per_ray;
        (1..=m).map(|j| j as f64 / (m + 1) as f64).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionStats {
    /// Fraction of tested points with hinge above `audit_tol`.
    pub violation_rate: f64,
    pub max_hinge: f64,
    pub violations: usize,
    pub tested: usize,
}

impl ConditionStats {
    fn from_hinges(values: &[f64], tol: f64) -> Self {
        let violations = values.iter().filter(|&&h| h > tol).count();
        Self {
            violation_rate: if values.is_empty() { 0.0 } else { violations as f64 / values.len() as f64 },
            max_hinge: values.iter().cloned().fold(0.0, f64::max),
            violations,
            tested: values.len(),
        }
    }
}

/// Per-ray raw values, in ray order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RayAudit {
    pub index: usize,
    pub omega: Vec<f64>,
    pub h_omega: f64,
    pub dist_sq: f64,
    pub h_tilde: Vec<f64>,
    pub grad_norm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub n_rays: usize,
    pub points_per_ray: usize,
    pub mu: f64,
    pub audit_tol: f64,
    pub lambdas: Vec<f64>,
    pub h_star: f64,
    /// `h(w*) <= h(w~) + eps` at every `(w, l)`.
    pub con1: ConditionStats,
    /// Quadratic envelope at the ray endpoint; independent of `l`, so it is
    /// tested once per ray.
    pub con2: ConditionStats,
    pub con3: ConditionStats,
    /// Gradient-free local-min condition `h(w*) <= h(w~) - mu/2 ||w* - w~||^2`.
    pub lem1: ConditionStats,
    /// Largest `mu` whose con2 violation rate stays below 1%.
    pub mu_hat: f64,
    pub mu_hat_at_cap: bool,
    /// Sampled maximum gradient norm: an empirical lower estimate of the
    /// local Lipschitz constant.
    pub l_hat: f64,
    pub rays: Vec<RayAudit>,
}

impl AuditReport {
    pub fn total_violation_rate(&self) -> f64 {
        let v = self.con1.violations + self.con2.violations + self.con3.violations;
        let t = self.con1.tested + self.con2.tested + self.con3.tested;
        v as f64 / t.max(1) as f64
    }
}

fn con2_rate(rays: &[RayAudit], h_star: f64, mu: f64, tol: f64) -> f64 {
    let v = rays.iter().filter(|r| (h_star - r.h_omega + 0.5 * mu * r.dist_sq).max(0.0) > tol).count();
    v as f64 / rays.len().max(1) as f64
}

/// Largest `mu` in `[0, mu_max]` with con2 violation rate < 1%, bisected
/// to `resolution`. Returns `(mu_hat, at_cap)`.
pub fn bisect_mu_hat(rays: &[RayAudit], h_star: f64, tol: f64, mu_max: f64, resolution: f64) -> (f64, bool) {
    let ok = |mu: f64| con2_rate(rays, h_star, mu, tol) < 0.01;
    if ok(mu_max) {
        return (mu_max, true);
    }
    if !ok(0.0) {
        return (0.0, false);
    }
    let (mut lo, mut hi) = (0.0, mu_max);
    while hi - lo > resolution {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo, false)
}

/// Samples rays `w ~ sampler(w*)`, evaluates the three constraint hinges
/// and the gradient-free condition on an even grid of `l` in (0, 1).
pub fn audit_star_convexity<T, R>(
    task: &T,
    x: &T::Input,
    params: &ParamSet,
    omega_star: &PredictionVector,
    sampler: &NeighborhoodSampler,
    cfg: &AuditConfig,
    rng: &mut R,
) -> Result<AuditReport, AnalyzerError>
where
    T: Task + Sync,
    T::Input: Sync,
    R: Rng + ?Sized,
{
    cfg.validate()?;
    let lambdas = cfg.lambdas();
    let endpoints: Vec<PredictionVector> =
        (0..cfg.n_rays).map(|_| sampler.sample(omega_star, rng)).collect::<Result<_, _>>()?;
    let (h_star, grad_star) = tasks::value_and_grad(task, x, params, omega_star.values())?;
    let star_grad_norm = grad_star.omega.map_or(0.0, |g| g.iter().map(|v| v * v).sum::<f64>().sqrt());

    let rays: Vec<RayAudit> = endpoints
        .par_iter()
        .enumerate()
        .map(|(index, w)| -> Result<RayAudit, AnalyzerError> {
            let tildes: Vec<PredictionVector> =
                lambdas.iter().map(|&l| interpolate(omega_star, w, l)).collect::<Result<_, _>>()?;
            let mut omegas: Vec<&[f64]> = vec![w.values()];
            omegas.extend(tildes.iter().map(|t| t.values()));
            let values = tasks::evaluate_many(task, x, params, &omegas)?;
            let (_, g) = tasks::value_and_grad(task, x, params, w.values())?;
            let grad_norm = g.omega.map_or(0.0, |g| g.iter().map(|v| v * v).sum::<f64>().sqrt());
            Ok(RayAudit {
                index,
                omega: w.values().to_vec(),
                h_omega: values[0],
                dist_sq: omega_star.squared_distance(w),
                h_tilde: values[1..].to_vec(),
                grad_norm,
            })
        })
        .collect::<Result<_, _>>()?;

    let mut c1 = Vec::new();
    let mut c2 = Vec::new();
    let mut c3 = Vec::new();
    let mut l1 = Vec::new();
    for r in &rays {
        c2.push(hinge_con2(h_star, r.h_omega, r.dist_sq, cfg.mu)?);
        for (&l, &ht) in lambdas.iter().zip(&r.h_tilde) {
            c1.push(hinge_con1(h_star, ht)?);
            c3.push(hinge_con3(ht, h_star, r.h_omega, l, r.dist_sq, cfg.mu)?);
            l1.push(hinge_local_min(h_star, ht, l * l * r.dist_sq, cfg.mu)?);
        }
    }
    let (mu_hat, mu_hat_at_cap) = bisect_mu_hat(&rays, h_star, cfg.audit_tol, cfg.mu_max, cfg.mu_resolution);
    let l_hat = rays.iter().map(|r| r.grad_norm).fold(star_grad_norm, f64::max);
    Ok(AuditReport {
        n_rays: cfg.n_rays,
        points_per_ray: cfg.points_per_ray,
        mu: cfg.mu,
        audit_tol: cfg.audit_tol,
        lambdas,
        h_star,
        con1: ConditionStats::from_hinges(&c1, cfg.audit_tol),
        con2: ConditionStats::from_hinges(&c2, cfg.audit_tol),
        con3: ConditionStats::from_hinges(&c3, cfg.audit_tol),
        lem1: ConditionStats::from_hinges(&l1, cfg.audit_tol),
        mu_hat,
        mu_hat_at_cap,
        l_hat,
        rays,
    })
}
