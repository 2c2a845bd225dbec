//! Seeded synthetic registration pairs.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::geometry::{apply_transform, euler_len, Points, RigidMotion};
use super::registration::PointCloudPair;
use super::TaskError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShapeKind {
    /// Points on the surface of a random-aspect box (rectangle outline in 2D).
    BoxSurface,
    /// Points on an ellipsoidal shell (ellipse in 2D).
    SphereShell,
    /// Mixture of three anisotropic Gaussian blobs.
    BlendedGaussians,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 3] = [ShapeKind::BoxSurface, ShapeKind::SphereShell, ShapeKind::BlendedGaussians];
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegistrationDataConfig {
    pub n_pairs: usize,
    pub n_points: usize,
    pub dim: usize,
    /// Each Euler angle is drawn from `U(-angle_range, angle_range)` (radians).
    pub angle_range: f64,
    pub trans_range: f64,
    pub jitter_sigma: f64,
    pub partial_overlap_fraction: f64,
    pub seed: u64,
    /// `None` cycles through all shapes.
    pub shape: Option<ShapeKind>,
}

impl Default for RegistrationDataConfig {
    fn default() -> Self {
        Self {
            n_pairs: 200,
            n_points: 32,
            dim: 2,
            angle_range: std::f64::consts::FRAC_PI_4,
            trans_range: 0.5,
            jitter_sigma: 0.0,
            partial_overlap_fraction: 1.0,
            seed: 0,
            shape: None,
        }
    }
}

impl RegistrationDataConfig {
    pub fn validate(&self) -> Result<(), TaskError> {
        if self.dim != 2 && self.dim != 3 {
            return Err(TaskError::InvalidConfig(format!("dim {} (expected 2 or 3)", self.dim)));
        }
        if self.n_points < self.dim + 1 {
            return Err(TaskError::Degenerate(format!("{} points in {} dimensions", self.n_points, self.dim)));
        }
        for (name, v) in [("angle_range", self.angle_range), ("trans_range", self.trans_range), ("jitter_sigma", self.jitter_sigma)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(TaskError::InvalidConfig(format!("{name} = {v}")));
            }
        }
        let f = self.partial_overlap_fraction;
        if !(f > 0.0 && f <= 1.0) {
            return Err(TaskError::InvalidConfig(format!("partial_overlap_fraction {f} outside (0, 1]")));
        }
        if ((f * self.n_points as f64).ceil() as usize) < self.dim + 1 {
            return Err(TaskError::Degenerate("overlap leaves too few target points".into()));
        }
        Ok(())
    }
}

fn symmetric<R: Rng + ?Sized>(rng: &mut R, range: f64) -> f64 {
    if range == 0.0 {
        0.0
    } else {
        rng.random_range(-range..range)
    }
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

fn sample_shape<R: Rng + ?Sized>(kind: ShapeKind, n: usize, dim: usize, rng: &mut R) -> Vec<f64> {
    let mut out = Vec::with_capacity(n * dim);
    match kind {
        ShapeKind::BoxSurface => {
            let half: Vec<f64> = (0..dim).map(|_| rng.random_range(0.4..1.0)).collect();
            for _ in 0..n {
                let face = rng.random_range(0..dim);
                let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                for (j, h) in half.iter().enumerate() {
                    out.push(if j == face { sign * h } else { rng.random_range(-h..*h) });
                }
            }
        }
        ShapeKind::SphereShell => {
            let axes: Vec<f64> = (0..dim).map(|_| rng.random_range(0.5..1.0)).collect();
            for _ in 0..n {
                let v: Vec<f64> = (0..dim).map(|_| normal(rng)).collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
                out.extend(v.iter().zip(&axes).map(|(x, a)| a * x / norm));
            }
        }
        ShapeKind::BlendedGaussians => {
            let centers: Vec<Vec<f64>> = (0..3).map(|_| (0..dim).map(|_| rng.random_range(-0.7..0.7)).collect()).collect();
            let spreads: Vec<Vec<f64>> = (0..3).map(|_| (0..dim).map(|_| rng.random_range(0.1..0.3)).collect()).collect();
            for _ in 0..n {
                let k = rng.random_range(0..3);
                for j in 0..dim {
                    out.push(centers[k][j] + spreads[k][j] * normal(rng));
                }
            }
        }
    }
    out
}

/// Smallest eigenvalue of the sample covariance.
fn min_spread(points: &Points) -> f64 {
    let d = points.dim();
    let c = points.centroid();
    let mut cov = nalgebra::DMatrix::<f64>::zeros(d, d);
    for p in points.iter() {
        for i in 0..d {
            for j in 0..d {
                cov[(i, j)] += (p[i] - c[i]) * (p[j] - c[j]);
            }
        }
    }
    cov /= points.len() as f64;
    cov.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Keeps the `count` points with the largest projection on a random direction.
fn overlap_subset<R: Rng + ?Sized>(points: &Points, count: usize, rng: &mut R) -> Vec<usize> {
    let d = points.dim();
    let dir: Vec<f64> = (0..d).map(|_| normal(rng)).collect();
    let mut idx: Vec<usize> = (0..points.len()).collect();
    let proj = |i: usize| points.point(i).iter().zip(&dir).map(|(a, b)| a * b).sum::<f64>();
    idx.sort_by(|&a, &b| proj(b).total_cmp(&proj(a)).then(a.cmp(&b)));
    idx.truncate(count);
    idx.sort_unstable();
    idx
}

pub fn generate_pair<R: Rng + ?Sized>(cfg: &RegistrationDataConfig, kind: ShapeKind, rng: &mut R) -> Result<PointCloudPair, TaskError> {
    let d = cfg.dim;
    let source = loop {
        let pts = Points::new(d, sample_shape(kind, cfg.n_points, d, rng))?;
        if min_spread(&pts) > 1e-4 {
            break pts;
        }
    };
    let motion = RigidMotion {
        euler: (0..euler_len(d)).map(|_| symmetric(rng, cfg.angle_range)).collect(),
        translation: (0..d).map(|_| symmetric(rng, cfg.trans_range)).collect(),
    };
    let keep = (cfg.partial_overlap_fraction * cfg.n_points as f64).ceil() as usize;
    let mut correspondence =
        if keep >= cfg.n_points { (0..cfg.n_points).collect() } else { overlap_subset(&source, keep, rng) };
    correspondence.shuffle(rng);

    let moved = apply_transform(&source.select(&correspondence), &motion)?;
    let mut coords = moved.coords().to_vec();
    if cfg.jitter_sigma > 0.0 {
        coords.iter_mut().for_each(|v| *v += cfg.jitter_sigma * normal(rng));
    }
    let target = Points::new(d, coords)?;
    Ok(PointCloudPair { source, target, omega_star: motion.to_prediction(), correspondence })
}

/// Deterministic in `cfg.seed`.
pub fn generate_registration_dataset(cfg: &RegistrationDataConfig) -> Result<Vec<PointCloudPair>, TaskError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    (0..cfg.n_pairs)
        .map(|i| {
            let kind = cfg.shape.unwrap_or(ShapeKind::ALL[i % ShapeKind::ALL.len()]);
            generate_pair(cfg, kind, &mut rng)
        })
        .collect()
}
