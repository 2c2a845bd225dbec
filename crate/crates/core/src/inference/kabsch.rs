use nalgebra::{DMatrix, DVector};

use super::InferenceError;
use crate::tasks::{Points, RigidMotion};

/// Least-squares rigid motion `argmin sum ||R p_i + t - q_i||^2` over
/// proper rotations, via SVD of the cross-covariance with a determinant
/// fix so the result is never a reflection.
pub fn kabsch(p: &Points, q: &Points) -> Result<RigidMotion, InferenceError> {
    let d = p.dim();
    if q.dim() != d || q.len() != p.len() {
        return Err(InferenceError::InvalidInput(format!(
            "kabsch needs matched rows: {}x{} vs {}x{}",
            p.len(),
            d,
            q.len(),
            q.dim()
        )));
    }
    if p.len() < d {
        return Err(InferenceError::Degenerate(format!("{} points in {d} dimensions", p.len())));
    }
    let pc = DVector::from_vec(p.centroid());
    let qc = DVector::from_vec(q.centroid());
    let mut h = DMatrix::<f64>::zeros(d, d);
    for (a, b) in p.iter().zip(q.iter()) {
        for i in 0..d {
            for j in 0..d {
                h[(i, j)] += (a[i] - pc[i]) * (b[j] - qc[j]);
            }
        }
    }
    let svd = h.clone().svd(true, true);
    let s = &svd.singular_values;
    let smax = s.max();
    let rank = s.iter().filter(|&&v| v > 1e-12 * smax.max(1e-300)).count();
    // rank d-1 still fixes a proper rotation once reflections are excluded
    if smax <= 0.0 || rank + 1 < d {
        return Err(InferenceError::Degenerate(format!("cross-covariance rank {rank} < {}", d - 1)));
    }
    let u = svd.u.expect("requested");
    let v = svd.v_t.expect("requested").transpose();
    let mut fix = DMatrix::<f64>::identity(d, d);
    if (&v * u.transpose()).determinant() < 0.0 {
        fix[(d - 1, d - 1)] = -1.0;
    }
    let r = &v * fix * u.transpose();
    let t = &qc - &r * &pc;
    Ok(RigidMotion::from_matrix(&r, t.as_slice()))
}

/// Mean of `||R p_i + t - q_i||^2` over matched rows.
pub fn matched_objective(p: &Points, q: &Points, motion: &RigidMotion) -> f64 {
    let moved = crate::tasks::apply_transform(p, motion).expect("dims agree");
    let total: f64 = moved
        .iter()
        .zip(q.iter())
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>())
        .sum();
    total / p.len().max(1) as f64
}
