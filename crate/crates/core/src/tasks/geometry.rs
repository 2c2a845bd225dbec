//! Rigid motions and point sets in 2D and 3D.
//!
//! Euler angles are radians. In 3D they are stored `[z, y, x]` and compose
//! as `R = Rz(z) * Ry(y) * Rx(x)`; in 2D there is a single angle.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::autodiff::{AdError, Tape, Tensor, Var};
use crate::convexify::{wrap_angle, Layout, PredictionVector};

use super::TaskError;

/// `n x dim` points, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Points {
    dim: usize,
    coords: Vec<f64>,
}

impl Points {
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self, TaskError> {
        if dim == 0 || coords.len() % dim != 0 {
            return Err(TaskError::Dimension(format!("{} coordinates for dim {dim}", coords.len())));
        }
        Ok(Self { dim, coords })
    }

    pub fn from_rows(dim: usize, rows: &[Vec<f64>]) -> Result<Self, TaskError> {
        let mut coords = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            if r.len() != dim {
                return Err(TaskError::Dimension(format!("row of length {} for dim {dim}", r.len())));
            }
            coords.extend_from_slice(r);
        }
        Self::new(dim, coords)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks(self.dim)
    }

    /// Rows picked by `indices`.
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut coords = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            coords.extend_from_slice(self.point(i));
        }
        Self { dim: self.dim, coords }
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::matrix(self.len(), self.dim, self.coords.clone()).expect("consistent by construction")
    }

    pub fn centroid(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.dim];
        for p in self.iter() {
            for (ci, pi) in c.iter_mut().zip(p) {
                *ci += pi;
            }
        }
        let n = self.len().max(1) as f64;
        c.iter_mut().for_each(|v| *v /= n);
        c
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.len(), self.dim, &self.coords)
    }
}

/// Rotation (Euler angles) plus translation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RigidMotion {
    pub euler: Vec<f64>,
    pub translation: Vec<f64>,
}

pub fn euler_len(dim: usize) -> usize {
    if dim == 2 {
        1
    } else {
        3
    }
}

impl RigidMotion {
    pub fn identity(dim: usize) -> Self {
        Self { euler: vec![0.0; euler_len(dim)], translation: vec![0.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.translation.len()
    }

    pub fn rotation(&self) -> DMatrix<f64> {
        rotation_matrix(&self.euler)
    }

    /// Reads `[euler.., translation..]`.
    pub fn from_omega(omega: &[f64], dim: usize) -> Result<Self, TaskError> {
        let k = euler_len(dim);
        if omega.len() != k + dim {
            return Err(TaskError::Dimension(format!("omega of length {} for dim {dim}", omega.len())));
        }
        Ok(Self { euler: omega[..k].to_vec(), translation: omega[k..].to_vec() })
    }

    pub fn to_omega(&self) -> Vec<f64> {
        let mut v = self.euler.clone();
        v.extend_from_slice(&self.translation);
        v
    }

    pub fn to_prediction(&self) -> PredictionVector {
        let mut v = self.to_omega();
        let layout = Layout::rigid(self.dim());
        layout.wrap(&mut v);
        PredictionVector::new(v, layout).expect("rigid layouts carry no probability segments")
    }

    /// Motion with rotation matrix `r` and translation `t`.
    pub fn from_matrix(r: &DMatrix<f64>, t: &[f64]) -> Self {
        Self { euler: euler_from_matrix(r), translation: t.to_vec() }
    }

    pub fn inverse(&self) -> Self {
        let r = self.rotation();
        let rt = r.transpose();
        let t = nalgebra::DVector::from_column_slice(&self.translation);
        let ti = -(&rt * t);
        Self::from_matrix(&rt, ti.as_slice())
    }

    /// `self` applied after `first`.
    pub fn compose(&self, first: &Self) -> Self {
        let r = self.rotation() * first.rotation();
        let t1 = nalgebra::DVector::from_column_slice(&first.translation);
        let t = self.rotation() * t1 + nalgebra::DVector::from_column_slice(&self.translation);
        Self::from_matrix(&r, t.as_slice())
    }
}

/// Proper rotation from Euler angles: one angle in 2D, `[z, y, x]` in 3D.
pub fn rotation_matrix(euler: &[f64]) -> DMatrix<f64> {
    match euler.len() {
        1 => {
            let (s, c) = euler[0].sin_cos();
            DMatrix::from_row_slice(2, 2, &[c, -s, s, c])
        }
        3 => {
            let (sz, cz) = euler[0].sin_cos();
            let (sy, cy) = euler[1].sin_cos();
            let (sx, cx) = euler[2].sin_cos();
            let rz = DMatrix::from_row_slice(3, 3, &[cz, -sz, 0.0, sz, cz, 0.0, 0.0, 0.0, 1.0]);
            let ry = DMatrix::from_row_slice(3, 3, &[cy, 0.0, sy, 0.0, 1.0, 0.0, -sy, 0.0, cy]);
            let rx = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, cx, -sx, 0.0, sx, cx]);
            rz * ry * rx
        }
        n => panic!("rotation_matrix expects 1 or 3 angles, got {n}"),
    }
}

/// Inverse of [`rotation_matrix`], angles in `(-pi, pi]`.
pub fn euler_from_matrix(r: &DMatrix<f64>) -> Vec<f64> {
    if r.nrows() == 2 {
        return vec![wrap_angle(r[(1, 0)].atan2(r[(0, 0)]))];
    }
    let sy = (-r[(2, 0)]).clamp(-1.0, 1.0);
    let y = sy.asin();
    let (z, x) = if sy.abs() < 1.0 - 1e-12 {
        (r[(1, 0)].atan2(r[(0, 0)]), r[(2, 1)].atan2(r[(2, 2)]))
    } else {
        // gimbal lock: only z - x (or z + x) is determined
        ((-r[(0, 1)]).atan2(r[(1, 1)]), 0.0)
    };
    vec![wrap_angle(z), wrap_angle(y), wrap_angle(x)]
}

/// `y_i = R x_i + t`.
pub fn apply_transform(points: &Points, motion: &RigidMotion) -> Result<Points, TaskError> {
    let d = points.dim();
    if motion.dim() != d || motion.euler.len() != euler_len(d) {
        return Err(TaskError::Dimension(format!("{}-D motion on {d}-D points", motion.dim())));
    }
    let r = motion.rotation();
    let mut coords = Vec::with_capacity(points.coords.len());
    for p in points.iter() {
        for i in 0..d {
            let mut v = motion.translation[i];
            for j in 0..d {
                v += r[(i, j)] * p[j];
            }
            coords.push(v);
        }
    }
    Ok(Points { dim: d, coords })
}

/// Builds `R^T` (so that row points transform as `P R^T`) and the
/// translation row from a prediction node on the tape.
pub fn rotation_on_tape(tape: &mut Tape, omega: Var, dim: usize) -> Result<(Var, Var), AdError> {
    let k = euler_len(dim);
    let mut t = Vec::with_capacity(dim);
    for i in 0..dim {
        t.push(tape.select(omega, k + i)?);
    }
    let trans = tape.stack(&t, vec![1, dim])?;
    let rt = if dim == 2 {
        let a = tape.select(omega, 0)?;
        let c = tape.cos(a)?;
        let s = tape.sin(a)?;
        let ns = tape.neg(s)?;
        // R = [[c, -s], [s, c]]  =>  R^T = [[c, s], [-s, c]]
        tape.stack(&[c, s, ns, c], vec![2, 2])?
    } else {
        let zero = tape.constant_scalar(0.0)?;
        let one = tape.constant_scalar(1.0)?;
        let mut trig = Vec::with_capacity(3);
        for i in 0..3 {
            let a = tape.select(omega, i)?;
            let c = tape.cos(a)?;
            let s = tape.sin(a)?;
            let ns = tape.neg(s)?;
            trig.push((c, s, ns));
        }
        let (cz, sz, nsz) = trig[0];
        let (cy, sy, nsy) = trig[1];
        let (cx, sx, nsx) = trig[2];
        // transposes of the elementary rotations; R^T = Rx^T Ry^T Rz^T
        let rzt = tape.stack(&[cz, sz, zero, nsz, cz, zero, zero, zero, one], vec![3, 3])?;
        let ryt = tape.stack(&[cy, zero, nsy, zero, one, zero, sy, zero, cy], vec![3, 3])?;
        let rxt = tape.stack(&[one, zero, zero, zero, cx, sx, zero, nsx, cx], vec![3, 3])?;
        let m = tape.matmul(rxt, ryt)?;
        tape.matmul(m, rzt)?
    };
    Ok((rt, trans))
}
