use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::DlcError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SegmentKind {
    /// Radians, wrapped into `(-pi, pi]`.
    Angle,
    Translation,
    /// Class probabilities: non-negative, summing to one.
    Probability,
    Free,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub kind: SegmentKind,
    pub start: usize,
    pub len: usize,
}

impl Segment {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.len
    }
}

/// Segment map of a task's prediction vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    segments: Vec<Segment>,
}

pub const PROBABILITY_TOL: f64 = 1e-9;

impl Layout {
    /// Builds contiguous segments from `(kind, len)` pairs.
    pub fn new(parts: &[(SegmentKind, usize)]) -> Self {
        let mut start = 0;
        let segments = parts
            .iter()
            .map(|&(kind, len)| {
                let s = Segment { kind, start, len };
                start += len;
                s
            })
            .collect();
        Self { segments }
    }

    pub fn free(dim: usize) -> Self {
        Self::new(&[(SegmentKind::Free, dim)])
    }

    /// Euler angles followed by translation for a `dim`-D rigid motion.
    pub fn rigid(dim: usize) -> Self {
        let angles = if dim == 2 { 1 } else { 3 };
        Self::new(&[(SegmentKind::Angle, angles), (SegmentKind::Translation, dim)])
    }

    pub fn probabilities(k: usize) -> Self {
        Self::new(&[(SegmentKind::Probability, k)])
    }

    pub fn dim(&self) -> usize {
        self.segments.last().map_or(0, |s| s.start + s.len)
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Wraps angle segments into `(-pi, pi]` in place.
    pub fn wrap(&self, values: &mut [f64]) {
        for seg in self.segments.iter().filter(|s| s.kind == SegmentKind::Angle) {
            for v in &mut values[seg.range()] {
                *v = wrap_angle(*v);
            }
        }
    }

    pub fn validate(&self, values: &[f64]) -> Result<(), DlcError> {
        if values.len() != self.dim() {
            return Err(DlcError::LayoutMismatch { expected: self.dim(), got: values.len() });
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(DlcError::NonFinite(format!("prediction entry {bad}")));
        }
        for seg in self.segments.iter().filter(|s| s.kind == SegmentKind::Probability) {
            let p = &values[seg.range()];
            let sum: f64 = p.iter().sum();
            if p.iter().any(|&v| v < 0.0) || (sum - 1.0).abs() > PROBABILITY_TOL {
                return Err(DlcError::NotAProbability { sum });
            }
        }
        Ok(())
    }
}

/// Maps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    if a > -PI && a <= PI {
        return a;
    }
    let two_pi = 2.0 * PI;
    let mut r = a.rem_euclid(two_pi);
    if r > PI {
        r -= two_pi;
    }
    if r <= -PI {
        r += two_pi;
    }
    r
}

/// A task prediction `omega` together with its segment layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionVector {
    values: Vec<f64>,
    layout: Layout,
}

impl PredictionVector {
    pub fn new(values: Vec<f64>, layout: Layout) -> Result<Self, DlcError> {
        layout.validate(&values)?;
        Ok(Self { values, layout })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn squared_distance(&self, other: &Self) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| (a - b).powi(2)).sum()
    }

    pub fn distance(&self, other: &Self) -> f64 {
        self.squared_distance(other).sqrt()
    }
}

/// `(1 - lambda) * omega_star + lambda * omega`, coordinate by coordinate in
/// the raw coordinate space.
pub fn interpolate(
    omega_star: &PredictionVector,
    omega: &PredictionVector,
    lambda: f64,
) -> Result<PredictionVector, DlcError> {
    if omega_star.layout != omega.layout {
        return Err(DlcError::LayoutMismatch { expected: omega_star.dim(), got: omega.dim() });
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(DlcError::InvalidConfig(format!("lambda {lambda} outside [0, 1]")));
    }
    let values = interpolate_raw(omega_star.values(), omega.values(), lambda);
    Ok(PredictionVector { values, layout: omega.layout.clone() })
}

fn interpolate_raw(omega_star: &[f64], omega: &[f64], lambda: f64) -> Vec<f64> {
    if lambda == 0.0 {
        return omega_star.to_vec();
    }
    if lambda == 1.0 {
        return omega.to_vec();
    }
    omega_star.iter().zip(omega).map(|(s, w)| (1.0 - lambda) * s + lambda * w).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn free(v: &[f64]) -> PredictionVector {
        PredictionVector::new(v.to_vec(), Layout::free(v.len())).unwrap()
    }

    #[test]
    fn interpolation_endpoints_and_midpoint() {
        let s = free(&[0.0, 0.0]);
        let w = free(&[2.0, 4.0]);
        assert_eq!(interpolate(&s, &w, 0.0).unwrap(), s);
        assert_eq!(interpolate(&s, &w, 1.0).unwrap(), w);
        assert_eq!(interpolate(&s, &w, 0.5).unwrap().values(), &[1.0, 2.0]);
    }

    #[test]
    fn interpolation_rejects_bad_inputs() {
        let s = free(&[0.0, 0.0]);
        assert!(interpolate(&s, &free(&[1.0]), 0.5).is_err());
        assert!(interpolate(&s, &free(&[1.0, 1.0]), 1.5).is_err());
    }

    #[test]
    fn probability_interpolation_stays_on_simplex() {
        let l = Layout::probabilities(3);
        let a = PredictionVector::new(vec![1.0, 0.0, 0.0], l.clone()).unwrap();
        let b = PredictionVector::new(vec![0.2, 0.3, 0.5], l).unwrap();
        let m = interpolate(&a, &b, 0.3).unwrap();
        assert!(m.layout().validate(m.values()).is_ok());
    }

    #[test]
    fn probability_layout_is_validated() {
        let l = Layout::probabilities(2);
        assert!(PredictionVector::new(vec![0.5, 0.6], l.clone()).is_err());
        assert!(PredictionVector::new(vec![1.2, -0.2], l.clone()).is_err());
        assert!(PredictionVector::new(vec![0.25, 0.75], l).is_ok());
    }

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-15);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert!((wrap_angle(7.0) - (7.0 - 2.0 * PI)).abs() < 1e-12);
        for k in -50..50 {
            let w = wrap_angle(k as f64 * 0.37);
            assert!(w > -PI && w <= PI);
        }
    }

    #[test]
    fn rigid_layout_dims() {
        assert_eq!(Layout::rigid(2).dim(), 3);
        assert_eq!(Layout::rigid(3).dim(), 6);
    }
}
