use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::AnalyzerError;
use crate::autodiff::ParamSet;
use crate::convexify::PredictionVector;
use crate::tasks::{self, Task};

/// Cells evaluated against one shared encoding.
const CHUNK: usize = 64;

/// A 2-D cut through prediction space around `center`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceSpec {
    pub dim_x: usize,
    pub dim_y: usize,
    pub half_width: [f64; 2],
    /// Grid points per axis; odd, so the center lies on the grid.
    pub resolution: usize,
    pub center: PredictionVector,
}

impl SliceSpec {
    pub fn validate(&self) -> Result<(), AnalyzerError> {
        let d = self.center.dim();
        if self.dim_x == self.dim_y || self.dim_x >= d || self.dim_y >= d {
            return Err(AnalyzerError::InvalidSpec(format!("slice axes ({}, {}) in {d} dimensions", self.dim_x, self.dim_y)));
        }
        if self.resolution < 3 || self.resolution % 2 == 0 {
            return Err(AnalyzerError::InvalidSpec(format!("resolution {} must be odd and >= 3", self.resolution)));
        }
        if self.half_width.iter().any(|h| !(*h > 0.0) || !h.is_finite()) {
            return Err(AnalyzerError::InvalidSpec(format!("half widths {:?} must be > 0", self.half_width)));
        }
        Ok(())
    }

    /// Offsets along one axis, symmetric with an exact zero in the middle.
    pub fn offsets(&self, axis: usize) -> Vec<f64> {
        let h = self.half_width[axis];
        let mid = (self.resolution / 2) as i64;
        (0..self.resolution as i64).map(|i| h * (i - mid) as f64 / mid as f64).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CellFlag {
    /// Strictly below every neighbor on the grid (edge cells compare
    /// against the neighbors they have).
    StrictLocalMin,
    /// No neighbor is lower, but at least one ties.
    NonStrictLocalMin,
    Regular,
    NonFinite,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceGrid {
    pub spec: SliceSpec,
    pub dx: Vec<f64>,
    pub dy: Vec<f64>,
    /// Row-major with `dy` as rows: `losses[iy * resolution + ix]`.
    pub losses: Vec<f64>,
    pub flags: Vec<CellFlag>,
    /// `(ix, iy)` of strict local minima.
    pub local_minima: Vec<(usize, usize)>,
}

impl SliceGrid {
    pub fn center_index(&self) -> (usize, usize) {
        let m = self.spec.resolution / 2;
        (m, m)
    }

    pub fn at(&self, ix: usize, iy: usize) -> f64 {
        self.losses[iy * self.spec.resolution + ix]
    }

    pub fn center_loss(&self) -> f64 {
        let (m, _) = self.center_index();
        self.at(m, m)
    }

    /// Whether the ground truth is the unique lowest cell.
    pub fn center_is_global_min(&self) -> bool {
        let c = self.center_loss();
        let (m, _) = self.center_index();
        let ci = m * self.spec.resolution + m;
        self.losses.iter().enumerate().all(|(i, &v)| i == ci || v > c)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("dx,dy,loss\n");
        let n = self.spec.resolution;
        for iy in 0..n {
            for ix in 0..n {
                let _ = writeln!(s, "{:.16e},{:.16e},{:.16e}", self.dx[ix], self.dy[iy], self.at(ix, iy));
            }
        }
        s
    }

    /// Heatmap with the ground truth circled and strict minima crossed.
    pub fn to_svg(&self) -> String {
        let n = self.spec.resolution;
        let cell = (480.0 / n as f64).max(1.0);
        let size = cell * n as f64;
        let finite: Vec<f64> = self.losses.iter().cloned().filter(|v| v.is_finite()).collect();
        let lo = finite.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = finite.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let span = if hi > lo { hi - lo } else { 1.0 };
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size:.0}" height="{size:.0}" viewBox="0 0 {size:.2} {size:.2}">"#
        );
        for iy in 0..n {
            for ix in 0..n {
                let v = self.at(ix, iy);
                let fill = if v.is_finite() { color((v - lo) / span) } else { "#ff00ff".to_string() };
                // flip vertically so +dy points up
                let y = (n - 1 - iy) as f64 * cell;
                let _ = writeln!(
                    s,
                    r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{fill}"/>"#,
                    ix as f64 * cell,
                    y,
                    cell + 0.01,
                    cell + 0.01
                );
            }
        }
        let px = |ix: usize, iy: usize| ((ix as f64 + 0.5) * cell, ((n - 1 - iy) as f64 + 0.5) * cell);
        for &(ix, iy) in &self.local_minima {
            let (x, y) = px(ix, iy);
            let r = (cell * 0.6).max(3.0);
            let _ = writeln!(
                s,
                r#"<path d="M{:.2} {:.2} L{:.2} {:.2} M{:.2} {:.2} L{:.2} {:.2}" stroke="white" stroke-width="2"/>"#,
                x - r,
                y - r,
                x + r,
                y + r,
                x - r,
                y + r,
                x + r,
                y - r
            );
        }
        let (m, _) = self.center_index();
        let (x, y) = px(m, m);
        let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="{:.2}" fill="none" stroke="red" stroke-width="2"/>"#, (cell * 0.8).max(4.0));
        s.push_str("</svg>\n");
        s
    }
}

// Piecewise-linear dark-blue -> teal -> yellow ramp.
fn color(t: f64) -> String {
    let stops = [(0.0, [68.0, 1.0, 84.0]), (0.5, [33.0, 145.0, 140.0]), (1.0, [253.0, 231.0, 37.0])];
    let t = t.clamp(0.0, 1.0);
    let (a, b) = if t <= 0.5 { (stops[0], stops[1]) } else { (stops[1], stops[2]) };
    let u = (t - a.0) / (b.0 - a.0);
    let c: Vec<u8> = (0..3).map(|i| (a.1[i] + u * (b.1[i] - a.1[i])).round() as u8).collect();
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

fn classify(losses: &[f64], n: usize) -> Vec<CellFlag> {
    let mut flags = Vec::with_capacity(n * n);
    for iy in 0..n {
        for ix in 0..n {
            let v = losses[iy * n + ix];
            if !v.is_finite() {
                flags.push(CellFlag::NonFinite);
                continue;
            }
            let mut strict = true;
            let mut min = true;
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let (jx, jy) = (ix as i64 + dx, iy as i64 + dy);
                    if jx < 0 || jy < 0 || jx >= n as i64 || jy >= n as i64 {
                        continue;
                    }
                    let w = losses[jy as usize * n + jx as usize];
                    if !w.is_finite() {
                        continue;
                    }
                    if w < v {
                        min = false;
                    } else if w == v {
                        strict = false;
                    }
                }
            }
            flags.push(match (min, strict) {
                (true, true) => CellFlag::StrictLocalMin,
                (true, false) => CellFlag::NonStrictLocalMin,
                _ => CellFlag::Regular,
            });
        }
    }
    flags
}

/// Evaluates the loss on the slice grid; one encoding of `x` is shared by
/// all cells.
pub fn slice_landscape<T>(
    task: &T,
    x: &T::Input,
    params: &ParamSet,
    spec: &SliceSpec,
) -> Result<SliceGrid, AnalyzerError>
where
    T: Task + Sync,
    T::Input: Sync,
{
    spec.validate()?;
    if spec.center.dim() != task.omega_dim() {
        return Err(AnalyzerError::InvalidSpec(format!("center of length {} for task dim {}", spec.center.dim(), task.omega_dim())));
    }
    let n = spec.resolution;
    let dx = spec.offsets(0);
    let dy = spec.offsets(1);
    let mut omegas = Vec::with_capacity(n * n);
    for &oy in &dy {
        for &ox in &dx {
            let mut w = spec.center.values().to_vec();
            w[spec.dim_x] += ox;
            w[spec.dim_y] += oy;
            omegas.push(w);
        }
    }
    let chunks: Vec<Vec<f64>> = omegas
        .par_chunks(CHUNK)
        .map(|chunk| {
            let refs: Vec<&[f64]> = chunk.iter().map(|w| w.as_slice()).collect();
            match tasks::evaluate_many(task, x, params, &refs) {
                Ok(v) => v,
                // a non-finite cell aborts the shared tape; fall back to
                // per-cell evaluation so the other cells are still reported
                Err(_) => refs.iter().map(|w| tasks::evaluate(task, x, params, w).unwrap_or(f64::NAN)).collect(),
            }
        })
        .collect();
    let losses: Vec<f64> = chunks.into_iter().flatten().collect();
    let flags = classify(&losses, n);
    let local_minima = flags
        .iter()
        .enumerate()
        .filter(|(_, f)| **f == CellFlag::StrictLocalMin)
        .map(|(i, _)| (i % n, i / n))
        .collect();
    Ok(SliceGrid { spec: spec.clone(), dx, dy, losses, flags, local_minima })
}
