//! On-disk point-cloud pairs: `<id>_src.xyz`, `<id>_tgt.xyz` (one point per
//! line, whitespace-separated coordinates) and a `<id>_gt.json` sidecar.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::dataset::RegistrationDataConfig;
use super::geometry::{Points, RigidMotion};
use super::registration::PointCloudPair;
use super::TaskError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthRecord {
    pub id: String,
    pub dim: usize,
    pub euler: Vec<f64>,
    pub translation: Vec<f64>,
    /// `target[i]` corresponds to `source[permutation[i]]`.
    pub permutation: Vec<usize>,
    pub generator: RegistrationDataConfig,
    pub seed: u64,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> TaskError + '_ {
    move |source| TaskError::Io { path: path.display().to_string(), source }
}

pub fn format_points(points: &Points) -> String {
    let mut s = String::new();
    for p in points.iter() {
        let row: Vec<String> = p.iter().map(|v| format!("{v:.16e}")).collect();
        let _ = writeln!(s, "{}", row.join(" "));
    }
    s
}

pub fn parse_points(text: &str, dim: usize, path: &Path) -> Result<Points, TaskError> {
    let mut coords = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row: Result<Vec<f64>, _> = line.split_whitespace().map(str::parse::<f64>).collect();
        let row = row.map_err(|e| TaskError::Parse { path: path.display().to_string(), detail: format!("line {}: {e}", lineno + 1) })?;
        if row.len() != dim {
            return Err(TaskError::Parse {
                path: path.display().to_string(),
                detail: format!("line {}: {} columns, expected {dim}", lineno + 1, row.len()),
            });
        }
        coords.extend(row);
    }
    Points::new(dim, coords)
}

fn paths(dir: &Path, id: &str) -> (PathBuf, PathBuf, PathBuf) {
    (dir.join(format!("{id}_src.xyz")), dir.join(format!("{id}_tgt.xyz")), dir.join(format!("{id}_gt.json")))
}

pub fn write_pair(dir: &Path, id: &str, pair: &PointCloudPair, generator: &RegistrationDataConfig) -> Result<(), TaskError> {
    let (src, tgt, gt) = paths(dir, id);
    fs::write(&src, format_points(&pair.source)).map_err(io_err(&src))?;
    fs::write(&tgt, format_points(&pair.target)).map_err(io_err(&tgt))?;
    let m = pair.motion();
    let record = GroundTruthRecord {
        id: id.to_string(),
        dim: pair.dim(),
        euler: m.euler,
        translation: m.translation,
        permutation: pair.correspondence.clone(),
        generator: generator.clone(),
        seed: generator.seed,
    };
    let json = serde_json::to_string_pretty(&record).expect("record serializes");
    fs::write(&gt, json + "\n").map_err(io_err(&gt))
}

pub fn read_pair(dir: &Path, id: &str) -> Result<(PointCloudPair, GroundTruthRecord), TaskError> {
    let (src, tgt, gt) = paths(dir, id);
    let text = fs::read_to_string(&gt).map_err(io_err(&gt))?;
    let record: GroundTruthRecord = serde_json::from_str(&text)
        .map_err(|e| TaskError::Parse { path: gt.display().to_string(), detail: e.to_string() })?;
    let source = parse_points(&fs::read_to_string(&src).map_err(io_err(&src))?, record.dim, &src)?;
    let target = parse_points(&fs::read_to_string(&tgt).map_err(io_err(&tgt))?, record.dim, &tgt)?;
    let motion = RigidMotion { euler: record.euler.clone(), translation: record.translation.clone() };
    let pair = PointCloudPair { source, target, omega_star: motion.to_prediction(), correspondence: record.permutation.clone() };
    pair.validate()?;
    Ok((pair, record))
}

pub fn pair_id(index: usize) -> String {
    format!("pair_{index:05}")
}

pub fn write_dataset(dir: &Path, pairs: &[PointCloudPair], generator: &RegistrationDataConfig) -> Result<Vec<String>, TaskError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut ids = Vec::with_capacity(pairs.len());
    for (i, pair) in pairs.iter().enumerate() {
        let id = pair_id(i);
        write_pair(dir, &id, pair, generator)?;
        ids.push(id);
    }
    Ok(ids)
}

/// Reads every pair in `dir`, ordered by id.
pub fn read_dataset(dir: &Path) -> Result<Vec<PointCloudPair>, TaskError> {
    let mut ids: Vec<String> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().to_str().and_then(|n| n.strip_suffix("_gt.json")).map(String::from))
        .collect();
    ids.sort();
    ids.iter().map(|id| read_pair(dir, id).map(|(p, _)| p)).collect()
}
