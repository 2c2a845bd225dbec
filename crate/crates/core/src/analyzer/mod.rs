//! Landscape geometry over predictions: slices, star-convexity audits,
//! Lipschitz estimates, near-optimality bounds and the averaging simulator.

mod audit;
mod bounds;
mod slice;

use thiserror::Error;

use crate::autodiff::AdError;
use crate::convexify::DlcError;

pub use audit::{audit_star_convexity, bisect_mu_hat, AuditConfig, AuditReport, ConditionStats, RayAudit};
pub use bounds::{check_lemma2, estimate_lipschitz, fit_line, simulate_averaging, AveragingCurve, BoundCheck};
pub use slice::{slice_landscape, CellFlag, SliceGrid, SliceSpec};

#[derive(Debug, Error)]
pub enum AnalyzerError {
    #[error("invalid analyzer input: {0}")]
    InvalidSpec(String),
    #[error("bound undefined: {0}")]
    UndefinedBound(String),
    #[error(transparent)]
    Autodiff(#[from] AdError),
    #[error(transparent)]
    Dlc(#[from] DlcError),
}
