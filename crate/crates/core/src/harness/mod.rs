//! Training loop, checkpoints, metrics and named experiments that write
//! deterministic artifact directories.

mod checkpoint;
mod experiment;
mod metrics;
mod optim;
mod train;

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::analyzer::AnalyzerError;
use crate::autodiff::AdError;
use crate::convexify::DlcError;
use crate::inference::InferenceError;
use crate::tasks::TaskError;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use experiment::{
    evaluate_registration, generate_data, grid_points, run_experiment, run_experiment_file, write_csv, AuditSettings,
    AveragingSettings, ExperimentConfig, ExperimentKind, GridSettings, IcpSettings, RegistrationEval, RegistrationSetup,
    SequenceSetup, SliceSettings, Summary, SweepSettings,
};
pub use metrics::{median, motion_error, registration_metrics, MotionError, RegistrationMetrics};
pub use optim::{apply_update, OptimizerConfig, OptimizerState};
pub use train::{
    resume, stream_rng, train, train_timed, BatchMode, RngStream, StepRecord, Supervised, TrainConfig, Trainer,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("unknown experiment `{0}`")]
    UnknownExperiment(String),
    #[error("training aborted at epoch {epoch}, step {step}: {reason}")]
    NumericAbort { epoch: usize, step: u64, reason: String, checkpoint: Box<Checkpoint>, saved: Option<PathBuf> },
    #[error("checkpoint version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Dlc(#[from] DlcError),
    #[error(transparent)]
    Autodiff(#[from] AdError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error(transparent)]
    Analyzer(#[from] AnalyzerError),
}

impl HarnessError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.display().to_string(), source }
    }

    /// Configuration problems, as opposed to numeric failures or I/O.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Self::InvalidConfig(_)
                | Self::UnknownExperiment(_)
                | Self::Dlc(DlcError::InvalidConfig(_))
                | Self::Task(TaskError::InvalidConfig(_) | TaskError::Degenerate(_) | TaskError::Parse { .. })
                | Self::Inference(InferenceError::InvalidConfig(_))
                | Self::Analyzer(AnalyzerError::InvalidSpec(_))
        )
    }

    /// A non-finite loss, gradient or iterate.
    pub fn is_numeric_abort(&self) -> bool {
        match self {
            Self::NumericAbort { .. } | Self::Inference(InferenceError::Aborted { .. }) => true,
            Self::Autodiff(e) | Self::Dlc(DlcError::Autodiff(e)) | Self::Task(TaskError::Autodiff(e)) => {
                matches!(e, AdError::NonFinite { .. })
            }
            Self::Dlc(DlcError::NonFinite(_)) => true,
            _ => false,
        }
    }
}
