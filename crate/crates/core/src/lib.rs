//! Training learned iterative models whose test-time loss over predictions
//! is star-convex around each ground truth, plus the inference, audit and
//! experiment machinery used to check that property.

pub mod analyzer;
pub mod autodiff;
pub mod convexify;
pub mod harness;
pub mod inference;
pub mod tasks;

pub use autodiff::{AdError, Gradients, ParamSet, Tape, Tensor, Var};
pub use convexify::{dlc_loss, DlcConfig, DlcError, Layout, NeighborhoodSampler, PredictionVector};
pub use tasks::{PointCloudPair, RigidMotion, Task, TaskError};
