//! Shared fixtures for the kernel benchmarks.

use dlc_core::autodiff::ParamSet;
use dlc_core::tasks::{generate_registration_dataset, RegistrationDataConfig, RegistrationTask, Task};
use dlc_core::PointCloudPair;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A default-sized 2-D registration model with a handful of seeded pairs.
pub struct Fixture {
    pub task: RegistrationTask,
    pub params: ParamSet,
    pub pairs: Vec<PointCloudPair>,
}

pub fn registration_fixture(dim: usize, n_points: usize) -> Fixture {
    let task = RegistrationTask::new(dim);
    let params = task.init_params(&mut ChaCha8Rng::seed_from_u64(0));
    let pairs = generate_registration_dataset(&RegistrationDataConfig { n_pairs: 8, n_points, dim, ..Default::default() })
        .expect("valid generator config");
    Fixture { task, params, pairs }
}
