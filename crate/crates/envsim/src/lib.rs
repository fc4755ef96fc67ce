//! Toy reach environments for two planar arms: scene sampling, scripted
//! demonstrations, rendering, ground-truth chains, augmentation,
//! closed-loop evaluation and the dataset format.

pub mod augment;
pub mod dataset;
pub mod episode;
pub mod policy;
pub mod render;
pub mod rollout;
pub mod world;

use thiserror::Error;

pub use augment::{augment, AugmentParams};
pub use dataset::{dataset_load, dataset_save, load_episode, Dataset, Manifest};
pub use episode::{chain_points, generate_episode, generate_episodes, ground_truth_chains, horizon_window, Episode, EpisodeSpec, Step};
pub use policy::{scripted_policy, solve_ik};
pub use render::{render_image, render_views};
pub use rollout::{rollout_chained, rollout_eval, scripted_closure, ChainedTrace, PolicyInput, RolloutConfig, RolloutTrace};
pub use world::{generate_world, Color, RobotVariant, Target, Task, World};

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("invalid: {0}")]
    Invalid(String),
    #[error("sampling: {0}")]
    Sampling(String),
    #[error("inverse kinematics did not converge: {0}")]
    Ik(String),
    #[error("target at {distance:.3} m is beyond the arm's reach of {reach:.3} m")]
    Unreachable { distance: f64, reach: f64 },
    #[error(transparent)]
    Robot(#[from] vkchain_core::RobotError),
    #[error("dataset format version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("truncated: {0}")]
    Truncated(String),
    #[error("checksum mismatch in {file}: manifest {expected:08x}, file {found:08x}")]
    Checksum { file: String, expected: u32, found: u32 },
    #[error("format: {0}")]
    Format(String),
    #[error("i/o: {0}")]
    Io(String),
}
