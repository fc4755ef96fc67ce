#![allow(dead_code)]

use std::path::{Path, PathBuf};

use vkchain::data::Phase;
use vkchain::train::TrainRecipe;
use vkchain_envsim::{dataset_save, generate_episodes, EpisodeSpec, RobotVariant};
use vkchain_model::{Mode, VktConfig};

pub const SIZE: u32 = 16;

pub fn spec(variant: RobotVariant) -> EpisodeSpec {
    EpisodeSpec { variant, n_views: 2, horizon: 6, n_points: 4, image_size: SIZE }
}

pub fn config() -> VktConfig {
    VktConfig { T: 3, D: 16, L: 1, n_heads: 2, N_points: 4, patch_size: 4, image_size: SIZE as usize, V_max: 2, vocab: 3, mode: Mode::FullChain, multi_view: true }
}

/// A small dataset under `root/<robot>`.
pub fn dataset(root: &Path, variant: RobotVariant, episodes: usize) -> PathBuf {
    let dir = root.join(variant.name());
    let eps = generate_episodes(&spec(variant), 5, episodes).unwrap();
    dataset_save(&dir, &spec(variant), &eps).unwrap();
    dir
}

pub fn recipe(phase: Phase, data: Vec<PathBuf>, steps: u64) -> TrainRecipe {
    let mut r = TrainRecipe::new(phase, data, 3);
    r.steps = steps;
    r.batch_size = 4;
    r.log_interval = 5;
    r
}
