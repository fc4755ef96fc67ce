//! Fully resolved commands. Each one is written to a `run.json` before it
//! executes, and `rerun` replays that file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use vkchain_envsim::{dataset_save, generate_episodes, EpisodeSpec, RobotVariant};
use vkchain_model::VktConfig;

use crate::error::{HarnessError, Result};
use crate::eval::evaluate;
use crate::metrics::MetricsWriter;
use crate::overlay::render_overlay;
use crate::train::{train_bct, train_head, train_vkt, TrainRecipe, METRICS_FILE};

pub const RUN_FILE: &str = "run.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Job {
    GenData { spec: EpisodeSpecRecord, episodes: usize, seed: u64, out: PathBuf },
    TrainVkt { config: VktConfig, recipe: TrainRecipe, out: PathBuf },
    TrainHead { backbone: PathBuf, env: String, recipe: TrainRecipe, out: PathBuf },
    TrainBct { config: VktConfig, recipe: TrainRecipe, out: PathBuf },
    Eval { ckpt: PathBuf, robot: RobotVariant, episodes: usize, seed: u64, chained: bool, metrics: PathBuf },
    Overlay { ckpt: PathBuf, episode: PathBuf, out: PathBuf, step: usize },
}

/// Serializable mirror of [`EpisodeSpec`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSpecRecord {
    pub robot: RobotVariant,
    pub views: usize,
    pub horizon: usize,
    pub n_points: usize,
    pub image_size: u32,
}

impl From<EpisodeSpecRecord> for EpisodeSpec {
    fn from(r: EpisodeSpecRecord) -> Self {
        EpisodeSpec { variant: r.robot, n_views: r.views, horizon: r.horizon, n_points: r.n_points, image_size: r.image_size }
    }
}

impl Job {
    /// Where this job's `run.json` goes.
    pub fn run_file(&self) -> PathBuf {
        match self {
            Job::GenData { out, .. } | Job::TrainVkt { out, .. } | Job::TrainHead { out, .. } | Job::TrainBct { out, .. } => out.join(RUN_FILE),
            Job::Eval { ckpt, robot, seed, chained, .. } => {
                ckpt.join(format!("run.eval.{}.{seed}{}.json", robot.name(), if *chained { ".chained" } else { "" }))
            }
            Job::Overlay { out, .. } => out.with_extension("run.json"),
        }
    }

    /// The same job writing to `out` instead: an output directory for
    /// generation and training, a metrics file for evaluation and an SVG
    /// path for overlays.
    pub fn redirect(mut self, to: &Path) -> Job {
        match &mut self {
            Job::GenData { out, .. } | Job::TrainVkt { out, .. } | Job::TrainHead { out, .. } | Job::TrainBct { out, .. } | Job::Overlay { out, .. } => {
                *out = to.to_path_buf()
            }
            Job::Eval { metrics, .. } => *metrics = to.to_path_buf(),
        }
        self
    }

    fn write_run_file(&self) -> Result<()> {
        let path = self.run_file();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        }
        let text = serde_json::to_string_pretty(self).expect("job serializes");
        std::fs::write(&path, text).map_err(|e| HarnessError::io(&path, e))
    }

    /// Records the job, then runs it. Returns a short human-readable summary.
    pub fn execute(&self) -> Result<String> {
        self.write_run_file()?;
        match self {
            Job::GenData { spec, episodes, seed, out } => {
                let eps = generate_episodes(&(*spec).into(), *seed, *episodes)?;
                let m = dataset_save(out, &(*spec).into(), &eps)?;
                Ok(format!("wrote {} {} episodes to {}", m.episodes.len(), spec.robot, out.display()))
            }
            Job::TrainVkt { config, recipe, out } => {
                let o = train_vkt(recipe, config, out)?;
                Ok(format!("vkt backbone: {} steps, final loss {:.5}", o.losses.len(), o.final_loss(100)))
            }
            Job::TrainHead { backbone, env, recipe, out } => {
                let o = train_head(recipe, backbone, env, out)?;
                Ok(format!("{env} head: {} steps, final loss {:.6}", o.losses.len(), o.final_loss(100)))
            }
            Job::TrainBct { config, recipe, out } => {
                let o = train_bct(recipe, config, out)?;
                Ok(format!("bct: {} steps, final loss {:.6}", o.losses.len(), o.final_loss(100)))
            }
            Job::Eval { ckpt, robot, episodes, seed, chained, metrics } => {
                let rec = evaluate(ckpt, *robot, *episodes, *seed, *chained)?;
                MetricsWriter::append(metrics)?.write(&rec)?;
                Ok(serde_json::to_string(&rec).expect("record serializes"))
            }
            Job::Overlay { ckpt, episode, out, step } => {
                render_overlay(ckpt, episode, out, *step)?;
                Ok(format!("wrote {}", out.display()))
            }
        }
    }
}

pub fn load_job(path: &Path) -> Result<Job> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::Validation(format!("{}: {e}", path.display())))
}

/// Default metrics destination of an evaluation.
pub fn default_eval_metrics(ckpt: &Path) -> PathBuf {
    ckpt.join(METRICS_FILE)
}
