//! Training samples drawn from one or more demonstration datasets, with
//! per-phase field access control.

use std::cell::Cell;
use std::path::PathBuf;

use rand::Rng;
use serde::{Deserialize, Serialize};
use vkchain_core::{seed, PointSet, RasterImage};
use vkchain_envsim::augment::{apply, AugmentParams};
use vkchain_envsim::{dataset_load, horizon_window, Dataset, RobotVariant};
use vkchain_model::{Mode, VktConfig};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    VktBackbone,
    HeadOnly,
    BctEndToEnd,
    Eval,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::VktBackbone => "vkt_backbone",
            Phase::HeadOnly => "head_only",
            Phase::BctEndToEnd => "bct_end_to_end",
            Phase::Eval => "eval",
        }
    }

    fn reads_actions(self) -> bool {
        matches!(self, Phase::HeadOnly | Phase::BctEndToEnd)
    }

    fn reads_points(self) -> bool {
        matches!(self, Phase::VktBackbone)
    }
}

pub fn load_datasets(dirs: &[PathBuf]) -> Result<Vec<Dataset>> {
    if dirs.is_empty() {
        return Err(HarnessError::Validation("no datasets given".into()));
    }
    let sets = dirs.iter().map(|d| dataset_load(d)).collect::<Result<Vec<_>, _>>()?;
    let first = &sets[0].manifest;
    for s in &sets[1..] {
        let m = &s.manifest;
        if m.image_size != first.image_size || m.n_views() != first.n_views() || m.N_points != first.N_points {
            return Err(HarnessError::Validation("datasets disagree on image size, view count or N_points".into()));
        }
    }
    Ok(sets)
}

/// Checks that a model config can consume these datasets.
pub fn check_compatible(config: &VktConfig, sets: &[Dataset]) -> Result<()> {
    let m = &sets[0].manifest;
    if config.image_size != m.image_size[0] as usize {
        return Err(HarnessError::Validation(format!("config image_size {} vs dataset {}", config.image_size, m.image_size[0])));
    }
    if m.n_views() > config.V_max {
        return Err(HarnessError::Validation(format!("dataset has {} views, config V_max is {}", m.n_views(), config.V_max)));
    }
    if config.mode == Mode::FullChain && config.N_points != m.N_points {
        return Err(HarnessError::Validation(format!("config N_points {} vs dataset {}", config.N_points, m.N_points)));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleRef {
    pub dataset: usize,
    pub episode: usize,
    pub step: usize,
}

/// One assembled training example.
pub struct Sample {
    pub env: RobotVariant,
    pub instruction_id: usize,
    pub images: Vec<RasterImage>,
    /// `[view][t]`, image-normalized.
    pub points: Option<Vec<Vec<PointSet>>>,
    /// `[t][action_dim]`.
    pub actions: Option<Vec<Vec<f32>>>,
}

/// Serves samples to one training phase. Requests for fields the phase
/// must not see fail and are counted.
pub struct Loader<'a> {
    sets: &'a [Dataset],
    phase: Phase,
    index: Vec<SampleRef>,
    violations: Cell<usize>,
}

impl<'a> Loader<'a> {
    pub fn new(sets: &'a [Dataset], phase: Phase) -> Self {
        let mut index = Vec::new();
        for (d, s) in sets.iter().enumerate() {
            for (e, ep) in s.episodes.iter().enumerate() {
                index.extend((0..ep.steps.len()).map(|t| SampleRef { dataset: d, episode: e, step: t }));
            }
        }
        Loader { sets, phase, index, violations: Cell::new(0) }
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn refs(&self) -> &[SampleRef] {
        &self.index
    }

    /// Number of refused field requests so far.
    pub fn violations(&self) -> usize {
        self.violations.get()
    }

    pub fn env(&self, r: SampleRef) -> RobotVariant {
        self.sets[r.dataset].manifest.robot_variant
    }

    pub fn instruction(&self, r: SampleRef) -> usize {
        self.sets[r.dataset].episodes[r.episode].task.instruction_id
    }

    pub fn images(&self, r: SampleRef) -> &'a [RasterImage] {
        &self.sets[r.dataset].episodes[r.episode].steps[r.step].images
    }

    fn refuse(&self, what: &str) -> HarnessError {
        self.violations.set(self.violations.get() + 1);
        HarnessError::Phase(format!("{} phase requested {what}", self.phase.name()))
    }

    /// Ground-truth sets for steps `t..t+T` per view; a single point is the end-effector.
    pub fn points(&self, r: SampleRef, horizon: usize, mode: Mode) -> Result<Vec<Vec<PointSet>>> {
        if !self.phase.reads_points() {
            return Err(self.refuse("point sets"));
        }
        let steps = &self.sets[r.dataset].episodes[r.episode].steps;
        let views = steps[0].points.len();
        Ok((0..views)
            .map(|v| {
                horizon_window(steps, r.step, horizon)
                    .into_iter()
                    .map(|s| match mode {
                        Mode::FullChain => s.points[v].clone(),
                        Mode::EndEffector => PointSet::new(vec![*s.points[v].points.last().expect("non-empty set")]),
                    })
                    .collect()
            })
            .collect())
    }

    /// Actions for steps `t..t+T`; past the end of the episode the final
    /// (zero) action repeats, matching the repeated final state.
    pub fn actions(&self, r: SampleRef, horizon: usize) -> Result<Vec<Vec<f32>>> {
        if !self.phase.reads_actions() {
            return Err(self.refuse("actions"));
        }
        let steps = &self.sets[r.dataset].episodes[r.episode].steps;
        Ok(horizon_window(steps, r.step, horizon).into_iter().map(|s| s.action.clone()).collect())
    }

    /// Draws `batch` samples for optimizer step `step`, deterministically.
    pub fn batch(&self, seed_value: u64, step: u64, batch: usize) -> Vec<SampleRef> {
        let mut rng = seed::rng(seed_value, "batch", step);
        (0..batch).map(|_| self.index[rng.random_range(0..self.index.len())]).collect()
    }

    /// Assembles a sample with the fields this phase reads, optionally
    /// augmenting each view independently.
    pub fn sample(&self, r: SampleRef, config: &VktConfig, augment_seed: Option<u64>) -> Result<Sample> {
        let images = self.images(r);
        let mut sample = Sample { env: self.env(r), instruction_id: self.instruction(r), images: images.to_vec(), points: None, actions: None };
        if self.phase.reads_points() {
            let mut pts = self.points(r, config.T, config.mode)?;
            if let Some(s) = augment_seed {
                for (v, view_sets) in pts.iter_mut().enumerate() {
                    let params = AugmentParams::sample(seed::derive(s, "view", v as u64));
                    let (img, sets) = apply(&images[v], view_sets, params);
                    sample.images[v] = img;
                    *view_sets = sets;
                }
            }
            sample.points = Some(pts);
        }
        if self.phase.reads_actions() {
            sample.actions = Some(self.actions(r, config.T)?);
        }
        Ok(sample)
    }
}
