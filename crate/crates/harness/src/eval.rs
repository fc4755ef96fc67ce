//! Closed-loop evaluation on freshly sampled worlds.

use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use vkchain_core::seed;
use vkchain_envsim::rollout::{rollout_chained, rollout_eval, PolicyInput, RolloutConfig};
use vkchain_envsim::world::sample_task;
use vkchain_envsim::{generate_world, solve_ik, Color, EnvError, RobotVariant, Task, World};
use vkchain_model::{ModelError, Observation, Vkt};

use crate::ckpt::{load_model, model_label};
use crate::data::Phase;
use crate::error::{HarnessError, Result};
use crate::metrics::MetricsRecord;

/// Sub-tasks per chained episode.
pub const CHAIN_LENGTH: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalSpec {
    pub variant: RobotVariant,
    pub episodes: usize,
    pub seed: u64,
    pub chained: bool,
    pub views: usize,
    pub image_size: u32,
    pub rollout: RolloutConfig,
}

/// Attempts at drawing a solvable evaluation world before giving up.
const MAX_WORLD_ATTEMPTS: u64 = 64;

/// Held-out world `k` and its tasks. The tags keep these disjoint from
/// training worlds. Like training episodes, worlds whose targets the IK
/// solver cannot reach in order from the start pose are redrawn.
pub fn eval_episode(spec: &EvalSpec, k: usize) -> Result<(World, Vec<Task>)> {
    let mut last = None;
    for attempt in 0..MAX_WORLD_ATTEMPTS {
        let index = k as u64 | (attempt << 32);
        let world = generate_world(seed::derive(spec.seed, "eval-world", index), spec.variant, spec.views, spec.image_size)?;
        let tasks = eval_tasks(spec, &world, index)?;
        let mut q = world.start.clone();
        let solved = tasks.iter().try_for_each(|task| {
            q = solve_ik(&world.robot, &q, task.target(&world).position)?;
            Ok::<_, EnvError>(())
        });
        match solved {
            Ok(()) => return Ok((world, tasks)),
            Err(e) => last = Some(e),
        }
    }
    Err(last.expect("at least one attempt").into())
}

fn eval_tasks(spec: &EvalSpec, world: &World, index: u64) -> Result<Vec<Task>> {
    if !spec.chained {
        return Ok(vec![sample_task(seed::derive(spec.seed, "eval-task", index), world)]);
    }
    let mut colors = Color::ALL.to_vec();
    colors.shuffle(&mut seed::rng(spec.seed, "eval-chain", index));
    Ok(colors.into_iter().take(CHAIN_LENGTH).map(|c| Task::for_color(world, c)).collect::<Result<_, _>>()?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub successes: usize,
    pub episodes: usize,
    /// Mean completed sub-tasks per episode, chained mode only.
    pub success_length: Option<f64>,
}

impl EvalResult {
    pub fn success_rate(&self) -> f64 {
        self.successes as f64 / self.episodes as f64
    }
}

/// Runs `make_policy(world)` on every evaluation world. In chained mode an
/// episode counts as a success when all sub-tasks are completed.
pub fn evaluate_policy<P, M>(spec: &EvalSpec, mut make_policy: M) -> Result<EvalResult>
where
    M: FnMut(&World) -> P,
    P: FnMut(&PolicyInput) -> Result<Vec<Vec<f64>>>,
{
    if spec.episodes == 0 {
        return Err(HarnessError::Validation("evaluation needs at least one episode".into()));
    }
    let mut successes = 0;
    let mut completed = 0;
    for k in 0..spec.episodes {
        let (world, tasks) = eval_episode(spec, k)?;
        let mut policy = make_policy(&world);
        if spec.chained {
            let trace = rollout_chained(&mut policy, &world, &tasks, spec.rollout)?;
            completed += trace.success_length;
            successes += usize::from(trace.success_length == tasks.len());
        } else {
            successes += usize::from(rollout_eval(&mut policy, &world, &tasks[0], &world.start, spec.rollout)?.success);
        }
    }
    Ok(EvalResult {
        successes,
        episodes: spec.episodes,
        success_length: spec.chained.then(|| completed as f64 / spec.episodes as f64),
    })
}

/// The model's first-step action for the rendered views.
pub fn model_policy<'m>(model: &'m Vkt<f32>, env: &'m str) -> impl FnMut(&PolicyInput) -> Result<Vec<Vec<f64>>> + 'm {
    move |input: &PolicyInput| Ok(model.act(&Observation { instruction_id: input.instruction_id, views: input.images.iter().collect() }, env)?)
}

/// Evaluates a loaded model on `spec.variant`.
pub fn evaluate_model(model: &Vkt<f32>, spec: &EvalSpec) -> Result<EvalResult> {
    let env = spec.variant.name();
    match model.heads().find(|(e, _)| *e == env) {
        None => return Err(ModelError::UnknownEnv(env.to_string()).into()),
        Some((_, dim)) if dim != spec.variant.action_dim() => {
            return Err(HarnessError::Validation(format!("head {env} predicts {dim} values, robot needs {}", spec.variant.action_dim())))
        }
        _ => {}
    }
    if model.config.image_size != spec.image_size as usize || spec.views > model.config.V_max {
        return Err(HarnessError::Validation(format!(
            "checkpoint expects {} px images and at most {} views, evaluation uses {} px and {}",
            model.config.image_size, model.config.V_max, spec.image_size, spec.views
        )));
    }
    evaluate_policy(spec, |_| model_policy(model, env))
}

/// Loads a checkpoint and evaluates it, producing one metrics record.
pub fn evaluate(ckpt: &Path, variant: RobotVariant, episodes: usize, seed_value: u64, chained: bool) -> Result<MetricsRecord> {
    let start = Instant::now();
    let (model, meta) = load_model(ckpt)?;
    let spec = EvalSpec {
        variant,
        episodes,
        seed: seed_value,
        chained,
        views: meta.views,
        image_size: model.config.image_size as u32,
        rollout: RolloutConfig::default(),
    };
    let r = evaluate_model(&model, &spec)?;
    Ok(MetricsRecord {
        step: meta.step,
        phase: Phase::Eval.name().into(),
        model: Some(model_label(meta.kind, &model.config)),
        setting: Some(meta.setting),
        env: Some(variant.name().into()),
        success_rate: [(variant.name().to_string(), r.success_rate())].into(),
        success_length: r.success_length,
        wall_clock: start.elapsed().as_secs_f64(),
        seed: seed_value,
        ..Default::default()
    })
}
