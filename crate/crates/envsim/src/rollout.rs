//! Closed-loop evaluation with receding-horizon control.

use nalgebra::Point3;
use vkchain_core::{end_effector, JointConfig, RasterImage};

use crate::policy::scripted_policy;
use crate::render::render_views;
use crate::world::{Color, Task, World};
use crate::EnvError;

pub const R_SUCCESS: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RolloutConfig {
    pub max_steps: usize,
    pub r_success: f64,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        RolloutConfig { max_steps: 48, r_success: R_SUCCESS }
    }
}

/// What a policy sees at one control step.
pub struct PolicyInput<'a> {
    pub images: &'a [RasterImage],
    pub instruction_id: usize,
    /// Step index within the current task.
    pub step: usize,
    /// Proprioception; only privileged (scripted) policies read it.
    pub q: &'a JointConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutTrace {
    pub success: bool,
    /// Configurations visited, starting with the initial one.
    pub configs: Vec<JointConfig>,
    /// End-effector distance to the target at each visited configuration.
    pub distances: Vec<f64>,
}

impl RolloutTrace {
    pub fn final_config(&self) -> &JointConfig {
        self.configs.last().expect("trace holds the start")
    }
}

fn distance(world: &World, q: &JointConfig, target: [f64; 3]) -> Result<f64, EnvError> {
    Ok((end_effector(&world.robot, q)? - Point3::from(target)).norm())
}

/// Runs `policy` until the end-effector comes within `r_success` of the
/// target or `max_steps` actions have been applied. The policy returns a
/// sequence of actions; only the first is executed.
pub fn rollout_eval<E, P>(policy: &mut P, world: &World, task: &Task, start: &JointConfig, cfg: RolloutConfig) -> Result<RolloutTrace, E>
where
    E: From<EnvError>,
    P: FnMut(&PolicyInput) -> Result<Vec<Vec<f64>>, E>,
{
    if cfg.max_steps == 0 {
        return Err(EnvError::Invalid("max_steps must be at least 1".into()).into());
    }
    let target = task.target(world).position;
    let dof = world.variant.dof();
    let mut q = world.robot.clamp(start).map_err(EnvError::from)?.0;
    let mut trace = RolloutTrace { success: false, configs: vec![q.clone()], distances: vec![distance(world, &q, target)?] };
    for step in 0..cfg.max_steps {
        if trace.distances.last().is_some_and(|&d| d <= cfg.r_success) {
            trace.success = true;
            return Ok(trace);
        }
        let images = render_views(world, &q)?;
        let plan = policy(&PolicyInput { images: &images, instruction_id: task.instruction_id, step, q: &q })?;
        let action = plan.first().ok_or_else(|| EnvError::Invalid("policy returned no actions".into()))?;
        if action.len() < dof {
            return Err(EnvError::Invalid(format!("action has {} values, arm has {dof} joints", action.len())).into());
        }
        let next = JointConfig(q.0.iter().zip(action).map(|(a, b)| a + b).collect());
        q = world.robot.clamp(&next).map_err(EnvError::from)?.0;
        trace.distances.push(distance(world, &q, target)?);
        trace.configs.push(q.clone());
    }
    trace.success = trace.distances.last().is_some_and(|&d| d <= cfg.r_success);
    Ok(trace)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainedTrace {
    /// Consecutive sub-tasks completed before the first failure.
    pub success_length: usize,
    pub traces: Vec<RolloutTrace>,
}

/// Runs the tasks in order, each starting where the previous one stopped,
/// and stops at the first failure.
pub fn rollout_chained<E, P>(policy: &mut P, world: &World, tasks: &[Task], cfg: RolloutConfig) -> Result<ChainedTrace, E>
where
    E: From<EnvError>,
    P: FnMut(&PolicyInput) -> Result<Vec<Vec<f64>>, E>,
{
    let mut q = world.start.clone();
    let mut out = ChainedTrace { success_length: 0, traces: Vec::with_capacity(tasks.len()) };
    for task in tasks {
        let trace = rollout_eval(policy, world, task, &q, cfg)?;
        let ok = trace.success;
        q = trace.final_config().clone();
        out.traces.push(trace);
        if !ok {
            break;
        }
        out.success_length += 1;
    }
    Ok(out)
}

/// The demonstrator as a closed-loop policy: on the first step of a task
/// it plans `horizon` configurations from the current one and then replays
/// the deltas in order.
pub fn scripted_closure(world: &World, horizon: usize) -> impl FnMut(&PolicyInput) -> Result<Vec<Vec<f64>>, EnvError> + '_ {
    let mut plan: Vec<JointConfig> = Vec::new();
    move |input: &PolicyInput| {
        if input.step == 0 || plan.is_empty() {
            let color = Color::from_instruction(input.instruction_id)
                .ok_or_else(|| EnvError::Invalid(format!("instruction id {} out of vocabulary", input.instruction_id)))?;
            plan = scripted_policy(world, &Task::for_color(world, color)?, input.q, horizon)?;
        }
        let k = input.step.min(plan.len() - 1);
        let next = &plan[(k + 1).min(plan.len() - 1)];
        Ok(vec![next.0.iter().zip(&plan[k].0).map(|(a, b)| a - b).collect()])
    }
}
