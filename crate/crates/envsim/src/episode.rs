//! Scripted demonstrations and their ground-truth chains.

use vkchain_core::camera::project_chain;
use vkchain_core::pointset::sample_polyline;
use vkchain_core::{forward_kinematics, seed, CameraModel, JointConfig, PointSet, RasterImage};

use crate::policy::scripted_policy;
use crate::render::render_views;
use crate::world::{generate_world, sample_task, RobotVariant, Task, World};
use crate::EnvError;

/// Retry budget per episode when a sampled world has no IK solution.
const MAX_EPISODE_ATTEMPTS: u64 = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub q: Vec<f32>,
    /// Joint deltas then the reserved gripper channel: `q[t+1] = q[t] + action[t][..dof]`.
    pub action: Vec<f32>,
    pub images: Vec<RasterImage>,
    /// Per view, image-normalized chain points.
    pub points: Vec<PointSet>,
}

impl Step {
    pub fn config(&self) -> JointConfig {
        JointConfig(self.q.iter().map(|&v| f64::from(v)).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    /// The world seed; `generate_world(seed, ..)` rebuilds the scene.
    pub seed: u64,
    pub task: Task,
    pub steps: Vec<Step>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EpisodeSpec {
    pub variant: RobotVariant,
    pub n_views: usize,
    pub horizon: usize,
    pub n_points: usize,
    pub image_size: u32,
}

impl EpisodeSpec {
    pub fn new(variant: RobotVariant, n_views: usize) -> Self {
        EpisodeSpec { variant, n_views, horizon: 24, n_points: 10, image_size: crate::world::IMAGE_SIZE }
    }

    pub fn world(&self, seed: u64) -> Result<World, EnvError> {
        generate_world(seed, self.variant, self.n_views, self.image_size)
    }
}

/// Uniform arc-length samples of one projected chain in normalized image
/// coordinates. A single point is the end-effector.
pub fn chain_points(cam: &CameraModel, world: &World, q: &JointConfig, n_points: usize) -> Result<PointSet, EnvError> {
    let line = project_chain(cam, &forward_kinematics(&world.robot, q)?);
    let px = match n_points {
        0 => return Err(EnvError::Invalid("n_points must be positive".into())),
        1 => PointSet::new(vec![*line.points.last().ok_or_else(|| EnvError::Invalid("empty chain".into()))?]),
        n => sample_polyline(&line.points, n).map_err(|e| EnvError::Invalid(e.to_string()))?,
    };
    Ok(px.normalized(f64::from(cam.width), f64::from(cam.height)))
}

/// For every view and step `t`, the `T` sets for steps `t..t+T`, repeating
/// the final configuration past the end of the trajectory.
pub fn ground_truth_chains(world: &World, trajectory: &[JointConfig], t_horizon: usize, n_points: usize) -> Result<Vec<Vec<Vec<PointSet>>>, EnvError> {
    if trajectory.is_empty() {
        return Err(EnvError::Invalid("empty trajectory".into()));
    }
    world
        .cameras
        .iter()
        .map(|cam| {
            let per_step = trajectory.iter().map(|q| chain_points(cam, world, q, n_points)).collect::<Result<Vec<_>, _>>()?;
            Ok((0..per_step.len()).map(|t| horizon_window(&per_step, t, t_horizon).into_iter().cloned().collect()).collect())
        })
        .collect()
}

/// `items[t..t+len]`, padded with the last item.
pub fn horizon_window<T>(items: &[T], t: usize, len: usize) -> Vec<&T> {
    let last = items.len() - 1;
    (t..t + len).map(|k| &items[k.min(last)]).collect()
}

fn round_set(p: &PointSet) -> PointSet {
    PointSet::new(p.points.iter().map(|q| [f64::from(q[0] as f32), f64::from(q[1] as f32)]).collect())
}

/// Builds the stored step sequence: joint values are held in f32 and every
/// next configuration is formed as `q + action`, so the relation is exact.
pub fn record(world: &World, plan: &[JointConfig], n_points: usize) -> Result<Vec<Step>, EnvError> {
    let dof = world.variant.dof();
    let mut q: Vec<f32> = plan[0].0.iter().map(|&v| v as f32).collect();
    let mut steps = Vec::with_capacity(plan.len());
    for t in 0..plan.len() {
        let mut action = vec![0.0f32; dof + 1];
        if let Some(next) = plan.get(t + 1) {
            for j in 0..dof {
                action[j] = next.0[j] as f32 - q[j];
            }
        }
        let config = JointConfig(q.iter().map(|&v| f64::from(v)).collect());
        let images = render_views(world, &config)?;
        let points = world.cameras.iter().map(|c| chain_points(c, world, &config, n_points).map(|p| round_set(&p))).collect::<Result<_, _>>()?;
        let next_q: Vec<f32> = q.iter().zip(&action).map(|(a, b)| a + b).collect();
        steps.push(Step { q, action, images, points });
        q = next_q;
    }
    Ok(steps)
}

/// One attempt at a demonstration from a specific world seed.
pub fn generate_episode(spec: &EpisodeSpec, world_seed: u64) -> Result<Episode, EnvError> {
    let world = spec.world(world_seed)?;
    let task = sample_task(world_seed, &world);
    let plan = scripted_policy(&world, &task, &world.start, spec.horizon)?;
    Ok(Episode { seed: world_seed, task, steps: record(&world, &plan, spec.n_points)? })
}

/// Episode `index` of a dataset, retrying with fresh world seeds when IK fails.
pub fn generate_indexed(spec: &EpisodeSpec, base_seed: u64, index: u64) -> Result<Episode, EnvError> {
    let mut last = None;
    for attempt in 0..MAX_EPISODE_ATTEMPTS {
        match generate_episode(spec, seed::derive(base_seed, "episode", index | (attempt << 32))) {
            Ok(ep) => return Ok(ep),
            Err(e @ (EnvError::Ik(_) | EnvError::Sampling(_))) => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last.expect("at least one attempt"))
}

pub fn generate_episodes(spec: &EpisodeSpec, base_seed: u64, n: usize) -> Result<Vec<Episode>, EnvError> {
    (0..n as u64).map(|i| generate_indexed(spec, base_seed, i)).collect()
}
