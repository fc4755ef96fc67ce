//! Reach worlds: a planar arm, three colored targets and fixed cameras.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use vkchain_core::camera::project_point;
use vkchain_core::{seed, CameraModel, JointConfig, KinematicChain};

use crate::EnvError;

/// Default square image side in pixels.
pub const IMAGE_SIZE: u32 = 64;
/// Every camera frames a disk of this radius (meters) around the base.
pub const FRAME_RADIUS: f64 = 1.35;
/// Minimum pairwise target separation in meters.
pub const MIN_SEPARATION: f64 = 0.1;
/// Targets lie in `[ANNULUS[0], ANNULUS[1]] * reach`.
pub const ANNULUS: [f64; 2] = [0.3, 0.95];
const MAX_ATTEMPTS: usize = 1000;
const FRAME_MARGIN_PX: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RobotVariant {
    Planar3,
    Planar4,
}

impl RobotVariant {
    pub const ALL: [RobotVariant; 2] = [RobotVariant::Planar3, RobotVariant::Planar4];

    pub fn name(self) -> &'static str {
        match self {
            RobotVariant::Planar3 => "planar3",
            RobotVariant::Planar4 => "planar4",
        }
    }

    pub fn link_lengths(self) -> &'static [f64] {
        match self {
            RobotVariant::Planar3 => &[0.5, 0.4, 0.3],
            RobotVariant::Planar4 => &[0.4, 0.35, 0.3, 0.25],
        }
    }

    pub fn dof(self) -> usize {
        self.link_lengths().len()
    }

    /// Joint deltas plus one reserved gripper channel.
    pub fn action_dim(self) -> usize {
        self.dof() + 1
    }

    /// The base joint turns freely through two revolutions; the others stop short of folding.
    pub fn limits(self) -> Vec<[f64; 2]> {
        (0..self.dof()).map(|i| if i == 0 { [-2.0 * PI, 2.0 * PI] } else { [-2.6, 2.6] }).collect()
    }

    pub fn chain(self) -> KinematicChain {
        KinematicChain::planar(self.name(), self.link_lengths(), &self.limits()).expect("built-in arm is valid")
    }

    pub fn reach(self) -> f64 {
        self.link_lengths().iter().sum()
    }
}

impl fmt::Display for RobotVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RobotVariant {
    type Err = EnvError;
    fn from_str(s: &str) -> Result<Self, EnvError> {
        RobotVariant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| EnvError::Invalid(format!("unknown robot '{s}', expected planar3 or planar4")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Color {
    Red,
    Green,
    Blue,
}

impl Color {
    pub const ALL: [Color; 3] = [Color::Red, Color::Green, Color::Blue];

    pub fn rgb(self) -> [u8; 3] {
        match self {
            Color::Red => [220, 40, 40],
            Color::Green => [40, 200, 60],
            Color::Blue => [50, 90, 230],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Color::Red => "red",
            Color::Green => "green",
            Color::Blue => "blue",
        }
    }

    /// The instruction id of "reach the <color> target".
    pub fn instruction_id(self) -> usize {
        self as usize
    }

    pub fn from_instruction(id: usize) -> Option<Color> {
        Color::ALL.get(id).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub position: [f64; 3],
    pub color: Color,
}

#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub variant: RobotVariant,
    pub robot: KinematicChain,
    pub targets: Vec<Target>,
    pub cameras: Vec<CameraModel>,
    /// Axis-aligned workspace box, `[min, max]`.
    pub bounds: [[f64; 3]; 2],
    /// Configuration the arm starts every task from.
    pub start: JointConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    pub instruction_id: usize,
    pub target_index: usize,
}

impl Task {
    pub fn for_color(world: &World, color: Color) -> Result<Task, EnvError> {
        let target_index = world
            .targets
            .iter()
            .position(|t| t.color == color)
            .ok_or_else(|| EnvError::Invalid(format!("world has no {} target", color.name())))?;
        Ok(Task { instruction_id: color.instruction_id(), target_index })
    }

    pub fn instruction(&self) -> String {
        let color = Color::from_instruction(self.instruction_id).map_or("unknown", Color::name);
        format!("reach the {color} target")
    }

    pub fn target<'w>(&self, world: &'w World) -> &'w Target {
        &world.targets[self.target_index]
    }
}

pub const CAMERA_NAMES: [&str; 4] = ["front", "left", "right", "top"];

/// The four canonical cameras in order front, left, right, top, each
/// zoomed so the disk of [`FRAME_RADIUS`] in the arm's plane fills the frame.
pub fn canonical_cameras(image_size: u32) -> Vec<CameraModel> {
    let poses: [([f64; 3], [f64; 3]); 4] = [
        ([0.0, -2.2, 2.6], [0.0, 0.0, 1.0]),
        ([-2.2, 0.0, 2.6], [0.0, 0.0, 1.0]),
        ([2.2, 0.0, 2.6], [0.0, 0.0, 1.0]),
        ([0.0, 0.0, 3.4], [0.0, 1.0, 0.0]),
    ];
    poses
        .iter()
        .map(|&(eye, up)| {
            let unit = CameraModel::look_at(eye, [0.0; 3], up, 1.0, image_size, image_size).expect("canonical camera");
            let extent = (0..64)
                .map(|k| {
                    let a = 2.0 * PI * k as f64 / 64.0;
                    let p = nalgebra::Point3::new(FRAME_RADIUS * a.cos(), FRAME_RADIUS * a.sin(), 0.0);
                    let px = project_point(&unit, &p).pixel().expect("frame disk is in front of every camera");
                    (px[0] - unit.cx).abs().max((px[1] - unit.cy).abs())
                })
                .fold(0.0, f64::max);
            let focal = (f64::from(image_size) / 2.0 - FRAME_MARGIN_PX) / extent;
            CameraModel::look_at(eye, [0.0; 3], up, focal, image_size, image_size).expect("canonical camera")
        })
        .collect()
}

/// Samples a world deterministically from `seed`.
pub fn generate_world(seed: u64, variant: RobotVariant, n_views: usize, image_size: u32) -> Result<World, EnvError> {
    if !(1..=4).contains(&n_views) {
        return Err(EnvError::Invalid(format!("n_views must be in 1..=4, got {n_views}")));
    }
    let reach = variant.reach();
    let (r0, r1) = (ANNULUS[0] * reach, ANNULUS[1] * reach);
    let mut rng = seed::rng(seed, "world", 0);

    let mut targets: Vec<Target> = Vec::with_capacity(Color::ALL.len());
    let mut attempts = 0;
    for color in Color::ALL {
        loop {
            attempts += 1;
            if attempts > MAX_ATTEMPTS {
                return Err(EnvError::Sampling(format!("no separated target layout within {MAX_ATTEMPTS} attempts")));
            }
            let r = rng.random_range(r0 * r0..=r1 * r1).sqrt();
            let a = rng.random_range(-PI..PI);
            let position = [r * a.cos(), r * a.sin(), 0.0];
            let separated = targets.iter().all(|t| (t.position[0] - position[0]).hypot(t.position[1] - position[1]) >= MIN_SEPARATION);
            if separated {
                targets.push(Target { position, color });
                break;
            }
        }
    }

    let start = (0..variant.dof()).map(|i| if i == 0 { rng.random_range(-PI..PI) } else { rng.random_range(-1.4..1.4) }).collect::<Vec<f64>>();
    let mut cameras = canonical_cameras(image_size);
    cameras.truncate(n_views);
    Ok(World {
        variant,
        robot: variant.chain(),
        targets,
        cameras,
        bounds: [[-reach, -reach, 0.0], [reach, reach, 0.0]],
        start: JointConfig(start),
    })
}

/// Draws the instruction for an episode of `world`.
pub fn sample_task(seed: u64, world: &World) -> Task {
    let color = Color::ALL[seed::rng(seed, "task", 0).random_range(0..Color::ALL.len())];
    Task::for_color(world, color).expect("every world has all colors")
}
