//! Damped least-squares inverse kinematics and the scripted demonstrator.

use nalgebra::{DMatrix, DVector, Matrix3, Point3, Vector3};
use vkchain_core::{end_effector, JointConfig, JointKind, KinematicChain};

use crate::world::{Task, World};
use crate::EnvError;

pub const IK_DAMPING: f64 = 1e-2;
pub const IK_MAX_ITERS: usize = 200;
pub const IK_TOLERANCE: f64 = 1e-4;

/// Position Jacobian of the end-effector, `3 x dof`.
pub fn position_jacobian(chain: &KinematicChain, q: &JointConfig) -> Result<DMatrix<f64>, EnvError> {
    let frames = chain.link_frames(q)?;
    let ee = end_effector(chain, q)?.coords;
    let mut j = DMatrix::zeros(3, chain.dof());
    let mut col = 0;
    for (joint, frame) in chain.joints().iter().zip(&frames) {
        let axis = frame.rotation * Vector3::from(joint.axis);
        let column = match joint.kind {
            JointKind::Revolute => axis.cross(&(ee - frame.translation.vector)),
            JointKind::Prismatic => axis,
            JointKind::Fixed => continue,
        };
        j.set_column(col, &column);
        col += 1;
    }
    Ok(j)
}

/// Solves for a configuration placing the end-effector at `target`,
/// starting from `q0`. Iterates `dq = J^T (J J^T + λ² I)^-1 e` with
/// clamping to the joint limits after every step.
pub fn solve_ik(chain: &KinematicChain, q0: &JointConfig, target: [f64; 3]) -> Result<JointConfig, EnvError> {
    let target = Point3::from(target);
    let mut q = chain.clamp(q0)?.0;
    for _ in 0..=IK_MAX_ITERS {
        let e = target - end_effector(chain, &q)?;
        if e.norm() < IK_TOLERANCE {
            return Ok(q);
        }
        let j = position_jacobian(chain, &q)?;
        let jjt = &j * j.transpose();
        let a = Matrix3::from_fn(|r, c| jjt[(r, c)]) + Matrix3::identity() * (IK_DAMPING * IK_DAMPING);
        let y = a.cholesky().ok_or_else(|| EnvError::Ik("damped normal matrix is not positive definite".into()))?.solve(&e);
        let dq = j.transpose() * DVector::from_column_slice(y.as_slice());
        let next: Vec<f64> = q.0.iter().zip(dq.iter()).map(|(a, b)| a + b).collect();
        q = chain.clamp(&JointConfig(next))?.0;
    }
    let residual = (target - end_effector(chain, &q)?).norm();
    Err(EnvError::Ik(format!("residual {residual:.3e} m after {IK_MAX_ITERS} iterations")))
}

/// `H` configurations linearly interpolated from `start` to an IK solution
/// for the task's target.
pub fn scripted_policy(world: &World, task: &Task, start: &JointConfig, h: usize) -> Result<Vec<JointConfig>, EnvError> {
    if h < 2 {
        return Err(EnvError::Invalid(format!("horizon must be at least 2, got {h}")));
    }
    let target = task.target(world).position;
    let dist = Vector3::from(target).norm();
    if dist > world.variant.reach() {
        return Err(EnvError::Unreachable { distance: dist, reach: world.variant.reach() });
    }
    let goal = solve_ik(&world.robot, start, target)?;
    Ok((0..h)
        .map(|k| {
            let s = k as f64 / (h - 1) as f64;
            JointConfig(start.0.iter().zip(&goal.0).map(|(a, b)| a + s * (b - a)).collect())
        })
        .collect())
}
