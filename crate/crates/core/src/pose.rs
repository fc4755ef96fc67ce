//! Rigid transforms written as translation + roll-pitch-yaw.

use nalgebra::{Isometry3, Point3, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

/// A rigid transform as it appears in documents: `xyz` in meters and
/// `rpy` in radians (fixed-axis X, then Y, then Z).
///
/// The rotation is held internally as a unit quaternion; equality compares
/// the document fields so that serialization round trips are exact.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(from = "PoseFields", into = "PoseFields")]
pub struct Pose {
    xyz: [f64; 3],
    rpy: [f64; 3],
    iso: Isometry3<f64>,
}

#[derive(Serialize, Deserialize)]
struct PoseFields {
    xyz: [f64; 3],
    rpy: [f64; 3],
}

impl From<PoseFields> for Pose {
    fn from(f: PoseFields) -> Self {
        Pose::new(f.xyz, f.rpy)
    }
}

impl From<Pose> for PoseFields {
    fn from(p: Pose) -> Self {
        PoseFields { xyz: p.xyz, rpy: p.rpy }
    }
}

impl PartialEq for Pose {
    fn eq(&self, other: &Self) -> bool {
        self.xyz == other.xyz && self.rpy == other.rpy
    }
}

impl Default for Pose {
    fn default() -> Self {
        Pose::identity()
    }
}

impl Pose {
    pub fn new(xyz: [f64; 3], rpy: [f64; 3]) -> Self {
        let rot = UnitQuaternion::from_euler_angles(rpy[0], rpy[1], rpy[2]);
        let iso = Isometry3::from_parts(Translation3::new(xyz[0], xyz[1], xyz[2]), rot);
        Pose { xyz, rpy, iso }
    }

    pub fn identity() -> Self {
        Pose::new([0.0; 3], [0.0; 3])
    }

    pub fn from_translation(xyz: [f64; 3]) -> Self {
        Pose::new(xyz, [0.0; 3])
    }

    /// Builds a pose from an isometry. The stored `rpy` is recovered from the
    /// rotation, so the cached quaternion is recomputed from those angles.
    pub fn from_isometry(iso: &Isometry3<f64>) -> Self {
        let (r, p, y) = iso.rotation.euler_angles();
        let t = iso.translation.vector;
        Pose::new([t.x, t.y, t.z], [r, p, y])
    }

    pub fn xyz(&self) -> [f64; 3] {
        self.xyz
    }

    pub fn rpy(&self) -> [f64; 3] {
        self.rpy
    }

    pub fn isometry(&self) -> &Isometry3<f64> {
        &self.iso
    }

    pub fn rotation(&self) -> &UnitQuaternion<f64> {
        &self.iso.rotation
    }

    pub fn transform_point(&self, p: &Point3<f64>) -> Point3<f64> {
        self.iso.transform_point(p)
    }

    pub fn transform_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.iso.transform_vector(v)
    }
}
