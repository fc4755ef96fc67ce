//! Ideal pinhole cameras and chain projection.

use nalgebra::{Isometry3, Matrix3, Point3, Rotation3, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::pose::Pose;
use crate::robot::Segment;

/// Points closer than this to the image plane (camera z, meters) are behind.
pub const Z_MIN: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CameraFile", into = "CameraFile")]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    /// Camera-to-world transform; the camera looks along its own +z,
    /// with +x to the right of the image and +y down.
    pub pose: Pose,
}

/// On-disk camera description.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CameraFile {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    pub position: [f64; 3],
    pub rpy: [f64; 3],
}

impl TryFrom<CameraFile> for CameraModel {
    type Error = String;
    fn try_from(f: CameraFile) -> Result<Self, String> {
        CameraModel::new(f.fx, f.fy, f.cx, f.cy, f.width, f.height, Pose::new(f.position, f.rpy))
    }
}

impl From<CameraModel> for CameraFile {
    fn from(c: CameraModel) -> Self {
        CameraFile {
            fx: c.fx,
            fy: c.fy,
            cx: c.cx,
            cy: c.cy,
            width: c.width,
            height: c.height,
            position: c.pose.xyz(),
            rpy: c.pose.rpy(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Projection {
    Pixel([f64; 2]),
    BehindCamera,
}

impl Projection {
    pub fn pixel(self) -> Option<[f64; 2]> {
        match self {
            Projection::Pixel(p) => Some(p),
            Projection::BehindCamera => None,
        }
    }
}

/// Projected chain, base to end-effector, in pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePolyline {
    pub points: Vec<[f64; 2]>,
    /// In front of the camera and inside the frame.
    pub visible: Vec<bool>,
    /// In front of the camera (possibly outside the frame).
    pub in_front: Vec<bool>,
}

impl ImagePolyline {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

impl CameraModel {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32, pose: Pose) -> Result<Self, String> {
        if !(fx > 0.0 && fy > 0.0) {
            return Err(format!("focal lengths must be positive, got fx={fx}, fy={fy}"));
        }
        if !(0.0..f64::from(width)).contains(&cx) || !(0.0..f64::from(height)).contains(&cy) {
            return Err(format!("principal point ({cx}, {cy}) outside a {width}x{height} image"));
        }
        Ok(CameraModel { fx, fy, cx, cy, width, height, pose })
    }

    /// A camera at `eye` looking at `target`. `up` picks the image's upward
    /// direction (image +y points away from it).
    pub fn look_at(
        eye: [f64; 3],
        target: [f64; 3],
        up: [f64; 3],
        focal: f64,
        width: u32,
        height: u32,
    ) -> Result<Self, String> {
        let z = (Vector3::from(target) - Vector3::from(eye)).normalize();
        let x = z.cross(&Vector3::from(up)).normalize();
        let y = z.cross(&x);
        let rot = Rotation3::from_matrix_unchecked(Matrix3::from_columns(&[x, y, z]));
        let iso = Isometry3::from_parts(Translation3::from(Vector3::from(eye)), UnitQuaternion::from_rotation_matrix(&rot));
        let pose = Pose::from_isometry(&iso);
        CameraModel::new(focal, focal, f64::from(width) / 2.0, f64::from(height) / 2.0, width, height, pose)
    }

    pub fn to_camera_frame(&self, p_world: &Point3<f64>) -> Point3<f64> {
        self.pose.isometry().inverse_transform_point(p_world)
    }

    /// Pinhole projection of a camera-frame point in front of the camera.
    pub fn project_camera_point(&self, p: &Point3<f64>) -> [f64; 2] {
        [self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy]
    }

    pub fn in_frame(&self, px: [f64; 2]) -> bool {
        px[0] >= 0.0 && px[1] >= 0.0 && px[0] < f64::from(self.width) && px[1] < f64::from(self.height)
    }

    pub fn to_file(&self) -> CameraFile {
        self.clone().into()
    }
}

pub fn project_point(cam: &CameraModel, p_world: &Point3<f64>) -> Projection {
    let p = cam.to_camera_frame(p_world);
    if p.z <= Z_MIN {
        return Projection::BehindCamera;
    }
    Projection::Pixel(cam.project_camera_point(&p))
}

/// Clips a world segment against the `z = Z_MIN` plane in camera coordinates.
/// Returns the surviving camera-frame endpoints, or `None` when the whole
/// segment is behind the camera.
pub fn clip_segment(cam: &CameraModel, a_world: &Point3<f64>, b_world: &Point3<f64>) -> Option<[Point3<f64>; 2]> {
    let a = cam.to_camera_frame(a_world);
    let b = cam.to_camera_frame(b_world);
    match (a.z > Z_MIN, b.z > Z_MIN) {
        (true, true) => Some([a, b]),
        (false, false) => None,
        (true, false) => Some([a, clip_point(&a, &b)]),
        (false, true) => Some([clip_point(&b, &a), b]),
    }
}

// `front` has z > Z_MIN, `back` has z <= Z_MIN.
fn clip_point(front: &Point3<f64>, back: &Point3<f64>) -> Point3<f64> {
    let t = (front.z - Z_MIN) / (front.z - back.z);
    let mut c = front + (back - front) * t;
    c.z = Z_MIN;
    c
}

enum PathItem {
    Front(Point3<f64>),
    Behind,
}

/// Projects the chain as one polyline. Consecutive bones that share an
/// endpoint are joined; edges crossing the near plane gain a clip vertex.
/// Behind-camera vertices take the pixel of the nearest in-front vertex
/// (so they add no length) and are flagged invisible.
pub fn project_chain(cam: &CameraModel, segments: &[Segment]) -> ImagePolyline {
    let mut path: Vec<Point3<f64>> = Vec::with_capacity(segments.len() + 1);
    for seg in segments {
        let joined = path.last().is_some_and(|last: &Point3<f64>| (last - seg.start).norm() <= 1e-12);
        if !joined {
            path.push(seg.start);
        }
        path.push(seg.end);
    }
    let cam_pts: Vec<Point3<f64>> = path.iter().map(|p| cam.to_camera_frame(p)).collect();

    let mut items = Vec::with_capacity(cam_pts.len() + 2);
    for (i, p) in cam_pts.iter().enumerate() {
        if i > 0 {
            let prev = &cam_pts[i - 1];
            match (prev.z > Z_MIN, p.z > Z_MIN) {
                (true, false) => items.push(PathItem::Front(clip_point(prev, p))),
                (false, true) => items.push(PathItem::Front(clip_point(p, prev))),
                _ => {}
            }
        }
        items.push(if p.z > Z_MIN { PathItem::Front(*p) } else { PathItem::Behind });
    }

    let projected: Vec<Option<[f64; 2]>> = items
        .iter()
        .map(|it| match it {
            PathItem::Front(p) => Some(cam.project_camera_point(p)),
            PathItem::Behind => None,
        })
        .collect();

    let mut points = Vec::with_capacity(projected.len());
    let mut visible = Vec::with_capacity(projected.len());
    let mut in_front = Vec::with_capacity(projected.len());
    for (i, px) in projected.iter().enumerate() {
        match px {
            Some(px) => {
                points.push(*px);
                visible.push(cam.in_frame(*px));
                in_front.push(true);
            }
            None => {
                let fill = projected[..i]
                    .iter()
                    .rev()
                    .flatten()
                    .next()
                    .or_else(|| projected[i + 1..].iter().flatten().next())
                    .copied()
                    .unwrap_or([cam.cx, cam.cy]);
                points.push(fill);
                visible.push(false);
                in_front.push(false);
            }
        }
    }
    ImagePolyline { points, visible, in_front }
}
