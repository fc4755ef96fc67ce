//! Flat rasterizer: background, target disks, then the arm as white lines.

use nalgebra::Point3;
use vkchain_core::camera::{project_chain, project_point};
use vkchain_core::{forward_kinematics, CameraModel, JointConfig, RasterImage, Segment};

use crate::world::{Target, World};
use crate::EnvError;

pub const BACKGROUND: [u8; 3] = [20, 20, 20];
pub const ARM: [u8; 3] = [255, 255, 255];
pub const TARGET_RADIUS_PX: f64 = 4.0;

pub fn render_image(world: &World, q: &JointConfig, cam: &CameraModel) -> Result<RasterImage, EnvError> {
    let segments = forward_kinematics(&world.robot, q)?;
    Ok(render_scene(cam, &world.targets, &segments))
}

pub fn render_views(world: &World, q: &JointConfig) -> Result<Vec<RasterImage>, EnvError> {
    let segments = forward_kinematics(&world.robot, q)?;
    Ok(world.cameras.iter().map(|c| render_scene(c, &world.targets, &segments)).collect())
}

pub fn render_scene(cam: &CameraModel, targets: &[Target], segments: &[Segment]) -> RasterImage {
    let mut img = RasterImage::filled(cam.width, cam.height, BACKGROUND);
    for t in targets {
        if let Some(c) = project_point(cam, &Point3::from(t.position)).pixel() {
            fill_disk(&mut img, c, TARGET_RADIUS_PX, t.color.rgb());
        }
    }
    let line = project_chain(cam, segments);
    for k in 1..line.len() {
        if line.in_front[k - 1] && line.in_front[k] {
            draw_line(&mut img, line.points[k - 1], line.points[k], ARM);
        }
    }
    img
}

/// Pixel `(i, j)` covers `[i, i+1) x [j, j+1)`; it is inside when its centre is.
fn fill_disk(img: &mut RasterImage, c: [f64; 2], r: f64, rgb: [u8; 3]) {
    let (x0, x1) = ((c[0] - r).floor() as i64, (c[0] + r).ceil() as i64);
    let (y0, y1) = ((c[1] - r).floor() as i64, (c[1] + r).ceil() as i64);
    for y in y0.max(0)..=y1.min(i64::from(img.height) - 1) {
        for x in x0.max(0)..=x1.min(i64::from(img.width) - 1) {
            let (dx, dy) = (x as f64 + 0.5 - c[0], y as f64 + 0.5 - c[1]);
            if dx * dx + dy * dy <= r * r {
                img.put(x, y, rgb);
            }
        }
    }
}

/// Clips to a slightly enlarged frame (Liang-Barsky) so far-away vertices
/// cannot blow up the step count.
fn clip(a: [f64; 2], b: [f64; 2], lo: f64, hi: [f64; 2]) -> Option<([f64; 2], [f64; 2])> {
    let d = [b[0] - a[0], b[1] - a[1]];
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for axis in 0..2 {
        for (p, q) in [(-d[axis], a[axis] - lo), (d[axis], hi[axis] - a[axis])] {
            if p == 0.0 {
                if q < 0.0 {
                    return None;
                }
            } else {
                let r = q / p;
                if p < 0.0 {
                    t0 = t0.max(r);
                } else {
                    t1 = t1.min(r);
                }
            }
        }
    }
    (t0 <= t1).then(|| ([a[0] + t0 * d[0], a[1] + t0 * d[1]], [a[0] + t1 * d[0], a[1] + t1 * d[1]]))
}

/// Two-pixel-wide Bresenham line; the second pixel sits across the minor axis.
pub fn draw_line(img: &mut RasterImage, a: [f64; 2], b: [f64; 2], rgb: [u8; 3]) {
    let hi = [f64::from(img.width) + 2.0, f64::from(img.height) + 2.0];
    let Some((a, b)) = clip(a, b, -2.0, hi) else { return };
    let (mut x, mut y) = (a[0].floor() as i64, a[1].floor() as i64);
    let (x1, y1) = (b[0].floor() as i64, b[1].floor() as i64);
    let (dx, dy) = ((x1 - x).abs(), -(y1 - y).abs());
    let (sx, sy) = (if x < x1 { 1 } else { -1 }, if y < y1 { 1 } else { -1 });
    let steep = -dy > dx;
    let mut err = dx + dy;
    loop {
        img.put(x, y, rgb);
        if steep {
            img.put(x + 1, y, rgb);
        } else {
            img.put(x, y + 1, rgb);
        }
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}
