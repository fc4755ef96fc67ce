//! Image-plane augmentation applied identically to pixels and point sets.

use rand::Rng;
use vkchain_core::{seed, PointSet, RasterImage};

use crate::render::BACKGROUND;

pub const MAX_SHIFT_PX: i64 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AugmentParams {
    pub dx: i64,
    pub dy: i64,
    /// Mirror left-right before shifting.
    pub flip: bool,
}

impl AugmentParams {
    pub fn sample(seed: u64) -> Self {
        let mut rng = seed::rng(seed, "augment", 0);
        AugmentParams {
            dx: rng.random_range(-MAX_SHIFT_PX..=MAX_SHIFT_PX),
            dy: rng.random_range(-MAX_SHIFT_PX..=MAX_SHIFT_PX),
            flip: rng.random_bool(0.5),
        }
    }

    pub fn is_identity(&self) -> bool {
        *self == AugmentParams::default()
    }
}

pub fn augment(image: &RasterImage, point_sets: &[PointSet], seed: u64) -> (RasterImage, Vec<PointSet>) {
    apply(image, point_sets, AugmentParams::sample(seed))
}

/// Exposed pixels take the background color.
pub fn apply(image: &RasterImage, point_sets: &[PointSet], p: AugmentParams) -> (RasterImage, Vec<PointSet>) {
    let (w, h) = (i64::from(image.width), i64::from(image.height));
    let mut out = RasterImage::filled(image.width, image.height, BACKGROUND);
    for y in 0..h {
        let sy = y - p.dy;
        if !(0..h).contains(&sy) {
            continue;
        }
        for x in 0..w {
            let sx = x - p.dx;
            if !(0..w).contains(&sx) {
                continue;
            }
            let sx = if p.flip { w - 1 - sx } else { sx };
            out.set(x as u32, y as u32, image.get(sx as u32, sy as u32));
        }
    }
    let (ox, oy) = (p.dx as f64 / w as f64, p.dy as f64 / h as f64);
    let sets = point_sets
        .iter()
        .map(|s| PointSet::new(s.points.iter().map(|q| [if p.flip { 1.0 - q[0] } else { q[0] } + ox, q[1] + oy]).collect()))
        .collect();
    (out, sets)
}
