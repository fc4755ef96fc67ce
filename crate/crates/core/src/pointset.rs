//! Point sets and uniform arc-length sampling of projected chains.

use thiserror::Error;

use crate::camera::ImagePolyline;

#[derive(Debug, Error, PartialEq)]
pub enum SampleError {
    #[error("need at least 2 sample points, got {0}")]
    TooFewPoints(usize),
    #[error("polyline is empty")]
    EmptyPolyline,
}

/// An ordered set of 2D points.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    pub points: Vec<[f64; 2]>,
}

impl PointSet {
    pub fn new(points: Vec<[f64; 2]>) -> Self {
        PointSet { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Divides x by `width` and y by `height` (pixels to normalized units).
    pub fn normalized(&self, width: f64, height: f64) -> PointSet {
        PointSet::new(self.points.iter().map(|p| [p[0] / width, p[1] / height]).collect())
    }

    pub fn translated(&self, v: [f64; 2]) -> PointSet {
        PointSet::new(self.points.iter().map(|p| [p[0] + v[0], p[1] + v[1]]).collect())
    }

    pub fn is_finite(&self) -> bool {
        self.points.iter().flatten().all(|v| v.is_finite())
    }
}

/// Places `n` points at equal arc-length spacing along the polyline,
/// endpoints included: `t_k = k * L / (n - 1)`.
pub fn sample_chain_points(polyline: &ImagePolyline, n: usize) -> Result<PointSet, SampleError> {
    sample_polyline(&polyline.points, n)
}

pub fn sample_polyline(points: &[[f64; 2]], n: usize) -> Result<PointSet, SampleError> {
    if n < 2 {
        return Err(SampleError::TooFewPoints(n));
    }
    let first = *points.first().ok_or(SampleError::EmptyPolyline)?;
    let lengths: Vec<f64> = points.windows(2).map(|w| dist(w[0], w[1])).collect();
    let total: f64 = lengths.iter().sum();
    if total == 0.0 {
        return Ok(PointSet::new(vec![first; n]));
    }

    let mut out = Vec::with_capacity(n);
    let mut edge = 0;
    let mut edge_start = 0.0; // arc length at the start of `edge`
    for k in 0..n {
        if k == n - 1 {
            out.push(*points.last().unwrap());
            break;
        }
        let t = k as f64 * total / (n - 1) as f64;
        while edge + 1 < lengths.len() && edge_start + lengths[edge] < t {
            edge_start += lengths[edge];
            edge += 1;
        }
        let len = lengths[edge];
        let (a, b) = (points[edge], points[edge + 1]);
        if len == 0.0 {
            out.push(a);
            continue;
        }
        let s = ((t - edge_start) / len).clamp(0.0, 1.0);
        out.push([a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])]);
    }
    Ok(PointSet::new(out))
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}
