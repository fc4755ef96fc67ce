//! SVG overlays of forecast chains on the observed views.

use std::fmt::Write as _;
use std::path::Path;

use base64::Engine;
use vkchain_core::{PointSet, RasterImage};
use vkchain_envsim::load_episode;
use vkchain_model::{ForecastOutput, Observation, Vkt};

use crate::ckpt::load_model;
use crate::error::{HarnessError, Result};

/// Display magnification of each view.
pub const SCALE: f64 = 4.0;
pub const CURRENT: &str = "red";
pub const NEXT: &str = "blue";

pub fn encode_png(img: &RasterImage) -> Vec<u8> {
    let mut out = Vec::new();
    let mut enc = png::Encoder::new(&mut out, img.width, img.height);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let mut w = enc.write_header().expect("in-memory png header");
    w.write_image_data(&img.data).expect("in-memory png data");
    drop(w);
    out
}

fn circles(doc: &mut String, set: &PointSet, size: f64, class: &str, color: &str) {
    for p in &set.points {
        let _ = writeln!(doc, r#"    <circle class="{class}" cx="{:.3}" cy="{:.3}" r="1.2" fill="{color}" fill-opacity="0.85"/>"#, p[0] * size, p[1] * size);
    }
}

/// The overlay document for one observation: per view the image, the
/// forecast for the current step (red) and the next step (blue), and the
/// ground-truth chain as a thin white outline when given.
pub fn overlay_svg(images: &[RasterImage], forecast: &ForecastOutput, truth: Option<&[PointSet]>) -> String {
    let size = f64::from(images[0].width);
    let side = size * SCALE;
    let pred = forecast.image_points();
    let mut doc = String::new();
    let _ = writeln!(doc, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        doc,
        r#"<svg xmlns="http://www.w3.org/2000/svg" xmlns:xlink="http://www.w3.org/1999/xlink" version="1.1" width="{}" height="{side}" viewBox="0 0 {} {side}">"#,
        side * images.len() as f64,
        side * images.len() as f64,
    );
    for (v, img) in images.iter().enumerate() {
        let b64 = base64::engine::general_purpose::STANDARD.encode(encode_png(img));
        let _ = writeln!(doc, r#"  <g class="view" id="view{v}" transform="translate({} 0) scale({SCALE})">"#, side * v as f64);
        let _ = writeln!(doc, r#"    <image x="0" y="0" width="{size}" height="{size}" xlink:href="data:image/png;base64,{b64}"/>"#);
        if let Some(gt) = truth.and_then(|t| t.get(v)) {
            let pts: Vec<String> = gt.points.iter().map(|p| format!("{:.3},{:.3}", p[0] * size, p[1] * size)).collect();
            let _ = writeln!(doc, r#"    <polyline class="truth" points="{}" fill="none" stroke="white" stroke-width="0.4"/>"#, pts.join(" "));
        }
        circles(&mut doc, &pred[v][0], size, "current", CURRENT);
        circles(&mut doc, &pred[v][1], size, "next", NEXT);
        let _ = writeln!(doc, "  </g>");
    }
    doc.push_str("</svg>\n");
    doc
}

/// Forecast for `step` of the episode in `episode_file`, written as SVG to `out`.
pub fn render_overlay(ckpt: &Path, episode_file: &Path, out: &Path, step: usize) -> Result<String> {
    let (model, _) = load_model(ckpt)?;
    let (_, episode) = load_episode(episode_file)?;
    let s = episode
        .steps
        .get(step)
        .ok_or_else(|| HarnessError::Validation(format!("step {step} outside the episode's {} steps", episode.steps.len())))?;
    let doc = overlay_for(&model, episode.task.instruction_id, &s.images, Some(&s.points))?;
    std::fs::write(out, &doc).map_err(|e| HarnessError::io(out, e))?;
    Ok(doc)
}

pub fn overlay_for(model: &Vkt<f32>, instruction_id: usize, images: &[RasterImage], truth: Option<&[PointSet]>) -> Result<String> {
    if !model.has_point_head() {
        return Err(HarnessError::Validation("overlay needs a forecasting checkpoint".into()));
    }
    let forecast = model.forecast(&Observation { instruction_id, views: images.iter().collect() })?;
    Ok(overlay_svg(images, &forecast, truth))
}
