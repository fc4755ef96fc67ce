//! On-disk demonstrations: `manifest.json`, one camera file per view and
//! one little-endian `ep_<k>.bin` per episode.

use std::fs;
use std::io::{Cursor, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};
use vkchain_core::{CameraModel, PointSet, RasterImage};

use crate::episode::{Episode, EpisodeSpec, Step};
use crate::world::{canonical_cameras, RobotVariant, Task};
use crate::EnvError;

pub const FORMAT_VERSION: u32 = 1;
pub const MAGIC: &[u8; 4] = b"VKCH";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeEntry {
    pub file: String,
    pub crc32: u32,
    pub seed: u64,
    pub instruction_id: usize,
    pub target_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct Manifest {
    pub format_version: u32,
    pub robot_variant: RobotVariant,
    pub H: usize,
    pub N_points: usize,
    /// `[width, height]` in pixels.
    pub image_size: [u32; 2],
    pub cameras: Vec<String>,
    pub episodes: Vec<EpisodeEntry>,
}

impl Manifest {
    pub fn n_views(&self) -> usize {
        self.cameras.len()
    }

    pub fn spec(&self) -> EpisodeSpec {
        EpisodeSpec {
            variant: self.robot_variant,
            n_views: self.n_views(),
            horizon: self.H,
            n_points: self.N_points,
            image_size: self.image_size[0],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: Manifest,
    pub cameras: Vec<CameraModel>,
    pub episodes: Vec<Episode>,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> EnvError {
    EnvError::Io(format!("{}: {e}", path.display()))
}

struct Header {
    h: u32,
    v: u32,
    n_points: u32,
    w: u32,
    hpx: u32,
    dof: u32,
}

fn encode_episode(ep: &Episode, spec: &EpisodeSpec) -> Result<Vec<u8>, EnvError> {
    let dof = spec.variant.dof();
    let s = spec.image_size as usize;
    let mut buf = Vec::with_capacity(32 + ep.steps.len() * spec.n_views * (s * s * 3 + spec.n_points * 8));
    buf.extend_from_slice(MAGIC);
    for v in [FORMAT_VERSION, ep.steps.len() as u32, spec.n_views as u32, spec.n_points as u32, spec.image_size, spec.image_size, dof as u32] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for (t, step) in ep.steps.iter().enumerate() {
        let shape_ok = step.q.len() == dof
            && step.action.len() == dof + 1
            && step.images.len() == spec.n_views
            && step.points.len() == spec.n_views
            && step.images.iter().all(|i| i.width == spec.image_size && i.height == spec.image_size)
            && step.points.iter().all(|p| p.len() == spec.n_points);
        if !shape_ok {
            return Err(EnvError::Invalid(format!("episode {} step {t} does not match the dataset layout", ep.seed)));
        }
        for v in step.q.iter().chain(&step.action) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        for img in &step.images {
            buf.extend_from_slice(&img.data);
        }
        for p in &step.points {
            for c in p.points.iter().flatten() {
                buf.extend_from_slice(&(*c as f32).to_le_bytes());
            }
        }
    }
    Ok(buf)
}

fn read_exact<const N: usize>(cur: &mut Cursor<&[u8]>, what: &str, file: &str) -> Result<[u8; N], EnvError> {
    let mut b = [0u8; N];
    cur.read_exact(&mut b).map_err(|_| EnvError::Truncated(format!("{file}: ended inside {what}")))?;
    Ok(b)
}

fn read_f32s(cur: &mut Cursor<&[u8]>, n: usize, what: &str, file: &str) -> Result<Vec<f32>, EnvError> {
    (0..n).map(|_| read_exact::<4>(cur, what, file).map(f32::from_le_bytes)).collect()
}

fn decode_episode(bytes: &[u8], file: &str, entry: &EpisodeEntry, m: &Manifest) -> Result<Episode, EnvError> {
    let mut cur = Cursor::new(bytes);
    if &read_exact::<4>(&mut cur, "magic", file)? != MAGIC {
        return Err(EnvError::Format(format!("{file}: bad magic")));
    }
    let mut field = |what| read_exact::<4>(&mut cur, what, file).map(u32::from_le_bytes);
    let version = field("version")?;
    if version != FORMAT_VERSION {
        return Err(EnvError::Version { found: version, expected: FORMAT_VERSION });
    }
    let hd = Header { h: field("header")?, v: field("header")?, n_points: field("header")?, w: field("header")?, hpx: field("header")?, dof: field("header")? };
    let expect = [m.H, m.n_views(), m.N_points, m.image_size[0] as usize, m.image_size[1] as usize, m.robot_variant.dof()];
    let got = [hd.h, hd.v, hd.n_points, hd.w, hd.hpx, hd.dof].map(|v| v as usize);
    if got != expect {
        return Err(EnvError::Format(format!("{file}: header {got:?} disagrees with manifest {expect:?}")));
    }
    let dof = hd.dof as usize;
    let img_bytes = hd.w as usize * hd.hpx as usize * 3;
    let mut steps = Vec::with_capacity(hd.h as usize);
    for _ in 0..hd.h {
        let q = read_f32s(&mut cur, dof, "joint config", file)?;
        let action = read_f32s(&mut cur, dof + 1, "action", file)?;
        let mut images = Vec::with_capacity(hd.v as usize);
        for _ in 0..hd.v {
            let mut data = vec![0u8; img_bytes];
            cur.read_exact(&mut data).map_err(|_| EnvError::Truncated(format!("{file}: ended inside an image")))?;
            images.push(RasterImage::from_raw(hd.w, hd.hpx, data).expect("sized buffer"));
        }
        let mut points = Vec::with_capacity(hd.v as usize);
        for _ in 0..hd.v {
            let c = read_f32s(&mut cur, hd.n_points as usize * 2, "point set", file)?;
            points.push(PointSet::new(c.chunks_exact(2).map(|p| [f64::from(p[0]), f64::from(p[1])]).collect()));
        }
        steps.push(Step { q, action, images, points });
    }
    if (cur.position() as usize) != bytes.len() {
        return Err(EnvError::Format(format!("{file}: {} trailing bytes", bytes.len() - cur.position() as usize)));
    }
    Ok(Episode { seed: entry.seed, task: Task { instruction_id: entry.instruction_id, target_index: entry.target_index }, steps })
}

pub fn dataset_save(dir: &Path, spec: &EpisodeSpec, episodes: &[Episode]) -> Result<Manifest, EnvError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let cameras = canonical_cameras(spec.image_size);
    let mut camera_files = Vec::with_capacity(spec.n_views);
    for (v, cam) in cameras.iter().take(spec.n_views).enumerate() {
        let name = format!("camera_{v}.json");
        let path = dir.join(&name);
        let json = serde_json::to_string_pretty(cam).map_err(|e| io_err(&path, e))?;
        fs::write(&path, json).map_err(|e| io_err(&path, e))?;
        camera_files.push(name);
    }
    let mut entries = Vec::with_capacity(episodes.len());
    for (k, ep) in episodes.iter().enumerate() {
        if ep.steps.len() != spec.horizon {
            return Err(EnvError::Invalid(format!("episode {k} has {} steps, dataset horizon is {}", ep.steps.len(), spec.horizon)));
        }
        let bytes = encode_episode(ep, spec)?;
        let file = format!("ep_{k}.bin");
        let path = dir.join(&file);
        fs::write(&path, &bytes).map_err(|e| io_err(&path, e))?;
        entries.push(EpisodeEntry {
            file,
            crc32: crc32fast::hash(&bytes),
            seed: ep.seed,
            instruction_id: ep.task.instruction_id,
            target_index: ep.task.target_index,
        });
    }
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        robot_variant: spec.variant,
        H: spec.horizon,
        N_points: spec.n_points,
        image_size: [spec.image_size, spec.image_size],
        cameras: camera_files,
        episodes: entries,
    };
    let path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| io_err(&path, e))?;
    fs::write(&path, json).map_err(|e| io_err(&path, e))?;
    Ok(manifest)
}

pub fn load_manifest(dir: &Path) -> Result<Manifest, EnvError> {
    let path = dir.join("manifest.json");
    let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| EnvError::Format(format!("{}: {e}", path.display())))?;
    let found = value.get("format_version").and_then(serde_json::Value::as_u64).ok_or_else(|| EnvError::Format(format!("{}: missing format_version", path.display())))?;
    if found != u64::from(FORMAT_VERSION) {
        return Err(EnvError::Version { found: found as u32, expected: FORMAT_VERSION });
    }
    let m: Manifest = serde_json::from_value(value).map_err(|e| EnvError::Format(format!("{}: {e}", path.display())))?;
    if m.image_size[0] != m.image_size[1] || m.cameras.is_empty() || m.cameras.len() > 4 || m.H < 2 || m.N_points == 0 {
        return Err(EnvError::Format(format!("{}: inconsistent layout", path.display())));
    }
    Ok(m)
}

pub fn dataset_load(dir: &Path) -> Result<Dataset, EnvError> {
    let manifest = load_manifest(dir)?;
    let cameras = manifest
        .cameras
        .iter()
        .map(|name| {
            let path = dir.join(name);
            let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
            serde_json::from_str::<CameraModel>(&text).map_err(|e| EnvError::Format(format!("{}: {e}", path.display())))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let episodes = manifest.episodes.iter().map(|entry| read_entry(dir, entry, &manifest)).collect::<Result<Vec<_>, _>>()?;
    Ok(Dataset { manifest, cameras, episodes })
}

fn read_entry(dir: &Path, entry: &EpisodeEntry, manifest: &Manifest) -> Result<Episode, EnvError> {
    let path = dir.join(&entry.file);
    let bytes = fs::read(&path).map_err(|e| io_err(&path, e))?;
    let crc = crc32fast::hash(&bytes);
    if crc != entry.crc32 {
        return Err(EnvError::Checksum { file: entry.file.clone(), expected: entry.crc32, found: crc });
    }
    decode_episode(&bytes, &entry.file, entry, manifest)
}

/// Loads one `ep_<k>.bin` file, validated against the manifest beside it.
pub fn load_episode(path: &Path) -> Result<(Manifest, Episode), EnvError> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let manifest = load_manifest(dir)?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
    let entry = manifest
        .episodes
        .iter()
        .find(|e| e.file == name)
        .ok_or_else(|| EnvError::Format(format!("{} is not listed in {}", path.display(), dir.join("manifest.json").display())))?;
    let episode = read_entry(dir, entry, &manifest)?;
    Ok((manifest, episode))
}
