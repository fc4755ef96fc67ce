//! Model checkpoints: `config.json`, `checkpoint.json` and the tensor files.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use vkchain_model::vkt::BACKBONE;
use vkchain_model::{Mode, Vkt, VktConfig};
use vkchain_tensor::{checkpoint, ParamStore};

use crate::error::{HarnessError, Result};

pub const CONFIG_FILE: &str = "config.json";
pub const META_FILE: &str = "checkpoint.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Vkt,
    Bct,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Vkt => "vkt",
            ModelKind::Bct => "bct",
        }
    }
}

/// Report label: the model kind plus any ablation switched on in `config`.
pub fn model_label(kind: ModelKind, config: &VktConfig) -> String {
    let mut label = kind.name().to_string();
    if !config.multi_view {
        label.push_str("-single-view");
    }
    if config.mode == Mode::EndEffector {
        label.push_str("-ee");
    }
    label
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub kind: ModelKind,
    /// Environments the backbone was trained on, joined with `+`.
    pub setting: String,
    pub backbone_sha256: String,
    pub heads: Vec<(String, usize)>,
    /// Camera views per observation the model was trained with.
    pub views: usize,
    pub step: u64,
}

/// SHA-256 over the names and values of every backbone parameter.
pub fn backbone_hash(store: &ParamStore<f32>) -> String {
    let mut h = Sha256::new();
    for (_, p) in store.iter().filter(|(_, p)| p.name.starts_with(BACKBONE)) {
        h.update(p.name.as_bytes());
        for v in p.tensor.data() {
            h.update(v.to_le_bytes());
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn save_model(model: &Vkt<f32>, kind: ModelKind, setting: &str, views: usize, step: u64, dir: &Path) -> Result<CheckpointMeta> {
    checkpoint::save(&model.params, dir)?;
    let meta = CheckpointMeta {
        kind,
        setting: setting.to_string(),
        backbone_sha256: backbone_hash(&model.params),
        heads: model.heads().map(|(e, d)| (e.to_string(), d)).collect(),
        views,
        step,
    };
    let write = |name: &str, text: String| {
        let path = dir.join(name);
        fs::write(&path, text).map_err(|e| HarnessError::io(&path, e))
    };
    write(CONFIG_FILE, model.config.to_json())?;
    write(META_FILE, serde_json::to_string_pretty(&meta).expect("meta serializes"))?;
    Ok(meta)
}

pub fn load_model(dir: &Path) -> Result<(Vkt<f32>, CheckpointMeta)> {
    let config = VktConfig::load(&dir.join(CONFIG_FILE))?;
    let path = dir.join(META_FILE);
    let text = fs::read_to_string(&path).map_err(|e| HarnessError::io(&path, e))?;
    let meta: CheckpointMeta = serde_json::from_str(&text).map_err(|e| HarnessError::Validation(format!("{}: {e}", path.display())))?;
    let store = checkpoint::load::<f32>(dir)?;
    let model = Vkt::from_params(config, store)?;
    if backbone_hash(&model.params) != meta.backbone_sha256 {
        return Err(HarnessError::Validation(format!("{}: backbone hash does not match its parameters", dir.display())));
    }
    Ok((model, meta))
}
