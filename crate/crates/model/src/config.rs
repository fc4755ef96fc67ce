use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    FullChain,
    EndEffector,
}

/// Architecture hyperparameters. Field names are the config-file keys.
#[allow(non_snake_case)]
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VktConfig {
    /// Forecast horizon, one kinematics token per step.
    pub T: usize,
    pub D: usize,
    /// Dual attention blocks.
    pub L: usize,
    pub n_heads: usize,
    pub N_points: usize,
    pub patch_size: usize,
    pub image_size: usize,
    pub V_max: usize,
    pub vocab: usize,
    pub mode: Mode,
    pub multi_view: bool,
}

/// Instruction tokens ahead of the kinematics tokens in each query block.
pub const TEXT_LEN: usize = 1;
/// Hidden width of every feed-forward sub-layer, as a multiple of `D`.
pub const FFN_MULT: usize = 2;
pub const CHANNELS: usize = 3;

impl VktConfig {
    /// Desk-scale defaults.
    pub fn desk() -> Self {
        VktConfig {
            T: 8,
            D: 64,
            L: 2,
            n_heads: 4,
            N_points: 10,
            patch_size: 8,
            image_size: 64,
            V_max: 4,
            vocab: 3,
            mode: Mode::FullChain,
            multi_view: true,
        }
    }

    /// The configuration used for full-model gradient checks.
    pub fn tiny() -> Self {
        VktConfig {
            T: 3,
            D: 16,
            L: 1,
            n_heads: 2,
            N_points: 4,
            patch_size: 4,
            image_size: 8,
            V_max: 2,
            vocab: 3,
            mode: Mode::FullChain,
            multi_view: true,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |m: String| Err(ModelError::Config(m));
        if self.D == 0 || self.n_heads == 0 || self.D % self.n_heads != 0 {
            return fail(format!("D={} not divisible by n_heads={}", self.D, self.n_heads));
        }
        if self.patch_size == 0 || self.image_size == 0 || self.image_size % self.patch_size != 0 {
            return fail(format!("image_size={} not divisible by patch_size={}", self.image_size, self.patch_size));
        }
        if self.T < 2 {
            return fail(format!("T={} must be at least 2", self.T));
        }
        if self.L == 0 || self.V_max == 0 || self.vocab == 0 {
            return fail("L, V_max and vocab must be positive".into());
        }
        match self.mode {
            Mode::FullChain if self.N_points < 2 => fail(format!("full_chain needs N_points >= 2, got {}", self.N_points)),
            Mode::EndEffector if self.N_points != 1 => fail(format!("end_effector needs N_points == 1, got {}", self.N_points)),
            _ => Ok(()),
        }
    }

    pub fn n_patches(&self) -> usize {
        (self.image_size / self.patch_size).pow(2)
    }

    pub fn patch_dim(&self) -> usize {
        self.patch_size * self.patch_size * CHANNELS
    }

    pub fn query_len(&self) -> usize {
        TEXT_LEN + self.T
    }

    /// Positions of the kinematics tokens within a query block.
    pub fn kinematics_slice(&self) -> std::ops::Range<usize> {
        TEXT_LEN..TEXT_LEN + self.T
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let c: VktConfig = serde_json::from_str(text).map_err(|e| ModelError::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path).map_err(|e| ModelError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
