//! Visual kinematics transformer: forecasting point sets of a robot's
//! projected kinematic chain from multi-view images, plus action heads.

pub mod config;
pub mod loss;
pub mod vkt;

use thiserror::Error;

pub use config::{Mode, VktConfig};
pub use loss::{emd_loss, relative_precision, vkt_loss, EmdLoss};
pub use vkt::{ForecastOutput, ForwardVars, Observation, Vkt};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("config: {0}")]
    Config(String),
    #[error("input: {0}")]
    Input(String),
    #[error("no action head registered for env {0}")]
    UnknownEnv(String),
    #[error("i/o: {0}")]
    Io(String),
    #[error(transparent)]
    Tensor(#[from] vkchain_tensor::TensorError),
    #[error(transparent)]
    Ot(#[from] vkchain_core::OtError),
}
