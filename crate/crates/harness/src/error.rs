use thiserror::Error;
use vkchain_envsim::EnvError;
use vkchain_model::ModelError;
use vkchain_tensor::checkpoint::CheckpointError;
use vkchain_tensor::TensorError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{0}")]
    Validation(String),
    #[error("phase isolation violated: {0}")]
    Phase(String),
    #[error("i/o: {0}")]
    Io(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

impl HarnessError {
    /// Process exit code: 2 for I/O failures, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Io(_) | HarnessError::Env(EnvError::Io(_)) | HarnessError::Model(ModelError::Io(_)) => 2,
            _ => 1,
        }
    }

    pub fn io(path: &std::path::Path, e: impl std::fmt::Display) -> Self {
        HarnessError::Io(format!("{}: {e}", path.display()))
    }
}

impl From<CheckpointError> for HarnessError {
    fn from(e: CheckpointError) -> Self {
        match e {
            CheckpointError::Io(e) => HarnessError::Io(e.to_string()),
            CheckpointError::Format(m) => HarnessError::Validation(format!("checkpoint: {m}")),
        }
    }
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;
