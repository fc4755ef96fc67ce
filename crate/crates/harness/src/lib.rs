//! Training, evaluation, reporting and overlays for visual kinematics
//! chain forecasting on the toy reach environments.

pub mod ckpt;
pub mod data;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod metrics;
pub mod overlay;
pub mod report;
pub mod run;
pub mod train;

pub use error::{HarnessError, Result};
