//! Geometry and matching primitives for visual kinematic chains.
//!
//! A robot's serial chain is posed with forward kinematics ([`robot`]),
//! projected into each camera ([`camera`]), resampled into a fixed-size
//! point set ([`pointset`]) and compared with a prediction through an
//! entropic optimal-transport matching ([`ot`]).

pub mod camera;
pub mod ot;
pub mod pointset;
pub mod pose;
pub mod raster;
pub mod robot;
pub mod seed;

pub use camera::{CameraModel, ImagePolyline, Projection};
pub use ot::{cost_matrix, emd, exact_emd_oracle, sinkhorn, CostMatrix, EmdResult, OtError, OtParams, TransportPlan};
pub use pointset::{sample_chain_points, PointSet};
pub use pose::Pose;
pub use raster::RasterImage;
pub use robot::{end_effector, forward_kinematics, parse_chain, JointConfig, JointKind, JointSpec, KinematicChain, LinkSpec, RobotError, Segment};
