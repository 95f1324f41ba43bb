//! Failure injection and recovery-action generation for stage-waypoint
//! manipulation tasks.
//!
//! Tasks are planned as sequences of end-effector waypoints and rolled out
//! in a deterministic kinematic simulator. One stage of a rollout is
//! perturbed to produce a failure; corrective 7-DoF delta actions are
//! collected between the failed and the correct trajectory, replayed to
//! verify that they complete the task, and exported as a labeled dataset.
//! A supervision harness runs a failure-prone policy with a recovery
//! assistant consulted on a fixed cadence.
//!
//! The pose algebra in [`geometry`] is generic over the scalar type; the
//! rest of the pipeline runs on the `f64` aliases re-exported here.

pub mod cli;
pub mod config;
pub mod dataset;
pub mod failure;
pub mod geometry;
pub mod pipeline;
pub mod planner;
pub mod recovery;
pub mod rng;
pub mod scalar;
pub mod sim;
pub mod supervisor;
pub mod tasks;
pub mod verify;

pub use scalar::Scalar;

pub type Vec3 = geometry::Vec3<f64>;
pub type Quat = geometry::Quat<f64>;
pub type Rpy = geometry::Rpy<f64>;
pub type Transform = geometry::Transform<f64>;
pub type Pose = geometry::Pose<f64>;
pub type DeltaAction = geometry::DeltaAction<f64>;
pub type PoseDistance = geometry::PoseDistance<f64>;

pub type Posef32 = geometry::Pose<f32>;
pub type DeltaActionf32 = geometry::DeltaAction<f32>;

pub use geometry::{apply_delta, delta_action, interpolate_stage, pose_distance};

/// Number of consecutive observation frames in a dataset window and an
/// assistant query.
pub const WINDOW_FRAMES: usize = 10;
