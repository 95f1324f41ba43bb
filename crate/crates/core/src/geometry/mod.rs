//! Pose algebra: vectors, unit quaternions, rigid transforms, end-effector
//! poses and the delta-action calculus between them.

mod ops;
mod pose;
mod rotation;
mod vector;

pub use ops::{
    apply_delta, delta_action, interpolate_stage, pose_distance, transform_distance, DeltaAction,
    GeometryError, PoseDistance,
};
pub use pose::{Pose, Transform};
pub use rotation::{wrap_angle, Quat, Rpy};
pub use vector::Vec3;
