use serde::{Deserialize, Serialize};

use super::config::CameraConfig;
use crate::{Quat, Transform, Vec3};

/// Camera views every observation carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CameraId {
    Front,
    Side,
    Hand,
}

/// Ideal pinhole camera. The camera frame is x right, y down, z along the
/// optical axis; `pose` maps camera coordinates to world coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct PinholeCamera {
    pub width: u32,
    pub height: u32,
    pub focal: f64,
    pub cx: f64,
    pub cy: f64,
    pub pose: Transform,
}

impl PinholeCamera {
    pub fn new(cfg: &CameraConfig, pose: Transform) -> Self {
        Self {
            width: cfg.width,
            height: cfg.height,
            focal: cfg.focal,
            cx: f64::from(cfg.width) / 2.0,
            cy: f64::from(cfg.height) / 2.0,
            pose,
        }
    }

    /// Camera at `eye` with its optical axis through `target`, image rows
    /// pointing towards world -z.
    pub fn look_at(cfg: &CameraConfig, eye: Vec3, target: Vec3) -> Self {
        let forward = (target - eye).normalized().unwrap_or(Vec3::new(0.0, 0.0, -1.0));
        let up = Vec3::new(0.0, 0.0, 1.0);
        let right = forward.cross(&up).normalized().unwrap_or(Vec3::new(1.0, 0.0, 0.0));
        let down = forward.cross(&right);
        let m = [[right.x, down.x, forward.x], [right.y, down.y, forward.y], [right.z, down.z, forward.z]];
        Self::new(cfg, Transform::new(eye, Quat::from_matrix(m)))
    }

    /// Mount of the wrist camera relative to the end-effector frame: behind
    /// the tool point, looking along the approach axis (EE -z).
    pub fn hand_mount(cfg: &CameraConfig) -> Transform {
        Transform::new(
            Vec3::new(0.0, 0.0, cfg.hand_offset),
            Quat::from_axis_angle(Vec3::new(1.0, 0.0, 0.0), std::f64::consts::PI),
        )
    }

    pub fn to_camera(&self, p_world: Vec3) -> Vec3 {
        self.pose.inverse().transform_point(p_world)
    }

    /// Pixel coordinates of a world point; `None` when the point is not in
    /// front of the camera.
    pub fn project(&self, p_world: Vec3) -> Option<[f64; 2]> {
        let p = self.to_camera(p_world);
        if p.z.is_nan() || p.z <= 1e-9 {
            return None;
        }
        let u = self.cx + self.focal * p.x / p.z;
        let v = self.cy + self.focal * p.y / p.z;
        (u.is_finite() && v.is_finite()).then_some([u, v])
    }
}
