use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::Pose;
use crate::{Transform, Vec3};

/// Geometric primitive of a scene object.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Shape {
    Box { half_extents: Vec3 },
    Sphere { radius: f64 },
    ChargerSlab { half_extents: Vec3 },
}

impl Shape {
    /// Vertical half-size, i.e. the resting height of the center above its support.
    pub fn half_height(&self) -> f64 {
        match self {
            Shape::Box { half_extents } | Shape::ChargerSlab { half_extents } => half_extents.z,
            Shape::Sphere { radius } => *radius,
        }
    }

    /// Period of the yaw symmetry, `None` for rotationally symmetric shapes.
    pub fn yaw_period(&self) -> Option<f64> {
        match self {
            Shape::Box { half_extents } => {
                if (half_extents.x - half_extents.y).abs() < 1e-12 {
                    Some(std::f64::consts::FRAC_PI_2)
                } else {
                    Some(std::f64::consts::PI)
                }
            }
            Shape::ChargerSlab { .. } => Some(std::f64::consts::PI),
            Shape::Sphere { .. } => None,
        }
    }

    pub fn pushable(&self) -> bool {
        matches!(self, Shape::Box { .. } | Shape::Sphere { .. })
    }

    /// Whether a point given in the object's frame lies over its footprint.
    pub fn footprint_contains(&self, local: Vec3) -> bool {
        match self {
            Shape::Box { half_extents } | Shape::ChargerSlab { half_extents } => {
                local.x.abs() <= half_extents.x && local.y.abs() <= half_extents.y
            }
            Shape::Sphere { radius } => local.x.hypot(local.y) <= *radius,
        }
    }

    /// Corner points in the object frame (empty for spheres).
    pub fn corners(&self) -> Vec<Vec3> {
        match self {
            Shape::Box { half_extents: h } | Shape::ChargerSlab { half_extents: h } => {
                let mut out = Vec::with_capacity(8);
                for sx in [-1.0, 1.0] {
                    for sy in [-1.0, 1.0] {
                        for sz in [-1.0, 1.0] {
                            out.push(Vec3::new(sx * h.x, sy * h.y, sz * h.z));
                        }
                    }
                }
                out
            }
            Shape::Sphere { .. } => Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectRecord {
    #[serde(flatten)]
    pub shape: Shape,
    pub pose: Transform,
}

/// A held object and its pose relative to the end effector at grasp time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Attachment {
    pub object: String,
    pub offset: Transform,
}

/// Full state of the tabletop scene.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub ee_pose: Pose,
    pub objects: BTreeMap<String, ObjectRecord>,
    pub attached: Option<Attachment>,
    pub table_z: f64,
    pub goal: Option<Vec3>,
    pub step_count: u64,
}

impl WorldState {
    pub fn object(&self, id: &str) -> Option<&ObjectRecord> {
        self.objects.get(id)
    }

    pub fn attached_id(&self) -> Option<&str> {
        self.attached.as_ref().map(|a| a.object.as_str())
    }
}
