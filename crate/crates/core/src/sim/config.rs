use serde::{Deserialize, Serialize};

/// Constants of the kinematic tabletop simulator. Lengths in meters, angles
/// in radians, rates per simulation step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Label of the arm the constants describe; carried into manifests and
    /// instructions, it does not change the kinematics.
    pub embodiment: String,
    pub table_z: f64,
    pub cube_half_extent: f64,
    pub sphere_radius: f64,
    pub charger_half_extents: [f64; 3],
    pub lift_threshold: f64,
    pub goal_radius: f64,
    pub stack_xy_tol: f64,
    pub stack_z_tol: f64,
    pub grasp_radius: f64,
    pub contact_radius: f64,
    pub max_ee_speed: f64,
    pub max_ee_angular: f64,
    pub max_gripper_rate: f64,
    /// Aperture below which a gripper near an object grasps it.
    pub grasp_threshold: f64,
    /// Aperture above which a held object is released.
    pub release_threshold: f64,
    /// Largest angle between the approach axis and the object's vertical for a grasp.
    pub grasp_tilt_tol: f64,
    /// Largest yaw misalignment (modulo the object's symmetry) for a grasp.
    pub grasp_yaw_tol: f64,
    pub workspace_min: [f64; 3],
    pub workspace_max: [f64; 3],
    pub cameras: CameraConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            embodiment: "panda".to_string(),
            table_z: 0.0,
            cube_half_extent: 0.02,
            sphere_radius: 0.02,
            charger_half_extents: [0.035, 0.02, 0.008],
            lift_threshold: 0.06,
            goal_radius: 0.03,
            stack_xy_tol: 0.005,
            stack_z_tol: 0.005,
            grasp_radius: 0.01,
            contact_radius: 0.025,
            max_ee_speed: 0.01,
            max_ee_angular: 0.1,
            max_gripper_rate: 0.1,
            grasp_threshold: 0.3,
            release_threshold: 0.7,
            grasp_tilt_tol: 0.1,
            grasp_yaw_tol: 0.1,
            workspace_min: [-0.4, -0.4, 0.01],
            workspace_max: [0.4, 0.4, 0.5],
            cameras: CameraConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraConfig {
    pub width: u32,
    pub height: u32,
    pub focal: f64,
    pub front_position: [f64; 3],
    pub side_position: [f64; 3],
    pub look_at: [f64; 3],
    /// Distance of the hand camera behind the tool point along the approach axis.
    pub hand_offset: f64,
}

impl Default for CameraConfig {
    fn default() -> Self {
        Self {
            width: 640,
            height: 480,
            focal: 500.0,
            front_position: [0.5, 0.0, 0.35],
            side_position: [0.0, 0.5, 0.35],
            look_at: [0.0, 0.0, 0.0],
            hand_offset: 0.08,
        }
    }
}
