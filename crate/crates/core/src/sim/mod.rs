//! Deterministic kinematic tabletop simulator.
//!
//! The end effector moves under per-step speed caps; objects are grasped
//! when a closed gripper is aligned with them and pushed by closed fingers
//! sweeping into them. There is no dynamics: every step is a pure function
//! of the previous state, the commanded pose and the configuration.

mod camera;
mod config;
mod world;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use camera::{CameraId, PinholeCamera};
pub use config::{CameraConfig, SimConfig};
pub use world::{Attachment, ObjectRecord, Shape, WorldState};

use crate::{Pose, Quat, Transform, Vec3};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid command: {0}")]
    InvalidCommand(String),
    #[error("malformed scene: {0}")]
    MalformedScene(String),
}

/// Which condition ends a task successfully.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SuccessPredicate {
    /// Object held and raised above the lift threshold.
    Lift { object: String },
    /// Object center within the goal radius of the scene goal.
    Push { object: String },
    /// `top` released and resting on `base`.
    Stack { top: String, base: String },
}

/// A single keypoint projection; `uv` is absent when the point is behind the camera.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    pub id: String,
    pub uv: Option<[f64; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraViews {
    pub front: Vec<Keypoint>,
    pub side: Vec<Keypoint>,
    pub hand: Vec<Keypoint>,
}

impl CameraViews {
    pub fn get(&self, id: CameraId) -> &[Keypoint] {
        match id {
            CameraId::Front => &self.front,
            CameraId::Side => &self.side,
            CameraId::Hand => &self.hand,
        }
    }
}

/// Numeric observation of one simulation step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservationFrame {
    /// Index of the step that produced the observed state.
    pub step: u64,
    pub ee_pose: Pose,
    pub objects: BTreeMap<String, Transform>,
    pub cameras: CameraViews,
    /// Path to a rendered image, when a renderer is attached.
    #[serde(default)]
    pub image: Option<String>,
}

#[derive(Clone, Debug)]
pub struct Simulator {
    cfg: SimConfig,
    front: PinholeCamera,
    side: PinholeCamera,
    hand_mount: Transform,
}

impl Simulator {
    pub fn new(cfg: SimConfig) -> Self {
        let c = &cfg.cameras;
        let look_at = Vec3::from(c.look_at);
        let front = PinholeCamera::look_at(c, Vec3::from(c.front_position), look_at);
        let side = PinholeCamera::look_at(c, Vec3::from(c.side_position), look_at);
        let hand_mount = PinholeCamera::hand_mount(c);
        Self { cfg, front, side, hand_mount }
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn clamp_to_workspace(&self, p: Vec3) -> Vec3 {
        let (lo, hi) = (self.cfg.workspace_min, self.cfg.workspace_max);
        Vec3::new(p.x.clamp(lo[0], hi[0]), p.y.clamp(lo[1], hi[1]), p.z.clamp(lo[2], hi[2]))
    }

    pub fn in_workspace(&self, p: Vec3) -> bool {
        self.clamp_to_workspace(p) == p
    }

    /// Advances the world by one step towards `target`.
    pub fn step(&self, world: &WorldState, target: &Pose) -> Result<WorldState, SimError> {
        let mut next = world.clone();
        self.step_in_place(&mut next, target)?;
        Ok(next)
    }

    pub fn step_in_place(&self, world: &mut WorldState, target: &Pose) -> Result<(), SimError> {
        if !target.is_finite() {
            return Err(SimError::InvalidCommand(format!("non-finite target pose {target:?}")));
        }
        let cfg = &self.cfg;
        let old = world.ee_pose;

        let goal_pos = self.clamp_to_workspace(target.position);
        let delta = goal_pos - old.position;
        let dist = delta.norm();
        let position = if dist <= cfg.max_ee_speed {
            goal_pos
        } else {
            old.position + delta * (cfg.max_ee_speed / dist)
        };
        let target_q = target.orientation.normalized();
        let angle = old.orientation.angle_to(&target_q);
        let orientation = if angle <= cfg.max_ee_angular {
            target_q
        } else {
            old.orientation.slerp(&target_q, cfg.max_ee_angular / angle)
        };
        let dg = target.gripper.clamp(0.0, 1.0) - old.gripper;
        let gripper = if dg.abs() <= cfg.max_gripper_rate {
            target.gripper.clamp(0.0, 1.0)
        } else {
            old.gripper + cfg.max_gripper_rate.copysign(dg)
        };
        world.ee_pose = Pose { position, orientation, gripper };

        if world.attached.is_none() && gripper < cfg.grasp_threshold {
            self.push_objects(world, old.position, position);
        }

        if world.attached.is_some() {
            if gripper > cfg.release_threshold {
                self.release(world);
            }
        } else if gripper < cfg.grasp_threshold {
            self.try_grasp(world);
        }

        if let Some(att) = &world.attached {
            let pose = world.ee_pose.transform().compose(&att.offset);
            if let Some(obj) = world.objects.get_mut(&att.object) {
                obj.pose = pose;
            }
        }
        world.step_count += 1;
        Ok(())
    }

    // Closed fingers moving towards an object within contact range carry it
    // along horizontally by the end-effector displacement.
    fn push_objects(&self, world: &mut WorldState, from: Vec3, to: Vec3) {
        let disp = to - from;
        let horizontal = Vec3::new(disp.x, disp.y, 0.0);
        if horizontal.norm() <= 0.0 {
            return;
        }
        for obj in world.objects.values_mut() {
            if !obj.shape.pushable() {
                continue;
            }
            let center = obj.pose.position;
            let towards = Vec3::new(center.x - from.x, center.y - from.y, 0.0);
            if horizontal.dot(&towards) <= 0.0 {
                continue;
            }
            if segment_distance(from, to, center) <= self.cfg.contact_radius {
                obj.pose.position = center + horizontal;
            }
        }
    }

    fn try_grasp(&self, world: &mut WorldState) {
        let ee = world.ee_pose.transform();
        let approach = ee.orientation.rotate(Vec3::new(0.0, 0.0, -1.0));
        let hit = world.objects.iter().find(|(_, obj)| {
            if (obj.pose.position - ee.position).norm() > self.cfg.grasp_radius {
                return false;
            }
            let down = obj.pose.orientation.rotate(Vec3::new(0.0, 0.0, -1.0));
            let tilt = approach.dot(&down).clamp(-1.0, 1.0).acos();
            if tilt > self.cfg.grasp_tilt_tol {
                return false;
            }
            match obj.shape.yaw_period() {
                None => true,
                Some(period) => {
                    let rel = obj.pose.orientation.inverse() * ee.orientation;
                    let yaw = rel.to_rpy().yaw;
                    let err = yaw - period * (yaw / period).round();
                    err.abs() <= self.cfg.grasp_yaw_tol
                }
            }
        });
        if let Some((id, obj)) = hit {
            world.attached = Some(Attachment { object: id.clone(), offset: ee.inverse().compose(&obj.pose) });
        }
    }

    // Released objects drop onto the highest support below their center.
    fn release(&self, world: &mut WorldState) {
        let Some(att) = world.attached.take() else {
            return;
        };
        let Some(obj) = world.objects.get(&att.object) else {
            return;
        };
        let center = obj.pose.position;
        let half = obj.shape.half_height();
        let mut rest = world.table_z + half;
        for (id, other) in &world.objects {
            if *id == att.object {
                continue;
            }
            let top = other.pose.position.z + other.shape.half_height();
            if top > center.z + 1e-9 {
                continue;
            }
            let local = other.pose.inverse().transform_point(center);
            if other.shape.footprint_contains(local) {
                rest = rest.max(top + half);
            }
        }
        if let Some(obj) = world.objects.get_mut(&att.object) {
            obj.pose.position.z = rest;
        }
    }

    pub fn evaluate_success(
        &self,
        world: &WorldState,
        predicate: &SuccessPredicate,
    ) -> Result<bool, SimError> {
        let get = |id: &str| {
            world.object(id).ok_or_else(|| SimError::MalformedScene(format!("missing object '{id}'")))
        };
        let cfg = &self.cfg;
        Ok(match predicate {
            SuccessPredicate::Lift { object } => {
                let obj = get(object)?;
                world.attached_id() == Some(object.as_str())
                    && obj.pose.position.z >= world.table_z + cfg.lift_threshold
            }
            SuccessPredicate::Push { object } => {
                let obj = get(object)?;
                let goal =
                    world.goal.ok_or_else(|| SimError::MalformedScene("push task without goal".into()))?;
                let p = obj.pose.position;
                (p.x - goal.x).hypot(p.y - goal.y) <= cfg.goal_radius
            }
            SuccessPredicate::Stack { top, base } => {
                let t = get(top)?;
                let b = get(base)?;
                let (pt, pb) = (t.pose.position, b.pose.position);
                let height = b.shape.half_height() + t.shape.half_height();
                world.attached_id() != Some(top.as_str())
                    && (pt.x - pb.x).hypot(pt.y - pb.y) <= cfg.stack_xy_tol
                    && (pt.z - (pb.z + height)).abs() <= cfg.stack_z_tol
            }
        })
    }

    pub fn camera(&self, id: CameraId, ee: &Pose) -> PinholeCamera {
        match id {
            CameraId::Front => self.front.clone(),
            CameraId::Side => self.side.clone(),
            CameraId::Hand => PinholeCamera::new(&self.cfg.cameras, ee.transform().compose(&self.hand_mount)),
        }
    }

    /// Keypoints in world coordinates: each object's center then its
    /// corners, followed by the end-effector position.
    pub fn keypoints(world: &WorldState) -> Vec<(String, Vec3)> {
        let mut out = Vec::new();
        for (id, obj) in &world.objects {
            out.push((id.clone(), obj.pose.position));
            for (k, c) in obj.shape.corners().into_iter().enumerate() {
                out.push((format!("{id}/{k}"), obj.pose.transform_point(c)));
            }
        }
        out.push(("ee".to_string(), world.ee_pose.position));
        out
    }

    pub fn observe(&self, world: &WorldState) -> ObservationFrame {
        let points = Self::keypoints(world);
        let project = |cam: &PinholeCamera| {
            points.iter().map(|(id, p)| Keypoint { id: id.clone(), uv: cam.project(*p) }).collect::<Vec<_>>()
        };
        let hand = self.camera(CameraId::Hand, &world.ee_pose);
        ObservationFrame {
            step: world.step_count.saturating_sub(1),
            ee_pose: world.ee_pose,
            objects: world.objects.iter().map(|(id, o)| (id.clone(), o.pose)).collect(),
            cameras: CameraViews {
                front: project(&self.front),
                side: project(&self.side),
                hand: project(&hand),
            },
            image: None,
        }
    }
}

impl Default for Simulator {
    fn default() -> Self {
        Self::new(SimConfig::default())
    }
}

/// Distance from `p` to the segment `[a, b]`.
pub fn segment_distance(a: Vec3, b: Vec3, p: Vec3) -> f64 {
    let ab = b - a;
    let len2 = ab.dot(&ab);
    let t = if len2 > 0.0 { ((p - a).dot(&ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
    (a + ab * t - p).norm()
}

/// Identity orientation points the approach axis straight down; this is the
/// upright grasp orientation rotated by `yaw` about world z.
pub fn top_down(yaw: f64) -> Quat {
    Quat::from_axis_angle(Vec3::new(0.0, 0.0, 1.0), yaw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn cube_at(sim: &Simulator, p: Vec3) -> ObjectRecord {
        let h = sim.config().cube_half_extent;
        ObjectRecord {
            shape: Shape::Box { half_extents: Vec3::new(h, h, h) },
            pose: Transform::from_translation(p),
        }
    }

    fn world(ee: Pose, objects: Vec<(&str, ObjectRecord)>) -> WorldState {
        WorldState {
            ee_pose: ee,
            objects: objects.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
            attached: None,
            table_z: 0.0,
            goal: None,
            step_count: 0,
        }
    }

    fn drive(sim: &Simulator, w: &mut WorldState, target: Pose, steps: usize) {
        for _ in 0..steps {
            sim.step_in_place(w, &target).unwrap();
        }
    }

    fn grasped_cube(sim: &Simulator) -> WorldState {
        let center = Vec3::new(0.05, -0.03, 0.02);
        let ee = Pose::new(center + Vec3::new(0.0, 0.0, 0.005), top_down(0.0), 1.0);
        let mut w = world(ee, vec![("cube", cube_at(sim, center))]);
        drive(sim, &mut w, ee.with_gripper(0.0), 10);
        w
    }

    #[test]
    fn closing_on_a_cube_attaches_and_lifts_it() {
        let sim = Simulator::default();
        let mut w = grasped_cube(&sim);
        assert_eq!(w.attached_id(), Some("cube"));
        let lift = Pose { position: w.ee_pose.position + Vec3::new(0.0, 0.0, 0.1), ..w.ee_pose };
        drive(&sim, &mut w, lift, 12);
        assert_abs_diff_eq!(w.objects["cube"].pose.position.z, 0.12, epsilon = 1e-12);
        let pred = SuccessPredicate::Lift { object: "cube".into() };
        assert!(sim.evaluate_success(&w, &pred).unwrap());
    }

    #[test]
    fn misaligned_yaw_does_not_grasp() {
        let sim = Simulator::default();
        let center = Vec3::new(0.0, 0.0, 0.02);
        let ee = Pose::new(center, top_down(0.4), 1.0);
        let mut w = world(ee, vec![("cube", cube_at(&sim, center))]);
        drive(&sim, &mut w, ee.with_gripper(0.0), 10);
        assert_eq!(w.attached_id(), None);

        // A quarter turn is equivalent for a square cube.
        let ee = Pose::new(center, top_down(std::f64::consts::FRAC_PI_2 + 0.05), 1.0);
        let mut w = world(ee, vec![("cube", cube_at(&sim, center))]);
        drive(&sim, &mut w, ee.with_gripper(0.0), 10);
        assert_eq!(w.attached_id(), Some("cube"));
    }

    #[test]
    fn closed_fingers_push_a_cube() {
        let sim = Simulator::default();
        let center = Vec3::new(0.0, 0.0, 0.02);
        let r = sim.config().contact_radius;
        let ee = Pose::new(center - Vec3::new(r, 0.0, 0.0), top_down(0.0), 0.0);
        let mut w = world(ee, vec![("cube", cube_at(&sim, center))]);
        let target = Pose { position: ee.position + Vec3::new(0.02, 0.0, 0.0), ..ee };
        drive(&sim, &mut w, target, 2);
        assert_abs_diff_eq!(w.objects["cube"].pose.position.x, 0.02, epsilon = 1e-12);
        assert_abs_diff_eq!(w.objects["cube"].pose.position.y, 0.0, epsilon = 1e-15);

        // Moving away leaves it in place.
        drive(&sim, &mut w, ee, 3);
        assert_abs_diff_eq!(w.objects["cube"].pose.position.x, 0.02, epsilon = 1e-12);
    }

    #[test]
    fn speed_caps_hold() {
        let sim = Simulator::default();
        let c = sim.config().clone();
        let ee = Pose::new(Vec3::new(0.0, 0.0, 0.2), top_down(0.0), 0.0);
        let mut w = world(ee, vec![]);
        let target = Pose::new(Vec3::new(0.3, -0.2, 0.05), top_down(2.0), 1.0);
        let before = w.ee_pose;
        sim.step_in_place(&mut w, &target).unwrap();
        assert_abs_diff_eq!((w.ee_pose.position - before.position).norm(), c.max_ee_speed, epsilon = 1e-12);
        assert_abs_diff_eq!(
            before.orientation.angle_to(&w.ee_pose.orientation),
            c.max_ee_angular,
            epsilon = 1e-9
        );
        assert_abs_diff_eq!(w.ee_pose.gripper, c.max_gripper_rate, epsilon = 1e-15);
        assert!(sim.step(&w, &Pose { gripper: f64::NAN, ..target }).is_err());
    }

    #[test]
    fn stack_predicate() {
        let sim = Simulator::default();
        let ee = Pose::new(Vec3::new(0.0, 0.0, 0.3), top_down(0.0), 1.0);
        let mut w = world(
            ee,
            vec![
                ("a", cube_at(&sim, Vec3::new(0.1, 0.1, 0.06))),
                ("b", cube_at(&sim, Vec3::new(0.1, 0.1, 0.02))),
            ],
        );
        let pred = SuccessPredicate::Stack { top: "a".into(), base: "b".into() };
        assert!(sim.evaluate_success(&w, &pred).unwrap());
        w.attached = Some(Attachment { object: "a".into(), offset: Transform::identity() });
        assert!(!sim.evaluate_success(&w, &pred).unwrap());
        let missing = SuccessPredicate::Lift { object: "nope".into() };
        assert!(sim.evaluate_success(&w, &missing).is_err());
    }

    #[test]
    fn lift_predicate_threshold() {
        let sim = Simulator::default();
        let mut w = grasped_cube(&sim);
        let pred = SuccessPredicate::Lift { object: "cube".into() };
        assert!(!sim.evaluate_success(&w, &pred).unwrap());
        w.objects.get_mut("cube").unwrap().pose.position.z = 0.08;
        assert!(sim.evaluate_success(&w, &pred).unwrap());
        w.attached = None;
        assert!(!sim.evaluate_success(&w, &pred).unwrap());
    }

    #[test]
    fn release_drops_onto_support() {
        let sim = Simulator::default();
        let base = Vec3::new(0.0, 0.1, 0.02);
        let top = Vec3::new(0.002, 0.1, 0.075);
        let ee = Pose::new(top, top_down(0.0), 1.0);
        let mut w = world(ee, vec![("a", cube_at(&sim, top)), ("b", cube_at(&sim, base))]);
        drive(&sim, &mut w, ee.with_gripper(0.0), 10);
        assert_eq!(w.attached_id(), Some("a"));
        drive(&sim, &mut w, ee.with_gripper(1.0), 10);
        assert_eq!(w.attached_id(), None);
        assert_abs_diff_eq!(w.objects["a"].pose.position.z, 0.06, epsilon = 1e-12);
    }

    #[test]
    fn pinhole_projection() {
        let sim = Simulator::default();
        let cam = sim.camera(CameraId::Front, &Pose::new(Vec3::zeros(), Quat::identity(), 0.0));
        let centre = cam.project(Vec3::from(sim.config().cameras.look_at)).unwrap();
        assert_abs_diff_eq!(centre[0], cam.cx, epsilon = 1e-9);
        assert_abs_diff_eq!(centre[1], cam.cy, epsilon = 1e-9);

        let left = cam.pose.transform_point(Vec3::new(-0.1, 0.0, 0.5));
        let uv = cam.project(left).unwrap();
        assert_abs_diff_eq!(uv[0] - cam.cx, -100.0, epsilon = 1e-9);
        assert_abs_diff_eq!(uv[1], cam.cy, epsilon = 1e-9);

        let behind = cam.pose.transform_point(Vec3::new(0.0, 0.0, -0.2));
        assert_eq!(cam.project(behind), None);
    }

    #[test]
    fn hand_camera_moves_with_a_held_object() {
        let sim = Simulator::default();
        let mut w = grasped_cube(&sim);
        let uv = |w: &WorldState| {
            sim.camera(CameraId::Hand, &w.ee_pose).project(w.objects["cube"].pose.position).unwrap()
        };
        let before = uv(&w);
        // The hand camera looks straight down, so world x/y is parallel to its image plane.
        let target = Pose { position: w.ee_pose.position + Vec3::new(0.03, -0.02, 0.0), ..w.ee_pose };
        drive(&sim, &mut w, target, 5);
        let after = uv(&w);
        assert_abs_diff_eq!(before[0], after[0], epsilon = 1e-9);
        assert_abs_diff_eq!(before[1], after[1], epsilon = 1e-9);

        let front = sim.camera(CameraId::Front, &w.ee_pose);
        let w0 = grasped_cube(&sim);
        assert_ne!(
            front.project(w0.objects["cube"].pose.position),
            front.project(w.objects["cube"].pose.position)
        );
    }

    #[test]
    fn observation_lists_all_keypoints() {
        let sim = Simulator::default();
        let w = grasped_cube(&sim);
        let obs = sim.observe(&w);
        assert_eq!(obs.step, 9);
        assert_eq!(obs.cameras.front.len(), 1 + 8 + 1);
        assert_eq!(obs.cameras.get(CameraId::Hand).len(), obs.cameras.side.len());
        assert_eq!(obs.cameras.front.last().unwrap().id, "ee");
        let json = serde_json::to_string(&obs).unwrap();
        assert_eq!(serde_json::from_str::<ObservationFrame>(&json).unwrap(), obs);
    }

    #[test]
    fn stepping_is_deterministic() {
        let sim = Simulator::default();
        let run = || {
            let mut w = grasped_cube(&sim);
            let mut log = Vec::new();
            for i in 0..30 {
                let t = Pose::new(
                    Vec3::new(0.01 * i as f64, 0.05, 0.1 + 0.002 * i as f64),
                    top_down(0.05 * i as f64),
                    if i > 20 { 1.0 } else { 0.0 },
                );
                sim.step_in_place(&mut w, &t).unwrap();
                log.push(serde_json::to_string(&w).unwrap());
            }
            log
        };
        assert_eq!(run(), run());
    }
}
