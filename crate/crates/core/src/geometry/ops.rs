//! The 7-DoF delta-action calculus over end-effector poses.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::pose::{clamp_unit, Pose, Transform};
use super::rotation::{wrap_angle, Quat, Rpy};
use super::vector::Vec3;
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GeometryError {
    #[error("empty plan: a stage needs at least one step")]
    EmptyPlan,
}

/// Corrective action between two poses: world-frame translation, the
/// roll/pitch/yaw of the world-frame relative rotation, and the gripper
/// aperture change.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DeltaAction<T> {
    pub d_position: Vec3<T>,
    pub d_rotation: Rpy<T>,
    pub d_gripper: T,
}

impl<T: Scalar> DeltaAction<T> {
    pub fn zero() -> Self {
        Self { d_position: Vec3::zeros(), d_rotation: Rpy::default(), d_gripper: T::zero() }
    }

    /// Builds an action, wrapping rotations into `[-pi, pi]` and clamping the
    /// gripper change into `[-1, 1]`.
    pub fn new(d_position: Vec3<T>, d_rotation: Rpy<T>, d_gripper: T) -> Self {
        Self {
            d_position,
            d_rotation: Rpy::new(
                wrap_angle(d_rotation.roll),
                wrap_angle(d_rotation.pitch),
                wrap_angle(d_rotation.yaw),
            ),
            d_gripper: d_gripper.max(-T::one()).min(T::one()),
        }
    }

    /// `[dx, dy, dz, roll, pitch, yaw, d_gripper]`.
    pub fn to_array(&self) -> [T; 7] {
        [
            self.d_position.x,
            self.d_position.y,
            self.d_position.z,
            self.d_rotation.roll,
            self.d_rotation.pitch,
            self.d_rotation.yaw,
            self.d_gripper,
        ]
    }

    pub fn from_array(a: [T; 7]) -> Self {
        Self::new(Vec3::new(a[0], a[1], a[2]), Rpy::new(a[3], a[4], a[5]), a[6])
    }

    pub fn norm(&self) -> T {
        self.to_array().iter().fold(T::zero(), |acc, v| acc + *v * *v).sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.to_array().iter().all(|v| *v == T::zero())
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

impl<T: Scalar + Serialize> Serialize for DeltaAction<T> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_array().serialize(s)
    }
}

impl<'de, T: Scalar + Deserialize<'de>> Deserialize<'de> for DeltaAction<T> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let a = <[T; 7]>::deserialize(d)?;
        // Keep stored bits; values written by this crate already satisfy the bounds.
        let pi = T::PI();
        if a[3..6].iter().any(|r| *r < -pi || *r > pi) || a[6] < -T::one() || a[6] > T::one() {
            return Err(serde::de::Error::custom("delta action component out of range"));
        }
        Ok(Self {
            d_position: Vec3::new(a[0], a[1], a[2]),
            d_rotation: Rpy::new(a[3], a[4], a[5]),
            d_gripper: a[6],
        })
    }
}

/// Translational (m) and angular (rad) separation of two poses.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoseDistance<T> {
    pub translational: T,
    pub angular: T,
}

/// The action taking `from` to `to`: `apply_delta(from, delta_action(from, to)) == to`.
pub fn delta_action<T: Scalar>(from: &Pose<T>, to: &Pose<T>) -> DeltaAction<T> {
    let relative = to.orientation * from.orientation.inverse();
    DeltaAction::new(to.position - from.position, relative.to_rpy(), to.gripper - from.gripper)
}

/// Executes an action: translate, left-multiply the orientation by the
/// rotation built from the action's roll/pitch/yaw, add the gripper change
/// and clamp to `[0, 1]`.
pub fn apply_delta<T: Scalar>(pose: &Pose<T>, action: &DeltaAction<T>) -> Pose<T> {
    Pose::new(
        pose.position + action.d_position,
        Quat::from_rpy(action.d_rotation) * pose.orientation,
        clamp_unit(pose.gripper + action.d_gripper),
    )
}

/// `steps` poses from just after `start` up to and including `end`.
///
/// Position and gripper are interpolated linearly, orientation along the
/// shorter great arc. The last element is `end` itself.
pub fn interpolate_stage<T: Scalar>(
    start: &Pose<T>,
    end: &Pose<T>,
    steps: usize,
) -> Result<Vec<Pose<T>>, GeometryError> {
    if steps == 0 {
        return Err(GeometryError::EmptyPlan);
    }
    let n = T::from_usize(steps).unwrap();
    let mut out = Vec::with_capacity(steps);
    for i in 1..steps {
        let t = T::from_usize(i).unwrap() / n;
        out.push(Pose::new(
            start.position.lerp(&end.position, t),
            start.orientation.slerp(&end.orientation, t),
            start.gripper + (end.gripper - start.gripper) * t,
        ));
    }
    out.push(*end);
    Ok(out)
}

pub fn pose_distance<T: Scalar>(p: &Pose<T>, q: &Pose<T>) -> PoseDistance<T> {
    transform_distance(&p.transform(), &q.transform())
}

pub fn transform_distance<T: Scalar>(p: &Transform<T>, q: &Transform<T>) -> PoseDistance<T> {
    PoseDistance {
        translational: (q.position - p.position).norm(),
        angular: p.orientation.angle_to(&q.orientation),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_6, PI};

    fn yaw(a: f64) -> Quat<f64> {
        Quat::from_axis_angle(Vec3::new(0.0, 0.0, 1.0), a)
    }

    // Rz(yaw) * Ry(pitch) * Rx(roll) by plain matrix products.
    fn rpy_matrix(r: Rpy<f64>) -> [[f64; 3]; 3] {
        let (cr, sr) = (r.roll.cos(), r.roll.sin());
        let (cp, sp) = (r.pitch.cos(), r.pitch.sin());
        let (cy, sy) = (r.yaw.cos(), r.yaw.sin());
        let rx = [[1.0, 0.0, 0.0], [0.0, cr, -sr], [0.0, sr, cr]];
        let ry = [[cp, 0.0, sp], [0.0, 1.0, 0.0], [-sp, 0.0, cp]];
        let rz = [[cy, -sy, 0.0], [sy, cy, 0.0], [0.0, 0.0, 1.0]];
        let mul = |a: [[f64; 3]; 3], b: [[f64; 3]; 3]| {
            let mut m = [[0.0; 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    m[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
                }
            }
            m
        };
        mul(rz, mul(ry, rx))
    }

    #[test]
    fn yaw_delta_against_matrix_oracle() {
        let p_d = Pose::new(Vec3::new(0.1, 0.2, 0.3), yaw(FRAC_PI_6), 0.5);
        let p_c = Pose::new(Vec3::new(0.1, 0.2, 0.3), Quat::identity(), 0.5);
        let a = delta_action(&p_d, &p_c);
        assert_abs_diff_eq!(a.d_rotation.roll, 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(a.d_rotation.pitch, 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(a.d_rotation.yaw, -FRAC_PI_6, epsilon = 1e-9);
        assert_eq!(a.d_position, Vec3::zeros());

        let m = rpy_matrix(a.d_rotation);
        let composed = Quat::from_matrix(m) * p_d.orientation;
        assert!(composed.distance(&p_c.orientation) < 1e-9);
    }

    #[test]
    fn rpy_matches_matrix_convention() {
        let r = Rpy::new(0.3, -0.4, 1.1);
        let a = Quat::from_rpy(r).to_matrix();
        let b = rpy_matrix(r);
        for i in 0..3 {
            for j in 0..3 {
                assert_abs_diff_eq!(a[i][j], b[i][j], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn gripper_clamps_on_apply() {
        let p = Pose::new(Vec3::zeros(), Quat::identity(), 0.5);
        let a = DeltaAction::new(Vec3::new(0.0, 0.0, 0.1), Rpy::default(), -1.0);
        let q = apply_delta(&p, &a);
        assert_abs_diff_eq!(q.position.z, 0.1, epsilon = 1e-15);
        assert_eq!(q.gripper, 0.0);
    }

    #[test]
    fn distances() {
        let p = Pose::new(Vec3::zeros(), Quat::identity(), 0.0);
        let q = Pose::new(Vec3::new(0.3, 0.4, 0.0), yaw(FRAC_PI_2), 1.0);
        let d = pose_distance(&p, &q);
        assert_abs_diff_eq!(d.translational, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(d.angular, FRAC_PI_2, epsilon = 1e-9);
        assert_eq!(transform_distance(&p.transform(), &q.transform()), d);
    }

    #[test]
    fn slerp_takes_the_short_arc() {
        // q and -q' are nearly antipodal as 4-vectors but close as rotations.
        let a = yaw(0.2);
        let b = yaw(0.6);
        let b_neg = Quat::new(-b.w, -b.x, -b.y, -b.z);
        let mid = a.slerp(&b_neg, 0.5);
        assert_abs_diff_eq!(a.angle_to(&mid), 0.2, epsilon = 1e-9);
        assert!(mid.distance(&yaw(0.4)) < 1e-9);

        let axis = Vec3::new(1.0, -2.0, 0.5);
        let c = Quat::from_axis_angle(axis, 2.5) * a;
        let m = a.slerp(&c, 0.5);
        assert_abs_diff_eq!(a.angle_to(&m), a.angle_to(&c) / 2.0, epsilon = 1e-9);
    }

    #[test]
    fn interpolation_ends_exactly() {
        let s = Pose::new(Vec3::zeros(), Quat::identity(), 1.0);
        let e = Pose::new(Vec3::new(0.1, -0.2, 0.05), yaw(-2.9), 0.0);
        let path = interpolate_stage(&s, &e, 7).unwrap();
        assert_eq!(path.len(), 7);
        assert_eq!(*path.last().unwrap(), e);
        assert_abs_diff_eq!(path[0].position.x, 0.1 / 7.0, epsilon = 1e-15);
        assert_eq!(interpolate_stage(&s, &e, 1).unwrap(), vec![e]);
        assert_eq!(interpolate_stage(&s, &e, 0), Err(GeometryError::EmptyPlan));
    }

    #[test]
    fn serde_shapes() {
        let a = DeltaAction::new(Vec3::new(0.01, 0.0, -0.02), Rpy::new(0.0, 0.1, PI), 0.5);
        let json = serde_json::to_string(&a).unwrap();
        assert_eq!(json, format!("[0.01,0.0,-0.02,0.0,0.1,{PI},0.5]"));
        assert_eq!(serde_json::from_str::<DeltaAction<f64>>(&json).unwrap(), a);
        assert!(serde_json::from_str::<DeltaAction<f64>>("[0,0,0,4.0,0,0,0]").is_err());
        assert!(serde_json::from_str::<DeltaAction<f64>>("[0,0,0,0,0,0,1.5]").is_err());

        let p = Pose::new(Vec3::new(1.0, 2.0, 3.0), yaw(0.7), 0.25);
        let back: Pose<f64> = serde_json::from_str(&serde_json::to_string(&p).unwrap()).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn single_precision_round_trip() {
        let p = Pose::<f32>::new(Vec3::new(0.1, 0.2, 0.3), Quat::from_rpy(Rpy::new(0.1, 0.2, 0.3)), 0.2);
        let q = Pose::<f32>::new(Vec3::new(-0.1, 0.0, 0.4), Quat::from_rpy(Rpy::new(-0.3, 0.5, 2.0)), 0.9);
        let back = apply_delta(&p, &delta_action(&p, &q));
        assert!((back.position - q.position).norm() < 1e-5);
        assert!(back.orientation.distance(&q.orientation) < 1e-5);
    }

    fn arb_pose() -> impl Strategy<Value = Pose<f64>> {
        (prop::array::uniform3(-1.0f64..1.0), prop::array::uniform4(-1.0f64..1.0), 0.0f64..=1.0)
            .prop_filter("degenerate quaternion", |(_, q, _)| q.iter().map(|v| v * v).sum::<f64>() > 1e-3)
            .prop_map(|(p, q, g)| Pose::new(Vec3::from(p), Quat::new(q[0], q[1], q[2], q[3]), g))
    }

    proptest! {
        #[test]
        fn delta_round_trips(p in arb_pose(), q in arb_pose()) {
            let a = delta_action(&p, &q);
            let back = apply_delta(&p, &a);
            prop_assert!((back.position - q.position).norm() <= 1e-9);
            prop_assert!(back.orientation.distance(&q.orientation) <= 1e-9);
            prop_assert!((back.gripper - q.gripper).abs() <= 1e-12);
            for r in a.d_rotation.to_array() {
                prop_assert!((-PI..=PI).contains(&r));
            }
        }

        #[test]
        fn self_delta_is_zero(p in arb_pose()) {
            let a = delta_action(&p, &p);
            prop_assert!(a.norm() <= 1e-12);
        }

        #[test]
        fn interpolation_respects_endpoints(p in arb_pose(), q in arb_pose(), n in 1usize..60) {
            let path = interpolate_stage(&p, &q, n).unwrap();
            prop_assert_eq!(path.len(), n);
            prop_assert_eq!(path[n - 1], q);
            let total = p.orientation.angle_to(&q.orientation);
            for w in path.windows(2) {
                prop_assert!(w[0].orientation.angle_to(&w[1].orientation) <= total / n as f64 + 1e-9);
            }
        }
    }
}
