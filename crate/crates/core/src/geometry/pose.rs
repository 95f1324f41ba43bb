use serde::{Deserialize, Serialize};

use super::rotation::Quat;
use super::vector::Vec3;
use crate::scalar::Scalar;

/// Rigid transform: rotation followed by translation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar + Serialize", deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct Transform<T> {
    pub position: Vec3<T>,
    pub orientation: Quat<T>,
}

impl<T: Scalar> Transform<T> {
    pub fn new(position: Vec3<T>, orientation: Quat<T>) -> Self {
        Self { position, orientation: orientation.normalized() }
    }

    pub fn identity() -> Self {
        Self::new(Vec3::zeros(), Quat::identity())
    }

    pub fn from_translation(position: Vec3<T>) -> Self {
        Self::new(position, Quat::identity())
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &Self) -> Self {
        Self::new(
            self.position + self.orientation.rotate(other.position),
            self.orientation * other.orientation,
        )
    }

    pub fn inverse(&self) -> Self {
        let q = self.orientation.inverse();
        Self::new(-q.rotate(self.position), q)
    }

    pub fn transform_point(&self, p: Vec3<T>) -> Vec3<T> {
        self.position + self.orientation.rotate(p)
    }

    pub fn is_finite(&self) -> bool {
        self.position.is_finite() && self.orientation.is_finite()
    }
}

impl<T: Scalar> Default for Transform<T> {
    fn default() -> Self {
        Self::identity()
    }
}

/// End-effector configuration: position (m, world frame), orientation and
/// gripper aperture in `[0, 1]` (0 = closed, 1 = open).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar + Serialize", deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct Pose<T> {
    pub position: Vec3<T>,
    pub orientation: Quat<T>,
    pub gripper: T,
}

impl<T: Scalar> Pose<T> {
    pub fn new(position: Vec3<T>, orientation: Quat<T>, gripper: T) -> Self {
        Self { position, orientation: orientation.normalized(), gripper: clamp_unit(gripper) }
    }

    pub fn from_transform(t: Transform<T>, gripper: T) -> Self {
        Self::new(t.position, t.orientation, gripper)
    }

    pub fn transform(&self) -> Transform<T> {
        Transform { position: self.position, orientation: self.orientation }
    }

    pub fn with_gripper(mut self, gripper: T) -> Self {
        self.gripper = clamp_unit(gripper);
        self
    }

    pub fn is_finite(&self) -> bool {
        self.position.is_finite() && self.orientation.is_finite() && self.gripper.is_finite()
    }

    pub fn cast<U: Scalar>(self) -> Pose<U> {
        Pose::new(self.position.cast(), self.orientation.cast(), U::from(self.gripper).unwrap())
    }
}

pub(crate) fn clamp_unit<T: Scalar>(v: T) -> T {
    v.max(T::zero()).min(T::one())
}
