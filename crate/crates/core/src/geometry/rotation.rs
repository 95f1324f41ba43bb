use std::ops::Mul;

use serde::{de::Error as _, Deserialize, Deserializer, Serialize, Serializer};

use super::vector::Vec3;
use crate::scalar::Scalar;

/// Unit quaternion `(w, x, y, z)`.
///
/// Every constructor and product renormalizes, so `|q| = 1` holds to
/// within a few ulps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quat<T> {
    pub w: T,
    pub x: T,
    pub y: T,
    pub z: T,
}

/// Roll, pitch and yaw (radians) of the extrinsic rotation `Rz(yaw) Ry(pitch) Rx(roll)`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Rpy<T> {
    pub roll: T,
    pub pitch: T,
    pub yaw: T,
}

impl<T: Scalar> Rpy<T> {
    pub fn new(roll: T, pitch: T, yaw: T) -> Self {
        Self { roll, pitch, yaw }
    }

    pub fn to_array(self) -> [T; 3] {
        [self.roll, self.pitch, self.yaw]
    }
}

/// Wraps an angle into `[-pi, pi]`.
pub fn wrap_angle<T: Scalar>(a: T) -> T {
    let pi = T::PI();
    if a >= -pi && a <= pi {
        return a;
    }
    let two_pi = pi + pi;
    let mut r = (a + pi) % two_pi;
    if r < T::zero() {
        r = r + two_pi;
    }
    (r - pi).max(-pi).min(pi)
}

impl<T: Scalar> Default for Quat<T> {
    fn default() -> Self {
        Self::identity()
    }
}

impl<T: Scalar> Quat<T> {
    pub fn identity() -> Self {
        Self { w: T::one(), x: T::zero(), y: T::zero(), z: T::zero() }
    }

    /// Builds a quaternion from raw components and renormalizes. A zero
    /// quaternion maps to the identity.
    pub fn new(w: T, x: T, y: T, z: T) -> Self {
        Self { w, x, y, z }.normalized()
    }

    pub fn norm(&self) -> T {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn normalized(self) -> Self {
        let n = self.norm();
        if !n.is_finite() || n <= T::epsilon() {
            return Self::identity();
        }
        let inv = T::one() / n;
        Self { w: self.w * inv, x: self.x * inv, y: self.y * inv, z: self.z * inv }
    }

    pub fn from_axis_angle(axis: Vec3<T>, angle: T) -> Self {
        match axis.normalized() {
            None => Self::identity(),
            Some(a) => {
                let half = angle / T::lit(2.0);
                let s = half.sin();
                Self::new(half.cos(), a.x * s, a.y * s, a.z * s)
            }
        }
    }

    pub fn from_rpy(rpy: Rpy<T>) -> Self {
        let two = T::lit(2.0);
        let (sr, cr) = (rpy.roll / two).sin_cos();
        let (sp, cp) = (rpy.pitch / two).sin_cos();
        let (sy, cy) = (rpy.yaw / two).sin_cos();
        Self::new(
            cr * cp * cy + sr * sp * sy,
            sr * cp * cy - cr * sp * sy,
            cr * sp * cy + sr * cp * sy,
            cr * cp * sy - sr * sp * cy,
        )
    }

    /// From a row-major rotation matrix.
    pub fn from_matrix(m: [[T; 3]; 3]) -> Self {
        let one = T::one();
        let quarter = T::lit(0.25);
        let half = T::lit(0.5);
        let trace = m[0][0] + m[1][1] + m[2][2];
        if trace > T::zero() {
            let s = half / (trace + one).sqrt();
            Self::new(quarter / s, (m[2][1] - m[1][2]) * s, (m[0][2] - m[2][0]) * s, (m[1][0] - m[0][1]) * s)
        } else if m[0][0] > m[1][1] && m[0][0] > m[2][2] {
            let s = T::lit(2.0) * (one + m[0][0] - m[1][1] - m[2][2]).sqrt();
            Self::new((m[2][1] - m[1][2]) / s, quarter * s, (m[0][1] + m[1][0]) / s, (m[0][2] + m[2][0]) / s)
        } else if m[1][1] > m[2][2] {
            let s = T::lit(2.0) * (one + m[1][1] - m[0][0] - m[2][2]).sqrt();
            Self::new((m[0][2] - m[2][0]) / s, (m[0][1] + m[1][0]) / s, quarter * s, (m[1][2] + m[2][1]) / s)
        } else {
            let s = T::lit(2.0) * (one + m[2][2] - m[0][0] - m[1][1]).sqrt();
            Self::new((m[1][0] - m[0][1]) / s, (m[0][2] + m[2][0]) / s, (m[1][2] + m[2][1]) / s, quarter * s)
        }
    }

    pub fn conjugate(&self) -> Self {
        Self { w: self.w, x: -self.x, y: -self.y, z: -self.z }
    }

    /// Inverse of a unit quaternion.
    pub fn inverse(&self) -> Self {
        self.conjugate()
    }

    pub fn dot(&self, o: &Self) -> T {
        self.w * o.w + self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn vector(&self) -> Vec3<T> {
        Vec3::new(self.x, self.y, self.z)
    }

    pub fn rotate(&self, v: Vec3<T>) -> Vec3<T> {
        // v' = v + 2 w (u x v) + 2 u x (u x v)
        let u = self.vector();
        let two = T::lit(2.0);
        let t = u.cross(&v) * two;
        v + t * self.w + u.cross(&t)
    }

    /// Rotation angle in `[0, pi]`.
    pub fn angle(&self) -> T {
        let two = T::lit(2.0);
        two * self.vector().norm().atan2(self.w.abs())
    }

    /// Angle of the relative rotation between `self` and `other`.
    pub fn angle_to(&self, other: &Self) -> T {
        (*other * self.inverse()).angle()
    }

    /// Distance between the two sign representatives, `min(|a - b|, |a + b|)`.
    pub fn distance(&self, o: &Self) -> T {
        let d = |s: T| {
            let dw = self.w - s * o.w;
            let dx = self.x - s * o.x;
            let dy = self.y - s * o.y;
            let dz = self.z - s * o.z;
            (dw * dw + dx * dx + dy * dy + dz * dz).sqrt()
        };
        d(T::one()).min(d(-T::one()))
    }

    /// Rotation matrix, row-major.
    pub fn to_matrix(&self) -> [[T; 3]; 3] {
        let (w, x, y, z) = (self.w, self.x, self.y, self.z);
        let one = T::one();
        let two = T::lit(2.0);
        [
            [one - two * (y * y + z * z), two * (x * y - w * z), two * (x * z + w * y)],
            [two * (x * y + w * z), one - two * (x * x + z * z), two * (y * z - w * x)],
            [two * (x * z - w * y), two * (y * z + w * x), one - two * (x * x + y * y)],
        ]
    }

    /// Roll-pitch-yaw decomposition, each component in `[-pi, pi]`.
    ///
    /// At gimbal lock (pitch = +-pi/2) yaw is fixed to zero and the residual
    /// rotation about the shared axis is assigned to roll.
    pub fn to_rpy(&self) -> Rpy<T> {
        let m = self.to_matrix();
        let cos_pitch = (m[0][0] * m[0][0] + m[1][0] * m[1][0]).sqrt();
        let pitch = (-m[2][0]).atan2(cos_pitch);
        if cos_pitch <= T::lit(1e-12) {
            let roll = if -m[2][0] > T::zero() { m[0][1].atan2(m[1][1]) } else { (-m[0][1]).atan2(m[1][1]) };
            return Rpy::new(wrap_angle(roll), pitch, T::zero());
        }
        let roll = m[2][1].atan2(m[2][2]);
        let yaw = m[1][0].atan2(m[0][0]);
        Rpy::new(wrap_angle(roll), wrap_angle(pitch), wrap_angle(yaw))
    }

    /// Spherical interpolation along the shorter arc. The endpoints are
    /// returned unchanged: `t <= 0` gives `self`, `t >= 1` gives `other`.
    pub fn slerp(&self, other: &Self, t: T) -> Self {
        if t <= T::zero() {
            return *self;
        }
        if t >= T::one() {
            return *other;
        }
        let mut rel = self.inverse() * *other;
        if rel.w < T::zero() {
            rel = Self { w: -rel.w, x: -rel.x, y: -rel.y, z: -rel.z };
        }
        let v = rel.vector();
        let s = v.norm();
        if s <= T::epsilon() {
            return *self;
        }
        let angle = T::lit(2.0) * s.atan2(rel.w);
        *self * Self::from_axis_angle(v, angle * t)
    }

    pub fn is_finite(&self) -> bool {
        self.w.is_finite() && self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_array(self) -> [T; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn cast<U: Scalar>(self) -> Quat<U> {
        Quat::new(
            U::from(self.w).unwrap(),
            U::from(self.x).unwrap(),
            U::from(self.y).unwrap(),
            U::from(self.z).unwrap(),
        )
    }
}

impl<T: Scalar> Mul for Quat<T> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Self::new(
            self.w * o.w - self.x * o.x - self.y * o.y - self.z * o.z,
            self.w * o.x + self.x * o.w + self.y * o.z - self.z * o.y,
            self.w * o.y - self.x * o.z + self.y * o.w + self.z * o.x,
            self.w * o.z + self.x * o.y - self.y * o.x + self.z * o.w,
        )
    }
}

impl<T: Scalar + Serialize> Serialize for Quat<T> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        [self.w, self.x, self.y, self.z].serialize(s)
    }
}

// Stored components are kept bit-for-bit; only gross denormalization is rejected.
impl<'de, T: Scalar + Deserialize<'de>> Deserialize<'de> for Quat<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let [w, x, y, z] = <[T; 4]>::deserialize(d)?;
        let q = Quat { w, x, y, z };
        if !q.is_finite() || (q.norm() - T::one()).abs() > T::lit(1e-6) {
            return Err(D::Error::custom("quaternion is not unit length"));
        }
        Ok(q)
    }
}
