//! Rigid transforms, rotation helpers and the few vector utilities the
//! pipeline needs.
//!
//! Conventions: right-handed axes, lengths in meters, quaternions stored
//! `(w, x, y, z)` with `w >= 0`. The body canonical frame has +Y superior,
//! +Z anterior and its origin at the pelvis root.

use nalgebra::{Matrix3, Matrix4, Quaternion, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Largest tolerated deviation from unit norm when reading a quaternion.
const QUAT_NORM_TOL: f64 = 1e-6;

/// A proper rigid motion `p -> R p + t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidTransform {
    rotation: UnitQuaternion<f64>,
    translation: Vec3,
}

fn canonical(q: UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    if q.w < 0.0 {
        UnitQuaternion::new_unchecked(-q.into_inner())
    } else {
        q
    }
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: UnitQuaternion::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn new(rotation: UnitQuaternion<f64>, translation: Vec3) -> Self {
        let mut rotation = rotation;
        rotation.renormalize();
        Self {
            rotation: canonical(rotation),
            translation,
        }
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Self::new(UnitQuaternion::identity(), translation)
    }

    /// Builds from raw `(w, x, y, z)` components, rejecting non-finite or
    /// clearly non-unit input. Components already unit to 1e-12 are kept
    /// bit-for-bit so serialization round-trips exactly.
    pub fn from_wxyz(q: [f64; 4], translation: [f64; 3]) -> Result<Self> {
        if q.iter().chain(translation.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Schema("rigid transform has non-finite components".into()));
        }
        let raw = Quaternion::new(q[0], q[1], q[2], q[3]);
        let norm = raw.norm();
        if (norm - 1.0).abs() > QUAT_NORM_TOL {
            return Err(Error::Schema(format!(
                "rotation quaternion norm {norm} is not 1"
            )));
        }
        let rotation = if (norm - 1.0).abs() <= 1e-12 {
            UnitQuaternion::new_unchecked(raw)
        } else {
            UnitQuaternion::new_normalize(raw)
        };
        Ok(Self {
            rotation: canonical(rotation),
            translation: Vec3::from(translation),
        })
    }

    /// From a rotation matrix assumed orthonormal.
    pub fn from_matrix(rotation: &Mat3, translation: Vec3) -> Self {
        let rot = nalgebra::Rotation3::from_matrix_unchecked(*rotation);
        Self::new(UnitQuaternion::from_rotation_matrix(&rot), translation)
    }

    pub fn rotation(&self) -> &UnitQuaternion<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> Vec3 {
        self.translation
    }

    pub fn rotation_matrix(&self) -> Mat3 {
        self.rotation.to_rotation_matrix().into_inner()
    }

    pub fn wxyz(&self) -> [f64; 4] {
        let q = self.rotation.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform::new(
            self.rotation * other.rotation,
            self.rotation * other.translation + self.translation,
        )
    }

    pub fn inverse(&self) -> RigidTransform {
        let inv = self.rotation.inverse();
        RigidTransform::new(inv, -(inv * self.translation))
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn apply_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }

    pub fn transform_points(&self, pts: &[Vec3]) -> Vec<Vec3> {
        let r = self.rotation_matrix();
        pts.iter().map(|p| r * p + self.translation).collect()
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation_matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Geodesic rotation distance to `other`, radians.
    pub fn rotation_angle_to(&self, other: &RigidTransform) -> f64 {
        self.rotation.angle_to(&other.rotation)
    }

    /// Rotation quaternion norm deviation from 1.
    pub fn norm_error(&self) -> f64 {
        (self.rotation.quaternion().norm() - 1.0).abs()
    }
}

pub fn compose(a: &RigidTransform, b: &RigidTransform) -> RigidTransform {
    a.compose(b)
}

pub fn invert(t: &RigidTransform) -> RigidTransform {
    t.inverse()
}

pub fn transform_points(t: &RigidTransform, pts: &[Vec3]) -> Vec<Vec3> {
    t.transform_points(pts)
}

/// Component of `v` orthogonal to the unit `plane_normal`.
pub fn project_onto_plane(v: &Vec3, plane_normal: &Vec3) -> Vec3 {
    v - plane_normal * v.dot(plane_normal)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Plane {
    normal: Vec3,
    point: Vec3,
}

impl Plane {
    /// The normal is normalized; a (near) zero normal is rejected.
    pub fn new(normal: Vec3, point: Vec3) -> Result<Self> {
        let n = normal.norm();
        if !(n > 1e-12) || !n.is_finite() {
            return Err(Error::DegenerateDirection("plane normal has zero length"));
        }
        Ok(Self {
            normal: normal / n,
            point,
        })
    }

    pub fn normal(&self) -> Vec3 {
        self.normal
    }

    pub fn point(&self) -> Vec3 {
        self.point
    }

    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        (p - self.point).dot(&self.normal)
    }

    pub fn project_vector(&self, v: &Vec3) -> Vec3 {
        project_onto_plane(v, &self.normal)
    }
}

pub fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Rotation matrix from an axis-angle (rotation) vector.
pub fn exp_so3(r: &Vec3) -> Mat3 {
    let theta = r.norm();
    let k = skew(r);
    if theta < 1e-8 {
        return Mat3::identity() + k + k * k * 0.5;
    }
    let a = theta.sin() / theta;
    let b = (1.0 - theta.cos()) / (theta * theta);
    Mat3::identity() + k * a + k * k * b
}

/// Axis-angle vector of an orthonormal rotation matrix.
pub fn log_so3(m: &Mat3) -> Vec3 {
    let rot = nalgebra::Rotation3::from_matrix_unchecked(*m);
    UnitQuaternion::from_rotation_matrix(&rot).scaled_axis()
}

/// Left Jacobian of SO(3): maps an axis-angle rate to the spatial angular
/// velocity, `dR · Rᵀ = [J_l(r) dr]×`.
pub fn left_jacobian_so3(r: &Vec3) -> Mat3 {
    let theta = r.norm();
    let k = skew(r);
    if theta < 1e-6 {
        return Mat3::identity() + k * 0.5 + k * k * (1.0 / 6.0);
    }
    let t2 = theta * theta;
    let a = (1.0 - theta.cos()) / t2;
    let b = (theta - theta.sin()) / (t2 * theta);
    Mat3::identity() + k * a + k * k * b
}

/// Rotation by `angle` radians about the unit `axis`.
pub fn rotation_about(axis: &Vec3, angle: f64) -> Mat3 {
    exp_so3(&(axis * angle))
}

pub fn unit_quaternion_about(axis: &Vec3, angle: f64) -> UnitQuaternion<f64> {
    UnitQuaternion::from_axis_angle(&Unit::new_normalize(*axis), angle)
}

/// Angle of the twist component of `m` about the unit `axis`.
pub fn twist_angle(m: &Mat3, axis: &Vec3) -> f64 {
    let rot = nalgebra::Rotation3::from_matrix_unchecked(*m);
    let q = UnitQuaternion::from_rotation_matrix(&rot);
    let v = Vec3::new(q.i, q.j, q.k);
    let a = 2.0 * v.dot(axis).atan2(q.w);
    wrap_angle(a)
}

/// Wraps an angle to `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut x = a % two_pi;
    if x <= -std::f64::consts::PI {
        x += two_pi;
    } else if x > std::f64::consts::PI {
        x -= two_pi;
    }
    x
}

/// Clamped `arccos`, never NaN for finite input.
pub fn safe_acos(x: f64) -> f64 {
    x.clamp(-1.0, 1.0).acos()
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RigidTransformRepr {
    rotation_wxyz: [f64; 4],
    translation_m: [f64; 3],
}

impl Serialize for RigidTransform {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        RigidTransformRepr {
            rotation_wxyz: self.wxyz(),
            translation_m: self.translation.into(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for RigidTransform {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = RigidTransformRepr::deserialize(d)?;
        RigidTransform::from_wxyz(repr.rotation_wxyz, repr.translation_m)
            .map_err(serde::de::Error::custom)
    }
}

/// Serde helper for `Vec3` as a `[x, y, z]` array.
pub(crate) mod vec3_serde {
    use super::Vec3;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Vec3, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq([v.x, v.y, v.z])
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec3, D::Error> {
        let a = <[f64; 3]>::deserialize(d)?;
        Ok(Vec3::from(a))
    }
}
