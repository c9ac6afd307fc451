use nalgebra::{Matrix3, Matrix4, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A rigid body transform `x -> R x + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self::new(Matrix3::identity(), translation)
    }

    pub fn from_rotation(rotation: Matrix3<f64>) -> Self {
        Self::new(rotation, Vector3::zeros())
    }

    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Self {
        let axis = nalgebra::Unit::new_normalize(*axis);
        Self::from_rotation(*Rotation3::from_axis_angle(&axis, angle).matrix())
    }

    /// URDF `origin` convention: fixed-axis roll, pitch, yaw, i.e.
    /// `R = Rz(yaw) * Ry(pitch) * Rx(roll)`.
    pub fn from_xyz_rpy(xyz: [f64; 3], rpy: [f64; 3]) -> Self {
        let rot = Rotation3::from_axis_angle(&Vector3::z_axis(), rpy[2])
            * Rotation3::from_axis_angle(&Vector3::y_axis(), rpy[1])
            * Rotation3::from_axis_angle(&Vector3::x_axis(), rpy[0]);
        Self::new(*rot.matrix(), Vector3::from(xyz))
    }

    /// Builds a transform from a 16-element row-major homogeneous matrix.
    pub fn from_row_major(m: &[f64]) -> Result<Self> {
        if m.len() != 16 {
            return Err(Error::Dimension {
                expected: 16,
                actual: m.len(),
            });
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("non-finite pose entry".into()));
        }
        let rotation = Matrix3::new(m[0], m[1], m[2], m[4], m[5], m[6], m[8], m[9], m[10]);
        let translation = Vector3::new(m[3], m[7], m[11]);
        Ok(Self::new(rotation, translation))
    }

    pub fn to_row_major(&self) -> [f64; 16] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[(0, 0)],
            r[(0, 1)],
            r[(0, 2)],
            t.x,
            r[(1, 0)],
            r[(1, 1)],
            r[(1, 2)],
            t.y,
            r[(2, 0)],
            r[(2, 1)],
            r[(2, 2)],
            t.z,
            0.0,
            0.0,
            0.0,
            1.0,
        ]
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    #[inline]
    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    #[inline]
    pub fn rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform::new(
            self.rotation * other.rotation,
            self.rotation * other.translation + self.translation,
        )
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform::new(rt, -(rt * self.translation))
    }

    /// Largest deviation from `RᵀR = I` and `det R = 1`.
    pub fn orthonormality_error(&self) -> f64 {
        let gram = self.rotation.transpose() * self.rotation - Matrix3::identity();
        let ortho = gram.abs().max();
        ortho.max((self.rotation.determinant() - 1.0).abs())
    }

    pub fn is_rigid(&self, tol: f64) -> bool {
        self.translation.iter().all(|v| v.is_finite()) && self.orthonormality_error() <= tol
    }

    /// Projects the rotation onto SO(3) (nearest rotation in Frobenius norm).
    pub fn orthonormalized(&self) -> RigidTransform {
        let rot = Rotation3::from_matrix_eps(&self.rotation, 1e-15, 100, Rotation3::identity());
        RigidTransform::new(*rot.matrix(), self.translation)
    }

    pub fn quaternion(&self) -> UnitQuaternion<f64> {
        UnitQuaternion::from_matrix(&self.rotation)
    }

    /// Intrinsic X-Y-Z Euler angles `(a, b, c)` with `R = Rx(a) Ry(b) Rz(c)`.
    pub fn euler_xyz(&self) -> Vector3<f64> {
        euler_xyz(&self.rotation)
    }

    /// Geodesic angle of `R_self R_otherᵀ` in `[0, π]`.
    pub fn rotation_angle_to(&self, other: &RigidTransform) -> f64 {
        let rel = self.rotation * other.rotation.transpose();
        let c = ((rel.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
        c.acos()
    }
}

impl std::ops::Mul for RigidTransform {
    type Output = RigidTransform;

    fn mul(self, rhs: RigidTransform) -> RigidTransform {
        self.compose(&rhs)
    }
}

impl std::ops::Mul<&RigidTransform> for &RigidTransform {
    type Output = RigidTransform;

    fn mul(self, rhs: &RigidTransform) -> RigidTransform {
        self.compose(rhs)
    }
}

pub(crate) fn euler_xyz(r: &Matrix3<f64>) -> Vector3<f64> {
    let b = r[(0, 2)].clamp(-1.0, 1.0).asin();
    let a = (-r[(1, 2)]).atan2(r[(2, 2)]);
    let c = (-r[(0, 1)]).atan2(r[(0, 0)]);
    Vector3::new(a, b, c)
}

pub fn rotation_from_euler_xyz(e: &Vector3<f64>) -> Matrix3<f64> {
    let rot = Rotation3::from_axis_angle(&Vector3::x_axis(), e.x)
        * Rotation3::from_axis_angle(&Vector3::y_axis(), e.y)
        * Rotation3::from_axis_angle(&Vector3::z_axis(), e.z);
    *rot.matrix()
}

#[inline]
pub(crate) fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn rpy_matches_fixed_axis_convention() {
        let t = RigidTransform::from_xyz_rpy([0.0; 3], [0.0, 0.0, FRAC_PI_2]);
        let p = t.transform_point(&Vector3::x());
        assert!((p - Vector3::y()).norm() < 1e-12);
        let t = RigidTransform::from_xyz_rpy([0.0; 3], [FRAC_PI_2, 0.0, 0.0]);
        let p = t.transform_point(&Vector3::y());
        assert!((p - Vector3::z()).norm() < 1e-12);
    }

    #[test]
    fn inverse_composes_to_identity() {
        let t = RigidTransform::from_xyz_rpy([0.3, -1.0, 2.0], [0.1, -0.7, 2.9]);
        let id = t * t.inverse();
        assert!((id.rotation - Matrix3::identity()).abs().max() < 1e-12);
        assert!(id.translation.norm() < 1e-12);
    }

    #[test]
    fn row_major_round_trip() {
        let t = RigidTransform::from_xyz_rpy([0.3, -1.0, 2.0], [0.1, -0.7, 2.9]);
        let back = RigidTransform::from_row_major(&t.to_row_major()).unwrap();
        assert_eq!(t, back);
        assert!(RigidTransform::from_row_major(&[0.0; 12]).is_err());
    }

    #[test]
    fn euler_round_trip_away_from_gimbal_lock() {
        let e = Vector3::new(0.4, -0.9, 2.5);
        let r = rotation_from_euler_xyz(&e);
        assert!((euler_xyz(&r) - e).norm() < 1e-12);
        let e = Vector3::new(-PI + 0.01, 0.2, PI - 0.02);
        assert!((euler_xyz(&rotation_from_euler_xyz(&e)) - e).norm() < 1e-12);
    }

    #[test]
    fn geodesic_angle() {
        let a = RigidTransform::from_axis_angle(&Vector3::new(1.0, 2.0, 3.0), 0.7);
        let b = RigidTransform::identity();
        assert!((a.rotation_angle_to(&b) - 0.7).abs() < 1e-12);
        let c = RigidTransform::from_axis_angle(&Vector3::z(), PI);
        assert!((c.rotation_angle_to(&b) - PI).abs() < 1e-7);
    }
}
