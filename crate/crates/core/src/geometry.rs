//! Rigid transforms, Z-Y-X Euler angles and the hybrid tracking frame.
//!
//! Every rotation in this crate is a 3×3 matrix `R` mapping local
//! coordinates to parent coordinates (`v_parent = R · v_local`), so the
//! columns of `R` are the local axes expressed in the parent frame.
//!
//! Euler angles use a single convention everywhere: intrinsic Z-Y-X
//! (yaw, then pitch, then roll), i.e. `R = R_z(yaw) · R_y(pitch) · R_x(roll)`.

use nalgebra::{Matrix3, Quaternion, UnitQuaternion};
use std::f64::consts::{FRAC_PI_2, PI};
use std::ops::Mul;
use thiserror::Error;

pub type Vec3 = nalgebra::Vector3<f64>;

/// Orthonormality tolerance for stored rotations.
pub const ROTATION_TOLERANCE: f64 = 1e-9;
/// Pitch distance from ±π/2 below which yaw and roll are not separable.
pub const GIMBAL_TOLERANCE: f64 = 1e-6;
/// Accepted deviation of a serialized quaternion from unit norm.
pub const QUATERNION_NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum GeometryError {
    /// Pitch is within [`GIMBAL_TOLERANCE`] of ±π/2. `fallback` carries the
    /// decomposition with yaw forced to zero.
    #[error("gimbal lock: pitch {pitch} is within {GIMBAL_TOLERANCE} of ±π/2")]
    GimbalLock { pitch: f64, fallback: EulerRPY },
    #[error("quaternion norm {norm} deviates from 1 by more than {QUATERNION_NORM_TOLERANCE}")]
    QuaternionNotUnit { norm: f64 },
    #[error("matrix is not a proper rotation (orthonormality error {error})")]
    NotRotation { error: f64 },
    #[error("non-finite value in transform")]
    NonFinite,
}

/// A proper rotation stored as a 3×3 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation(Matrix3<f64>);

impl Rotation {
    pub fn identity() -> Self {
        Rotation(Matrix3::identity())
    }

    /// Wraps a matrix after checking orthonormality and `det = +1`.
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self, GeometryError> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        let error = orthonormality_error(&m);
        if error > ROTATION_TOLERANCE || (m.determinant() - 1.0).abs() > ROTATION_TOLERANCE {
            return Err(GeometryError::NotRotation { error });
        }
        Ok(Rotation(m))
    }

    /// Like [`Rotation::from_matrix`] but first projects a nearly orthonormal
    /// matrix back onto SO(3). Matrices further than `tolerance` away are
    /// rejected.
    pub fn from_matrix_lossy(m: Matrix3<f64>, tolerance: f64) -> Result<Self, GeometryError> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        let error = orthonormality_error(&m);
        if error > tolerance || m.determinant() <= 0.0 {
            return Err(GeometryError::NotRotation { error });
        }
        Ok(Rotation(gram_schmidt(m)))
    }

    /// Builds a rotation from a quaternion given as `(w, x, y, z)`. The
    /// quaternion is normalized if its norm is within
    /// [`QUATERNION_NORM_TOLERANCE`] of one and rejected otherwise.
    pub fn from_quaternion(w: f64, x: f64, y: f64, z: f64) -> Result<Self, GeometryError> {
        let q = Quaternion::new(w, x, y, z);
        let norm = q.norm();
        if !norm.is_finite() {
            return Err(GeometryError::NonFinite);
        }
        if (norm - 1.0).abs() > QUATERNION_NORM_TOLERANCE {
            return Err(GeometryError::QuaternionNotUnit { norm });
        }
        let unit = UnitQuaternion::new_normalize(q);
        Ok(Rotation(*unit.to_rotation_matrix().matrix()))
    }

    /// Returns `(w, x, y, z)` with `w ≥ 0`.
    pub fn to_quaternion(&self) -> [f64; 4] {
        let rot = nalgebra::Rotation3::from_matrix_unchecked(self.0);
        let q = UnitQuaternion::from_rotation_matrix(&rot);
        let s = if q.w < 0.0 { -1.0 } else { 1.0 };
        [s * q.w, s * q.i, s * q.j, s * q.k]
    }

    pub fn rot_x(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Rotation(Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c))
    }

    pub fn rot_y(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Rotation(Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c))
    }

    pub fn rot_z(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Rotation(Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn inverse(&self) -> Self {
        Rotation(self.0.transpose())
    }

    pub fn apply(&self, v: &Vec3) -> Vec3 {
        self.0 * v
    }

    /// Applies the inverse rotation without forming it.
    pub fn apply_inverse(&self, v: &Vec3) -> Vec3 {
        self.0.tr_mul(v)
    }

    /// Geodesic distance: the axis-angle magnitude of `selfᵀ · other`, in `[0, π]`.
    pub fn angle_to(&self, other: &Rotation) -> f64 {
        (self.inverse() * *other).angle()
    }

    /// Axis-angle magnitude of this rotation, in `[0, π]`.
    pub fn angle(&self) -> f64 {
        let m = &self.0;
        let sin_vec = Vec3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]);
        let sin = 0.5 * sin_vec.norm();
        let cos = 0.5 * (m.trace() - 1.0);
        sin.atan2(cos)
    }

    pub fn orthonormality_error(&self) -> f64 {
        orthonormality_error(&self.0)
    }
}

impl Mul for Rotation {
    type Output = Rotation;

    fn mul(self, rhs: Rotation) -> Rotation {
        let m = self.0 * rhs.0;
        if orthonormality_error(&m) > ROTATION_TOLERANCE {
            Rotation(gram_schmidt(m))
        } else {
            Rotation(m)
        }
    }
}

fn orthonormality_error(m: &Matrix3<f64>) -> f64 {
    (m.transpose() * m - Matrix3::identity()).abs().max()
}

fn gram_schmidt(m: Matrix3<f64>) -> Matrix3<f64> {
    let x = m.column(0).normalize();
    let y = (m.column(1) - x * x.dot(&m.column(1))).normalize();
    let z = x.cross(&y);
    Matrix3::from_columns(&[x, y, z])
}

/// Rotation plus translation; maps local points to the parent frame as
/// `p_parent = R · p_local + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Rotation,
    pub translation: Vec3,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn new(rotation: Rotation, translation: Vec3) -> Self {
        RigidTransform { rotation, translation }
    }

    pub fn identity() -> Self {
        Self::new(Rotation::identity(), Vec3::zeros())
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Self::new(Rotation::identity(), translation)
    }

    /// Parses the on-disk layout: translation followed by a `(w, x, y, z)` quaternion.
    pub fn from_translation_quaternion(t: [f64; 3], q: [f64; 4]) -> Result<Self, GeometryError> {
        if t.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        let rotation = Rotation::from_quaternion(q[0], q[1], q[2], q[3])?;
        Ok(Self::new(rotation, Vec3::from(t)))
    }

    pub fn to_translation_quaternion(&self) -> ([f64; 3], [f64; 4]) {
        (self.translation.into(), self.rotation.to_quaternion())
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation.apply(&other.translation) + self.translation,
        }
    }

    pub fn invert(&self) -> RigidTransform {
        let rotation = self.rotation.inverse();
        RigidTransform { rotation, translation: -rotation.apply(&self.translation) }
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation.apply(p) + self.translation
    }

    pub fn inverse_transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation.apply_inverse(&(p - self.translation))
    }

    pub fn transform_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation.apply(v)
    }

    /// Largest absolute entry difference of rotation and translation.
    pub fn max_abs_diff(&self, other: &RigidTransform) -> f64 {
        let r = (self.rotation.matrix() - other.rotation.matrix()).abs().max();
        let t = (self.translation - other.translation).abs().max();
        r.max(t)
    }
}

impl Mul for RigidTransform {
    type Output = RigidTransform;

    fn mul(self, rhs: RigidTransform) -> RigidTransform {
        self.compose(&rhs)
    }
}

/// Roll, pitch and yaw in radians for the Z-Y-X convention.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EulerRPY {
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

impl EulerRPY {
    pub fn new(roll: f64, pitch: f64, yaw: f64) -> Self {
        EulerRPY { roll, pitch, yaw }
    }
}

/// Maps an angle into `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    if w <= -PI {
        w += 2.0 * PI;
    }
    w
}

/// Decomposes `r = R_z(yaw) · R_y(pitch) · R_x(roll)`.
///
/// Near `pitch = ±π/2` only `roll ∓ yaw` is observable; the decomposition
/// with yaw = 0 is returned inside [`GeometryError::GimbalLock`].
pub fn euler_from_rotation(r: &Rotation) -> Result<EulerRPY, GeometryError> {
    let m = r.matrix();
    let cos_pitch = m[(0, 0)].hypot(m[(1, 0)]);
    let pitch = (-m[(2, 0)]).atan2(cos_pitch);
    if FRAC_PI_2 - pitch.abs() < GIMBAL_TOLERANCE {
        // With yaw = 0 the upper-right 2×2 block is a pure function of roll.
        let roll = if pitch > 0.0 { m[(0, 1)].atan2(m[(1, 1)]) } else { (-m[(0, 1)]).atan2(m[(1, 1)]) };
        return Err(GeometryError::GimbalLock { pitch, fallback: EulerRPY::new(wrap_angle(roll), pitch, 0.0) });
    }
    let yaw = m[(1, 0)].atan2(m[(0, 0)]);
    let roll = m[(2, 1)].atan2(m[(2, 2)]);
    Ok(EulerRPY::new(wrap_angle(roll), pitch, wrap_angle(yaw)))
}

/// `R_z(yaw) · R_y(pitch) · R_x(roll)`, multiplied in exactly that order.
pub fn rotation_from_euler(e: &EulerRPY) -> Rotation {
    Rotation::rot_z(e.yaw) * Rotation::rot_y(e.pitch) * Rotation::rot_x(e.roll)
}

/// Yaw of a rotation without the full decomposition; fails only at gimbal lock.
pub fn yaw_of(r: &Rotation) -> Result<f64, GeometryError> {
    euler_from_rotation(r).map(|e| e.yaw)
}

/// The hybrid tracking frame: planar position and heading from the robot
/// root, height and tilt from the reference root.
///
/// Translation is `(x_robot, y_robot, z_ref)` and rotation is
/// `R_z(yaw_robot) · R_y(pitch_ref) · R_x(roll_ref)`.
pub fn relative_frame(t_ref: &RigidTransform, t_robot: &RigidTransform) -> Result<RigidTransform, GeometryError> {
    let reference = euler_from_rotation(&t_ref.rotation)?;
    let robot = euler_from_rotation(&t_robot.rotation)?;
    let rotation = rotation_from_euler(&EulerRPY::new(reference.roll, reference.pitch, robot.yaw));
    let translation = Vec3::new(t_robot.translation.x, t_robot.translation.y, t_ref.translation.z);
    Ok(RigidTransform::new(rotation, translation))
}
