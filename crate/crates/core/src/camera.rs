//! Pinhole depth camera.
//!
//! Camera coordinates follow the optical convention: +z looks forward, +x
//! points right in the image and +y points down. Pixel `(col, row)` covers
//! `[col, col+1) × [row, row+1)` and its ray passes through the center.

use crate::geometry::{RigidTransform, Rotation, Vec3};
use crate::raycast::{RayBatch, RayError};
use crate::scene::GroupId;
use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CameraError {
    #[error("focal lengths must be positive (fx = {fx}, fy = {fy})")]
    InvalidFocalLength { fx: f64, fy: f64 },
    #[error("clip planes must satisfy far > near > 0 (near = {near}, far = {far})")]
    InvalidClip { near: f64, far: f64 },
    #[error("resolution must be non-zero")]
    EmptyResolution,
    #[error("look-at direction is degenerate")]
    DegenerateLookAt,
    #[error(transparent)]
    Ray(#[from] RayError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    /// Camera-to-world transform.
    pub pose: RigidTransform,
    pub near: f64,
    pub far: f64,
}

/// Intrinsics and clip planes as they appear in config files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraIntrinsics {
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub near: f64,
    pub far: f64,
}

impl CameraModel {
    pub fn new(intrinsics: CameraIntrinsics, pose: RigidTransform) -> Result<Self, CameraError> {
        let CameraIntrinsics { width, height, fx, fy, cx, cy, near, far } = intrinsics;
        let cam = CameraModel { fx, fy, cx, cy, width, height, pose, near, far };
        cam.validate()?;
        Ok(cam)
    }

    /// Centered principal point and a horizontal field of view in radians.
    pub fn with_fov(
        width: usize,
        height: usize,
        hfov: f64,
        pose: RigidTransform,
        near: f64,
        far: f64,
    ) -> Result<Self, CameraError> {
        let f = 0.5 * width as f64 / (0.5 * hfov).tan();
        Self::new(
            CameraIntrinsics {
                width,
                height,
                fx: f,
                fy: f,
                cx: 0.5 * width as f64,
                cy: 0.5 * height as f64,
                near,
                far,
            },
            pose,
        )
    }

    pub fn validate(&self) -> Result<(), CameraError> {
        if !(self.fx > 0.0 && self.fy > 0.0 && self.fx.is_finite() && self.fy.is_finite()) {
            return Err(CameraError::InvalidFocalLength { fx: self.fx, fy: self.fy });
        }
        if !(self.near > 0.0 && self.far > self.near && self.far.is_finite()) {
            return Err(CameraError::InvalidClip { near: self.near, far: self.far });
        }
        if self.width == 0 || self.height == 0 {
            return Err(CameraError::EmptyResolution);
        }
        Ok(())
    }

    pub fn intrinsics(&self) -> CameraIntrinsics {
        CameraIntrinsics {
            width: self.width,
            height: self.height,
            fx: self.fx,
            fy: self.fy,
            cx: self.cx,
            cy: self.cy,
            near: self.near,
            far: self.far,
        }
    }

    /// World-space viewing direction of the optical axis.
    pub fn forward(&self) -> Vec3 {
        self.pose.rotation.apply(&Vec3::z())
    }

    /// Unit ray direction in camera coordinates through image point `(u, v)`.
    pub fn camera_direction(&self, u: f64, v: f64) -> Vec3 {
        Vec3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0).normalize()
    }
}

/// Camera pose at `eye` looking at `target`, with image-up as close to `up` as possible.
pub fn look_at(eye: Vec3, target: Vec3, up: Vec3) -> Result<RigidTransform, CameraError> {
    let forward = target - eye;
    if forward.norm() == 0.0 {
        return Err(CameraError::DegenerateLookAt);
    }
    let z = forward.normalize();
    let right = z.cross(&up);
    if right.norm() < 1e-12 {
        return Err(CameraError::DegenerateLookAt);
    }
    let x = right.normalize();
    let y = z.cross(&x);
    let rotation = Rotation::from_matrix_lossy(Matrix3::from_columns(&[x, y, z]), 1e-9)
        .map_err(|_| CameraError::DegenerateLookAt)?;
    Ok(RigidTransform::new(rotation, eye))
}

/// One ray per pixel in row-major order, all starting at the camera center,
/// with `max_range = far`.
pub fn generate_camera_rays(cam: &CameraModel, group_id: GroupId) -> Result<RayBatch, CameraError> {
    cam.validate()?;
    let n = cam.width * cam.height;
    let mut directions = Vec::with_capacity(n);
    for row in 0..cam.height {
        for col in 0..cam.width {
            let d = cam.camera_direction(col as f64 + 0.5, row as f64 + 0.5);
            directions.push(cam.pose.rotation.apply(&d));
        }
    }
    Ok(RayBatch::with_shape(
        vec![cam.pose.translation; n],
        directions,
        vec![group_id; n],
        cam.far,
        cam.width,
        cam.height,
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn intrinsics(width: usize, height: usize, f: f64) -> CameraIntrinsics {
        CameraIntrinsics {
            width,
            height,
            fx: f,
            fy: f,
            cx: 0.5 * width as f64,
            cy: 0.5 * height as f64,
            near: 0.1,
            far: 5.0,
        }
    }

    #[test]
    fn single_pixel_looks_forward() {
        let cam = CameraModel::new(intrinsics(1, 1, 1.0), RigidTransform::identity()).unwrap();
        let batch = generate_camera_rays(&cam, 2).unwrap();
        assert_eq!(batch.len(), 1);
        assert_eq!(batch.directions[0], Vec3::z());
        assert_eq!(batch.group_ids, vec![2]);
        assert_eq!(batch.max_range, 5.0);
    }

    #[test]
    fn central_pixel_follows_pose() {
        let pose = look_at(Vec3::new(1.0, 2.0, 3.0), Vec3::new(4.0, -1.0, 0.5), Vec3::z()).unwrap();
        let cam = CameraModel::new(intrinsics(63, 47, 40.0), pose).unwrap();
        let batch = generate_camera_rays(&cam, 0).unwrap();
        let center = batch.directions[23 * 63 + 31];
        assert!((center - cam.forward()).norm() < 1e-9);
        assert!((cam.forward() - Vec3::new(3.0, -3.0, -2.5).normalize()).norm() < 1e-12);
    }

    #[test]
    fn look_at_keeps_image_up() {
        let pose = look_at(Vec3::zeros(), Vec3::x(), Vec3::z()).unwrap();
        // image +y (down) maps to world -z
        assert!((pose.rotation.apply(&Vec3::y()) + Vec3::z()).norm() < 1e-12);
        assert!((pose.rotation.apply(&Vec3::x()) + Vec3::y()).norm() < 1e-12);
        assert!(look_at(Vec3::zeros(), Vec3::z(), Vec3::z()).is_err());
    }

    #[test]
    fn rejects_bad_intrinsics() {
        let mut i = intrinsics(4, 4, 1.0);
        i.fx = 0.0;
        assert!(matches!(CameraModel::new(i, RigidTransform::identity()), Err(CameraError::InvalidFocalLength { .. })));
        let mut i = intrinsics(4, 4, 1.0);
        i.far = i.near;
        assert!(matches!(CameraModel::new(i, RigidTransform::identity()), Err(CameraError::InvalidClip { .. })));
        let i = intrinsics(0, 4, 1.0);
        assert!(matches!(CameraModel::new(i, RigidTransform::identity()), Err(CameraError::EmptyResolution)));
    }
}
