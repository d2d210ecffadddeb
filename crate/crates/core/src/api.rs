//! Flat-buffer entry points for host-language bindings: scenes from mesh
//! paths plus instance records, batched transform updates as row-major
//! 3×4 matrices, and depth images as `f32` arrays.

use crate::camera::{generate_camera_rays, CameraError, CameraModel};
use crate::depth::{run_pipeline, DepthError, DepthImage, NoiseConfig};
use crate::geometry::{GeometryError, RigidTransform, Rotation, Vec3};
use crate::mesh::{MeshError, TriangleMesh};
use crate::raycast::cast_grouped;
use crate::scene::{GroupId, MeshInstance, Prototype, Scene, SceneError};
use nalgebra::Matrix3;
use std::path::Path;
use std::sync::Arc;
use thiserror::Error;

/// Rotation blocks coming through single-precision buffers drift by about
/// 1e-7; anything within this tolerance is re-orthonormalized.
pub const MATRIX_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Error)]
pub enum ApiError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Camera(#[from] CameraError),
    #[error(transparent)]
    Depth(#[from] DepthError),
    #[error("transform {index}: {source}")]
    Transform { index: usize, source: GeometryError },
    #[error("expected {expected} values, got {found}")]
    BufferLength { expected: usize, found: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstanceRecord {
    pub prototype: usize,
    pub group: GroupId,
    /// Row-major `[R | t]`.
    pub matrix: [f64; 12],
}

impl InstanceRecord {
    pub fn new(prototype: usize, transform: &RigidTransform, group: GroupId) -> Self {
        InstanceRecord { prototype, group, matrix: transform_to_matrix(transform) }
    }
}

pub fn transform_to_matrix(t: &RigidTransform) -> [f64; 12] {
    let r = t.rotation.matrix();
    let p = t.translation;
    [r[(0, 0)], r[(0, 1)], r[(0, 2)], p.x, r[(1, 0)], r[(1, 1)], r[(1, 2)], p.y, r[(2, 0)], r[(2, 1)], r[(2, 2)], p.z]
}

pub fn matrix_to_transform(m: &[f64; 12]) -> Result<RigidTransform, GeometryError> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(GeometryError::NonFinite);
    }
    let r = Matrix3::new(m[0], m[1], m[2], m[4], m[5], m[6], m[8], m[9], m[10]);
    let rotation = Rotation::from_matrix_lossy(r, MATRIX_TOLERANCE)?;
    Ok(RigidTransform::new(rotation, Vec3::new(m[3], m[7], m[11])))
}

/// Loads each OBJ once and seals the scene.
pub fn build_scene<P: AsRef<Path>>(prototype_paths: &[P], records: &[InstanceRecord]) -> Result<Scene, ApiError> {
    let prototypes = prototype_paths
        .iter()
        .map(|p| Ok(Arc::new(Prototype::new(TriangleMesh::load_obj(p.as_ref())?)?)))
        .collect::<Result<Vec<_>, ApiError>>()?;
    build_scene_from_prototypes(prototypes, records)
}

pub fn build_scene_from_prototypes(
    prototypes: Vec<Arc<Prototype>>,
    records: &[InstanceRecord],
) -> Result<Scene, ApiError> {
    let instances = records
        .iter()
        .enumerate()
        .map(|(index, r)| {
            let t = matrix_to_transform(&r.matrix).map_err(|source| ApiError::Transform { index, source })?;
            Ok(MeshInstance::new(r.prototype, t, r.group))
        })
        .collect::<Result<Vec<_>, ApiError>>()?;
    Ok(Scene::seal(prototypes, instances)?)
}

/// `matrices` holds one row-major 3×4 block per index. Either every update
/// is applied or none is.
pub fn set_transform_matrices(scene: &mut Scene, indices: &[usize], matrices: &[f64]) -> Result<(), ApiError> {
    if matrices.len() != indices.len() * 12 {
        return Err(ApiError::BufferLength { expected: indices.len() * 12, found: matrices.len() });
    }
    let updates = indices
        .iter()
        .zip(matrices.chunks_exact(12))
        .map(|(&i, m)| {
            Ok((
                i,
                matrix_to_transform(m.try_into().expect("chunk of 12"))
                    .map_err(|source| ApiError::Transform { index: i, source })?,
            ))
        })
        .collect::<Result<Vec<_>, ApiError>>()?;
    Ok(scene.set_transforms(&updates)?)
}

/// Grouped depth image for one camera, row-major. Without noise the
/// values are metric ranges with misses at `far`; with a noise config the
/// full corruption, inpainting and normalization chain is applied and the
/// values lie in `[0, 1]`.
pub fn render_depth(
    scene: &Scene,
    camera: &CameraModel,
    group: GroupId,
    noise: Option<&NoiseConfig>,
) -> Result<Vec<f32>, ApiError> {
    let image = render_depth_image(scene, camera, group, noise)?;
    Ok(image.values.iter().map(|&v| v as f32).collect())
}

pub fn render_depth_image(
    scene: &Scene,
    camera: &CameraModel,
    group: GroupId,
    noise: Option<&NoiseConfig>,
) -> Result<DepthImage, ApiError> {
    let rays = generate_camera_rays(camera, group)?;
    let raw = DepthImage::from_depth_map(&cast_grouped(&rays, scene))?;
    match noise {
        Some(cfg) => Ok(run_pipeline(&raw, cfg, camera.near, camera.far)?),
        None => Ok(raw),
    }
}
