//! Grouped ray casting against sealed scenes.
//!
//! Every ray carries a collision group. A ray sees the static group and
//! its own group, nothing else. [`cast_grouped`] reaches those instances
//! through the precomputed [`GroupIndex`](crate::scene::GroupIndex);
//! [`cast_naive`] scans the full instance table per ray and filters by
//! group inline. Both produce bit-identical depths.
//!
//! Batches are split into contiguous chunks cast by independent rayon
//! workers, each writing its own slice of the output.

use crate::bvh::MIN_HIT_DISTANCE;
use crate::geometry::{RigidTransform, Vec3};
use crate::scene::{GroupId, Prototype, Scene, STATIC_GROUP};
use rayon::prelude::*;
use thiserror::Error;

/// Rays per parallel work item.
pub const CHUNK_SIZE: usize = 256;
/// Accepted deviation of a ray direction from unit length.
pub const DIRECTION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RayError {
    #[error("ray direction has zero or non-finite length")]
    DegenerateDirection,
    #[error("ray origin is not finite")]
    NonFiniteOrigin,
    #[error("max range must be positive and finite, got {0}")]
    InvalidRange(f64),
    #[error("batch arrays have mismatched lengths ({origins} origins, {directions} directions, {groups} groups)")]
    LengthMismatch { origins: usize, directions: usize, groups: usize },
    #[error("shape {width}x{height} does not match {count} rays")]
    ShapeMismatch { width: usize, height: usize, count: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub direction: Vec3,
    pub group_id: GroupId,
    pub max_range: f64,
}

impl Ray {
    /// Normalizes `direction`.
    pub fn new(origin: Vec3, direction: Vec3, group_id: GroupId, max_range: f64) -> Result<Ray, RayError> {
        if !origin.iter().all(|c| c.is_finite()) {
            return Err(RayError::NonFiniteOrigin);
        }
        if !(max_range > 0.0 && max_range.is_finite()) {
            return Err(RayError::InvalidRange(max_range));
        }
        let norm = direction.norm();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(RayError::DegenerateDirection);
        }
        Ok(Ray { origin, direction: direction / norm, group_id, max_range })
    }
}

/// Structure-of-arrays ray batch sharing one maximum range. `width × height`
/// describes how the rays are laid out as an image (row-major).
#[derive(Debug, Clone, PartialEq)]
pub struct RayBatch {
    pub origins: Vec<Vec3>,
    pub directions: Vec<Vec3>,
    pub group_ids: Vec<GroupId>,
    pub max_range: f64,
    pub width: usize,
    pub height: usize,
}

impl RayBatch {
    /// A `len × 1` batch. Directions are normalized.
    pub fn new(
        origins: Vec<Vec3>,
        directions: Vec<Vec3>,
        group_ids: Vec<GroupId>,
        max_range: f64,
    ) -> Result<Self, RayError> {
        let width = origins.len();
        Self::with_shape(origins, directions, group_ids, max_range, width, 1)
    }

    pub fn with_shape(
        origins: Vec<Vec3>,
        mut directions: Vec<Vec3>,
        group_ids: Vec<GroupId>,
        max_range: f64,
        width: usize,
        height: usize,
    ) -> Result<Self, RayError> {
        if origins.len() != directions.len() || origins.len() != group_ids.len() {
            return Err(RayError::LengthMismatch {
                origins: origins.len(),
                directions: directions.len(),
                groups: group_ids.len(),
            });
        }
        if width * height != origins.len() {
            return Err(RayError::ShapeMismatch { width, height, count: origins.len() });
        }
        if !(max_range > 0.0 && max_range.is_finite()) {
            return Err(RayError::InvalidRange(max_range));
        }
        if origins.iter().any(|o| !o.iter().all(|c| c.is_finite())) {
            return Err(RayError::NonFiniteOrigin);
        }
        for d in directions.iter_mut() {
            let norm = d.norm();
            if !(norm > 0.0 && norm.is_finite()) {
                return Err(RayError::DegenerateDirection);
            }
            if (norm - 1.0).abs() > DIRECTION_TOLERANCE {
                *d /= norm;
            }
        }
        Ok(RayBatch { origins, directions, group_ids, max_range, width, height })
    }

    pub fn from_rays(rays: &[Ray]) -> Result<Self, RayError> {
        let max_range = rays.first().map_or(1.0, |r| r.max_range);
        if rays.iter().any(|r| r.max_range != max_range) {
            return Err(RayError::InvalidRange(f64::NAN));
        }
        Self::new(
            rays.iter().map(|r| r.origin).collect(),
            rays.iter().map(|r| r.direction).collect(),
            rays.iter().map(|r| r.group_id).collect(),
            max_range,
        )
    }

    pub fn len(&self) -> usize {
        self.origins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.origins.is_empty()
    }

    pub fn ray(&self, i: usize) -> Ray {
        Ray {
            origin: self.origins[i],
            direction: self.directions[i],
            group_id: self.group_ids[i],
            max_range: self.max_range,
        }
    }
}

/// Per-ray nearest-hit distances laid out as an image. Misses hold `max_range`.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub width: usize,
    pub height: usize,
    pub max_range: f64,
    pub values: Vec<f64>,
}

impl DepthMap {
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn is_miss(&self, i: usize) -> bool {
        self.values[i] >= self.max_range
    }
}

/// Nearest hit of a ray with one transformed prototype, in `(1e-6, max_range]`.
pub fn intersect(ray: &Ray, prototype: &Prototype, transform: &RigidTransform) -> Option<f64> {
    let origin = transform.inverse_transform_point(&ray.origin);
    let dir = transform.rotation.apply_inverse(&ray.direction);
    prototype
        .bvh
        .intersect(&prototype.mesh, &origin, &dir, ray.max_range)
        .map(|h| h.t)
        .filter(|&t| t > MIN_HIT_DISTANCE)
}

#[derive(Clone, Copy)]
enum Strategy {
    Grouped,
    Naive,
}

/// Casts with the precomputed group index: each ray visits the static
/// instances and the instances of its own group only.
pub fn cast_grouped(batch: &RayBatch, scene: &Scene) -> DepthMap {
    cast(batch, scene, Strategy::Grouped, None)
}

/// Baseline: each ray scans the whole group table and intersects the
/// instances whose group is static or equal to its own.
pub fn cast_naive(batch: &RayBatch, scene: &Scene) -> DepthMap {
    cast(batch, scene, Strategy::Naive, None)
}

/// [`cast_grouped`] plus the number of instance entries each ray visited.
pub fn cast_grouped_counted(batch: &RayBatch, scene: &Scene) -> (DepthMap, Vec<u32>) {
    let mut visits = vec![0u32; batch.len()];
    let depth = cast(batch, scene, Strategy::Grouped, Some(&mut visits));
    (depth, visits)
}

/// [`cast_naive`] plus the number of group-table entries each ray scanned.
pub fn cast_naive_counted(batch: &RayBatch, scene: &Scene) -> (DepthMap, Vec<u32>) {
    let mut visits = vec![0u32; batch.len()];
    let depth = cast(batch, scene, Strategy::Naive, Some(&mut visits));
    (depth, visits)
}

fn cast(batch: &RayBatch, scene: &Scene, strategy: Strategy, visits: Option<&mut [u32]>) -> DepthMap {
    let mut values = vec![batch.max_range; batch.len()];
    match visits {
        Some(visits) => values.par_chunks_mut(CHUNK_SIZE).zip(visits.par_chunks_mut(CHUNK_SIZE)).enumerate().for_each(
            |(c, (out, counts))| {
                cast_chunk(batch, scene, strategy, c * CHUNK_SIZE, out, Some(counts));
            },
        ),
        None => values.par_chunks_mut(CHUNK_SIZE).enumerate().for_each(|(c, out)| {
            cast_chunk(batch, scene, strategy, c * CHUNK_SIZE, out, None);
        }),
    }
    DepthMap { width: batch.width, height: batch.height, max_range: batch.max_range, values }
}

fn cast_chunk(
    batch: &RayBatch,
    scene: &Scene,
    strategy: Strategy,
    first: usize,
    out: &mut [f64],
    mut counts: Option<&mut [u32]>,
) {
    let index = scene.group_index();
    let statics = index.static_instances();
    let table = scene.group_table();
    // Consecutive rays usually share a group; reuse the last lookup.
    let mut cached: Option<(GroupId, &[u32])> = None;
    for (k, slot) in out.iter_mut().enumerate() {
        let i = first + k;
        let origin = &batch.origins[i];
        let dir = &batch.directions[i];
        let inv_dir = dir.map(|d| 1.0 / d);
        let group = batch.group_ids[i];
        let mut best = batch.max_range;
        let mut visited = 0u32;
        let visit = |instance: usize, best: &mut f64| {
            if let Some(t) = scene.intersect_instance(instance, origin, dir, &inv_dir, *best) {
                *best = t;
            }
        };
        match strategy {
            Strategy::Grouped => {
                for &j in statics {
                    visit(j as usize, &mut best);
                }
                visited += statics.len() as u32;
                if group != STATIC_GROUP {
                    let own = match cached {
                        Some((g, list)) if g == group => list,
                        _ => {
                            let list = index.get(group);
                            cached = Some((group, list));
                            list
                        }
                    };
                    for &j in own {
                        visit(j as usize, &mut best);
                    }
                    visited += own.len() as u32;
                }
            }
            Strategy::Naive => {
                for (j, &g) in table.iter().enumerate() {
                    if g == STATIC_GROUP || g == group {
                        visit(j, &mut best);
                    }
                }
                visited = table.len() as u32;
            }
        }
        *slot = best;
        if let Some(c) = counts.as_deref_mut() {
            c[k] = visited;
        }
    }
}
