//! Terrain height samples on a regular grid, as fed to a critic.

use crate::geometry::Vec3;
use crate::raycast::{cast_grouped, RayBatch, RayError};
use crate::scene::{GroupId, Scene};

/// Vertical extent below the ceiling that is searched for terrain.
pub const DEFAULT_SCAN_DEPTH: f64 = 10.0;

/// Grid of downward rays. Sample `(ix, iy)` starts at
/// `origin + (ix·spacing, iy·spacing, 0)`; `origin.z` is the ceiling.
/// Results are row-major with `ix` varying fastest.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeightScan {
    pub origin: Vec3,
    pub spacing: f64,
    pub nx: usize,
    pub ny: usize,
    pub depth: f64,
}

impl HeightScan {
    pub fn new(origin: Vec3, spacing: f64, nx: usize, ny: usize) -> Self {
        HeightScan { origin, spacing, nx, ny, depth: DEFAULT_SCAN_DEPTH }
    }

    /// Height reported for samples that hit nothing within `depth`.
    pub fn floor_sentinel(&self) -> f64 {
        self.origin.z - self.depth
    }

    pub fn sample_points(&self) -> Vec<Vec3> {
        (0..self.ny)
            .flat_map(|iy| (0..self.nx).map(move |ix| (ix, iy)))
            .map(|(ix, iy)| self.origin + Vec3::new(ix as f64 * self.spacing, iy as f64 * self.spacing, 0.0))
            .collect()
    }

    pub fn rays(&self, group_id: GroupId) -> Result<RayBatch, RayError> {
        if !(self.spacing > 0.0 && self.spacing.is_finite()) {
            return Err(RayError::InvalidRange(self.spacing));
        }
        let n = self.nx * self.ny;
        RayBatch::with_shape(self.sample_points(), vec![-Vec3::z(); n], vec![group_id; n], self.depth, self.nx, self.ny)
    }

    /// Hit heights (world z); misses report [`HeightScan::floor_sentinel`].
    pub fn scan(&self, scene: &Scene, group_id: GroupId) -> Result<Vec<f64>, RayError> {
        let batch = self.rays(group_id)?;
        let depth = cast_grouped(&batch, scene);
        Ok(depth.values.iter().map(|&t| self.origin.z - t).collect())
    }
}

pub fn height_scan(
    grid_origin: Vec3,
    grid_spacing: f64,
    nx: usize,
    ny: usize,
    scene: &Scene,
    group_id: GroupId,
) -> Result<Vec<f64>, RayError> {
    HeightScan::new(grid_origin, grid_spacing, nx, ny).scan(scene, group_id)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::RigidTransform;
    use crate::mesh::TriangleMesh;
    use crate::scene::{seal_scene, MeshInstance, Prototype, STATIC_GROUP};

    fn floor() -> Prototype {
        Prototype::new(TriangleMesh::ground_quad(20.0)).unwrap()
    }

    #[test]
    fn flat_floor_reads_zero() {
        let scene =
            seal_scene(vec![floor()], vec![MeshInstance::new(0, RigidTransform::identity(), STATIC_GROUP)]).unwrap();
        let h = height_scan(Vec3::new(-0.5, -0.5, 2.0), 0.5, 3, 3, &scene, 0).unwrap();
        assert_eq!(h, vec![0.0; 9]);
    }

    #[test]
    fn box_under_half_the_grid() {
        // 0.5 × 0.6 × 0.4 m box resting on the floor, covering x in [0, 0.5].
        let block = Prototype::new(TriangleMesh::cuboid(Vec3::new(0.25, 0.3, 0.2))).unwrap();
        let scene = seal_scene(
            vec![floor(), block],
            vec![
                MeshInstance::new(0, RigidTransform::identity(), STATIC_GROUP),
                MeshInstance::new(1, RigidTransform::from_translation(Vec3::new(0.25, 0.0, 0.2)), STATIC_GROUP),
            ],
        )
        .unwrap();
        let scan = HeightScan::new(Vec3::new(-0.45, -0.2, 2.0), 0.1, 10, 5);
        let h = scan.scan(&scene, 3).unwrap();
        for (p, z) in scan.sample_points().iter().zip(&h) {
            let expected = if p.x > 0.0 { 0.4 } else { 0.0 };
            assert!((z - expected).abs() < 1e-12, "{p:?} -> {z}");
        }
    }

    #[test]
    fn misses_report_floor_sentinel() {
        let scan = HeightScan::new(Vec3::new(0.0, 0.0, 1.5), 1.0, 2, 1);
        assert_eq!(scan.scan(&Scene::empty(), 0).unwrap(), vec![1.5 - DEFAULT_SCAN_DEPTH; 2]);
        assert!(HeightScan::new(Vec3::zeros(), 0.0, 2, 2).scan(&Scene::empty(), 0).is_err());
    }
}
