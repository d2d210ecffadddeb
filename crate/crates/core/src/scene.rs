//! Instanced scenes partitioned by collision group.
//!
//! A scene owns a table of prototype meshes (each with its own BVH) and a
//! list of instances referring to them by index. Instances never copy
//! prototype geometry. Each instance carries a collision group; group
//! [`STATIC_GROUP`] is visible to every ray, any other group only to rays
//! tagged with the same group.

use crate::bvh::{Aabb, Bvh, DEFAULT_MAX_LEAF};
use crate::geometry::{RigidTransform, Vec3};
use crate::mesh::{MeshError, TriangleMesh};
use std::collections::HashMap;
use std::sync::Arc;
use thiserror::Error;

pub type GroupId = i32;

/// Group shared by all agents (static terrain).
pub const STATIC_GROUP: GroupId = -1;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("instance {instance} references prototype {prototype_id} but only {prototype_count} exist")]
    DanglingPrototype { instance: usize, prototype_id: usize, prototype_count: usize },
    #[error("instance {instance} has group {group_id}; groups below {STATIC_GROUP} are reserved")]
    InvalidGroup { instance: usize, group_id: GroupId },
    #[error("instance index {index} out of range for a scene of {count} instances")]
    InstanceOutOfRange { index: usize, count: usize },
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

/// A mesh together with its acceleration structure.
#[derive(Debug, Clone)]
pub struct Prototype {
    pub mesh: TriangleMesh,
    pub bvh: Bvh,
}

impl Prototype {
    pub fn new(mesh: TriangleMesh) -> Result<Self, MeshError> {
        Self::with_leaf_size(mesh, DEFAULT_MAX_LEAF)
    }

    pub fn with_leaf_size(mesh: TriangleMesh, max_leaf: usize) -> Result<Self, MeshError> {
        let bvh = Bvh::build(&mesh, max_leaf)?;
        Ok(Prototype { mesh, bvh })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshInstance {
    pub prototype_id: usize,
    pub transform: RigidTransform,
    pub group_id: GroupId,
}

impl MeshInstance {
    pub fn new(prototype_id: usize, transform: RigidTransform, group_id: GroupId) -> Self {
        MeshInstance { prototype_id, transform, group_id }
    }
}

/// Group id → instance indices, in instance order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroupIndex {
    slots: HashMap<GroupId, usize>,
    groups: Vec<GroupId>,
    buckets: Vec<Vec<u32>>,
}

pub fn build_group_index(instances: &[MeshInstance]) -> GroupIndex {
    let mut index = GroupIndex::default();
    for (j, inst) in instances.iter().enumerate() {
        let slot = *index.slots.entry(inst.group_id).or_insert_with(|| {
            index.groups.push(inst.group_id);
            index.buckets.push(Vec::new());
            index.buckets.len() - 1
        });
        index.buckets[slot].push(j as u32);
    }
    index
}

impl GroupIndex {
    /// Instances of `group`; empty for groups with no instances.
    #[inline]
    pub fn get(&self, group: GroupId) -> &[u32] {
        match self.slots.get(&group) {
            Some(&slot) => &self.buckets[slot],
            None => &[],
        }
    }

    #[inline]
    pub fn static_instances(&self) -> &[u32] {
        self.get(STATIC_GROUP)
    }

    /// Groups in order of first appearance.
    pub fn groups(&self) -> &[GroupId] {
        &self.groups
    }

    pub fn iter(&self) -> impl Iterator<Item = (GroupId, &[u32])> {
        self.groups.iter().copied().zip(self.buckets.iter().map(Vec::as_slice))
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }
}

/// A sealed, read-only scene ready for concurrent casting.
///
/// The instance list, prototype table and group membership are fixed at
/// sealing. Instance transforms may be rewritten between casts through
/// `&mut` access, which excludes any concurrent cast.
#[derive(Debug, Clone)]
pub struct Scene {
    prototypes: Vec<Arc<Prototype>>,
    instances: Vec<MeshInstance>,
    world_bounds: Vec<Aabb>,
    group_ids: Vec<GroupId>,
    index: GroupIndex,
}

pub fn seal_scene(prototypes: Vec<Prototype>, instances: Vec<MeshInstance>) -> Result<Scene, SceneError> {
    Scene::seal(prototypes.into_iter().map(Arc::new).collect(), instances)
}

impl Scene {
    pub fn empty() -> Scene {
        Scene {
            prototypes: Vec::new(),
            instances: Vec::new(),
            world_bounds: Vec::new(),
            group_ids: Vec::new(),
            index: GroupIndex::default(),
        }
    }

    /// Validates instances and builds the group index. Prototypes are
    /// shared, so several scenes can reference the same geometry.
    pub fn seal(prototypes: Vec<Arc<Prototype>>, instances: Vec<MeshInstance>) -> Result<Scene, SceneError> {
        for (instance, inst) in instances.iter().enumerate() {
            if inst.prototype_id >= prototypes.len() {
                return Err(SceneError::DanglingPrototype {
                    instance,
                    prototype_id: inst.prototype_id,
                    prototype_count: prototypes.len(),
                });
            }
            if inst.group_id < STATIC_GROUP {
                return Err(SceneError::InvalidGroup { instance, group_id: inst.group_id });
            }
        }
        let world_bounds = instances
            .iter()
            .map(|inst| prototypes[inst.prototype_id].bvh.bounds().transformed(&inst.transform))
            .collect();
        let group_ids = instances.iter().map(|i| i.group_id).collect();
        let index = build_group_index(&instances);
        Ok(Scene { prototypes, instances, world_bounds, group_ids, index })
    }

    pub fn prototypes(&self) -> &[Arc<Prototype>] {
        &self.prototypes
    }

    pub fn instances(&self) -> &[MeshInstance] {
        &self.instances
    }

    pub fn group_index(&self) -> &GroupIndex {
        &self.index
    }

    /// Flat table of instance group ids, indexed like `instances()`.
    pub fn group_table(&self) -> &[GroupId] {
        &self.group_ids
    }

    pub fn instance_count(&self) -> usize {
        self.instances.len()
    }

    pub fn world_bounds(&self, instance: usize) -> &Aabb {
        &self.world_bounds[instance]
    }

    /// Vertex and index bytes across the prototype table.
    pub fn geometry_bytes(&self) -> usize {
        self.prototypes.iter().map(|p| p.mesh.storage_bytes()).sum()
    }

    pub fn set_transform(&mut self, instance: usize, transform: RigidTransform) -> Result<(), SceneError> {
        let count = self.instances.len();
        let inst = self.instances.get_mut(instance).ok_or(SceneError::InstanceOutOfRange { index: instance, count })?;
        inst.transform = transform;
        self.world_bounds[instance] = self.prototypes[inst.prototype_id].bvh.bounds().transformed(&transform);
        Ok(())
    }

    /// Applies a batch of transform updates; nothing changes if any index is invalid.
    pub fn set_transforms(&mut self, updates: &[(usize, RigidTransform)]) -> Result<(), SceneError> {
        let count = self.instances.len();
        if let Some(&(index, _)) = updates.iter().find(|(i, _)| *i >= count) {
            return Err(SceneError::InstanceOutOfRange { index, count });
        }
        for &(i, t) in updates {
            self.set_transform(i, t)?;
        }
        Ok(())
    }

    /// Nearest hit distance in `(MIN_HIT_DISTANCE, limit]` of a world-space
    /// ray against one instance.
    #[inline]
    pub fn intersect_instance(
        &self,
        instance: usize,
        origin: &Vec3,
        dir: &Vec3,
        inv_dir: &Vec3,
        limit: f64,
    ) -> Option<f64> {
        self.world_bounds[instance].entry(origin, dir, inv_dir, limit)?;
        let inst = &self.instances[instance];
        let proto = &self.prototypes[inst.prototype_id];
        let local_origin = inst.transform.inverse_transform_point(origin);
        let local_dir = inst.transform.rotation.apply_inverse(dir);
        proto.bvh.intersect(&proto.mesh, &local_origin, &local_dir, limit).map(|h| h.t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_quad() -> Prototype {
        Prototype::new(TriangleMesh::ground_quad(1.0)).unwrap()
    }

    #[test]
    fn group_index_from_definition() {
        let groups = [-1, 3, -1, 3, 7];
        let instances: Vec<_> = groups.iter().map(|&g| MeshInstance::new(0, RigidTransform::identity(), g)).collect();
        let index = build_group_index(&instances);
        assert_eq!(index.get(-1), &[0, 2]);
        assert_eq!(index.get(3), &[1, 3]);
        assert_eq!(index.get(7), &[4]);
        assert!(index.get(42).is_empty());
        assert_eq!(index.groups(), &[-1, 3, 7]);
    }

    #[test]
    fn empty_group_index() {
        let index = build_group_index(&[]);
        assert!(index.is_empty());
        assert!(index.static_instances().is_empty());
    }

    #[test]
    fn seal_single_static_instance() {
        let scene = seal_scene(vec![unit_quad()], vec![MeshInstance::new(0, RigidTransform::identity(), STATIC_GROUP)])
            .unwrap();
        assert_eq!(scene.group_index().iter().collect::<Vec<_>>(), vec![(-1, &[0u32][..])]);
    }

    #[test]
    fn seal_rejects_dangling_prototype() {
        let err = seal_scene(vec![unit_quad(), unit_quad()], vec![MeshInstance::new(5, RigidTransform::identity(), 0)])
            .unwrap_err();
        assert!(matches!(err, SceneError::DanglingPrototype { instance: 0, prototype_id: 5, prototype_count: 2 }));
    }

    #[test]
    fn seal_rejects_reserved_groups() {
        let err =
            seal_scene(vec![unit_quad()], vec![MeshInstance::new(0, RigidTransform::identity(), -2)]).unwrap_err();
        assert!(matches!(err, SceneError::InvalidGroup { group_id: -2, .. }));
    }

    #[test]
    fn transform_updates_leave_prototypes_untouched() {
        let mut scene =
            seal_scene(vec![unit_quad()], vec![MeshInstance::new(0, RigidTransform::identity(), 0)]).unwrap();
        let before = scene.prototypes()[0].mesh.clone();
        let moved = RigidTransform::from_translation(Vec3::new(0.0, 0.0, 3.0));
        scene.set_transform(0, moved).unwrap();
        assert_eq!(scene.prototypes()[0].mesh, before);
        assert!((scene.world_bounds(0).min.z - 3.0).abs() < 1e-12);
        assert!(matches!(
            scene.set_transforms(&[(0, moved), (1, moved)]),
            Err(SceneError::InstanceOutOfRange { index: 1, count: 1 })
        ));
    }
}
