//! Instancing must not copy geometry: sealing a scene of many instances
//! allocates per-instance bookkeeping only.

use isocast::geometry::{RigidTransform, Vec3};
use isocast::mesh::TriangleMesh;
use isocast::scene::{build_group_index, MeshInstance, Prototype, Scene};
use std::alloc::{GlobalAlloc, Layout, System};
use std::collections::HashSet;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

struct Counting;

static ALLOCATED: AtomicUsize = AtomicUsize::new(0);

unsafe impl GlobalAlloc for Counting {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        ALLOCATED.fetch_add(layout.size(), Ordering::Relaxed);
        unsafe { System.alloc(layout) }
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        unsafe { System.dealloc(ptr, layout) }
    }
}

#[global_allocator]
static GLOBAL: Counting = Counting;

fn allocated() -> usize {
    ALLOCATED.load(Ordering::Relaxed)
}

fn sphere_like(n: usize) -> TriangleMesh {
    let heights: Vec<f64> = (0..n * n).map(|i| ((i * 7919) % 13) as f64 * 0.01).collect();
    TriangleMesh::height_field(0.0, 0.0, 0.1, n, n, &heights).unwrap()
}

fn prototypes(scale: usize) -> Vec<Arc<Prototype>> {
    [sphere_like(4 * scale), sphere_like(3 * scale), TriangleMesh::cuboid(Vec3::new(0.5, 0.5, 0.5))]
        .into_iter()
        .map(|m| Arc::new(Prototype::new(m).unwrap()))
        .collect()
}

/// Bytes allocated while sealing 4,096 instances over `protos`.
fn sealing_bytes(protos: &[Arc<Prototype>]) -> (Scene, usize) {
    let instances: Vec<MeshInstance> = (0..4096)
        .map(|i| {
            MeshInstance::new(i % 3, RigidTransform::from_translation(Vec3::new(i as f64, 0.0, 0.0)), (i / 16) as i32)
        })
        .collect();
    let before = allocated();
    let scene = Scene::seal(protos.to_vec(), instances).unwrap();
    (scene, allocated() - before)
}

#[test]
fn instances_share_prototype_geometry() {
    let small = prototypes(2);
    let large = prototypes(20);
    let (small_scene, small_bytes) = sealing_bytes(&small);
    let (large_scene, large_bytes) = sealing_bytes(&large);

    let geometry: usize = large.iter().map(|p| p.mesh.storage_bytes()).sum();
    assert_eq!(large_scene.geometry_bytes(), geometry);
    assert!(small_scene.geometry_bytes() < geometry / 50);
    for p in &large {
        assert_eq!(Arc::strong_count(p), 2);
    }
    // Sealing cost depends on the instance count only, never on mesh size.
    assert_eq!(small_bytes, large_bytes);
    // Bounds, group id and index slot per instance. Copying geometry per
    // instance would cost about a third of `geometry` each.
    let per_instance = large_bytes as f64 / 4096.0;
    assert!(per_instance < 1024.0, "{per_instance} bytes per instance");
    assert!(large_bytes < 4096 / 3 * geometry / 100, "sealing allocated {large_bytes} bytes");
}

#[test]
fn group_index_is_a_partition() {
    let instances: Vec<MeshInstance> = (0..1000)
        .map(|i| MeshInstance::new(0, RigidTransform::identity(), [(i as i32 * 31) % 17, -1][i % 2]))
        .collect();
    let index = build_group_index(&instances);
    let mut seen = HashSet::new();
    for (group, members) in index.iter() {
        for &m in members {
            assert_eq!(instances[m as usize].group_id, group);
            assert!(seen.insert(m), "instance {m} appears twice");
        }
    }
    assert_eq!(seen.len(), instances.len());
}
