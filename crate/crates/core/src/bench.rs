//! Scene generators and the grouped-versus-naive casting benchmark.

use crate::config::BenchConfig;
use crate::geometry::{RigidTransform, Rotation, Vec3};
use crate::mesh::TriangleMesh;
use crate::raycast::{cast_grouped, cast_grouped_counted, cast_naive, cast_naive_counted, DepthMap, RayBatch};
use crate::scene::{GroupId, MeshInstance, Prototype, Scene, STATIC_GROUP};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::fmt::Write as _;
use std::sync::Arc;
use std::time::Instant;
use thiserror::Error;

/// Side length of one environment cell in the grid benchmark scene.
pub const CELL_SIZE: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BenchError {
    #[error("G = {groups}: grouped and naive casts differ by {max_diff} at ray {ray}")]
    EquivalenceFailure { groups: usize, ray: usize, max_diff: f64 },
    #[error("G = {groups}: ray {ray} visited {found} instances, expected {expected} ({strategy})")]
    CounterMismatch { groups: usize, ray: usize, strategy: &'static str, found: u32, expected: u32 },
    #[error("invalid sweep: {0}")]
    InvalidSweep(String),
}

/// Random triangle soup inside the unit cube centered on the origin.
pub fn random_mesh<R: Rng + ?Sized>(rng: &mut R, triangles: usize) -> TriangleMesh {
    let mut vertices = Vec::with_capacity(3 * triangles);
    for _ in 0..triangles {
        let c = Vec3::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
        let size = rng.random_range(0.02..0.3);
        for _ in 0..3 {
            let d = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            vertices.push(c + d * size);
        }
    }
    let tris = (0..triangles as u32).map(|i| [3 * i, 3 * i + 1, 3 * i + 2]).collect();
    TriangleMesh::new(vertices, tris).expect("generated mesh is valid")
}

pub fn random_rotation<R: Rng + ?Sized>(rng: &mut R) -> Rotation {
    // Uniform unit quaternion (Shoemake).
    let (u1, u2, u3): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
    let tau = std::f64::consts::TAU;
    let (a, b) = ((1.0 - u1).sqrt(), u1.sqrt());
    Rotation::from_quaternion(a * (tau * u2).sin(), a * (tau * u2).cos(), b * (tau * u3).sin(), b * (tau * u3).cos())
        .expect("unit quaternion")
}

pub fn random_transform<R: Rng + ?Sized>(rng: &mut R, extent: f64) -> RigidTransform {
    let t = Vec3::new(
        rng.random_range(-extent..extent),
        rng.random_range(-extent..extent),
        rng.random_range(-extent..extent),
    );
    RigidTransform::new(random_rotation(rng), t)
}

pub fn random_unit_vector<R: Rng + ?Sized>(rng: &mut R) -> Vec3 {
    loop {
        let v = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

/// Scene with overlapping instances of up to `max_prototypes` random
/// meshes, up to `max_groups` groups of up to `max_per_group` instances,
/// and a few static instances, all packed into a small volume so that
/// groups occlude each other.
pub fn random_scene<R: Rng + ?Sized>(
    rng: &mut R,
    max_groups: usize,
    max_per_group: usize,
    max_prototypes: usize,
) -> Scene {
    let n_protos = rng.random_range(1..=max_prototypes);
    let prototypes: Vec<Arc<Prototype>> = (0..n_protos)
        .map(|_| {
            let mesh = if rng.random_bool(0.3) {
                TriangleMesh::cuboid(Vec3::new(
                    rng.random_range(0.1..0.6),
                    rng.random_range(0.1..0.6),
                    rng.random_range(0.1..0.6),
                ))
            } else {
                let n = rng.random_range(1..=60);
                random_mesh(rng, n)
            };
            Arc::new(Prototype::new(mesh).expect("non-empty mesh"))
        })
        .collect();
    let groups = rng.random_range(1..=max_groups);
    let extent = 1.0 + (groups as f64).sqrt() * 0.25;
    let mut instances = Vec::new();
    for _ in 0..rng.random_range(0..=4) {
        instances.push(MeshInstance::new(rng.random_range(0..n_protos), random_transform(rng, extent), STATIC_GROUP));
    }
    for g in 0..groups {
        let id = g as GroupId * rng.random_range(1..3);
        for _ in 0..rng.random_range(1..=max_per_group) {
            instances.push(MeshInstance::new(rng.random_range(0..n_protos), random_transform(rng, extent), id));
        }
    }
    Scene::seal(prototypes, instances).expect("generated scene is valid")
}

/// Rays from inside the scene volume. Group ids are drawn from the
/// scene's groups, the static id and unused ids. About 40% of rays aim
/// near an instance visible to their group, 20% near any instance (so
/// other groups' geometry sits in the path) and the rest point anywhere.
pub fn random_rays<R: Rng + ?Sized>(rng: &mut R, scene: &Scene, count: usize, max_range: f64) -> RayBatch {
    let index = scene.group_index();
    let groups = index.groups().to_vec();
    let extent = 2.0 + (groups.len() as f64).sqrt() * 0.25;
    let mut origins = Vec::with_capacity(count);
    let mut directions = Vec::with_capacity(count);
    let mut ids = Vec::with_capacity(count);
    for _ in 0..count {
        let u: f64 = rng.random();
        let id = if u < 0.05 || groups.is_empty() {
            STATIC_GROUP
        } else if u < 0.1 {
            1_000_000 + rng.random_range(0..10)
        } else {
            groups[rng.random_range(0..groups.len())]
        };
        let origin = Vec3::new(
            rng.random_range(-extent..extent),
            rng.random_range(-extent..extent),
            rng.random_range(-extent..extent),
        );
        let statics = index.static_instances();
        let own = if id == STATIC_GROUP { &[][..] } else { index.get(id) };
        let v: f64 = rng.random();
        let target = if v < 0.4 && statics.len() + own.len() > 0 {
            let k = rng.random_range(0..statics.len() + own.len());
            Some(if k < statics.len() { statics[k] } else { own[k - statics.len()] } as usize)
        } else if v < 0.6 && scene.instance_count() > 0 {
            Some(rng.random_range(0..scene.instance_count()))
        } else {
            None
        };
        let aimed = target.and_then(|i| {
            let b = scene.world_bounds(i);
            let point = (b.min + b.max) * 0.5 + random_unit_vector(rng) * (0.25 * b.extent().norm());
            (point - origin).try_normalize(1e-9)
        });
        origins.push(origin);
        directions.push(aimed.unwrap_or_else(|| random_unit_vector(rng)));
        ids.push(id);
    }
    RayBatch::new(origins, directions, ids, max_range).expect("generated rays are valid")
}

/// Multi-agent training layout: `groups` environment cells on a square
/// grid, each holding `per_group` boxes and terrain pieces owned by that
/// group, plus a shared floor and `statics − 1` static pillars.
pub fn grid_scene(statics: usize, groups: usize, per_group: usize, seed: u64) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side = (groups as f64).sqrt().ceil().max(1.0) as usize;
    let span = side as f64 * CELL_SIZE;
    let heights: Vec<f64> = (0..25).map(|_| rng.random_range(0.0..0.15)).collect();
    let prototypes = vec![
        Arc::new(Prototype::new(TriangleMesh::ground_quad(span + 2.0 * CELL_SIZE)).expect("floor")),
        Arc::new(Prototype::new(TriangleMesh::cuboid(Vec3::new(0.25, 0.3, 0.2))).expect("box")),
        Arc::new(
            Prototype::new(TriangleMesh::height_field(-0.5, -0.5, 0.25, 5, 5, &heights).expect("terrain"))
                .expect("terrain"),
        ),
        Arc::new(Prototype::new(TriangleMesh::cuboid(Vec3::new(0.1, 0.1, 1.5))).expect("pillar")),
    ];
    let mut instances = Vec::new();
    let origin = -0.5 * span;
    if statics > 0 {
        instances.push(MeshInstance::new(
            0,
            RigidTransform::from_translation(Vec3::new(0.0, 0.0, -0.001)),
            STATIC_GROUP,
        ));
    }
    for _ in 1..statics {
        let p = Vec3::new(rng.random_range(origin..-origin), rng.random_range(origin..-origin), 1.5);
        instances.push(MeshInstance::new(3, RigidTransform::from_translation(p), STATIC_GROUP));
    }
    for g in 0..groups {
        let center = cell_center(g, side);
        for k in 0..per_group {
            let offset = Vec3::new(rng.random_range(-1.6..1.6), rng.random_range(-1.6..1.6), 0.0);
            let (proto, z) = if k % 4 == 3 { (2, 0.0) } else { (1, 0.2) };
            let t = RigidTransform::new(
                Rotation::rot_z(rng.random_range(-3.0..3.0)),
                center + offset + Vec3::new(0.0, 0.0, z),
            );
            instances.push(MeshInstance::new(proto, t, g as GroupId));
        }
    }
    Scene::seal(prototypes, instances).expect("grid scene is valid")
}

fn cell_center(g: usize, side: usize) -> Vec3 {
    let origin = -0.5 * side as f64 * CELL_SIZE;
    Vec3::new(
        origin + (g % side) as f64 * CELL_SIZE + 0.5 * CELL_SIZE,
        origin + (g / side) as f64 * CELL_SIZE + 0.5 * CELL_SIZE,
        0.0,
    )
}

/// Downward-looking rays from a camera height inside each group's cell,
/// grouped in runs as a batched renderer would issue them.
pub fn grid_rays(groups: usize, count: usize, seed: u64) -> RayBatch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let side = (groups as f64).sqrt().ceil().max(1.0) as usize;
    let mut origins = Vec::with_capacity(count);
    let mut directions = Vec::with_capacity(count);
    let mut ids = Vec::with_capacity(count);
    let run = 64;
    let mut g = 0;
    for i in 0..count {
        if i % run == 0 {
            g = rng.random_range(0..groups);
        }
        let c = cell_center(g, side);
        origins.push(c + Vec3::new(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3), 1.0));
        let d = Vec3::new(rng.random_range(-0.8..0.8), rng.random_range(-0.8..0.8), -1.0);
        directions.push(d.normalize());
        ids.push(g as GroupId);
    }
    RayBatch::new(origins, directions, ids, 10.0).expect("grid rays are valid")
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchPoint {
    pub groups: usize,
    pub instances_per_group: usize,
    pub static_instances: usize,
    pub rays: usize,
    pub visits_grouped: f64,
    pub visits_naive: f64,
    pub ns_per_ray_naive: f64,
    pub ns_per_ray_grouped: f64,
}

impl BenchPoint {
    pub fn speedup(&self) -> f64 {
        self.ns_per_ray_naive / self.ns_per_ray_grouped
    }
}

/// Largest absolute difference between two depth maps, with its index.
pub fn max_difference(a: &DepthMap, b: &DepthMap) -> (usize, f64) {
    a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs()).enumerate().fold((0, 0.0), |acc, (i, d)| {
        if d > acc.1 {
            (i, d)
        } else {
            acc
        }
    })
}

/// Checks grouped ≡ naive and both visit-count identities on one batch.
pub fn verify_point(scene: &Scene, rays: &RayBatch, groups: usize) -> Result<(f64, f64), BenchError> {
    let (grouped, gv) = cast_grouped_counted(rays, scene);
    let (naive, nv) = cast_naive_counted(rays, scene);
    let (ray, max_diff) = max_difference(&grouped, &naive);
    if max_diff > 1e-9 {
        return Err(BenchError::EquivalenceFailure { groups, ray, max_diff });
    }
    let index = scene.group_index();
    let statics = index.static_instances().len() as u32;
    let total = scene.instance_count() as u32;
    for i in 0..rays.len() {
        let g = rays.group_ids[i];
        let own = if g == STATIC_GROUP { 0 } else { index.get(g).len() as u32 };
        if gv[i] != statics + own {
            return Err(BenchError::CounterMismatch {
                groups,
                ray: i,
                strategy: "grouped",
                found: gv[i],
                expected: statics + own,
            });
        }
        if nv[i] != total {
            return Err(BenchError::CounterMismatch {
                groups,
                ray: i,
                strategy: "naive",
                found: nv[i],
                expected: total,
            });
        }
    }
    let mean = |v: &[u32]| v.iter().map(|&x| f64::from(x)).sum::<f64>() / v.len().max(1) as f64;
    Ok((mean(&gv), mean(&nv)))
}

fn time_ns(f: impl FnOnce()) -> f64 {
    let start = Instant::now();
    f();
    start.elapsed().as_nanos() as f64
}

pub fn run_point(cfg: &BenchConfig, groups: usize, seed: u64) -> Result<BenchPoint, BenchError> {
    let scene = grid_scene(cfg.static_instances, groups, cfg.instances_per_group, seed);
    let rays = grid_rays(groups, cfg.rays, seed);
    let (visits_grouped, visits_naive) = verify_point(&scene, &rays, groups)?;
    let n = rays.len() as f64;
    // Interleave so that frequency drift affects both sides alike.
    let mut naive = f64::INFINITY;
    let mut grouped = f64::INFINITY;
    for _ in 0..cfg.repetitions {
        naive = naive.min(time_ns(|| {
            std::hint::black_box(cast_naive(&rays, &scene));
        }));
        grouped = grouped.min(time_ns(|| {
            std::hint::black_box(cast_grouped(&rays, &scene));
        }));
    }
    Ok(BenchPoint {
        groups,
        instances_per_group: cfg.instances_per_group,
        static_instances: cfg.static_instances,
        rays: rays.len(),
        visits_grouped,
        visits_naive,
        ns_per_ray_naive: naive / n,
        ns_per_ray_grouped: grouped / n,
    })
}

pub fn run_sweep(cfg: &BenchConfig, seed: u64) -> Result<Vec<BenchPoint>, BenchError> {
    if cfg.groups.is_empty() || cfg.groups.contains(&0) || cfg.rays == 0 || cfg.repetitions == 0 {
        return Err(BenchError::InvalidSweep(format!("{cfg:?}")));
    }
    cfg.groups.iter().map(|&g| run_point(cfg, g, seed)).collect()
}

/// Speedup strictly increases with the group count.
pub fn speedup_strictly_increasing(points: &[BenchPoint]) -> bool {
    let mut sorted: Vec<&BenchPoint> = points.iter().collect();
    sorted.sort_by_key(|p| p.groups);
    sorted.windows(2).all(|w| w[1].speedup() > w[0].speedup())
}

pub const CSV_HEADER: &str = "G,instances_per_group,rays,ns_per_ray_naive,ns_per_ray_grouped,speedup";

pub fn to_csv(points: &[BenchPoint]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for p in points {
        let _ = writeln!(
            out,
            "{},{},{},{:.3},{:.3},{:.4}",
            p.groups,
            p.instances_per_group,
            p.rays,
            p.ns_per_ray_naive,
            p.ns_per_ray_grouped,
            p.speedup()
        );
    }
    out
}
