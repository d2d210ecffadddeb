//! Bounding volume hierarchy over a single triangle mesh.
//!
//! Built top-down by median split of triangle centroids along the longest
//! axis of the centroid bounds. Construction is fully deterministic: ties in
//! the centroid ordering are broken by triangle index.

use crate::geometry::{RigidTransform, Vec3};
use crate::mesh::{ray_triangle, MeshError, TriangleMesh};

/// Hits closer than this are discarded as self-intersections.
pub const MIN_HIT_DISTANCE: f64 = 1e-6;
pub const DEFAULT_MAX_LEAF: usize = 4;

// Slab-test slack covering rounding in the entry/exit computation.
const SLAB_SLACK: f64 = 1.0 + 2.0 * (3.0 * f64::EPSILON * 0.5) / (1.0 - 3.0 * f64::EPSILON * 0.5);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn empty() -> Self {
        Aabb { min: Vec3::repeat(f64::INFINITY), max: Vec3::repeat(f64::NEG_INFINITY) }
    }

    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Vec3>) -> Self {
        points.into_iter().fold(Self::empty(), |b, p| b.grow(p))
    }

    pub fn grow(self, p: &Vec3) -> Self {
        Aabb { min: self.min.inf(p), max: self.max.sup(p) }
    }

    pub fn union(&self, other: &Aabb) -> Self {
        Aabb { min: self.min.inf(&other.min), max: self.max.sup(&other.max) }
    }

    pub fn is_empty(&self) -> bool {
        (0..3).any(|a| self.min[a] > self.max[a])
    }

    pub fn contains(&self, other: &Aabb) -> bool {
        (0..3).all(|a| self.min[a] <= other.min[a] && other.max[a] <= self.max[a])
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn longest_axis(&self) -> usize {
        let e = self.extent();
        if e.x >= e.y && e.x >= e.z {
            0
        } else if e.y >= e.z {
            1
        } else {
            2
        }
    }

    pub fn corners(&self) -> impl Iterator<Item = Vec3> + '_ {
        (0..8).map(move |i| {
            Vec3::new(
                if i & 1 == 0 { self.min.x } else { self.max.x },
                if i & 2 == 0 { self.min.y } else { self.max.y },
                if i & 4 == 0 { self.min.z } else { self.max.z },
            )
        })
    }

    /// Bounds of this box after a rigid motion.
    pub fn transformed(&self, t: &RigidTransform) -> Aabb {
        if self.is_empty() {
            return *self;
        }
        let b = Aabb::from_points(self.corners().map(|c| t.transform_point(&c)).collect::<Vec<_>>().iter());
        // Pad by a few ulps so the world box conservatively encloses the mesh.
        let pad = b.extent().amax().max(b.min.amax()).max(b.max.amax()) * 4.0 * f64::EPSILON;
        Aabb { min: b.min.add_scalar(-pad), max: b.max.add_scalar(pad) }
    }

    /// Entry distance of the ray into the box if it overlaps `[0, t_max]`.
    #[inline]
    pub fn entry(&self, origin: &Vec3, dir: &Vec3, inv_dir: &Vec3, t_max: f64) -> Option<f64> {
        let mut t0 = 0.0f64;
        let mut t1 = t_max;
        for a in 0..3 {
            if dir[a] == 0.0 {
                if origin[a] < self.min[a] || origin[a] > self.max[a] {
                    return None;
                }
                continue;
            }
            let ta = (self.min[a] - origin[a]) * inv_dir[a];
            let tb = (self.max[a] - origin[a]) * inv_dir[a];
            let (near, far) = if ta <= tb { (ta, tb) } else { (tb, ta) };
            t0 = t0.max(near);
            t1 = t1.min(far * SLAB_SLACK);
            if t0 > t1 {
                return None;
            }
        }
        Some(t0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Node {
    bounds: Aabb,
    /// Leaf: offset into `order`. Interior: index of the left child; the
    /// right child follows it.
    first: u32,
    /// Triangle count for leaves, zero for interior nodes.
    count: u32,
}

/// Nearest intersection with a mesh.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub t: f64,
    pub triangle: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bvh {
    nodes: Vec<Node>,
    order: Vec<u32>,
    max_leaf: usize,
}

struct BuildItem {
    node: usize,
    start: usize,
    end: usize,
}

pub fn build_bvh(mesh: &TriangleMesh, max_leaf: usize) -> Result<Bvh, MeshError> {
    Bvh::build(mesh, max_leaf)
}

impl Bvh {
    pub fn build(mesh: &TriangleMesh, max_leaf: usize) -> Result<Self, MeshError> {
        let n = mesh.triangle_count();
        if n == 0 {
            return Err(MeshError::EmptyMesh);
        }
        let max_leaf = max_leaf.max(1);
        let tri_bounds: Vec<Aabb> = (0..n).map(|i| Aabb::from_points(mesh.triangle(i).iter())).collect();
        let centroids: Vec<Vec3> = tri_bounds.iter().map(|b| (b.min + b.max) * 0.5).collect();
        let mut order: Vec<u32> = (0..n as u32).collect();
        let mut nodes = vec![Node { bounds: Aabb::empty(), first: 0, count: 0 }];
        let mut stack = vec![BuildItem { node: 0, start: 0, end: n }];

        while let Some(BuildItem { node, start, end }) = stack.pop() {
            let slice = &mut order[start..end];
            let bounds = slice.iter().fold(Aabb::empty(), |b, &i| b.union(&tri_bounds[i as usize]));
            nodes[node].bounds = bounds;
            if slice.len() <= max_leaf {
                nodes[node].first = start as u32;
                nodes[node].count = slice.len() as u32;
                continue;
            }
            let centroid_bounds = Aabb::from_points(slice.iter().map(|&i| &centroids[i as usize]));
            let axis = centroid_bounds.longest_axis();
            slice.sort_by(|&a, &b| centroids[a as usize][axis].total_cmp(&centroids[b as usize][axis]).then(a.cmp(&b)));
            let mid = start + slice.len() / 2;
            let left = nodes.len();
            nodes.push(Node { bounds: Aabb::empty(), first: 0, count: 0 });
            nodes.push(Node { bounds: Aabb::empty(), first: 0, count: 0 });
            nodes[node].first = left as u32;
            nodes[node].count = 0;
            stack.push(BuildItem { node: left + 1, start: mid, end });
            stack.push(BuildItem { node: left, start, end: mid });
        }
        Ok(Bvh { nodes, order, max_leaf })
    }

    pub fn bounds(&self) -> Aabb {
        self.nodes[0].bounds
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn max_leaf(&self) -> usize {
        self.max_leaf
    }

    /// Number of levels (a single leaf has depth 1).
    pub fn depth(&self) -> usize {
        let mut deepest = 0;
        let mut stack = vec![(0usize, 1usize)];
        while let Some((i, d)) = stack.pop() {
            deepest = deepest.max(d);
            let node = &self.nodes[i];
            if node.count == 0 {
                stack.push((node.first as usize, d + 1));
                stack.push((node.first as usize + 1, d + 1));
            }
        }
        deepest
    }

    /// Triangle lists of all leaves in depth-first order.
    pub fn leaves(&self) -> Vec<&[u32]> {
        let mut out = Vec::new();
        let mut stack = vec![0usize];
        while let Some(i) = stack.pop() {
            let node = &self.nodes[i];
            if node.count > 0 {
                out.push(&self.order[node.first as usize..(node.first + node.count) as usize]);
            } else {
                stack.push(node.first as usize + 1);
                stack.push(node.first as usize);
            }
        }
        out
    }

    /// Checks the structural invariants against the mesh the tree was built for.
    pub fn validate(&self, mesh: &TriangleMesh) -> Result<(), String> {
        let n = mesh.triangle_count();
        let mut seen = vec![0u32; n];
        let mut visited = vec![false; self.nodes.len()];
        let mut stack = vec![0usize];
        while let Some(i) = stack.pop() {
            if i >= self.nodes.len() {
                return Err(format!("node index {i} out of range"));
            }
            if std::mem::replace(&mut visited[i], true) {
                return Err(format!("node {i} reachable twice"));
            }
            let node = &self.nodes[i];
            if node.count > 0 {
                if node.count as usize > self.max_leaf {
                    return Err(format!("leaf {i} holds {} triangles", node.count));
                }
                for &t in &self.order[node.first as usize..(node.first + node.count) as usize] {
                    seen[t as usize] += 1;
                    let tb = Aabb::from_points(mesh.triangle(t as usize).iter());
                    if !node.bounds.contains(&tb) {
                        return Err(format!("leaf {i} does not bound triangle {t}"));
                    }
                }
            } else {
                for c in [node.first as usize, node.first as usize + 1] {
                    if c <= i || c >= self.nodes.len() {
                        return Err(format!("node {i} has invalid child {c}"));
                    }
                    if !node.bounds.contains(&self.nodes[c].bounds) {
                        return Err(format!("node {i} does not contain child {c}"));
                    }
                    stack.push(c);
                }
            }
        }
        if let Some(i) = visited.iter().position(|v| !v) {
            return Err(format!("node {i} unreachable"));
        }
        if let Some(t) = seen.iter().position(|&c| c != 1) {
            return Err(format!("triangle {t} appears in {} leaves", seen[t]));
        }
        Ok(())
    }

    /// Nearest hit with `MIN_HIT_DISTANCE < t <= t_max`, ray in mesh-local
    /// coordinates. Equal distances resolve to the lower triangle index.
    pub fn intersect(&self, mesh: &TriangleMesh, origin: &Vec3, dir: &Vec3, t_max: f64) -> Option<Hit> {
        let inv_dir = dir.map(|d| 1.0 / d);
        let mut best: Option<Hit> = None;
        let mut limit = t_max;
        let mut stack: [u32; 64] = [0; 64];
        let mut top = 0usize;
        self.nodes[0].bounds.entry(origin, dir, &inv_dir, limit)?;
        stack[top] = 0;
        top += 1;
        while top > 0 {
            top -= 1;
            let node = &self.nodes[stack[top] as usize];
            if node.count > 0 {
                for &tri in &self.order[node.first as usize..(node.first + node.count) as usize] {
                    let [v0, v1, v2] = mesh.triangle(tri as usize);
                    if let Some(t) = ray_triangle(origin, dir, &v0, &v1, &v2) {
                        if t > MIN_HIT_DISTANCE && t <= limit {
                            let better = match best {
                                Some(b) => t < b.t || (t == b.t && tri < b.triangle),
                                None => true,
                            };
                            if better {
                                best = Some(Hit { t, triangle: tri });
                                limit = t;
                            }
                        }
                    }
                }
                continue;
            }
            let (l, r) = (node.first as usize, node.first as usize + 1);
            let el = self.nodes[l].bounds.entry(origin, dir, &inv_dir, limit);
            let er = self.nodes[r].bounds.entry(origin, dir, &inv_dir, limit);
            // Push the far child first so the near one is popped next.
            let mut push = |i: usize| {
                debug_assert!(top < stack.len());
                stack[top] = i as u32;
                top += 1;
            };
            match (el, er) {
                (Some(a), Some(b)) if a <= b => {
                    push(r);
                    push(l);
                }
                (Some(_), Some(_)) => {
                    push(l);
                    push(r);
                }
                (Some(_), None) => push(l),
                (None, Some(_)) => push(r),
                (None, None) => {}
            }
        }
        best
    }
}

/// Exhaustive nearest hit over every triangle, same acceptance rules as the BVH.
pub fn brute_force_intersect(mesh: &TriangleMesh, origin: &Vec3, dir: &Vec3, t_max: f64) -> Option<Hit> {
    let mut best: Option<Hit> = None;
    for i in 0..mesh.triangle_count() {
        let [v0, v1, v2] = mesh.triangle(i);
        if let Some(t) = ray_triangle(origin, dir, &v0, &v1, &v2) {
            if t > MIN_HIT_DISTANCE && t <= t_max && best.is_none_or(|b| t < b.t) {
                best = Some(Hit { t, triangle: i as u32 });
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_triangle_is_one_leaf() {
        let mesh =
            TriangleMesh::new(vec![Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0)], vec![[0, 1, 2]])
                .unwrap();
        let bvh = build_bvh(&mesh, DEFAULT_MAX_LEAF).unwrap();
        assert_eq!(bvh.node_count(), 1);
        assert_eq!(bvh.leaves(), vec![&[0u32][..]]);
        bvh.validate(&mesh).unwrap();
    }

    #[test]
    fn two_disjoint_cubes() {
        let cube = TriangleMesh::cuboid(Vec3::repeat(0.5));
        let mesh = cube.clone().merged(&cube, Vec3::new(5.0, 0.0, 0.0));
        assert_eq!(mesh.triangle_count(), 24);
        let bvh = build_bvh(&mesh, DEFAULT_MAX_LEAF).unwrap();
        bvh.validate(&mesh).unwrap();
        let b = bvh.bounds();
        assert_eq!(b.min, Vec3::new(-0.5, -0.5, -0.5));
        assert_eq!(b.max, Vec3::new(5.5, 0.5, 0.5));
        assert!(bvh.depth() >= 2);
        // The root split separates the two cubes.
        let leaves = bvh.leaves();
        let first_half: Vec<u32> = leaves.iter().take(leaves.len() / 2).flat_map(|l| l.iter().copied()).collect();
        assert!(first_half.iter().all(|&t| t < 12) || first_half.iter().all(|&t| t >= 12));
    }

    #[test]
    fn leaf_size_one() {
        let mesh = TriangleMesh::cuboid(Vec3::new(1.0, 2.0, 3.0));
        let bvh = build_bvh(&mesh, 1).unwrap();
        bvh.validate(&mesh).unwrap();
        assert_eq!(bvh.leaves().len(), 12);
    }

    #[test]
    fn axis_parallel_ray_on_box_face() {
        let b = Aabb { min: Vec3::zeros(), max: Vec3::repeat(1.0) };
        let o = Vec3::new(0.0, 0.5, -1.0);
        let d = Vec3::new(0.0, 0.0, 1.0);
        let inv = d.map(|c| 1.0 / c);
        assert_eq!(b.entry(&o, &d, &inv, 10.0), Some(1.0));
        let o = Vec3::new(-1e-12, 0.5, -1.0);
        assert_eq!(b.entry(&o, &d, &inv, 10.0), None);
    }

    #[test]
    fn hit_through_cube() {
        let mesh = TriangleMesh::cuboid(Vec3::repeat(0.5));
        let bvh = build_bvh(&mesh, 4).unwrap();
        let hit = bvh.intersect(&mesh, &Vec3::new(0.1, 0.2, 3.0), &Vec3::new(0.0, 0.0, -1.0), 10.0).unwrap();
        assert!((hit.t - 2.5).abs() < 1e-12);
        // Inside the cube the nearest face is the exit face.
        let hit = bvh.intersect(&mesh, &Vec3::zeros(), &Vec3::new(1.0, 0.0, 0.0), 10.0).unwrap();
        assert!((hit.t - 0.5).abs() < 1e-12);
        assert!(bvh.intersect(&mesh, &Vec3::new(0.1, 0.2, 3.0), &Vec3::new(0.0, 0.0, -1.0), 2.0).is_none());
    }
}
