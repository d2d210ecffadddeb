//! Triangle-mesh prototypes and the Wavefront OBJ subset used to load them.

use crate::geometry::Vec3;
use std::path::Path;
use thiserror::Error;

/// Determinant magnitude below which a ray is treated as parallel to a
/// triangle (also rejects zero-area triangles).
pub const DETERMINANT_EPSILON: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("mesh has no triangles")]
    EmptyMesh,
    #[error("triangle {triangle} references vertex {index} but the mesh has {vertex_count} vertices")]
    IndexOutOfRange { triangle: usize, index: u32, vertex_count: usize },
    #[error("vertex {0} is not finite")]
    NonFiniteVertex(usize),
    #[error("{path}:{line}: {message}")]
    Obj { path: String, line: usize, message: String },
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Vec3>,
    triangles: Vec<[u32; 3]>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[u32; 3]>) -> Result<Self, MeshError> {
        if triangles.is_empty() {
            return Err(MeshError::EmptyMesh);
        }
        if let Some(i) = vertices.iter().position(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(MeshError::NonFiniteVertex(i));
        }
        for (triangle, tri) in triangles.iter().enumerate() {
            if let Some(&index) = tri.iter().find(|&&i| i as usize >= vertices.len()) {
                return Err(MeshError::IndexOutOfRange { triangle, index, vertex_count: vertices.len() });
            }
        }
        Ok(TriangleMesh { vertices, triangles })
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn triangle(&self, i: usize) -> [Vec3; 3] {
        let [a, b, c] = self.triangles[i];
        [self.vertices[a as usize], self.vertices[b as usize], self.vertices[c as usize]]
    }

    /// Bytes held by vertex and index storage.
    pub fn storage_bytes(&self) -> usize {
        self.vertices.capacity() * std::mem::size_of::<Vec3>()
            + self.triangles.capacity() * std::mem::size_of::<[u32; 3]>()
    }

    /// Axis-aligned box centered on the origin, 12 triangles.
    pub fn cuboid(half_extents: Vec3) -> Self {
        let h = half_extents;
        let vertices = (0..8)
            .map(|i| {
                Vec3::new(
                    if i & 1 == 0 { -h.x } else { h.x },
                    if i & 2 == 0 { -h.y } else { h.y },
                    if i & 4 == 0 { -h.z } else { h.z },
                )
            })
            .collect();
        let triangles = vec![
            [0, 2, 1],
            [1, 2, 3], // -z
            [4, 5, 6],
            [5, 7, 6], // +z
            [0, 1, 4],
            [1, 5, 4], // -y
            [2, 6, 3],
            [3, 6, 7], // +y
            [0, 4, 2],
            [2, 4, 6], // -x
            [1, 3, 5],
            [3, 7, 5], // +x
        ];
        TriangleMesh { vertices, triangles }
    }

    /// Square of side `size` in the z = 0 plane, centered on the origin.
    pub fn ground_quad(size: f64) -> Self {
        let h = 0.5 * size;
        let vertices = vec![Vec3::new(-h, -h, 0.0), Vec3::new(h, -h, 0.0), Vec3::new(h, h, 0.0), Vec3::new(-h, h, 0.0)];
        TriangleMesh { vertices, triangles: vec![[0, 1, 2], [0, 2, 3]] }
    }

    /// Regular grid surface `z = heights[iy * nx + ix]` with spacing `step`
    /// and its first sample at `(x0, y0)`.
    pub fn height_field(x0: f64, y0: f64, step: f64, nx: usize, ny: usize, heights: &[f64]) -> Result<Self, MeshError> {
        assert_eq!(heights.len(), nx * ny, "height field size");
        let vertices = (0..ny)
            .flat_map(|iy| (0..nx).map(move |ix| (ix, iy)))
            .map(|(ix, iy)| Vec3::new(x0 + ix as f64 * step, y0 + iy as f64 * step, heights[iy * nx + ix]))
            .collect();
        let mut triangles = Vec::with_capacity(2 * nx.saturating_sub(1) * ny.saturating_sub(1));
        for iy in 0..ny.saturating_sub(1) {
            for ix in 0..nx.saturating_sub(1) {
                let a = (iy * nx + ix) as u32;
                let b = a + 1;
                let c = a + nx as u32;
                let d = c + 1;
                triangles.push([a, b, d]);
                triangles.push([a, d, c]);
            }
        }
        Self::new(vertices, triangles)
    }

    /// Appends another mesh, offsetting its vertices by `offset`.
    pub fn merged(mut self, other: &TriangleMesh, offset: Vec3) -> Self {
        let base = self.vertices.len() as u32;
        self.vertices.extend(other.vertices.iter().map(|v| v + offset));
        self.triangles.extend(other.triangles.iter().map(|t| [t[0] + base, t[1] + base, t[2] + base]));
        self
    }

    pub fn load_obj(path: &Path) -> Result<Self, MeshError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| MeshError::Io { path: path.display().to_string(), source })?;
        parse_obj(&text).map_err(|e| match e {
            MeshError::Obj { line, message, .. } => MeshError::Obj { path: path.display().to_string(), line, message },
            other => other,
        })
    }
}

/// Parses `v` and `f` records of a Wavefront OBJ file. Faces with more than
/// three corners are triangulated as a fan around their first corner;
/// `v/vt/vn` corner forms and negative (relative) indices are accepted.
/// All other record types are ignored.
pub fn parse_obj(text: &str) -> Result<TriangleMesh, MeshError> {
    let err = |line: usize, message: String| MeshError::Obj { path: "<obj>".into(), line, message };
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let content = raw.split('#').next().unwrap_or("");
        let mut fields = content.split_whitespace();
        match fields.next() {
            Some("v") => {
                let coords: Vec<f64> = fields
                    .take(3)
                    .map(|f| f.parse::<f64>().map_err(|e| err(line, format!("bad vertex coordinate {f:?}: {e}"))))
                    .collect::<Result<_, _>>()?;
                if coords.len() != 3 {
                    return Err(err(line, "vertex needs three coordinates".into()));
                }
                vertices.push(Vec3::new(coords[0], coords[1], coords[2]));
            }
            Some("f") => {
                let corners: Vec<u32> = fields
                    .map(|f| {
                        let index = f.split('/').next().unwrap_or("");
                        let i: i64 = index.parse().map_err(|e| err(line, format!("bad face index {f:?}: {e}")))?;
                        let resolved = match i {
                            0 => return Err(err(line, "face index 0 is invalid".into())),
                            i if i > 0 => i - 1,
                            i => vertices.len() as i64 + i,
                        };
                        if resolved < 0 || resolved >= vertices.len() as i64 {
                            return Err(err(line, format!("face index {i} out of range")));
                        }
                        Ok(resolved as u32)
                    })
                    .collect::<Result<_, _>>()?;
                if corners.len() < 3 {
                    return Err(err(line, "face needs at least three corners".into()));
                }
                for k in 1..corners.len() - 1 {
                    triangles.push([corners[0], corners[k], corners[k + 1]]);
                }
            }
            _ => {}
        }
    }
    TriangleMesh::new(vertices, triangles)
}

/// Möller–Trumbore ray/triangle test. Returns the ray parameter of the
/// intersection (possibly negative); both faces count as hits.
#[inline]
pub fn ray_triangle(origin: &Vec3, dir: &Vec3, v0: &Vec3, v1: &Vec3, v2: &Vec3) -> Option<f64> {
    let e1 = v1 - v0;
    let e2 = v2 - v0;
    let p = dir.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < DETERMINANT_EPSILON {
        return None;
    }
    let inv = 1.0 / det;
    let s = origin - v0;
    let u = s.dot(&p) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = dir.dot(&q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    Some(e2.dot(&q) * inv)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn obj_fan_triangulation_and_relative_indices() {
        let text = "# quad\nv 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvn 0 0 1\nf 1//1 2//1 3//1 4//1\nf -4 -3 -2\n";
        let mesh = parse_obj(text).unwrap();
        assert_eq!(mesh.triangles(), &[[0, 1, 2], [0, 2, 3], [0, 1, 2]]);
    }

    #[test]
    fn obj_errors_carry_line_numbers() {
        match parse_obj("v 0 0 0\nv 1 0 0\nf 1 2 9\n") {
            Err(MeshError::Obj { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_obj("v 0 0 0\n"), Err(MeshError::EmptyMesh)));
    }

    #[test]
    fn rejects_bad_indices() {
        let r = TriangleMesh::new(vec![Vec3::zeros(); 2], vec![[0, 1, 2]]);
        assert!(matches!(r, Err(MeshError::IndexOutOfRange { index: 2, .. })));
    }

    #[test]
    fn triangle_hit_both_faces() {
        let [a, b, c] = [Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0)];
        let down = ray_triangle(&Vec3::new(0.2, 0.2, 1.0), &Vec3::new(0.0, 0.0, -1.0), &a, &b, &c);
        let up = ray_triangle(&Vec3::new(0.2, 0.2, -2.0), &Vec3::new(0.0, 0.0, 1.0), &a, &b, &c);
        assert_eq!(down, Some(1.0));
        assert_eq!(up, Some(2.0));
        let miss = ray_triangle(&Vec3::new(0.8, 0.8, 1.0), &Vec3::new(0.0, 0.0, -1.0), &a, &b, &c);
        assert_eq!(miss, None);
    }

    #[test]
    fn degenerate_triangle_never_hits() {
        let a = Vec3::new(0.0, 0.0, 0.0);
        let b = Vec3::new(1.0, 0.0, 0.0);
        let c = Vec3::new(2.0, 0.0, 0.0);
        for dir in [Vec3::new(0.0, 0.0, -1.0), Vec3::new(0.0, 1.0, 0.0)] {
            assert_eq!(ray_triangle(&Vec3::new(0.5, -1.0, 1.0), &dir, &a, &b, &c), None);
        }
    }

    #[test]
    fn cuboid_is_closed() {
        let m = TriangleMesh::cuboid(Vec3::new(0.5, 0.5, 0.5));
        assert_eq!(m.triangle_count(), 12);
        // every edge shared by exactly two triangles
        let mut edges = std::collections::HashMap::new();
        for t in m.triangles() {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                *edges.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        assert!(edges.values().all(|&n| n == 2));
    }
}
