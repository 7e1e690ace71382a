use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{Aabb, GeometryError, Transform, Triangle, Vec3, DEGENERATE_AREA};

/// Indexed triangle surface. Vertices in mm, triangles as index triples.
///
/// Construction rejects out-of-range indices and non-finite coordinates and
/// drops triangles whose area is below [`DEGENERATE_AREA`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriMesh {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    vertices: Vec<Vec3>,
    triangles: Vec<[u32; 3]>,
}

impl TriMesh {
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[u32; 3]>) -> Result<Self, GeometryError> {
        if let Some(i) = vertices.iter().position(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(GeometryError::NonFinite(format!("vertex {i}")));
        }
        let n = vertices.len();
        if let Some(t) = triangles.iter().find(|t| t.iter().any(|&i| i as usize >= n)) {
            return Err(GeometryError::IndexOutOfRange {
                index: *t.iter().max().unwrap() as usize,
                vertices: n,
            });
        }
        let triangles = triangles
            .into_iter()
            .filter(|t| {
                let tri = Triangle::new(vertices[t[0] as usize], vertices[t[1] as usize], vertices[t[2] as usize]);
                tri.area() >= DEGENERATE_AREA
            })
            .collect();
        Ok(Self {
            name: None,
            vertices,
            triangles,
        })
    }

    pub fn empty() -> Self {
        Self {
            name: None,
            vertices: Vec::new(),
            triangles: Vec::new(),
        }
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
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

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn triangle(&self, i: usize) -> Triangle {
        let [a, b, c] = self.triangles[i];
        Triangle::new(
            self.vertices[a as usize],
            self.vertices[b as usize],
            self.vertices[c as usize],
        )
    }

    pub fn iter_triangles(&self) -> impl Iterator<Item = Triangle> + '_ {
        (0..self.triangles.len()).map(move |i| self.triangle(i))
    }

    /// Copy of the mesh with every vertex mapped through `t`.
    pub fn transformed(&self, t: &Transform) -> TriMesh {
        TriMesh {
            name: self.name.clone(),
            vertices: self.vertices.iter().map(|v| t.apply(v)).collect(),
            triangles: self.triangles.clone(),
        }
    }

    /// Concatenates meshes, offsetting indices.
    pub fn merge<'a>(parts: impl IntoIterator<Item = &'a TriMesh>) -> TriMesh {
        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        for p in parts {
            let base = vertices.len() as u32;
            vertices.extend_from_slice(&p.vertices);
            triangles.extend(p.triangles.iter().map(|t| [t[0] + base, t[1] + base, t[2] + base]));
        }
        TriMesh {
            name: None,
            vertices,
            triangles,
        }
    }

    /// Tight axis-aligned bound of the vertices referenced by triangles,
    /// after mapping through `t`.
    pub fn aabb(&self, t: &Transform) -> Result<Aabb, GeometryError> {
        if self.triangles.is_empty() {
            return Err(GeometryError::EmptyMesh);
        }
        let mut used = vec![false; self.vertices.len()];
        for tri in &self.triangles {
            for &i in tri {
                used[i as usize] = true;
            }
        }
        let mut pts = self
            .vertices
            .iter()
            .zip(used)
            .filter(|(_, u)| *u)
            .map(|(v, _)| t.apply(v));
        let first = pts.next().ok_or(GeometryError::EmptyMesh)?;
        Ok(pts.fold(Aabb::from_point(first), |b, p| b.including(&p)))
    }

    pub fn surface_area(&self) -> f64 {
        self.iter_triangles().map(|t| t.area()).sum()
    }

    /// Signed enclosed volume (positive for outward-facing winding on a
    /// closed mesh).
    pub fn signed_volume(&self) -> f64 {
        self.iter_triangles()
            .map(|t| t.a.dot(&t.b.cross(&t.c)) / 6.0)
            .sum()
    }

    /// Number of triangles incident to each undirected edge.
    pub fn edge_valence(&self) -> HashMap<(u32, u32), u32> {
        let mut m = HashMap::with_capacity(self.triangles.len() * 3 / 2);
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                *m.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        m
    }

    /// Every edge shared by exactly two triangles.
    pub fn is_watertight(&self) -> bool {
        !self.triangles.is_empty() && self.edge_valence().values().all(|&c| c == 2)
    }

    /// `V − E + F` over referenced vertices.
    pub fn euler_characteristic(&self) -> i64 {
        let edges = self.edge_valence().len() as i64;
        let mut used = vec![false; self.vertices.len()];
        for t in &self.triangles {
            for &i in t {
                used[i as usize] = true;
            }
        }
        let v = used.iter().filter(|u| **u).count() as i64;
        v - edges + self.triangles.len() as i64
    }

    /// Triangle sets of the edge-connected components, largest first.
    pub fn connected_components(&self) -> Vec<Vec<usize>> {
        let mut parent: Vec<usize> = (0..self.vertices.len()).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for t in &self.triangles {
            let a = find(&mut parent, t[0] as usize);
            for &o in &t[1..] {
                let b = find(&mut parent, o as usize);
                if a != b {
                    let (lo, hi) = (a.min(b), a.max(b));
                    parent[hi] = lo;
                }
            }
        }
        let mut groups: HashMap<usize, Vec<usize>> = HashMap::new();
        for (i, t) in self.triangles.iter().enumerate() {
            let r = find(&mut parent, t[0] as usize);
            groups.entry(r).or_default().push(i);
        }
        let mut out: Vec<Vec<usize>> = groups.into_values().collect();
        out.sort_by(|a, b| b.len().cmp(&a.len()).then(a[0].cmp(&b[0])));
        out
    }

    /// Keeps only the given triangles and compacts the vertex array.
    pub fn subset(&self, triangle_ids: &[usize]) -> TriMesh {
        let mut remap = vec![u32::MAX; self.vertices.len()];
        let mut vertices = Vec::new();
        let mut triangles = Vec::with_capacity(triangle_ids.len());
        for &ti in triangle_ids {
            let mut out = [0u32; 3];
            for (k, &vi) in self.triangles[ti].iter().enumerate() {
                if remap[vi as usize] == u32::MAX {
                    remap[vi as usize] = vertices.len() as u32;
                    vertices.push(self.vertices[vi as usize]);
                }
                out[k] = remap[vi as usize];
            }
            triangles.push(out);
        }
        TriMesh {
            name: self.name.clone(),
            vertices,
            triangles,
        }
    }

    /// Reverses the winding of every triangle.
    pub fn flipped(&self) -> TriMesh {
        TriMesh {
            name: self.name.clone(),
            vertices: self.vertices.clone(),
            triangles: self.triangles.iter().map(|t| [t[0], t[2], t[1]]).collect(),
        }
    }

    /// Merges bitwise-identical vertex positions and drops triangles that
    /// collapse as a result.
    pub fn welded(&self) -> TriMesh {
        let mut index: HashMap<[u64; 3], u32> = HashMap::with_capacity(self.vertices.len());
        let mut vertices = Vec::new();
        let mut remap = Vec::with_capacity(self.vertices.len());
        for v in &self.vertices {
            // +0.0 and -0.0 must weld together.
            let key = [v.x + 0.0, v.y + 0.0, v.z + 0.0].map(f64::to_bits);
            let id = *index.entry(key).or_insert_with(|| {
                vertices.push(*v);
                (vertices.len() - 1) as u32
            });
            remap.push(id);
        }
        let triangles = self
            .triangles
            .iter()
            .map(|t| t.map(|i| remap[i as usize]))
            .filter(|t| t[0] != t[1] && t[1] != t[2] && t[0] != t[2])
            .collect();
        let mut m = TriMesh {
            name: self.name.clone(),
            vertices,
            triangles,
        };
        m.drop_unreferenced();
        m
    }

    fn drop_unreferenced(&mut self) {
        let ids: Vec<usize> = (0..self.triangles.len()).collect();
        let name = self.name.take();
        *self = self.subset(&ids);
        self.name = name;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::primitives;

    #[test]
    fn rejects_bad_indices_and_nan() {
        let v = vec![Vec3::zeros(), Vec3::x(), Vec3::y()];
        assert!(matches!(
            TriMesh::new(v.clone(), vec![[0, 1, 3]]),
            Err(GeometryError::IndexOutOfRange { .. })
        ));
        let mut bad = v.clone();
        bad[1].x = f64::NAN;
        assert!(matches!(TriMesh::new(bad, vec![[0, 1, 2]]), Err(GeometryError::NonFinite(_))));
    }

    #[test]
    fn drops_degenerate_triangles() {
        let v = vec![Vec3::zeros(), Vec3::x(), Vec3::y(), Vec3::new(2.0, 0.0, 0.0)];
        let m = TriMesh::new(v, vec![[0, 1, 2], [0, 1, 3]]).unwrap();
        assert_eq!(m.triangle_count(), 1);
    }

    #[test]
    fn unit_cube_aabb() {
        let cube = primitives::unit_cube();
        let b = cube.aabb(&Transform::identity()).unwrap();
        assert_eq!(b.min, Vec3::zeros());
        assert_eq!(b.max, Vec3::new(1.0, 1.0, 1.0));
        let b = cube.aabb(&Transform::translation(5.0, 0.0, 0.0)).unwrap();
        assert_eq!(b.min, Vec3::new(5.0, 0.0, 0.0));
        assert_eq!(b.max, Vec3::new(6.0, 1.0, 1.0));
    }

    #[test]
    fn rotated_cube_aabb_extent_is_root_two() {
        let cube = primitives::unit_cube();
        let b = cube.aabb(&Transform::rot_z(45.0)).unwrap();
        let e = b.extent();
        assert!((e.x - 2f64.sqrt()).abs() < 1e-9);
        assert!((e.y - 2f64.sqrt()).abs() < 1e-9);
        assert!((e.z - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_mesh_has_no_aabb() {
        assert!(matches!(
            TriMesh::empty().aabb(&Transform::identity()),
            Err(GeometryError::EmptyMesh)
        ));
    }

    #[test]
    fn cube_topology() {
        let cube = primitives::unit_cube();
        assert!(cube.is_watertight());
        assert_eq!(cube.euler_characteristic(), 2);
        assert!((cube.signed_volume() - 1.0).abs() < 1e-12);
        assert!((cube.surface_area() - 6.0).abs() < 1e-12);
        assert!(!cube.flipped().signed_volume().is_sign_positive());
    }

    #[test]
    fn components_and_weld() {
        let a = primitives::unit_cube();
        let b = a.transformed(&Transform::translation(3.0, 0.0, 0.0));
        let m = TriMesh::merge([&a, &b, &a.transformed(&Transform::translation(0.0, 5.0, 0.0))]);
        let comps = m.connected_components();
        assert_eq!(comps.len(), 3);
        assert!(comps.iter().all(|c| c.len() == 12));

        // duplicating every vertex then welding restores the original connectivity
        let split = TriMesh::new(
            a.iter_triangles().flat_map(|t| [t.a, t.b, t.c]).collect(),
            (0..12u32).map(|i| [3 * i, 3 * i + 1, 3 * i + 2]).collect(),
        )
        .unwrap();
        assert!(!split.is_watertight());
        let w = split.welded();
        assert_eq!(w.vertices().len(), 8);
        assert!(w.is_watertight());
    }
}
