//! Quadric-error edge-collapse decimation.
//!
//! Every vertex carries the area-weighted sum of the plane quadrics of its
//! incident triangles; an edge collapses to the point minimising the summed
//! quadric, so flat regions (zero error) go first. Collapses that would
//! break manifoldness (link condition), turn a triangle by more than 90°,
//! or leave the original bounding box are skipped.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::{Matrix3, Matrix4, Vector4};

use super::{CtError, IsoMesh};
use crate::geometry::{Aabb, Transform, TriMesh, Vec3, DEGENERATE_AREA};

#[derive(Debug, Clone, Copy)]
struct Candidate {
    cost: f64,
    a: u32,
    b: u32,
    stamp: (u32, u32),
    target: Vec3,
}

impl PartialEq for Candidate {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

impl Ord for Candidate {
    /// Reversed so the max-heap pops the cheapest; ties go to the lower edge.
    fn cmp(&self, o: &Self) -> Ordering {
        o.cost
            .total_cmp(&self.cost)
            .then_with(|| (o.a, o.b).cmp(&(self.a, self.b)))
    }
}

struct State {
    pos: Vec<Vec3>,
    quadric: Vec<Matrix4<f64>>,
    tris: Vec<[u32; 3]>,
    tri_alive: Vec<bool>,
    vert_tris: Vec<Vec<u32>>,
    vert_alive: Vec<bool>,
    stamp: Vec<u32>,
    bounds: Aabb,
}

fn plane_quadric(a: &Vec3, b: &Vec3, c: &Vec3) -> Matrix4<f64> {
    let n = (b - a).cross(&(c - a));
    let len = n.norm();
    if len == 0.0 {
        return Matrix4::zeros();
    }
    let area = 0.5 * len;
    let n = n / len;
    let p = Vector4::new(n.x, n.y, n.z, -n.dot(a));
    p * p.transpose() * area
}

fn quadric_error(q: &Matrix4<f64>, v: &Vec3) -> f64 {
    let h = Vector4::new(v.x, v.y, v.z, 1.0);
    (h.transpose() * q * h)[0].max(0.0)
}

impl State {
    fn new(m: &TriMesh) -> Self {
        let n = m.vertices().len();
        let mut quadric = vec![Matrix4::zeros(); n];
        let mut vert_tris = vec![Vec::new(); n];
        for (i, t) in m.triangles().iter().enumerate() {
            let [a, b, c] = t.map(|k| m.vertices()[k as usize]);
            let q = plane_quadric(&a, &b, &c);
            for &k in t {
                quadric[k as usize] += q;
                vert_tris[k as usize].push(i as u32);
            }
        }
        Self {
            pos: m.vertices().to_vec(),
            quadric,
            tris: m.triangles().to_vec(),
            tri_alive: vec![true; m.triangle_count()],
            vert_alive: vec![true; n],
            stamp: vec![0; n],
            vert_tris,
            bounds: m.aabb(&Transform::identity()).unwrap_or_else(|_| Aabb::empty()),
        }
    }

    fn neighbours(&self, v: u32) -> Vec<u32> {
        let mut out: Vec<u32> = self.vert_tris[v as usize]
            .iter()
            .flat_map(|&t| self.tris[t as usize])
            .filter(|&k| k != v)
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    fn candidate(&self, a: u32, b: u32) -> Candidate {
        let (a, b) = (a.min(b), a.max(b));
        let q = self.quadric[a as usize] + self.quadric[b as usize];
        let (pa, pb) = (self.pos[a as usize], self.pos[b as usize]);
        let mut options = vec![pa, pb, (pa + pb) * 0.5];
        let m3: Matrix3<f64> = q.fixed_view::<3, 3>(0, 0).into_owned();
        let rhs = -q.fixed_view::<3, 1>(0, 3).into_owned();
        let scale = m3.norm();
        if scale > 0.0 && m3.determinant().abs() > 1e-9 * scale.powi(3) {
            if let Some(inv) = m3.try_inverse() {
                options.push(inv * rhs);
            }
        }
        let (lo, hi) = (self.bounds.min, self.bounds.max);
        let (cost, target) = options
            .into_iter()
            .map(|p| Vec3::new(p.x.clamp(lo.x, hi.x), p.y.clamp(lo.y, hi.y), p.z.clamp(lo.z, hi.z)))
            .map(|p| (quadric_error(&q, &p), p))
            .min_by(|x, y| x.0.total_cmp(&y.0))
            .expect("at least three options");
        Candidate {
            cost,
            a,
            b,
            stamp: (self.stamp[a as usize], self.stamp[b as usize]),
            target,
        }
    }

    fn is_current(&self, c: &Candidate) -> bool {
        self.vert_alive[c.a as usize]
            && self.vert_alive[c.b as usize]
            && (self.stamp[c.a as usize], self.stamp[c.b as usize]) == c.stamp
    }

    /// Link condition plus the normal-flip and degeneracy checks.
    fn can_collapse(&self, a: u32, b: u32, p: &Vec3) -> bool {
        let shared: Vec<u32> = self.vert_tris[a as usize]
            .iter()
            .copied()
            .filter(|&t| self.tris[t as usize].contains(&b))
            .collect();
        if shared.len() != 2 {
            return false;
        }
        let opposite: Vec<u32> = shared
            .iter()
            .map(|&t| {
                *self.tris[t as usize]
                    .iter()
                    .find(|&&k| k != a && k != b)
                    .expect("triangle has a third vertex")
            })
            .collect();
        let na = self.neighbours(a);
        let nb = self.neighbours(b);
        let common: Vec<u32> = na.iter().copied().filter(|k| nb.binary_search(k).is_ok()).collect();
        if common.len() != 2 || !opposite.iter().all(|o| common.contains(o)) {
            return false;
        }
        // a tetrahedron-like pocket would collapse into a doubled triangle
        if na.len() <= 3 || nb.len() <= 3 {
            return false;
        }
        for v in [a, b] {
            for &t in &self.vert_tris[v as usize] {
                if shared.contains(&t) {
                    continue;
                }
                let tri = self.tris[t as usize];
                let old = tri.map(|k| self.pos[k as usize]);
                let new = tri.map(|k| if k == a || k == b { *p } else { self.pos[k as usize] });
                let n_old = (old[1] - old[0]).cross(&(old[2] - old[0]));
                let n_new = (new[1] - new[0]).cross(&(new[2] - new[0]));
                if 0.5 * n_new.norm() < DEGENERATE_AREA || n_old.dot(&n_new) <= 0.0 {
                    return false;
                }
            }
        }
        true
    }

    /// Merges `b` into `a` at `p`; returns the number of triangles removed.
    fn collapse(&mut self, a: u32, b: u32, p: Vec3) -> usize {
        let mut removed = 0;
        let b_tris = std::mem::take(&mut self.vert_tris[b as usize]);
        for &t in &b_tris {
            let tri = &mut self.tris[t as usize];
            if tri.contains(&a) {
                self.tri_alive[t as usize] = false;
                removed += 1;
                for &k in tri.iter() {
                    if k != a && k != b {
                        self.vert_tris[k as usize].retain(|&x| x != t);
                    }
                }
            } else {
                for k in tri.iter_mut() {
                    if *k == b {
                        *k = a;
                    }
                }
            }
        }
        let alive = &self.tri_alive;
        let mut merged: Vec<u32> = self.vert_tris[a as usize]
            .iter()
            .chain(b_tris.iter())
            .copied()
            .filter(|&t| alive[t as usize])
            .collect();
        merged.sort_unstable();
        merged.dedup();
        self.vert_tris[a as usize] = merged;
        self.pos[a as usize] = p;
        let qb = self.quadric[b as usize];
        self.quadric[a as usize] += qb;
        self.vert_alive[b as usize] = false;
        self.stamp[a as usize] += 1;
        removed
    }

    fn into_mesh(self, name: Option<String>) -> TriMesh {
        let mut remap = vec![u32::MAX; self.pos.len()];
        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        for (t, alive) in self.tris.iter().zip(&self.tri_alive) {
            if !alive {
                continue;
            }
            triangles.push(t.map(|k| {
                if remap[k as usize] == u32::MAX {
                    remap[k as usize] = vertices.len() as u32;
                    vertices.push(self.pos[k as usize]);
                }
                remap[k as usize]
            }));
        }
        let mut m = TriMesh::new(vertices, triangles).expect("collapses keep triangles non-degenerate");
        m.name = name;
        m
    }
}

/// Collapses edges until at most `target` triangles remain (or no legal
/// collapse is left). Requires a closed manifold input.
pub fn decimate(m: &IsoMesh, target: usize) -> Result<IsoMesh, CtError> {
    let current = m.mesh.triangle_count();
    if target < 4 || target > current {
        return Err(CtError::DecimationTarget { target, current });
    }
    if target == current {
        return Ok(m.clone());
    }
    let mut st = State::new(&m.mesh);
    let mut heap = BinaryHeap::new();
    for t in m.mesh.triangles() {
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            if a < b {
                heap.push(st.candidate(a, b));
            }
        }
    }
    let mut count = current;
    while count > target {
        let Some(c) = heap.pop() else { break };
        if !st.is_current(&c) || !st.can_collapse(c.a, c.b, &c.target) {
            continue;
        }
        count -= st.collapse(c.a, c.b, c.target);
        for n in st.neighbours(c.a) {
            heap.push(st.candidate(c.a, n));
        }
    }
    let mesh = st.into_mesh(m.mesh.name.clone());
    let original = (current as f64 / m.decimation_ratio).max(1.0);
    Ok(IsoMesh {
        decimation_ratio: mesh.triangle_count() as f64 / original,
        mesh,
        iso: m.iso,
        source: m.source.clone(),
        status: m.status,
    })
}
