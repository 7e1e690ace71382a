use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use super::bvh::{Bvh, NodeKind};
use super::CollisionError;
use crate::geometry::{triangle_closest, Aabb, ClosestPair, Obb, Transform, TriMesh, Triangle, Vec3};

/// Separation (mm) below which two bodies are reported as colliding.
pub const CONTACT_TOL: f64 = 1e-6;

/// A mesh with its prebuilt BVH. Immutable and shareable across threads.
#[derive(Debug)]
pub struct Shape {
    mesh: TriMesh,
    triangles: Vec<Triangle>,
    bvh: Bvh,
    obb_fit: OnceLock<(Obb, f64)>,
}

impl Shape {
    pub fn new(mesh: TriMesh) -> Result<Self, CollisionError> {
        let bvh = Bvh::build(&mesh)?;
        let triangles = mesh.iter_triangles().collect();
        Ok(Self {
            mesh,
            triangles,
            bvh,
            obb_fit: OnceLock::new(),
        })
    }

    pub fn shared(mesh: TriMesh) -> Result<Arc<Self>, CollisionError> {
        Self::new(mesh).map(Arc::new)
    }

    pub fn mesh(&self) -> &TriMesh {
        &self.mesh
    }

    pub fn bvh(&self) -> &Bvh {
        &self.bvh
    }

    pub fn triangles(&self) -> &[Triangle] {
        &self.triangles
    }

    /// Tight box with the axes of the shape's own frame, plus its fit
    /// deviation (largest corner-to-nearest-vertex distance, mm).
    pub fn obb(&self) -> &(Obb, f64) {
        self.obb_fit.get_or_init(|| {
            Obb::fit_mesh(&self.mesh, &Transform::identity()).expect("shape meshes are non-empty with volume")
        })
    }
}

/// A shape placed in the world.
#[derive(Debug, Clone, Copy)]
pub struct Collider<'a> {
    pub id: &'a str,
    pub shape: &'a Shape,
    pub transform: Transform,
}

impl<'a> Collider<'a> {
    pub fn new(id: &'a str, shape: &'a Shape, transform: Transform) -> Self {
        Self { id, shape, transform }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PairMode {
    #[default]
    MeshMesh,
    /// Source approximated by its fitted oriented box, tested in the
    /// target's frame.
    ObbMesh,
}

/// Result of one collider query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollisionReport {
    pub source: String,
    pub target: String,
    pub mode: PairMode,
    pub colliding: bool,
    /// Minimum separation in mm; exactly 0 when colliding.
    pub distance_mm: f64,
    /// World-frame points on source and target realising the separation
    /// (a contact point when colliding).
    pub witness: [Vec3; 2],
    /// Component ids to highlight; empty when clear.
    pub highlighted: Vec<String>,
}

impl CollisionReport {
    fn from_pair(source: &str, target: &str, mode: PairMode, cp: ClosestPair) -> Self {
        let colliding = cp.distance < CONTACT_TOL;
        Self {
            source: source.to_string(),
            target: target.to_string(),
            mode,
            colliding,
            distance_mm: if colliding { 0.0 } else { cp.distance },
            witness: [cp.pa, cp.pb],
            highlighted: if colliding {
                vec![source.to_string(), target.to_string()]
            } else {
                Vec::new()
            },
        }
    }

    /// Same report seen from the other side.
    pub fn swapped(&self) -> Self {
        Self {
            source: self.target.clone(),
            target: self.source.clone(),
            mode: self.mode,
            colliding: self.colliding,
            distance_mm: self.distance_mm,
            witness: [self.witness[1], self.witness[0]],
            highlighted: self.highlighted.iter().rev().cloned().collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QueryOptions {
    /// When false every triangle pair is evaluated (the brute-force path).
    pub use_bvh: bool,
}

impl Default for QueryOptions {
    fn default() -> Self {
        Self { use_bvh: true }
    }
}

/// Operand order independent of argument order, so swapped queries run
/// bit-identical arithmetic.
fn canonical_first(a: &Collider, b: &Collider) -> bool {
    match a.transform.total_cmp(&b.transform) {
        Ordering::Less => true,
        Ordering::Greater => false,
        Ordering::Equal => (a.shape as *const Shape) <= (b.shape as *const Shape),
    }
}

/// Closest pair between two placed shapes, in world coordinates.
pub fn closest_pair(a: &Collider, b: &Collider, opts: QueryOptions) -> ClosestPair {
    if !canonical_first(a, b) {
        let cp = closest_pair(b, a, opts);
        return ClosestPair {
            distance: cp.distance,
            pa: cp.pb,
            pb: cp.pa,
        };
    }
    // Work in a's frame: b-local → a-local.
    let rel = a.transform.inverse().compose(&b.transform);
    let local = if opts.use_bvh {
        bvh_closest(a.shape, b.shape, &rel)
    } else {
        brute_closest(a.shape, b.shape, &rel)
    };
    ClosestPair {
        distance: local.distance,
        pa: a.transform.apply(&local.pa),
        pb: a.transform.apply(&local.pb),
    }
}

fn brute_closest(a: &Shape, b: &Shape, rel: &Transform) -> ClosestPair {
    let mut best = ClosestPair {
        distance: f64::INFINITY,
        pa: Vec3::zeros(),
        pb: Vec3::zeros(),
    };
    for tb in &b.triangles {
        let tb = tb.map(|p| rel.apply(p));
        for ta in &a.triangles {
            let cp = triangle_closest(ta, &tb);
            if cp.distance < best.distance {
                best = cp;
            }
        }
    }
    best
}

/// Best-first BVH pair traversal. Node pairs are expanded in order of their
/// box gap; the search ends once the nearest pending gap is not below the
/// best distance found so far, or a contact is found.
fn bvh_closest(a: &Shape, b: &Shape, rel: &Transform) -> ClosestPair {
    let mut best = ClosestPair {
        distance: f64::INFINITY,
        pa: Vec3::zeros(),
        pb: Vec3::zeros(),
    };
    let inv = rel.inverse();
    // Gap between an a-node and a b-node, bounded from below in both frames.
    let lower = |ia: u32, ib: u32| {
        let (ba, bb) = (&a.bvh.node(ia).bounds, &b.bvh.node(ib).bounds);
        ba.distance(&bb.transformed(rel)).max(ba.transformed(&inv).distance(bb))
    };
    let mut heap = BinaryHeap::new();
    heap.push(Reverse(Pending(lower(0, 0), 0, 0)));
    let mut b_tris: Vec<(Triangle, Aabb)> = Vec::with_capacity(4);
    while let Some(Reverse(Pending(lb, ia, ib))) = heap.pop() {
        if lb >= best.distance || best.distance < CONTACT_TOL {
            break;
        }
        let (na, nb) = (a.bvh.node(ia), b.bvh.node(ib));
        match (na.kind, nb.kind) {
            (NodeKind::Leaf { start: sa, count: ca }, NodeKind::Leaf { start: sb, count: cb }) => {
                b_tris.clear();
                b_tris.extend(b.bvh.leaf_triangles(sb, cb).iter().map(|&t| {
                    let tb = b.triangles[t as usize].map(|p| rel.apply(p));
                    (tb, Aabb::of_triangle(&tb))
                }));
                for &ta in a.bvh.leaf_triangles(sa, ca) {
                    let ta = &a.triangles[ta as usize];
                    let box_a = Aabb::of_triangle(ta);
                    for (tb, box_b) in &b_tris {
                        if box_a.distance(box_b) >= best.distance {
                            continue;
                        }
                        let cp = triangle_closest(ta, tb);
                        if cp.distance < best.distance {
                            best = cp;
                        }
                    }
                }
            }
            _ => {
                let split_a = match (na.kind, nb.kind) {
                    (NodeKind::Inner { .. }, NodeKind::Leaf { .. }) => true,
                    (NodeKind::Leaf { .. }, NodeKind::Inner { .. }) => false,
                    _ => volume(&na.bounds) >= volume(&nb.bounds),
                };
                let children = if split_a {
                    let NodeKind::Inner { left, right } = na.kind else { unreachable!() };
                    [(left, ib), (right, ib)]
                } else {
                    let NodeKind::Inner { left, right } = nb.kind else { unreachable!() };
                    [(ia, left), (ia, right)]
                };
                for (ca, cb) in children {
                    let lb = lower(ca, cb);
                    if lb < best.distance {
                        heap.push(Reverse(Pending(lb, ca, cb)));
                    }
                }
            }
        }
    }
    best
}

/// Heap entry ordered by gap, then node indices.
struct Pending(f64, u32, u32);

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Pending {}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Pending {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1)).then(self.2.cmp(&other.2))
    }
}

fn volume(b: &Aabb) -> f64 {
    let e = b.extent();
    e.x * e.y * e.z + 1e-9 * (e.x + e.y + e.z)
}

/// True as soon as any triangle pair comes within [`CONTACT_TOL`].
pub fn collides(a: &Collider, b: &Collider, opts: QueryOptions) -> bool {
    if !canonical_first(a, b) {
        return collides(b, a, opts);
    }
    let rel = a.transform.inverse().compose(&b.transform);
    if !opts.use_bvh {
        return brute_closest(a.shape, b.shape, &rel).distance < CONTACT_TOL;
    }
    let mut stack = vec![(0u32, 0u32)];
    while let Some((ia, ib)) = stack.pop() {
        let (na, nb) = (a.shape.bvh.node(ia), b.shape.bvh.node(ib));
        let bb = nb.bounds.transformed(&rel);
        if na.bounds.distance(&bb) >= CONTACT_TOL {
            continue;
        }
        match (na.kind, nb.kind) {
            (NodeKind::Leaf { start: sa, count: ca }, NodeKind::Leaf { start: sb, count: cb }) => {
                for &tb in b.shape.bvh.leaf_triangles(sb, cb) {
                    let tb = b.shape.triangles[tb as usize].map(|p| rel.apply(p));
                    for &ta in a.shape.bvh.leaf_triangles(sa, ca) {
                        if triangle_closest(&a.shape.triangles[ta as usize], &tb).distance < CONTACT_TOL {
                            return true;
                        }
                    }
                }
            }
            (NodeKind::Inner { left, right }, NodeKind::Leaf { .. }) => {
                stack.push((left, ib));
                stack.push((right, ib));
            }
            (NodeKind::Leaf { .. }, NodeKind::Inner { left, right }) => {
                stack.push((ia, left));
                stack.push((ia, right));
            }
            (NodeKind::Inner { left: al, right: ar }, NodeKind::Inner { left: bl, right: br }) => {
                if volume(&na.bounds) >= volume(&nb.bounds) {
                    stack.push((al, ib));
                    stack.push((ar, ib));
                } else {
                    stack.push((ia, bl));
                    stack.push((ia, br));
                }
            }
        }
    }
    false
}

/// Full polygon-level report of `source` against a group of targets. The
/// group behaves as one composite body: the report carries the minimum
/// over all targets and highlights every colliding member.
pub fn compute_collision(
    source: &Collider,
    targets: &[Collider],
    opts: QueryOptions,
) -> Result<CollisionReport, CollisionError> {
    if targets.is_empty() {
        return Err(CollisionError::NoTargets);
    }
    let mut best: Option<(usize, ClosestPair)> = None;
    let mut hits = Vec::new();
    for (i, t) in targets.iter().enumerate() {
        let cp = closest_pair(source, t, opts);
        if cp.distance < CONTACT_TOL {
            hits.push(t.id.to_string());
        }
        if best.as_ref().is_none_or(|(_, b)| cp.distance < b.distance) {
            best = Some((i, cp));
        }
    }
    let (i, cp) = best.expect("targets is non-empty");
    let mut report = CollisionReport::from_pair(source.id, targets[i].id, PairMode::MeshMesh, cp);
    if report.colliding {
        report.highlighted = std::iter::once(source.id.to_string()).chain(hits).collect();
    }
    Ok(report)
}

/// Boolean-only variant of [`compute_collision`]: returns at the first
/// contact found.
pub fn detect_collision(source: &Collider, targets: &[Collider], opts: QueryOptions) -> Result<bool, CollisionError> {
    if targets.is_empty() {
        return Err(CollisionError::NoTargets);
    }
    Ok(targets.iter().any(|t| collides(source, t, opts)))
}

/// Couch-versus-gantry check with the couch approximated by an oriented
/// box. The box is carried into the gantry's local frame by
/// `gantry_T⁻¹ · couch_T`, so the gantry geometry and its BVH are used
/// untransformed; the box is tested as its 12-triangle surface.
pub fn couch_gantry_fast_check(
    couch_id: &str,
    couch_obb: &Obb,
    couch_t: &Transform,
    gantry: &Collider,
) -> CollisionReport {
    let to_gantry = gantry.transform.inverse().compose(couch_t);
    let obb = couch_obb.transformed(&to_gantry);
    let box_tris: Vec<Triangle> = obb.to_mesh().iter_triangles().collect();
    let shape = gantry.shape;
    let mut best = ClosestPair {
        distance: f64::INFINITY,
        pa: Vec3::zeros(),
        pb: Vec3::zeros(),
    };
    let mut stack = vec![(obb.distance_lower_bound(&shape.bvh.root().bounds), 0u32)];
    while let Some((lb, i)) = stack.pop() {
        if lb >= best.distance || best.distance < CONTACT_TOL {
            continue;
        }
        match shape.bvh.node(i).kind {
            NodeKind::Leaf { start, count } => {
                for &t in shape.bvh.leaf_triangles(start, count) {
                    let tg = &shape.triangles[t as usize];
                    for tb in &box_tris {
                        let cp = triangle_closest(tb, tg);
                        if cp.distance < best.distance {
                            best = cp;
                        }
                    }
                }
            }
            NodeKind::Inner { left, right } => {
                let mut kids = [left, right].map(|c| (obb.distance_lower_bound(&shape.bvh.node(c).bounds), c));
                kids.sort_by(|x, y| y.0.total_cmp(&x.0));
                stack.extend(kids.iter().filter(|k| k.0 < best.distance));
            }
        }
    }
    let world = ClosestPair {
        distance: best.distance,
        pa: gantry.transform.apply(&best.pa),
        pb: gantry.transform.apply(&best.pb),
    };
    CollisionReport::from_pair(couch_id, gantry.id, PairMode::ObbMesh, world)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::primitives;

    fn cube_shape() -> Shape {
        Shape::new(primitives::unit_cube()).unwrap()
    }

    #[test]
    fn overlapping_cubes_collide() {
        let s = cube_shape();
        let a = Collider::new("a", &s, Transform::identity());
        let b = Collider::new("b", &s, Transform::translation(0.5, 0.0, 0.0));
        let r = compute_collision(&a, &[b], QueryOptions::default()).unwrap();
        assert!(r.colliding);
        assert_eq!(r.distance_mm, 0.0);
        assert_eq!(r.highlighted, vec!["a".to_string(), "b".to_string()]);
        assert!(detect_collision(&a, &[b], QueryOptions::default()).unwrap());
    }

    #[test]
    fn separated_cubes_report_gap() {
        let s = cube_shape();
        let a = Collider::new("a", &s, Transform::identity());
        let b = Collider::new("b", &s, Transform::translation(6.0, 0.0, 0.0));
        let r = compute_collision(&a, &[b], QueryOptions::default()).unwrap();
        assert!(!r.colliding);
        assert!((r.distance_mm - 5.0).abs() < 1e-6);
        assert!(r.highlighted.is_empty());
        assert!((r.witness[0].x - 1.0).abs() < 1e-9 && (r.witness[1].x - 6.0).abs() < 1e-9);
        assert!(!detect_collision(&a, &[b], QueryOptions::default()).unwrap());
    }

    #[test]
    fn composite_target_takes_nearest_member() {
        let s = cube_shape();
        let a = Collider::new("a", &s, Transform::identity());
        let far = Collider::new("far", &s, Transform::translation(0.0, 10.0, 0.0));
        let near = Collider::new("near", &s, Transform::translation(0.0, 0.0, 3.0));
        let r = compute_collision(&a, &[far, near], QueryOptions::default()).unwrap();
        assert_eq!(r.target, "near");
        assert!((r.distance_mm - 2.0).abs() < 1e-9);
    }

    #[test]
    fn empty_target_list_is_an_error() {
        let s = cube_shape();
        let a = Collider::new("a", &s, Transform::identity());
        assert!(matches!(
            compute_collision(&a, &[], QueryOptions::default()),
            Err(CollisionError::NoTargets)
        ));
    }

    #[test]
    fn swap_is_exact() {
        let s = Shape::new(primitives::ellipsoid(Vec3::zeros(), Vec3::new(3.0, 2.0, 1.0), 12, 24)).unwrap();
        let a = Collider::new("a", &s, Transform::from_euler_deg(10.0, 20.0, 30.0));
        let b = Collider::new("b", &s, Transform::translation(4.0, 1.0, 2.0).compose(&Transform::rot_x(40.0)));
        let ab = compute_collision(&a, &[b], QueryOptions::default()).unwrap();
        let ba = compute_collision(&b, &[a], QueryOptions::default()).unwrap();
        assert_eq!(ab.distance_mm.to_bits(), ba.distance_mm.to_bits());
        assert_eq!(ab.witness[0], ba.witness[1]);
    }

    #[test]
    fn fast_check_matches_mesh_test_for_box() {
        let gantry = Shape::new(primitives::cylinder(Vec3::new(0.0, 0.0, 300.0), 2, 100.0, 200.0, 48, 2)).unwrap();
        let couch_mesh = primitives::cuboid(Vec3::new(-250.0, -1000.0, -50.0), Vec3::new(250.0, 500.0, 0.0));
        let couch = Shape::new(couch_mesh).unwrap();
        let (obb, dev) = *couch.obb();
        assert!(dev < 1e-9);
        let g = Collider::new("gantry", &gantry, Transform::identity());
        let clear = couch_gantry_fast_check("couch", &obb, &Transform::identity(), &g);
        assert!(!clear.colliding);
        assert!((clear.distance_mm - 200.0).abs() < 1e-9);
        let raised = Transform::translation(0.0, 0.0, 250.0);
        let hit = couch_gantry_fast_check("couch", &obb, &raised, &g);
        assert!(hit.colliding);
        assert_eq!(hit.highlighted, vec!["couch".to_string(), "gantry".to_string()]);
    }
}
