use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::query::{compute_collision, couch_gantry_fast_check, Collider, CollisionReport, PairMode, QueryOptions, Shape};
use super::CollisionError;
use crate::geometry::{ClosestPair, Transform, TriMesh, Vec3};
use crate::linac::{ids, ComponentKind, PlacedComponent};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColliderPair {
    pub source: String,
    pub target: String,
    #[serde(default)]
    pub mode: PairMode,
}

impl ColliderPair {
    pub fn new(source: impl Into<String>, target: impl Into<String>, mode: PairMode) -> Self {
        Self {
            source: source.into(),
            target: target.into(),
            mode,
        }
    }
}

/// Couch×gantry (box fast path), collimator×couch, gantry×patient and
/// collimator×patient, plus every installed attachment against the
/// hardware it can reach: couch attachments against the collimator and
/// gantry-side attachments, collimator attachments against the couch,
/// couch attachments and patient. Pairs whose components are absent are
/// skipped.
pub fn default_pairs(placed: &[PlacedComponent]) -> Vec<ColliderPair> {
    let has = |id: &str| placed.iter().any(|p| p.id == id && p.collidable);
    let of_kind = |k: ComponentKind| {
        placed
            .iter()
            .filter(move |p| p.kind == k && p.collidable)
            .map(|p| p.id.clone())
    };
    let mut pairs = Vec::new();
    if has(ids::COUCH) && has(ids::GANTRY) {
        pairs.push(ColliderPair::new(ids::COUCH, ids::GANTRY, PairMode::ObbMesh));
    }
    if has(ids::COLLIMATOR) && has(ids::COUCH) {
        pairs.push(ColliderPair::new(ids::COLLIMATOR, ids::COUCH, PairMode::MeshMesh));
    }
    let couch_atts: Vec<String> = of_kind(ComponentKind::CouchAttachment).collect();
    let coll_atts: Vec<String> = of_kind(ComponentKind::CollimatorAttachment).collect();
    for a in &couch_atts {
        if has(ids::COLLIMATOR) {
            pairs.push(ColliderPair::new(ids::COLLIMATOR, a.clone(), PairMode::MeshMesh));
        }
    }
    if has(ids::PATIENT) {
        for src in [ids::GANTRY, ids::COLLIMATOR] {
            if has(src) {
                pairs.push(ColliderPair::new(src, ids::PATIENT, PairMode::MeshMesh));
            }
        }
    }
    for c in &coll_atts {
        if has(ids::COUCH) {
            pairs.push(ColliderPair::new(c.clone(), ids::COUCH, PairMode::MeshMesh));
        }
        for a in &couch_atts {
            pairs.push(ColliderPair::new(c.clone(), a.clone(), PairMode::MeshMesh));
        }
        if has(ids::PATIENT) {
            pairs.push(ColliderPair::new(c.clone(), ids::PATIENT, PairMode::MeshMesh));
        }
    }
    pairs
}

fn find<'a>(placed: &'a [PlacedComponent], id: &str) -> Result<&'a PlacedComponent, CollisionError> {
    placed
        .iter()
        .find(|p| p.id == id)
        .ok_or_else(|| CollisionError::DanglingComponent(id.to_string()))
}

fn collider(p: &PlacedComponent) -> Collider<'_> {
    Collider::new(&p.id, &p.shape, p.transform)
}

/// One report per pair, in pair order. Pairs are evaluated in parallel;
/// each pair's arithmetic is independent of scheduling.
pub fn scene_collision(
    placed: &[PlacedComponent],
    pairs: &[ColliderPair],
    opts: QueryOptions,
) -> Result<Vec<CollisionReport>, CollisionError> {
    let mut resolved = Vec::with_capacity(pairs.len());
    for pair in pairs {
        if pair.source == pair.target {
            return Err(CollisionError::SelfPair(pair.source.clone()));
        }
        resolved.push((find(placed, &pair.source)?, find(placed, &pair.target)?, pair.mode));
    }
    resolved
        .par_iter()
        .map(|&(s, t, mode)| match mode {
            PairMode::MeshMesh => compute_collision(&collider(s), &[collider(t)], opts),
            PairMode::ObbMesh => {
                let (obb, _) = s.shape.obb();
                Ok(couch_gantry_fast_check(&s.id, obb, &s.transform, &collider(t)))
            }
        })
        .collect()
}

/// Tests the beam frustum against the couch top, couch attachments and the
/// patient. Besides surface contact, a target lying wholly inside the
/// (convex) beam counts as intersecting.
pub fn beam_couch_intersection(beam: &TriMesh, placed: &[PlacedComponent]) -> Result<CollisionReport, CollisionError> {
    let shape = Shape::new(beam.clone())?;
    let source = Collider::new(ids::BEAM, &shape, Transform::identity());
    let targets: Vec<&PlacedComponent> = placed
        .iter()
        .filter(|p| {
            matches!(
                p.kind,
                ComponentKind::CouchTop | ComponentKind::CouchAttachment | ComponentKind::Patient
            )
        })
        .collect();
    let colliders: Vec<Collider> = targets.iter().map(|p| collider(p)).collect();
    let mut report = compute_collision(&source, &colliders, QueryOptions::default())?;
    if !report.colliding {
        let inside: Vec<(&PlacedComponent, Vec3)> = targets
            .iter()
            .map(|p| (*p, p.transform.apply(&p.shape.mesh().vertices()[0])))
            .filter(|(_, v)| convex_contains(beam, v))
            .collect();
        if let Some(&(first, v)) = inside.first() {
            let hit = ClosestPair {
                distance: 0.0,
                pa: v,
                pb: v,
            };
            report = CollisionReport {
                target: first.id.clone(),
                colliding: true,
                distance_mm: 0.0,
                witness: [hit.pa, hit.pb],
                highlighted: std::iter::once(ids::BEAM.to_string())
                    .chain(inside.iter().map(|(p, _)| p.id.clone()))
                    .collect(),
                ..report
            };
        }
    }
    Ok(report)
}

/// Point-in-convex-polyhedron test for a closed, outward-wound mesh.
fn convex_contains(m: &TriMesh, p: &Vec3) -> bool {
    m.iter_triangles().all(|t| (p - t.a).dot(&t.raw_normal()) <= 0.0)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::geometry::primitives;

    fn placed(id: &str, kind: ComponentKind, mesh: TriMesh, t: Transform) -> PlacedComponent {
        PlacedComponent {
            id: id.into(),
            kind,
            transform: t,
            shape: Arc::new(Shape::new(mesh).unwrap()),
            collidable: true,
        }
    }

    #[test]
    fn empty_pair_list_gives_empty_reports() {
        let p = vec![placed(
            "gantry",
            ComponentKind::Gantry,
            primitives::unit_cube(),
            Transform::identity(),
        )];
        assert!(scene_collision(&p, &[], QueryOptions::default()).unwrap().is_empty());
    }

    #[test]
    fn dangling_and_self_pairs_are_rejected() {
        let p = vec![placed(
            "gantry",
            ComponentKind::Gantry,
            primitives::unit_cube(),
            Transform::identity(),
        )];
        let e = scene_collision(&p, &[ColliderPair::new("gantry", "nope", PairMode::MeshMesh)], Default::default());
        assert_eq!(e.unwrap_err(), CollisionError::DanglingComponent("nope".into()));
        let e = scene_collision(&p, &[ColliderPair::new("gantry", "gantry", PairMode::MeshMesh)], Default::default());
        assert_eq!(e.unwrap_err(), CollisionError::SelfPair("gantry".into()));
    }

    #[test]
    fn small_target_inside_beam_counts() {
        let beam = primitives::pyramid(
            Vec3::new(0.0, 0.0, 1000.0),
            [
                Vec3::new(-65.0, -65.0, -300.0),
                Vec3::new(65.0, -65.0, -300.0),
                Vec3::new(65.0, 65.0, -300.0),
                Vec3::new(-65.0, 65.0, -300.0),
            ],
        );
        let p = vec![placed(
            "pin",
            ComponentKind::CouchAttachment,
            primitives::cuboid(Vec3::repeat(-5.0), Vec3::repeat(5.0)),
            Transform::identity(),
        )];
        let r = beam_couch_intersection(&beam, &p).unwrap();
        assert!(r.colliding);
        assert_eq!(r.highlighted, vec!["beam".to_string(), "pin".to_string()]);
        let away = vec![placed(
            "pin",
            ComponentKind::CouchAttachment,
            primitives::cuboid(Vec3::repeat(-5.0), Vec3::repeat(5.0)),
            Transform::translation(300.0, 0.0, 0.0),
        )];
        assert!(!beam_couch_intersection(&beam, &away).unwrap().colliding);
    }
}
