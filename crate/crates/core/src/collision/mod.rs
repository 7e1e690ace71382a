//! Polygon-level collision detection and clearance over placed meshes.
//!
//! Contact semantics are surface-based: two bodies collide when their
//! triangle surfaces come within [`CONTACT_TOL`] of each other.

mod bvh;
mod query;
mod scene;

pub use bvh::{Bvh, Node, NodeKind, LEAF_SIZE};
pub use query::{
    closest_pair, collides, compute_collision, couch_gantry_fast_check, detect_collision, Collider, CollisionReport,
    PairMode, QueryOptions, Shape, CONTACT_TOL,
};
pub use scene::{beam_couch_intersection, default_pairs, scene_collision, ColliderPair};

use crate::geometry::TriMesh;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CollisionError {
    #[error("mesh is empty")]
    EmptyMesh,
    #[error("no target meshes given")]
    NoTargets,
    #[error("collider pair references unknown component {0:?}")]
    DanglingComponent(String),
    #[error("collider pair has identical source and target {0:?}")]
    SelfPair(String),
}

pub fn build_bvh(m: &TriMesh) -> Result<Bvh, CollisionError> {
    Bvh::build(m)
}
