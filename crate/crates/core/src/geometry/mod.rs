//! Rigid transforms, triangle meshes, bounding volumes and the exact
//! triangle-level primitives the collision engine is built on.
//!
//! World frame: right-handed, origin at the machine isocenter, +Z up, +Y
//! toward the gantry stand. All lengths are millimeters.

mod bounds;
pub mod io;
mod mesh;
pub mod primitives;
mod transform;
mod triangle;

pub use bounds::{Aabb, Obb};
pub use mesh::TriMesh;
pub use transform::{Transform, ORTHONORMAL_TOL};
pub use triangle::{
    closest_segment_segment, triangle_closest, triangle_contact, triangles_intersect, tri_tri_intersect,
    tri_tri_min_distance, ClosestPair, Triangle, TOUCH_EPS,
};

pub type Vec3 = nalgebra::Vector3<f64>;

/// Triangles with a smaller area (mm²) are treated as degenerate.
pub const DEGENERATE_AREA: f64 = 1e-12;

#[derive(Debug, thiserror::Error)]
pub enum GeometryError {
    #[error("degenerate triangle (area {0:e} mm²)")]
    DegenerateTriangle(f64),
    #[error("mesh is empty")]
    EmptyMesh,
    #[error("triangle index {index} out of range for {vertices} vertices")]
    IndexOutOfRange { index: usize, vertices: usize },
    #[error("non-finite coordinate in {0}")]
    NonFinite(String),
    #[error("invalid transform: {0}")]
    InvalidTransform(String),
    #[error("oriented box half-extents must be positive")]
    InvalidObb,
    #[error("malformed mesh file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// `apply(t, p)` in free-function form.
pub fn apply(t: &Transform, p: &Vec3) -> Vec3 {
    t.apply(p)
}

/// `a · b`: applies `b`, then `a`.
pub fn compose(a: &Transform, b: &Transform) -> Transform {
    a.compose(b)
}

pub fn invert(t: &Transform) -> Transform {
    t.inverse()
}

/// Tight axis-aligned bound of `m` placed by `t`.
pub fn mesh_aabb(m: &TriMesh, t: &Transform) -> Result<Aabb, GeometryError> {
    m.aabb(t)
}
