use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use super::{primitives, GeometryError, Transform, TriMesh, Triangle, Vec3};

/// Axis-aligned box, `min ≤ max` componentwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn new(min: Vec3, max: Vec3) -> Self {
        debug_assert!(min.x <= max.x && min.y <= max.y && min.z <= max.z);
        Self { min, max }
    }

    pub fn from_point(p: Vec3) -> Self {
        Self { min: p, max: p }
    }

    pub fn empty() -> Self {
        Self {
            min: Vec3::repeat(f64::INFINITY),
            max: Vec3::repeat(f64::NEG_INFINITY),
        }
    }

    pub fn of_triangle(t: &Triangle) -> Self {
        Self::from_point(t.a).including(&t.b).including(&t.c)
    }

    pub fn including(&self, p: &Vec3) -> Self {
        Self {
            min: self.min.inf(p),
            max: self.max.sup(p),
        }
    }

    pub fn union(&self, o: &Aabb) -> Self {
        Self {
            min: self.min.inf(&o.min),
            max: self.max.sup(&o.max),
        }
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn half_extent(&self) -> Vec3 {
        self.extent() * 0.5
    }

    pub fn longest_axis(&self) -> usize {
        self.extent().imax()
    }

    pub fn contains_box(&self, o: &Aabb) -> bool {
        (0..3).all(|i| self.min[i] <= o.min[i] && o.max[i] <= self.max[i])
    }

    pub fn contains_point(&self, p: &Vec3) -> bool {
        (0..3).all(|i| self.min[i] <= p[i] && p[i] <= self.max[i])
    }

    pub fn inflated(&self, r: f64) -> Self {
        Self {
            min: self.min - Vec3::repeat(r),
            max: self.max + Vec3::repeat(r),
        }
    }

    pub fn overlaps(&self, o: &Aabb) -> bool {
        (0..3).all(|i| self.min[i] <= o.max[i] && o.min[i] <= self.max[i])
    }

    /// Euclidean gap between the boxes, zero when they overlap.
    pub fn distance(&self, o: &Aabb) -> f64 {
        let mut d2 = 0.0;
        for i in 0..3 {
            let gap = (o.min[i] - self.max[i]).max(self.min[i] - o.max[i]);
            if gap > 0.0 {
                d2 += gap * gap;
            }
        }
        d2.sqrt()
    }

    /// Axis-aligned box enclosing this box after a rigid transform.
    pub fn transformed(&self, t: &Transform) -> Self {
        let c = t.apply(&self.center());
        let r = t.rotation().abs() * self.half_extent();
        Self {
            min: c - r,
            max: c + r,
        }
    }
}

/// Oriented box: `center + R·(±half_extents)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Obb {
    pub center: Vec3,
    pub half_extents: Vec3,
    /// Columns are the box axes in the parent frame.
    pub axes: Matrix3<f64>,
}

impl Obb {
    pub fn new(center: Vec3, half_extents: Vec3, orientation: &Transform) -> Result<Self, GeometryError> {
        if !half_extents.iter().all(|h| *h > 0.0 && h.is_finite()) {
            return Err(GeometryError::InvalidObb);
        }
        Ok(Self {
            center,
            half_extents,
            axes: *orientation.rotation(),
        })
    }

    pub fn from_aabb(b: &Aabb) -> Result<Self, GeometryError> {
        Self::new(b.center(), b.half_extent(), &Transform::identity())
    }

    /// Box frame → parent frame.
    pub fn frame(&self) -> Transform {
        Transform::from_parts(self.axes, self.center).expect("OBB axes are orthonormal")
    }

    pub fn transformed(&self, t: &Transform) -> Obb {
        Obb {
            center: t.apply(&self.center),
            half_extents: self.half_extents,
            axes: t.rotation() * self.axes,
        }
    }

    pub fn corners(&self) -> [Vec3; 8] {
        let h = self.half_extents;
        let mut out = [Vec3::zeros(); 8];
        for (i, c) in out.iter_mut().enumerate() {
            let s = Vec3::new(
                if i & 1 == 0 { -h.x } else { h.x },
                if i & 2 == 0 { -h.y } else { h.y },
                if i & 4 == 0 { -h.z } else { h.z },
            );
            *c = self.center + self.axes * s;
        }
        out
    }

    /// The box surface as a closed 12-triangle mesh in the parent frame.
    pub fn to_mesh(&self) -> TriMesh {
        let h = self.half_extents;
        primitives::cuboid(-h, h).transformed(&self.frame())
    }

    pub fn aabb(&self) -> Aabb {
        let r = self.axes.abs() * self.half_extents;
        Aabb {
            min: self.center - r,
            max: self.center + r,
        }
    }

    /// Separating-axis test against an axis-aligned box; exact for closed
    /// solids up to floating point.
    pub fn overlaps_aabb(&self, b: &Aabb) -> bool {
        let a_axes = [Vec3::x(), Vec3::y(), Vec3::z()];
        let b_axes = [
            self.axes.column(0).into_owned(),
            self.axes.column(1).into_owned(),
            self.axes.column(2).into_owned(),
        ];
        let a_half = b.half_extent();
        let d = self.center - b.center();
        let project_a = |axis: &Vec3| a_half.x * axis.x.abs() + a_half.y * axis.y.abs() + a_half.z * axis.z.abs();
        let project_b = |axis: &Vec3| {
            (0..3)
                .map(|k| self.half_extents[k] * b_axes[k].dot(axis).abs())
                .sum::<f64>()
        };
        let separated = |axis: &Vec3| d.dot(axis).abs() > project_a(axis) + project_b(axis);
        if a_axes.iter().chain(b_axes.iter()).any(separated) {
            return false;
        }
        for ea in &a_axes {
            for eb in &b_axes {
                let axis = ea.cross(eb);
                if axis.norm_squared() < 1e-24 {
                    continue;
                }
                if separated(&axis) {
                    return false;
                }
            }
        }
        true
    }

    /// Lower bound of the distance between this box and `b`: the larger of
    /// the gaps measured in the parent frame and in the box's own frame.
    /// Never exceeds the true gap.
    pub fn distance_lower_bound(&self, b: &Aabb) -> f64 {
        let parent = self.aabb().distance(b);
        let to_local = self.frame().inverse();
        let local = Aabb {
            min: -self.half_extents,
            max: self.half_extents,
        };
        parent.max(local.distance(&b.transformed(&to_local)))
    }

    /// Tight box around the transformed vertices of `mesh`, with axes of
    /// `orientation`. Returns the box and the largest distance from a box
    /// surface point to the nearest mesh vertex on that face
    /// (a fit-quality figure: 0 when the mesh is itself that box).
    pub fn fit_mesh(mesh: &TriMesh, orientation: &Transform) -> Result<(Obb, f64), GeometryError> {
        let local = orientation.inverse();
        let b = mesh.aabb(&local)?;
        let obb = Obb::new(orientation.apply(&b.center()), b.half_extent(), orientation)?;
        // Fit quality: the furthest any box corner is from the mesh.
        let corners = Obb::new(b.center(), b.half_extent(), &Transform::identity())?.corners();
        let verts: Vec<Vec3> = mesh.vertices().iter().map(|v| local.apply(v)).collect();
        let deviation = corners
            .iter()
            .map(|c| verts.iter().map(|v| (v - c).norm()).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max);
        Ok((obb, deviation))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aabb_distance_and_overlap() {
        let a = Aabb::new(Vec3::zeros(), Vec3::repeat(1.0));
        let b = Aabb::new(Vec3::new(4.0, 0.0, 0.0), Vec3::new(5.0, 1.0, 1.0));
        assert!(!a.overlaps(&b));
        assert_eq!(a.distance(&b), 3.0);
        let c = Aabb::new(Vec3::new(4.0, 5.0, 0.0), Vec3::new(5.0, 6.0, 1.0));
        assert_eq!(a.distance(&c), 5.0);
        assert_eq!(a.distance(&a.inflated(0.5)), 0.0);
    }

    #[test]
    fn transformed_aabb_contains_transformed_corners() {
        let a = Aabb::new(Vec3::new(-1.0, 0.0, 2.0), Vec3::new(3.0, 1.0, 2.5));
        let t = Transform::translation(1.0, 2.0, 3.0).compose(&Transform::from_euler_deg(20.0, -40.0, 75.0));
        let obb = Obb::from_aabb(&a).unwrap();
        let big = a.transformed(&t).inflated(1e-9);
        for c in obb.corners() {
            assert!(big.contains_point(&t.apply(&c)));
        }
    }

    #[test]
    fn obb_sat_cases() {
        let unit = Aabb::new(Vec3::repeat(-1.0), Vec3::repeat(1.0));
        // rotated 45 degrees about z, centred 2.3 away: corner reaches x = 2.3 - sqrt(2) < 1
        let obb = Obb::new(Vec3::new(2.3, 0.0, 0.0), Vec3::repeat(1.0), &Transform::rot_z(45.0)).unwrap();
        assert!(obb.overlaps_aabb(&unit));
        let obb = Obb::new(Vec3::new(2.5, 0.0, 0.0), Vec3::repeat(1.0), &Transform::rot_z(45.0)).unwrap();
        assert!(!obb.overlaps_aabb(&unit));
        // edge-edge separating axis: boxes that only an edge cross-product separates
        let obb = Obb::new(
            Vec3::new(1.9, 1.9, 0.0),
            Vec3::new(1.0, 1.0, 1.0),
            &Transform::rot_z(45.0).compose(&Transform::rot_x(45.0)),
        )
        .unwrap();
        let corners_inside = obb.corners().iter().any(|c| unit.contains_point(c));
        assert!(!corners_inside || obb.overlaps_aabb(&unit));
    }

    #[test]
    fn obb_rejects_non_positive_extent() {
        assert!(Obb::new(Vec3::zeros(), Vec3::new(1.0, 0.0, 1.0), &Transform::identity()).is_err());
    }

    #[test]
    fn fit_of_box_mesh_is_exact() {
        let m = primitives::cuboid(Vec3::new(-2.0, -1.0, 0.0), Vec3::new(2.0, 1.0, 0.5))
            .transformed(&Transform::rot_z(30.0));
        let (obb, dev) = Obb::fit_mesh(&m, &Transform::rot_z(30.0)).unwrap();
        assert!(dev < 1e-9);
        assert!((obb.half_extents - Vec3::new(2.0, 1.0, 0.25)).amax() < 1e-9);
        let mesh = obb.to_mesh();
        assert_eq!(mesh.triangle_count(), 12);
        assert!(mesh.is_watertight());
        assert!((mesh.signed_volume() - 4.0 * 2.0 * 0.5).abs() < 1e-9);
    }
}
