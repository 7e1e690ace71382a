//! Exact triangle–triangle predicates and closest-point queries.
//!
//! Intersection is decided by edge–triangle tests in both directions: two
//! closed triangles share a point iff some edge of one meets the other
//! (this covers the crossing, touching and coplanar-containment cases).
//! Separation distance of disjoint triangles is attained by an edge–edge or
//! a vertex–face feature pair, so it is the minimum over those 15 pairs.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::{GeometryError, Vec3, DEGENERATE_AREA};

/// Absolute tolerance (mm) under which a point counts as lying on a plane
/// or touching a triangle.
pub const TOUCH_EPS: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Triangle {
    pub a: Vec3,
    pub b: Vec3,
    pub c: Vec3,
}

/// Closest pair between two primitives: `pa` lies on the first, `pb` on the
/// second.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosestPair {
    pub distance: f64,
    pub pa: Vec3,
    pub pb: Vec3,
}

impl ClosestPair {
    fn swapped(self) -> Self {
        Self {
            distance: self.distance,
            pa: self.pb,
            pb: self.pa,
        }
    }
}

impl Triangle {
    pub fn new(a: Vec3, b: Vec3, c: Vec3) -> Self {
        Self { a, b, c }
    }

    pub fn vertices(&self) -> [Vec3; 3] {
        [self.a, self.b, self.c]
    }

    /// Unnormalized normal `(b − a) × (c − a)`.
    pub fn raw_normal(&self) -> Vec3 {
        (self.b - self.a).cross(&(self.c - self.a))
    }

    pub fn area(&self) -> f64 {
        0.5 * self.raw_normal().norm()
    }

    pub fn centroid(&self) -> Vec3 {
        (self.a + self.b + self.c) / 3.0
    }

    pub fn is_degenerate(&self) -> bool {
        !(self.area() >= DEGENERATE_AREA)
    }

    pub fn map(&self, f: impl Fn(&Vec3) -> Vec3) -> Triangle {
        Triangle::new(f(&self.a), f(&self.b), f(&self.c))
    }

    fn edges(&self) -> [(Vec3, Vec3); 3] {
        [(self.a, self.b), (self.b, self.c), (self.c, self.a)]
    }

    fn checked(&self) -> Result<(), GeometryError> {
        if !self.vertices().iter().all(|v| v.iter().all(|c| c.is_finite())) {
            return Err(GeometryError::NonFinite("triangle vertex".into()));
        }
        if self.is_degenerate() {
            return Err(GeometryError::DegenerateTriangle(self.area()));
        }
        Ok(())
    }

    /// Closest point of the closed triangle to `p` (Voronoi-region walk).
    pub fn closest_point(&self, p: &Vec3) -> Vec3 {
        let (a, b, c) = (self.a, self.b, self.c);
        let ab = b - a;
        let ac = c - a;
        let ap = p - a;
        let d1 = ab.dot(&ap);
        let d2 = ac.dot(&ap);
        if d1 <= 0.0 && d2 <= 0.0 {
            return a;
        }
        let bp = p - b;
        let d3 = ab.dot(&bp);
        let d4 = ac.dot(&bp);
        if d3 >= 0.0 && d4 <= d3 {
            return b;
        }
        let vc = d1 * d4 - d3 * d2;
        if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
            let v = d1 / (d1 - d3);
            return a + ab * v;
        }
        let cp = p - c;
        let d5 = ab.dot(&cp);
        let d6 = ac.dot(&cp);
        if d6 >= 0.0 && d5 <= d6 {
            return c;
        }
        let vb = d5 * d2 - d1 * d6;
        if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
            let w = d2 / (d2 - d6);
            return a + ac * w;
        }
        let va = d3 * d6 - d5 * d4;
        if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
            let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
            return b + (c - b) * w;
        }
        let denom = 1.0 / (va + vb + vc);
        let v = vb * denom;
        let w = vc * denom;
        a + ab * v + ac * w
    }

    pub fn distance_to_point(&self, p: &Vec3) -> f64 {
        (self.closest_point(p) - p).norm()
    }

    /// A point shared by the closed segment `[p, q]` and this triangle.
    fn segment_hit(&self, p: &Vec3, q: &Vec3) -> Option<Vec3> {
        let n = self.raw_normal();
        let len = n.norm();
        if len == 0.0 {
            return None;
        }
        let n = n / len;
        let dp = n.dot(&(p - self.a));
        let dq = n.dot(&(q - self.a));
        if (dp > TOUCH_EPS && dq > TOUCH_EPS) || (dp < -TOUCH_EPS && dq < -TOUCH_EPS) {
            return None;
        }
        let on_p = dp.abs() <= TOUCH_EPS;
        let on_q = dq.abs() <= TOUCH_EPS;
        if on_p && on_q {
            return self.coplanar_segment_hit(p, q);
        }
        let x = if on_p {
            *p
        } else if on_q {
            *q
        } else {
            p + (q - p) * (dp / (dp - dq))
        };
        (self.distance_to_point(&x) <= TOUCH_EPS).then_some(x)
    }

    fn coplanar_segment_hit(&self, p: &Vec3, q: &Vec3) -> Option<Vec3> {
        for x in [p, q] {
            if self.distance_to_point(x) <= TOUCH_EPS {
                return Some(*x);
            }
        }
        // Segment crossing a triangle edge. Both lie (nearly) in the plane, so
        // a 3D segment-segment closest pair with zero gap is a crossing.
        for (e0, e1) in self.edges() {
            let cp = closest_segment_segment(p, q, &e0, &e1);
            if cp.distance <= TOUCH_EPS {
                return Some(cp.pa);
            }
        }
        None
    }

    /// Largest signed distance of `other`'s vertices to this triangle's
    /// plane, and smallest; `None` for a degenerate plane.
    fn plane_side(&self, other: &Triangle) -> Option<(f64, f64)> {
        let n = self.raw_normal();
        let len = n.norm();
        if len == 0.0 {
            return None;
        }
        let n = n / len;
        let d = other.vertices().map(|v| n.dot(&(v - self.a)));
        Some((d[0].max(d[1]).max(d[2]), d[0].min(d[1]).min(d[2])))
    }
}

fn strictly_one_side(side: Option<(f64, f64)>) -> bool {
    matches!(side, Some((hi, lo)) if lo > TOUCH_EPS || hi < -TOUCH_EPS)
}

/// Closest points of segments `[p1, q1]` and `[p2, q2]` (clamped parametric
/// solution; handles degenerate segments).
pub fn closest_segment_segment(p1: &Vec3, q1: &Vec3, p2: &Vec3, q2: &Vec3) -> ClosestPair {
    const EPS: f64 = 1e-300;
    let d1 = q1 - p1;
    let d2 = q2 - p2;
    let r = p1 - p2;
    let a = d1.dot(&d1);
    let e = d2.dot(&d2);
    let f = d2.dot(&r);
    let (s, t);
    if a <= EPS && e <= EPS {
        s = 0.0;
        t = 0.0;
    } else if a <= EPS {
        s = 0.0;
        t = (f / e).clamp(0.0, 1.0);
    } else {
        let c = d1.dot(&r);
        if e <= EPS {
            t = 0.0;
            s = (-c / a).clamp(0.0, 1.0);
        } else {
            let b = d1.dot(&d2);
            let denom = a * e - b * b;
            let mut s0 = if denom > 0.0 {
                ((b * f - c * e) / denom).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let mut t0 = (b * s0 + f) / e;
            if t0 < 0.0 {
                t0 = 0.0;
                s0 = (-c / a).clamp(0.0, 1.0);
            } else if t0 > 1.0 {
                t0 = 1.0;
                s0 = ((b - c) / a).clamp(0.0, 1.0);
            }
            s = s0;
            t = t0;
        }
    }
    let pa = p1 + d1 * s;
    let pb = p2 + d2 * t;
    ClosestPair {
        distance: (pa - pb).norm(),
        pa,
        pb,
    }
}

fn lexicographic(a: &Triangle, b: &Triangle) -> Ordering {
    for (va, vb) in a.vertices().iter().zip(b.vertices().iter()) {
        for k in 0..3 {
            let o = va[k].total_cmp(&vb[k]);
            if o.is_ne() {
                return o;
            }
        }
    }
    Ordering::Equal
}

/// Contact witness `(on t1, on t2)` if the closed triangles share a point.
/// Inputs are assumed non-degenerate.
pub fn triangle_contact(t1: &Triangle, t2: &Triangle) -> Option<(Vec3, Vec3)> {
    if strictly_one_side(t1.plane_side(t2)) || strictly_one_side(t2.plane_side(t1)) {
        return None;
    }
    for (p, q) in t1.edges() {
        if let Some(x) = t2.segment_hit(&p, &q) {
            return Some((x, t2.closest_point(&x)));
        }
    }
    for (p, q) in t2.edges() {
        if let Some(x) = t1.segment_hit(&p, &q) {
            return Some((t1.closest_point(&x), x));
        }
    }
    let cp = feature_distance(t1, t2);
    (cp.distance <= TOUCH_EPS).then_some((cp.pa, cp.pb))
}

pub fn triangles_intersect(t1: &Triangle, t2: &Triangle) -> bool {
    triangle_contact(t1, t2).is_some()
}

/// Minimum over the 9 edge–edge and 6 vertex–face feature pairs.
fn feature_distance(t1: &Triangle, t2: &Triangle) -> ClosestPair {
    let mut best = ClosestPair {
        distance: f64::INFINITY,
        pa: t1.a,
        pb: t2.a,
    };
    let mut consider = |c: ClosestPair| {
        if c.distance < best.distance {
            best = c;
        }
    };
    for (p1, q1) in t1.edges() {
        for (p2, q2) in t2.edges() {
            consider(closest_segment_segment(&p1, &q1, &p2, &q2));
        }
    }
    for v in t1.vertices() {
        let pb = t2.closest_point(&v);
        consider(ClosestPair {
            distance: (pb - v).norm(),
            pa: v,
            pb,
        });
    }
    for v in t2.vertices() {
        let pa = t1.closest_point(&v);
        consider(ClosestPair {
            distance: (pa - v).norm(),
            pa,
            pb: v,
        });
    }
    best
}

/// Exact closest pair of two closed triangles; distance 0 iff they
/// intersect. Bitwise symmetric in its arguments.
pub fn triangle_closest(t1: &Triangle, t2: &Triangle) -> ClosestPair {
    if lexicographic(t1, t2) == Ordering::Greater {
        return triangle_closest(t2, t1).swapped();
    }
    if let Some((pa, pb)) = triangle_contact(t1, t2) {
        return ClosestPair {
            distance: 0.0,
            pa,
            pb,
        };
    }
    feature_distance(t1, t2)
}

/// Whether two closed, non-degenerate triangles share at least one point.
pub fn tri_tri_intersect(t1: &Triangle, t2: &Triangle) -> Result<bool, GeometryError> {
    t1.checked()?;
    t2.checked()?;
    Ok(triangles_intersect(t1, t2))
}

/// Minimum Euclidean distance between two closed, non-degenerate triangles.
pub fn tri_tri_min_distance(t1: &Triangle, t2: &Triangle) -> Result<f64, GeometryError> {
    t1.checked()?;
    t2.checked()?;
    Ok(triangle_closest(t1, t2).distance)
}
