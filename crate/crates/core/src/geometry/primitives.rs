//! Closed, outward-wound procedural meshes.

use std::f64::consts::TAU;

use super::{TriMesh, Vec3};

pub fn unit_cube() -> TriMesh {
    cuboid(Vec3::zeros(), Vec3::repeat(1.0))
}

/// Axis-aligned box with two triangles per face.
pub fn cuboid(min: Vec3, max: Vec3) -> TriMesh {
    cuboid_subdivided(min, max, [1, 1, 1])
}

/// Axis-aligned box whose faces are split into a regular grid with
/// `cells[k]` divisions along axis `k` (two triangles per cell).
pub fn cuboid_subdivided(min: Vec3, max: Vec3, cells: [usize; 3]) -> TriMesh {
    let cells = cells.map(|c| c.max(1));
    let coord = |axis: usize, i: usize| {
        if i == cells[axis] {
            max[axis]
        } else {
            min[axis] + (max[axis] - min[axis]) * (i as f64 / cells[axis] as f64)
        }
    };
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    // (normal axis, u axis, v axis) with u × v = +normal
    for (n, u, v) in [(0usize, 1usize, 2usize), (1, 2, 0), (2, 0, 1)] {
        for side in [0usize, 1] {
            let fixed = if side == 0 { min[n] } else { max[n] };
            let base = vertices.len() as u32;
            let (nu, nv) = (cells[u], cells[v]);
            for j in 0..=nv {
                for i in 0..=nu {
                    let mut p = Vec3::zeros();
                    p[n] = fixed;
                    p[u] = coord(u, i);
                    p[v] = coord(v, j);
                    vertices.push(p);
                }
            }
            let id = |i: usize, j: usize| base + (j * (nu + 1) + i) as u32;
            for j in 0..nv {
                for i in 0..nu {
                    let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
                    if side == 1 {
                        triangles.push([a, b, c]);
                        triangles.push([a, c, d]);
                    } else {
                        triangles.push([a, c, b]);
                        triangles.push([a, d, c]);
                    }
                }
            }
        }
    }
    TriMesh::new(vertices, triangles)
        .expect("box construction is valid")
        .welded()
}

/// Maps a point built in a Z-up local frame onto the requested axis by
/// permuting coordinates (exact, no rotation round-off).
fn orient(axis: usize, p: Vec3) -> Vec3 {
    match axis {
        0 => Vec3::new(p.z, p.x, p.y),
        1 => Vec3::new(p.y, p.z, p.x),
        _ => p,
    }
}

/// Closed cylinder along coordinate `axis` (0 = X, 1 = Y, 2 = Z), centred on
/// `center`, spanning `length` along the axis. `stacks` splits the side
/// wall lengthwise. Caps are split into concentric rings about as wide as
/// a segment, so no cap triangle spans the full radius.
pub fn cylinder(center: Vec3, axis: usize, radius: f64, length: f64, segments: usize, stacks: usize) -> TriMesh {
    let segments = segments.max(3);
    let stacks = stacks.max(1);
    let rings = ((segments as f64 / TAU).round() as usize).max(1);
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    let ring = |k: usize, r: f64| {
        let a = TAU * k as f64 / segments as f64;
        (r * a.cos(), r * a.sin())
    };
    let z0 = -length / 2.0;
    for s in 0..=stacks {
        let z = if s == stacks { length / 2.0 } else { z0 + length * s as f64 / stacks as f64 };
        for k in 0..segments {
            let (x, y) = ring(k, radius);
            vertices.push(Vec3::new(x, y, z));
        }
    }
    let id = |s: usize, k: usize| (s * segments + k % segments) as u32;
    for s in 0..stacks {
        for k in 0..segments {
            let (a, b, c, d) = (id(s, k), id(s, k + 1), id(s + 1, k + 1), id(s + 1, k));
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }
    // cap rings from the rim inward; the innermost ring is a fan about the centre
    for (outer_stack, z, up) in [(0, z0, false), (stacks, length / 2.0, true)] {
        let mut outer: Vec<u32> = (0..segments).map(|k| id(outer_stack, k)).collect();
        for j in (1..rings).rev() {
            let r = radius * j as f64 / rings as f64;
            let start = vertices.len() as u32;
            for k in 0..segments {
                let (x, y) = ring(k, r);
                vertices.push(Vec3::new(x, y, z));
            }
            let inner: Vec<u32> = (0..segments as u32).map(|k| start + k).collect();
            for k in 0..segments {
                let k1 = (k + 1) % segments;
                let (a, b, c, d) = (outer[k], outer[k1], inner[k1], inner[k]);
                if up {
                    triangles.push([a, b, c]);
                    triangles.push([a, c, d]);
                } else {
                    triangles.push([a, c, b]);
                    triangles.push([a, d, c]);
                }
            }
            outer = inner;
        }
        let centre = vertices.len() as u32;
        vertices.push(Vec3::new(0.0, 0.0, z));
        for k in 0..segments {
            let k1 = (k + 1) % segments;
            if up {
                triangles.push([centre, outer[k], outer[k1]]);
            } else {
                triangles.push([centre, outer[k1], outer[k]]);
            }
        }
    }
    let vertices = vertices.into_iter().map(|p| orient(axis, p) + center).collect();
    TriMesh::new(vertices, triangles).expect("cylinder construction is valid")
}

/// Closed ellipsoid with the given semi-axes, `rings` latitude bands and
/// `segments` longitude divisions.
pub fn ellipsoid(center: Vec3, semi_axes: Vec3, rings: usize, segments: usize) -> TriMesh {
    let rings = rings.max(2);
    let segments = segments.max(3);
    let mut vertices = vec![center + Vec3::new(0.0, 0.0, semi_axes.z)];
    for r in 1..rings {
        let theta = std::f64::consts::PI * r as f64 / rings as f64;
        let (st, ct) = theta.sin_cos();
        for k in 0..segments {
            let phi = TAU * k as f64 / segments as f64;
            let (sp, cp) = phi.sin_cos();
            vertices.push(center + Vec3::new(semi_axes.x * st * cp, semi_axes.y * st * sp, semi_axes.z * ct));
        }
    }
    let south = vertices.len() as u32;
    vertices.push(center - Vec3::new(0.0, 0.0, semi_axes.z));
    let id = |r: usize, k: usize| (1 + (r - 1) * segments + k % segments) as u32;
    let mut triangles = Vec::new();
    for k in 0..segments {
        triangles.push([0, id(1, k), id(1, k + 1)]);
    }
    for r in 1..rings - 1 {
        for k in 0..segments {
            let (a, b, c, d) = (id(r, k), id(r + 1, k), id(r + 1, k + 1), id(r, k + 1));
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }
    for k in 0..segments {
        triangles.push([south, id(rings - 1, k + 1), id(rings - 1, k)]);
    }
    TriMesh::new(vertices, triangles).expect("ellipsoid construction is valid")
}

/// Pyramid with apex `apex` over the quadrilateral `base` (counter-clockwise
/// seen from the apex).
pub fn pyramid(apex: Vec3, base: [Vec3; 4]) -> TriMesh {
    let mut vertices = vec![apex];
    vertices.extend_from_slice(&base);
    let triangles = vec![[0, 1, 2], [0, 2, 3], [0, 3, 4], [0, 4, 1], [1, 3, 2], [1, 4, 3]];
    TriMesh::new(vertices, triangles).expect("pyramid construction is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn subdivided_box_is_closed_and_outward() {
        let m = cuboid_subdivided(Vec3::new(-1.0, -2.0, -3.0), Vec3::new(1.0, 2.0, 0.0), [4, 3, 5]);
        assert!(m.is_watertight());
        assert_eq!(m.euler_characteristic(), 2);
        assert!((m.signed_volume() - 2.0 * 4.0 * 3.0).abs() < 1e-9);
        let expected_tris = 2 * 2 * (4 * 3 + 3 * 5 + 5 * 4);
        assert_eq!(m.triangle_count(), expected_tris);
    }

    #[test]
    fn cylinders_along_each_axis() {
        for axis in 0..3 {
            let m = cylinder(Vec3::new(1.0, 2.0, 3.0), axis, 2.0, 5.0, 256, 3);
            assert!(m.is_watertight());
            assert_eq!(m.euler_characteristic(), 2);
            let v = m.signed_volume();
            assert!(v > 0.0);
            assert!((v - PI * 4.0 * 5.0).abs() / (PI * 20.0) < 1e-3);
            let b = m.aabb(&Default::default()).unwrap();
            assert!((b.extent()[axis] - 5.0).abs() < 1e-12);
        }
    }

    #[test]
    fn cylinder_caps_have_no_long_triangles() {
        let (r, segments) = (1000.0, 256);
        let m = cylinder(Vec3::zeros(), 1, r, 800.0, segments, 8);
        assert!(m.is_watertight());
        assert_eq!(m.euler_characteristic(), 2);
        let rings = 41;
        assert_eq!(m.triangle_count(), 2 * segments * 8 + 2 * segments * (2 * rings - 1));
        let arc = TAU * r / segments as f64;
        for t in m.iter_triangles() {
            let [a, b, c] = t.vertices();
            let longest = (a - b).norm().max((b - c).norm()).max((c - a).norm());
            assert!(longest < 2.0 * arc.max(100.0), "{longest}");
        }
        // same polygonal solid as a fan cap
        let area_cap = 0.5 * segments as f64 * r * r * (TAU / segments as f64).sin();
        let side = segments as f64 * 2.0 * r * (PI / segments as f64).sin() * 800.0;
        assert!((m.surface_area() - (2.0 * area_cap + side)).abs() < 1e-6 * side);
    }

    #[test]
    fn ellipsoid_volume_and_topology() {
        let m = ellipsoid(Vec3::zeros(), Vec3::new(3.0, 2.0, 1.0), 64, 128);
        assert!(m.is_watertight());
        assert_eq!(m.euler_characteristic(), 2);
        let exact = 4.0 / 3.0 * PI * 6.0;
        assert!((m.signed_volume() - exact).abs() / exact < 2e-3);
    }

    #[test]
    fn pyramid_is_closed() {
        let m = pyramid(
            Vec3::new(0.0, 0.0, 1.0),
            [
                Vec3::new(-1.0, -1.0, 0.0),
                Vec3::new(1.0, -1.0, 0.0),
                Vec3::new(1.0, 1.0, 0.0),
                Vec3::new(-1.0, 1.0, 0.0),
            ],
        );
        assert!(m.is_watertight());
        assert!((m.signed_volume() - 4.0 / 3.0).abs() < 1e-12);
    }
}
