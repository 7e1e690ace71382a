use std::collections::HashMap;

use rayon::prelude::*;

use super::tables::{CORNERS, EDGES, TRIANGLES};
use super::{IsoMesh, IsoStatus, VolumeGrid};
use crate::geometry::{TriMesh, Vec3};

/// Grid edge id: `3 · (lower endpoint's linear index) + axis`.
type EdgeKey = u64;

struct Slab {
    vertices: Vec<(EdgeKey, Vec3)>,
    triangles: Vec<[EdgeKey; 3]>,
}

/// Extracts the `iso` level set. Cells are processed in parallel one slice
/// layer at a time and stitched in layer order, so the output does not
/// depend on scheduling. Triangles face toward lower scalar values.
pub fn marching_cubes(g: &VolumeGrid, iso: f64) -> IsoMesh {
    let (lo, hi) = g.range();
    let empty = |status| IsoMesh {
        mesh: TriMesh::empty(),
        iso,
        source: String::new(),
        decimation_ratio: 1.0,
        status,
    };
    if !(lo < iso && iso < hi) {
        return empty(IsoStatus::EmptyIsoOutsideRange);
    }
    let [nx, ny, nz] = g.dims();
    let m = g.meta();
    let origin = Vec3::from(m.origin_mm);
    let spacing = Vec3::new(m.pixel_size_mm, m.pixel_size_mm, m.slice_spacing_mm);
    let point = |x: usize, y: usize, z: usize| {
        origin + Vec3::new(x as f64 * spacing.x, y as f64 * spacing.y, z as f64 * spacing.z)
    };
    let slabs: Vec<Slab> = (0..nz - 1)
        .into_par_iter()
        .map(|z| {
            let mut slab = Slab {
                vertices: Vec::new(),
                triangles: Vec::new(),
            };
            let mut local: HashMap<EdgeKey, ()> = HashMap::new();
            for y in 0..ny - 1 {
                for x in 0..nx - 1 {
                    let corner = |k: usize| {
                        let [dx, dy, dz] = CORNERS[k];
                        (x + dx, y + dy, z + dz)
                    };
                    let mut case = 0usize;
                    for k in 0..8 {
                        let (cx, cy, cz) = corner(k);
                        if g.value(cx, cy, cz) < iso {
                            case |= 1 << k;
                        }
                    }
                    let row = &TRIANGLES[case];
                    if row[0] < 0 {
                        continue;
                    }
                    let mut edge_key = |e: usize| {
                        let [a, b] = EDGES[e];
                        let (pa, pb) = (corner(a), corner(b));
                        let (p, q) = if pa <= pb { (pa, pb) } else { (pb, pa) };
                        let axis = if q.0 != p.0 {
                            0
                        } else if q.1 != p.1 {
                            1
                        } else {
                            2
                        };
                        let key = 3 * g.index(p.0, p.1, p.2) as u64 + axis;
                        local.entry(key).or_insert_with(|| {
                            let (v0, v1) = (g.value(p.0, p.1, p.2), g.value(q.0, q.1, q.2));
                            let t = (iso - v0) / (v1 - v0);
                            let a = point(p.0, p.1, p.2);
                            let b = point(q.0, q.1, q.2);
                            slab.vertices.push((key, a + (b - a) * t));
                        });
                        key
                    };
                    for tri in row.chunks(3).take_while(|c| c[0] >= 0) {
                        // table winding faces the corners below iso
                        let k = [edge_key(tri[0] as usize), edge_key(tri[1] as usize), edge_key(tri[2] as usize)];
                        slab.triangles.push(k);
                    }
                }
            }
            slab
        })
        .collect();

    let mut index: HashMap<EdgeKey, u32> = HashMap::new();
    let mut vertices = Vec::new();
    for slab in &slabs {
        for &(key, p) in &slab.vertices {
            index.entry(key).or_insert_with(|| {
                vertices.push(p);
                (vertices.len() - 1) as u32
            });
        }
    }
    let triangles: Vec<[u32; 3]> = slabs
        .iter()
        .flat_map(|s| s.triangles.iter().map(|t| t.map(|k| index[&k])))
        .collect();
    let mesh = TriMesh::new(vertices, triangles)
        .expect("interpolated vertices are finite and indices valid")
        .welded();
    IsoMesh {
        mesh,
        iso,
        source: String::new(),
        decimation_ratio: 1.0,
        status: IsoStatus::Ok,
    }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::ct::SliceStackMeta;

    fn meta(n: usize, px: f64, dz: f64) -> SliceStackMeta {
        SliceStackMeta {
            rows: n,
            cols: n,
            pixel_size_mm: px,
            slice_spacing_mm: dz,
            slices: n,
            slope: 1.0,
            intercept: 0.0,
            origin_mm: [0.0; 3],
        }
    }

    /// `f = r²` about the grid centre, in voxel units.
    fn sphere_field(n: usize) -> VolumeGrid {
        let c = (n as f64 - 1.0) / 2.0;
        VolumeGrid::from_fn(meta(n, 1.0, 1.0), |x, y, z| {
            let d = Vec3::new(x as f64 - c, y as f64 - c, z as f64 - c);
            d.norm_squared()
        })
        .unwrap()
    }

    #[test]
    fn uniform_grid_gives_empty_mesh() {
        let g = VolumeGrid::from_fn(meta(5, 1.0, 1.0), |_, _, _| 3.0).unwrap();
        let m = marching_cubes(&g, 3.0);
        assert!(m.mesh.is_empty());
        assert_eq!(m.status, IsoStatus::EmptyIsoOutsideRange);
        assert_eq!(marching_cubes(&g, -10.0).status, IsoStatus::EmptyIsoOutsideRange);
    }

    #[test]
    fn sphere_matches_analytic_measures() {
        let r = 20.3;
        let m = marching_cubes(&sphere_field(64), r * r).mesh;
        assert!(m.is_watertight());
        assert_eq!(m.euler_characteristic(), 2);
        // r² decreases inward, so normals point inward and the volume is negative
        let vol = -m.signed_volume();
        let exact_v = 4.0 / 3.0 * PI * r.powi(3);
        let exact_a = 4.0 * PI * r * r;
        assert!((vol - exact_v).abs() / exact_v < 0.02, "volume {vol} vs {exact_v}");
        assert!((m.surface_area() - exact_a).abs() / exact_a < 0.02);
    }

    #[test]
    fn vertices_interpolate_to_iso() {
        let g = sphere_field(24);
        let iso = 7.7 * 7.7;
        let m = marching_cubes(&g, iso).mesh;
        for v in m.vertices() {
            // exactly two coordinates are integral: the vertex lies on a grid edge
            let frac: Vec<usize> = (0..3).filter(|&k| v[k].fract() != 0.0).collect();
            assert!(frac.len() <= 1, "{v:?}");
            let axis = frac.first().copied().unwrap_or(0);
            let mut lo = [v.x as usize, v.y as usize, v.z as usize];
            lo[axis] = v[axis].floor() as usize;
            let mut hi = lo;
            hi[axis] += 1;
            let (a, b) = (g.value(lo[0], lo[1], lo[2]), g.value(hi[0], hi[1], hi[2]));
            assert!((a < iso) != (b < iso), "endpoints must straddle iso");
            let t = v[axis] - lo[axis] as f64;
            assert!((a + (b - a) * t - iso).abs() < 1e-6);
        }
    }

    #[test]
    fn metadata_scales_extents_exactly() {
        let field = |x: usize, y: usize, z: usize| {
            let d = Vec3::new(x as f64 - 9.5, y as f64 - 8.0, z as f64 - 10.2);
            d.norm_squared()
        };
        let extent = |px: f64, dz: f64| {
            let g = VolumeGrid::from_fn(meta(20, px, dz), field).unwrap();
            marching_cubes(&g, 30.0).mesh.aabb(&Default::default()).unwrap().extent()
        };
        let base = extent(0.75, 1.5);
        let wide = extent(1.5, 1.5);
        let tall = extent(0.75, 3.0);
        assert_eq!(wide.x, 2.0 * base.x);
        assert_eq!(wide.y, 2.0 * base.y);
        assert_eq!(wide.z, base.z);
        assert_eq!(tall.z, 2.0 * base.z);
        assert_eq!(tall.x, base.x);
    }

    #[test]
    fn output_is_deterministic() {
        let g = sphere_field(32);
        let a = marching_cubes(&g, 100.5).mesh;
        let b = marching_cubes(&g, 100.5).mesh;
        assert_eq!(a, b);
    }

    #[test]
    fn random_fields_stay_manifold_away_from_boundary() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let n = 12;
            let vals: Vec<f64> = (0..n * n * n).map(|_| rng.gen_range(0.0..1.0)).collect();
            // zero border so the surface never touches the boundary
            let g = VolumeGrid::from_fn(meta(n, 1.0, 1.0), |x, y, z| {
                if [x, y, z].iter().any(|&c| c == 0 || c == n - 1) {
                    0.0
                } else {
                    vals[(z * n + y) * n + x]
                }
            })
            .unwrap();
            let m = marching_cubes(&g, 0.5).mesh;
            assert!(m.is_watertight(), "cracks in the surface");
        }
    }
}
