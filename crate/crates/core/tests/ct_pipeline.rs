use std::f64::consts::PI;

use ebrt_core::ct::phantom::smooth_sphere_stack;
use ebrt_core::ct::{load_slice_stack, reconstruct, IsoStatus, ReconstructOptions, SliceStackMeta};
use ebrt_core::geometry::io::{load_mesh, save_mesh, MeshFormat};

const R: f64 = 50.0;

fn meta() -> SliceStackMeta {
    SliceStackMeta {
        rows: 64,
        cols: 64,
        pixel_size_mm: 2.0,
        slice_spacing_mm: 2.5,
        slices: 64,
        slope: 1.0,
        intercept: -1024.0,
        origin_mm: [-63.0, -63.0, -78.75],
    }
}

/// Water (stored 1024 → 0 HU) in air (stored 24 → −1000 HU) with a 4 mm
/// linear rim; the −300 HU level sits 0.8 mm inside the nominal radius.
fn iso_radius() -> f64 {
    R + 4.0 * (0.3 - 0.5)
}

fn stack_dir() -> tempfile::TempDir {
    let m = meta();
    let dir = tempfile::tempdir().unwrap();
    ebrt_core::ct::write_slice_stack(dir.path(), &m, &smooth_sphere_stack(&m, R, 1024, 24)).unwrap();
    dir
}

#[test]
fn slice_stack_sphere_reconstructs_to_analytic_measures() {
    let dir = stack_dir();
    let g = load_slice_stack(dir.path()).unwrap();
    let iso = reconstruct(&g, "sphere", &ReconstructOptions::default()).unwrap();
    assert_eq!(iso.status, IsoStatus::Ok);
    let m = &iso.mesh;
    assert!(m.is_watertight());
    assert_eq!(m.euler_characteristic(), 2);
    let r = iso_radius();
    // tissue is denser than air, so normals face outward and the volume is positive
    let v = m.signed_volume();
    assert!((v - 4.0 / 3.0 * PI * r.powi(3)).abs() / (4.0 / 3.0 * PI * r.powi(3)) < 0.02, "volume {v}");
    assert!((m.surface_area() - 4.0 * PI * r * r).abs() / (4.0 * PI * r * r) < 0.02);
    let c = m.aabb(&Default::default()).unwrap().center();
    assert!(c.norm() < 0.5, "sphere centre drifted to {c:?}");
}

#[test]
fn tenfold_decimation_keeps_shape() {
    let dir = stack_dir();
    let g = load_slice_stack(dir.path()).unwrap();
    let full = reconstruct(&g, "sphere", &ReconstructOptions::default()).unwrap();
    let target = full.mesh.triangle_count() / 10;
    let opts = ReconstructOptions {
        target_triangles: Some(target),
        ..Default::default()
    };
    let low = reconstruct(&g, "sphere", &opts).unwrap();
    let n = low.mesh.triangle_count() as f64;
    assert!((n - target as f64).abs() <= 0.05 * target as f64, "{n} vs {target}");
    assert!(low.mesh.is_watertight());
    let drift = (low.mesh.signed_volume() - full.mesh.signed_volume()).abs() / full.mesh.signed_volume();
    assert!(drift < 0.02, "volume drift {drift}");
    assert!((low.decimation_ratio - n / full.mesh.triangle_count() as f64).abs() < 1e-12);
}

#[test]
fn exported_meshes_round_trip() {
    let dir = stack_dir();
    let g = load_slice_stack(dir.path()).unwrap();
    let opts = ReconstructOptions {
        target_triangles: Some(4000),
        ..Default::default()
    };
    let m = reconstruct(&g, "sphere", &opts).unwrap().mesh;
    let out = tempfile::tempdir().unwrap();

    let obj = out.path().join("m.obj");
    save_mesh(&m, &obj, MeshFormat::Obj).unwrap();
    let back = load_mesh(&obj).unwrap();
    assert_eq!(back.triangles(), m.triangles());
    assert_eq!(back.vertices(), m.vertices());

    let stl = out.path().join("m.stl");
    save_mesh(&m, &stl, MeshFormat::Stl).unwrap();
    let back = load_mesh(&stl).unwrap();
    assert_eq!(back.triangle_count(), m.triangle_count());
    for (a, b) in m.iter_triangles().zip(back.iter_triangles()) {
        for (p, q) in a.vertices().iter().zip(b.vertices()) {
            // single precision in the file
            assert!((p - q).norm() <= 1e-5 * p.norm().max(1.0));
        }
    }
    assert!(back.is_watertight());
}
