//! Synthetic slice stacks for tests, demos and the bundled fixture.

use super::SliceStackMeta;

/// Stored values of a water sphere (`inside`) in air (`outside`), centred in
/// the grid. A voxel is inside when its centre lies within `radius_mm`.
/// Returns the stored slices and the number of inside voxels.
pub fn sphere_stack(meta: &SliceStackMeta, radius_mm: f64, inside: i16, outside: i16) -> (Vec<i16>, usize) {
    let c = [
        (meta.cols as f64 - 1.0) / 2.0 * meta.pixel_size_mm,
        (meta.rows as f64 - 1.0) / 2.0 * meta.pixel_size_mm,
        (meta.slices as f64 - 1.0) / 2.0 * meta.slice_spacing_mm,
    ];
    let mut out = Vec::with_capacity(meta.voxel_count());
    let mut count = 0;
    for z in 0..meta.slices {
        for y in 0..meta.rows {
            for x in 0..meta.cols {
                let d = [
                    x as f64 * meta.pixel_size_mm - c[0],
                    y as f64 * meta.pixel_size_mm - c[1],
                    z as f64 * meta.slice_spacing_mm - c[2],
                ];
                let r2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
                if r2 <= radius_mm * radius_mm {
                    count += 1;
                    out.push(inside);
                } else {
                    out.push(outside);
                }
            }
        }
    }
    (out, count)
}

/// Stored values of a smooth radial profile: `inside` at the centre falling
/// linearly to `outside` over a 4 mm shell around `radius_mm`, so Marching
/// Cubes sees a well-interpolated surface.
pub fn smooth_sphere_stack(meta: &SliceStackMeta, radius_mm: f64, inside: i16, outside: i16) -> Vec<i16> {
    let c = [
        (meta.cols as f64 - 1.0) / 2.0 * meta.pixel_size_mm,
        (meta.rows as f64 - 1.0) / 2.0 * meta.pixel_size_mm,
        (meta.slices as f64 - 1.0) / 2.0 * meta.slice_spacing_mm,
    ];
    let (lo, hi) = (outside as f64, inside as f64);
    let mut out = Vec::with_capacity(meta.voxel_count());
    for z in 0..meta.slices {
        for y in 0..meta.rows {
            for x in 0..meta.cols {
                let d = [
                    x as f64 * meta.pixel_size_mm - c[0],
                    y as f64 * meta.pixel_size_mm - c[1],
                    z as f64 * meta.slice_spacing_mm - c[2],
                ];
                let r = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
                let t = ((r - radius_mm) / 4.0 + 0.5).clamp(0.0, 1.0);
                out.push((hi + (lo - hi) * t).round() as i16);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ct::{load_slice_stack, write_slice_stack};

    #[test]
    fn loaded_sphere_count_matches_generator() {
        let meta = SliceStackMeta {
            rows: 20,
            cols: 24,
            pixel_size_mm: 1.5,
            slice_spacing_mm: 2.0,
            slices: 16,
            slope: 1.0,
            intercept: -1024.0,
            origin_mm: [0.0; 3],
        };
        let (stored, inside) = sphere_stack(&meta, 12.0, 1024, 24);
        let dir = tempfile::tempdir().unwrap();
        write_slice_stack(dir.path(), &meta, &stored).unwrap();
        let g = load_slice_stack(dir.path()).unwrap();
        assert!(inside > 0);
        assert_eq!(g.count_above(-300.0), inside);
    }
}
