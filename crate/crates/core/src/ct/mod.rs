//! CT slice stacks, Marching Cubes skin extraction and quadric decimation.
//!
//! A slice stack is a directory holding `meta.json` plus one
//! `slice_<index>.raw` per slice: `rows × cols` signed 16-bit little-endian
//! integers in row-major order. Stored integers map to scalar values by
//! `slope · stored + intercept`. Grid point `(x, y, z)` (column, row, slice)
//! sits at `origin_mm + (x · pixel_size_mm, y · pixel_size_mm,
//! z · slice_spacing_mm)`.

mod decimate;
mod marching;
pub mod phantom;
mod tables;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::geometry::io::{save_mesh, MeshFormat};
use crate::geometry::{GeometryError, TriMesh};

pub use decimate::decimate;
pub use marching::marching_cubes;

/// Skin iso value on a Hounsfield-like scale (air ≈ −1000, soft tissue ≈ 0).
pub const DEFAULT_SKIN_ISO: f64 = -300.0;

#[derive(Debug, thiserror::Error)]
pub enum CtError {
    #[error("slice stack has no meta.json")]
    MissingMeta,
    #[error("meta.json: {0}")]
    Meta(String),
    #[error("invalid slice stack: {0}")]
    Invalid(String),
    #[error("slice {index} has {found} bytes, expected {expected}")]
    SliceSize { index: usize, expected: usize, found: usize },
    #[error("slice indices must run 0..{expected} without gaps or repeats: {detail}")]
    SliceIndices { expected: usize, detail: String },
    #[error("decimation target {target} must lie in [4, {current}]")]
    DecimationTarget { target: usize, current: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SliceStackMeta {
    pub rows: usize,
    pub cols: usize,
    pub pixel_size_mm: f64,
    pub slice_spacing_mm: f64,
    pub slices: usize,
    #[serde(default = "unit_slope")]
    pub slope: f64,
    #[serde(default)]
    pub intercept: f64,
    #[serde(default)]
    pub origin_mm: [f64; 3],
}

fn unit_slope() -> f64 {
    1.0
}

impl SliceStackMeta {
    pub fn validate(&self) -> Result<(), CtError> {
        let bad = |m: &str| Err(CtError::Invalid(m.into()));
        if self.rows == 0 || self.cols == 0 {
            return bad("rows and cols must be positive");
        }
        if self.slices < 2 {
            return bad("at least two slices are required");
        }
        if !(self.pixel_size_mm > 0.0 && self.pixel_size_mm.is_finite()) {
            return bad("pixel_size_mm must be positive");
        }
        if !(self.slice_spacing_mm > 0.0 && self.slice_spacing_mm.is_finite()) {
            return bad("slice_spacing_mm must be positive");
        }
        if !(self.slope.is_finite() && self.slope != 0.0 && self.intercept.is_finite()) {
            return bad("slope must be finite and non-zero, intercept finite");
        }
        if !self.origin_mm.iter().all(|v| v.is_finite()) {
            return bad("origin_mm must be finite");
        }
        Ok(())
    }

    pub fn voxel_count(&self) -> usize {
        self.rows * self.cols * self.slices
    }

    /// Stored integer → scalar value.
    pub fn rescale(&self, stored: i16) -> f64 {
        self.slope * stored as f64 + self.intercept
    }
}

/// Scalar field sampled on the slice-stack grid, slice-major.
#[derive(Debug, Clone, PartialEq)]
pub struct VolumeGrid {
    meta: SliceStackMeta,
    scalars: Vec<f64>,
}

impl VolumeGrid {
    pub fn new(meta: SliceStackMeta, scalars: Vec<f64>) -> Result<Self, CtError> {
        meta.validate()?;
        if scalars.len() != meta.voxel_count() {
            return Err(CtError::Invalid(format!(
                "{} scalars for a {}×{}×{} grid",
                scalars.len(),
                meta.cols,
                meta.rows,
                meta.slices
            )));
        }
        if scalars.iter().any(|v| !v.is_finite()) {
            return Err(CtError::Invalid("non-finite scalar".into()));
        }
        Ok(Self { meta, scalars })
    }

    /// Samples `f(x, y, z)` at every grid index.
    pub fn from_fn(meta: SliceStackMeta, f: impl Fn(usize, usize, usize) -> f64) -> Result<Self, CtError> {
        let mut scalars = Vec::with_capacity(meta.voxel_count());
        for z in 0..meta.slices {
            for y in 0..meta.rows {
                for x in 0..meta.cols {
                    scalars.push(f(x, y, z));
                }
            }
        }
        Self::new(meta, scalars)
    }

    pub fn from_stored(meta: SliceStackMeta, stored: &[i16]) -> Result<Self, CtError> {
        Self::new(meta, stored.iter().map(|&s| meta.rescale(s)).collect())
    }

    pub fn meta(&self) -> &SliceStackMeta {
        &self.meta
    }

    pub fn scalars(&self) -> &[f64] {
        &self.scalars
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.meta.cols, self.meta.rows, self.meta.slices]
    }

    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        (z * self.meta.rows + y) * self.meta.cols + x
    }

    pub fn value(&self, x: usize, y: usize, z: usize) -> f64 {
        self.scalars[self.index(x, y, z)]
    }

    /// `(min, max)` over all voxels.
    pub fn range(&self) -> (f64, f64) {
        self.scalars
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    pub fn count_above(&self, iso: f64) -> usize {
        self.scalars.iter().filter(|&&v| v > iso).count()
    }
}

/// Reads a slice-stack directory.
pub fn load_slice_stack(dir: &Path) -> Result<VolumeGrid, CtError> {
    let meta_path = dir.join("meta.json");
    if !meta_path.is_file() {
        return Err(CtError::MissingMeta);
    }
    let meta: SliceStackMeta =
        serde_json::from_slice(&std::fs::read(&meta_path)?).map_err(|e| CtError::Meta(e.to_string()))?;
    meta.validate()?;
    let mut files = BTreeMap::new();
    for entry in std::fs::read_dir(dir)? {
        let name = entry?.file_name();
        let Some(name) = name.to_str() else { continue };
        let Some(idx) = name.strip_prefix("slice_").and_then(|s| s.strip_suffix(".raw")) else {
            continue;
        };
        let index: usize = idx.parse().map_err(|_| CtError::SliceIndices {
            expected: meta.slices,
            detail: format!("unparseable slice file name {name:?}"),
        })?;
        if files.insert(index, name.to_string()).is_some() {
            return Err(CtError::SliceIndices {
                expected: meta.slices,
                detail: format!("index {index} appears twice"),
            });
        }
    }
    if files.len() != meta.slices || files.keys().enumerate().any(|(i, &k)| i != k) {
        return Err(CtError::SliceIndices {
            expected: meta.slices,
            detail: format!("found indices {:?}", files.keys().collect::<Vec<_>>()),
        });
    }
    let per_slice = meta.rows * meta.cols;
    let mut scalars = Vec::with_capacity(meta.voxel_count());
    for (&index, name) in &files {
        let bytes = std::fs::read(dir.join(name))?;
        if bytes.len() != 2 * per_slice {
            return Err(CtError::SliceSize {
                index,
                expected: 2 * per_slice,
                found: bytes.len(),
            });
        }
        scalars.extend(
            bytes
                .chunks_exact(2)
                .map(|c| meta.rescale(i16::from_le_bytes([c[0], c[1]]))),
        );
    }
    VolumeGrid::new(meta, scalars)
}

/// Writes `stored` (slice-major) as a slice-stack directory.
pub fn write_slice_stack(dir: &Path, meta: &SliceStackMeta, stored: &[i16]) -> Result<(), CtError> {
    meta.validate()?;
    if stored.len() != meta.voxel_count() {
        return Err(CtError::Invalid(format!(
            "{} stored values for {} voxels",
            stored.len(),
            meta.voxel_count()
        )));
    }
    std::fs::create_dir_all(dir)?;
    let json = serde_json::to_string_pretty(meta).map_err(|e| CtError::Meta(e.to_string()))?;
    std::fs::write(dir.join("meta.json"), json)?;
    let per_slice = meta.rows * meta.cols;
    for (i, slice) in stored.chunks_exact(per_slice).enumerate() {
        let bytes: Vec<u8> = slice.iter().flat_map(|v| v.to_le_bytes()).collect();
        std::fs::write(dir.join(format!("slice_{i}.raw")), bytes)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IsoStatus {
    Ok,
    /// The iso value is not strictly inside the grid's value range.
    EmptyIsoOutsideRange,
}

/// A reconstructed surface with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct IsoMesh {
    pub mesh: TriMesh,
    pub iso: f64,
    pub source: String,
    /// Output triangles over Marching Cubes triangles (1 when undecimated).
    pub decimation_ratio: f64,
    pub status: IsoStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructOptions {
    pub iso: f64,
    pub largest_component: bool,
    pub target_triangles: Option<usize>,
}

impl Default for ReconstructOptions {
    fn default() -> Self {
        Self {
            iso: DEFAULT_SKIN_ISO,
            largest_component: true,
            target_triangles: None,
        }
    }
}

/// Keeps only the connected component with the most triangles.
pub fn largest_component(m: &TriMesh) -> TriMesh {
    match m.connected_components().first() {
        Some(c) => m.subset(c),
        None => m.clone(),
    }
}

/// Marching Cubes, optional component filter, optional decimation. A
/// target at or above the triangle count leaves the mesh as is.
pub fn reconstruct(grid: &VolumeGrid, source: &str, opts: &ReconstructOptions) -> Result<IsoMesh, CtError> {
    let mut iso = marching_cubes(grid, opts.iso);
    iso.source = source.to_string();
    if opts.largest_component {
        iso.mesh = largest_component(&iso.mesh);
    }
    match opts.target_triangles {
        Some(t) if t < iso.mesh.triangle_count() => decimate(&iso, t),
        _ => Ok(iso),
    }
}

pub fn export_mesh(m: &IsoMesh, path: &Path, format: MeshFormat) -> Result<(), CtError> {
    Ok(save_mesh(&m.mesh, path, format)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta(rows: usize, cols: usize, slices: usize) -> SliceStackMeta {
        SliceStackMeta {
            rows,
            cols,
            pixel_size_mm: 1.0,
            slice_spacing_mm: 1.0,
            slices,
            slope: 1.0,
            intercept: 0.0,
            origin_mm: [0.0; 3],
        }
    }

    #[test]
    fn zeros_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        write_slice_stack(dir.path(), &meta(4, 4, 2), &[0; 32]).unwrap();
        let g = load_slice_stack(dir.path()).unwrap();
        assert_eq!(g.dims(), [4, 4, 2]);
        assert!(g.scalars().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rescale_is_affine() {
        let dir = tempfile::tempdir().unwrap();
        let m = SliceStackMeta {
            intercept: -1000.0,
            ..meta(2, 3, 2)
        };
        let stored: Vec<i16> = (0..12).map(|i| if i == 7 { 1000 } else { -24 }).collect();
        write_slice_stack(dir.path(), &m, &stored).unwrap();
        let g = load_slice_stack(dir.path()).unwrap();
        assert_eq!(g.scalars()[7], 0.0);
        assert_eq!(g.scalars()[0], -1024.0);
        // slice-major, row-major
        assert_eq!(g.index(1, 0, 1), 7);
    }

    #[test]
    fn malformed_stacks_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_slice_stack(dir.path()), Err(CtError::MissingMeta)));

        write_slice_stack(dir.path(), &meta(2, 2, 3), &[0; 12]).unwrap();
        std::fs::write(dir.path().join("slice_1.raw"), [0u8; 6]).unwrap();
        assert!(matches!(
            load_slice_stack(dir.path()),
            Err(CtError::SliceSize { index: 1, expected: 8, found: 6 })
        ));

        std::fs::remove_file(dir.path().join("slice_1.raw")).unwrap();
        std::fs::write(dir.path().join("slice_3.raw"), [0u8; 8]).unwrap();
        assert!(matches!(load_slice_stack(dir.path()), Err(CtError::SliceIndices { .. })));

        std::fs::write(dir.path().join("slice_1.raw"), [0u8; 8]).unwrap();
        std::fs::remove_file(dir.path().join("slice_3.raw")).unwrap();
        std::fs::write(dir.path().join("slice_01.raw"), [0u8; 8]).unwrap();
        assert!(matches!(load_slice_stack(dir.path()), Err(CtError::SliceIndices { .. })));

        std::fs::remove_file(dir.path().join("slice_01.raw")).unwrap();
        std::fs::write(dir.path().join("meta.json"), "{\"rows\": 2}").unwrap();
        assert!(matches!(load_slice_stack(dir.path()), Err(CtError::Meta(_))));
    }

    #[test]
    fn meta_validation() {
        assert!(meta(4, 4, 1).validate().is_err());
        assert!(SliceStackMeta {
            pixel_size_mm: 0.0,
            ..meta(4, 4, 2)
        }
        .validate()
        .is_err());
        assert!(VolumeGrid::new(meta(2, 2, 2), vec![0.0; 7]).is_err());
        assert!(VolumeGrid::new(meta(2, 2, 2), vec![f64::NAN; 8]).is_err());
    }
}
