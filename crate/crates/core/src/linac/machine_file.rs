//! TOML machine and phantom description files.
//!
//! Components are unions of parametric parts (boxes, cylinders, ellipsoids)
//! given in the component's own frame, in millimeters. Tessellation counts
//! are multiplied by a [`Detail`] factor when the meshes are generated, so
//! one file serves both the full-resolution scene and coarse test scenes.

use std::collections::HashSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{
    ids, Attachment, AxisLimit, ComponentModel, LinacError, MachineDescription, MotionLimits, MountKind, Phantom,
};
use crate::collision::Shape;
use crate::geometry::{primitives, Transform, TriMesh, Vec3};

pub const MACHINE_SCHEMA: &str = "ebrt-machine/1";
pub const PHANTOM_SCHEMA: &str = "ebrt-phantom/1";

/// Tessellation multiplier; 1.0 is the resolution written in the file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detail(pub f64);

impl Default for Detail {
    fn default() -> Self {
        Detail(1.0)
    }
}

impl Detail {
    fn scale(self, n: usize, min: usize) -> usize {
        ((n as f64 * self.0).round() as usize).max(min)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }
}

/// Translation plus X-Y-Z Euler rotation (applied rotation first).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MountSpec {
    #[serde(default)]
    pub translation: [f64; 3],
    #[serde(default)]
    pub rotation_deg: [f64; 3],
}

impl MountSpec {
    pub fn transform(&self) -> Transform {
        let [rx, ry, rz] = self.rotation_deg;
        Transform::from_translation(Vec3::from(self.translation)).compose(&Transform::from_euler_deg(rx, ry, rz))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase", deny_unknown_fields)]
pub enum PartSpec {
    Box {
        min: [f64; 3],
        max: [f64; 3],
        #[serde(default = "one_cell")]
        cells: [usize; 3],
        #[serde(default)]
        placement: Option<MountSpec>,
    },
    Cylinder {
        center: [f64; 3],
        axis: Axis,
        radius: f64,
        length: f64,
        segments: usize,
        #[serde(default = "one")]
        stacks: usize,
        #[serde(default)]
        placement: Option<MountSpec>,
    },
    Ellipsoid {
        center: [f64; 3],
        semi_axes: [f64; 3],
        rings: usize,
        segments: usize,
        #[serde(default)]
        placement: Option<MountSpec>,
    },
}

fn one() -> usize {
    1
}

fn one_cell() -> [usize; 3] {
    [1, 1, 1]
}

impl PartSpec {
    fn validate(&self, owner: &str) -> Result<(), LinacError> {
        let bad = |msg: String| Err(LinacError::Invalid(format!("{owner}: {msg}")));
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        match self {
            PartSpec::Box { min, max, .. } => {
                if !finite(min) || !finite(max) || (0..3).any(|k| min[k] >= max[k]) {
                    return bad(format!("box needs min < max, got {min:?} .. {max:?}"));
                }
            }
            PartSpec::Cylinder {
                center, radius, length, ..
            } => {
                if !finite(center) || !(*radius > 0.0 && radius.is_finite()) || !(*length > 0.0 && length.is_finite()) {
                    return bad("cylinder needs positive radius and length".into());
                }
            }
            PartSpec::Ellipsoid { center, semi_axes, .. } => {
                if !finite(center) || !semi_axes.iter().all(|s| *s > 0.0 && s.is_finite()) {
                    return bad("ellipsoid needs positive semi-axes".into());
                }
            }
        }
        Ok(())
    }

    pub fn mesh(&self, detail: Detail) -> TriMesh {
        let (mesh, placement) = match self {
            PartSpec::Box {
                min,
                max,
                cells,
                placement,
            } => (
                primitives::cuboid_subdivided(Vec3::from(*min), Vec3::from(*max), cells.map(|c| detail.scale(c, 1))),
                placement,
            ),
            PartSpec::Cylinder {
                center,
                axis,
                radius,
                length,
                segments,
                stacks,
                placement,
            } => (
                primitives::cylinder(
                    Vec3::from(*center),
                    axis.index(),
                    *radius,
                    *length,
                    detail.scale(*segments, 8),
                    detail.scale(*stacks, 1),
                ),
                placement,
            ),
            PartSpec::Ellipsoid {
                center,
                semi_axes,
                rings,
                segments,
                placement,
            } => (
                primitives::ellipsoid(
                    Vec3::from(*center),
                    Vec3::from(*semi_axes),
                    detail.scale(*rings, 4),
                    detail.scale(*segments, 8),
                ),
                placement,
            ),
        };
        match placement {
            Some(p) => mesh.transformed(&p.transform()),
            None => mesh,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentSpec {
    #[serde(default)]
    pub home: MountSpec,
    pub parts: Vec<PartSpec>,
}

impl ComponentSpec {
    fn validate(&self, owner: &str) -> Result<(), LinacError> {
        if self.parts.is_empty() {
            return Err(LinacError::Invalid(format!("{owner}: no parts")));
        }
        self.parts.iter().try_for_each(|p| p.validate(owner))
    }

    pub fn mesh(&self, name: &str, detail: Detail) -> TriMesh {
        let parts: Vec<TriMesh> = self.parts.iter().map(|p| p.mesh(detail)).collect();
        TriMesh::merge(&parts).with_name(name)
    }

    fn model(&self, name: &str, detail: Detail) -> Result<ComponentModel, LinacError> {
        Ok(ComponentModel {
            shape: Shape::shared(self.mesh(name, detail))?,
            home: self.home.transform(),
        })
    }
}

/// Rotation limits default to gantry ±185°, collimator ±175°, couch ±95°.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitsSpec {
    #[serde(default = "gantry_limit")]
    pub gantry_deg: AxisLimit,
    #[serde(default = "collimator_limit")]
    pub collimator_deg: AxisLimit,
    #[serde(default = "couch_rotation_limit")]
    pub couch_rotation_deg: AxisLimit,
    pub couch_lateral_mm: AxisLimit,
    pub couch_longitudinal_mm: AxisLimit,
    pub couch_vertical_mm: AxisLimit,
    #[serde(default = "field_limit")]
    pub field_size_mm: AxisLimit,
}

fn gantry_limit() -> AxisLimit {
    AxisLimit { min: -185.0, max: 185.0 }
}

fn collimator_limit() -> AxisLimit {
    AxisLimit { min: -175.0, max: 175.0 }
}

fn couch_rotation_limit() -> AxisLimit {
    AxisLimit { min: -95.0, max: 95.0 }
}

fn field_limit() -> AxisLimit {
    AxisLimit { min: 5.0, max: 400.0 }
}

impl From<LimitsSpec> for MotionLimits {
    fn from(l: LimitsSpec) -> Self {
        MotionLimits {
            gantry_deg: l.gantry_deg,
            collimator_deg: l.collimator_deg,
            couch_rotation_deg: l.couch_rotation_deg,
            couch_lateral_mm: l.couch_lateral_mm,
            couch_longitudinal_mm: l.couch_longitudinal_mm,
            couch_vertical_mm: l.couch_vertical_mm,
            field_size_mm: l.field_size_mm,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MountsSpec {
    pub collimator: MountSpec,
    pub couch: MountSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttachmentSpec {
    pub id: String,
    pub name: String,
    pub mount: MountKind,
    /// Placement relative to the mount point.
    #[serde(default)]
    pub offset: MountSpec,
    pub parts: Vec<PartSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MachineFile {
    pub schema: String,
    pub id: String,
    pub name: String,
    pub sad_mm: f64,
    #[serde(default = "beam_extension")]
    pub beam_extension_mm: f64,
    pub limits: LimitsSpec,
    pub mounts: MountsSpec,
    pub gantry: ComponentSpec,
    pub collimator: ComponentSpec,
    pub couch_top: ComponentSpec,
    pub couch_base: ComponentSpec,
    #[serde(default)]
    pub attachments: Vec<AttachmentSpec>,
}

fn beam_extension() -> f64 {
    300.0
}

fn check_schema(found: &str, expected: &str) -> Result<(), LinacError> {
    if found != expected {
        return Err(LinacError::Schema {
            found: found.into(),
            expected: expected.into(),
        });
    }
    Ok(())
}

impl MachineFile {
    pub fn parse(text: &str) -> Result<Self, LinacError> {
        let f: MachineFile = toml::from_str(text)?;
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<(), LinacError> {
        check_schema(&self.schema, MACHINE_SCHEMA)?;
        if self.id.is_empty() {
            return Err(LinacError::Invalid("empty machine id".into()));
        }
        if !(self.sad_mm > 0.0 && self.sad_mm.is_finite()) {
            return Err(LinacError::Invalid(format!("SAD must be positive, got {}", self.sad_mm)));
        }
        if !(self.beam_extension_mm >= 0.0 && self.beam_extension_mm.is_finite()) {
            return Err(LinacError::Invalid("beam extension must be non-negative".into()));
        }
        for (axis, l) in MotionLimits::from(self.limits).axes() {
            if !(l.min < l.max && l.min.is_finite() && l.max.is_finite()) {
                return Err(LinacError::Invalid(format!("limit {axis} needs min < max")));
            }
        }
        if self.limits.field_size_mm.min <= 0.0 {
            return Err(LinacError::Invalid("field size limits must be positive".into()));
        }
        self.gantry.validate(ids::GANTRY)?;
        self.collimator.validate(ids::COLLIMATOR)?;
        self.couch_top.validate(ids::COUCH)?;
        self.couch_base.validate(ids::COUCH_BASE)?;
        let reserved = [ids::GANTRY, ids::COLLIMATOR, ids::COUCH, ids::COUCH_BASE, ids::PATIENT, ids::BEAM];
        let mut seen = HashSet::new();
        for a in &self.attachments {
            if a.id.is_empty() || reserved.contains(&a.id.as_str()) || !seen.insert(a.id.as_str()) {
                return Err(LinacError::Invalid(format!("attachment id {:?} is reserved or repeated", a.id)));
            }
            if a.parts.is_empty() {
                return Err(LinacError::Invalid(format!("attachment {:?} has no parts", a.id)));
            }
            a.parts.iter().try_for_each(|p| p.validate(&a.id))?;
        }
        Ok(())
    }

    /// Generates every mesh and its BVH.
    pub fn build(&self, detail: Detail) -> Result<MachineDescription, LinacError> {
        self.validate()?;
        let collimator_mount = self.mounts.collimator.transform();
        let couch_mount = self.mounts.couch.transform();
        let attachments = self
            .attachments
            .iter()
            .map(|a| {
                let mount = match a.mount {
                    MountKind::Collimator => &collimator_mount,
                    MountKind::Couch => &couch_mount,
                };
                let parts: Vec<TriMesh> = a.parts.iter().map(|p| p.mesh(detail)).collect();
                Ok(Attachment {
                    id: a.id.clone(),
                    name: a.name.clone(),
                    mount: a.mount,
                    offset: mount.compose(&a.offset.transform()),
                    shape: Arc::new(Shape::new(TriMesh::merge(&parts).with_name(&a.id))?),
                })
            })
            .collect::<Result<Vec<_>, LinacError>>()?;
        Ok(MachineDescription {
            id: self.id.clone(),
            name: self.name.clone(),
            sad_mm: self.sad_mm,
            beam_extension_mm: self.beam_extension_mm,
            limits: self.limits.into(),
            gantry: self.gantry.model(ids::GANTRY, detail)?,
            collimator: self.collimator.model(ids::COLLIMATOR, detail)?,
            couch_top: self.couch_top.model(ids::COUCH, detail)?,
            couch_base: self.couch_base.model(ids::COUCH_BASE, detail)?,
            collimator_mount,
            couch_mount,
            attachments,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomFile {
    pub schema: String,
    pub id: String,
    pub name: String,
    pub semi_axes_mm: [f64; 3],
    pub rings: usize,
    pub segments: usize,
}

impl PhantomFile {
    pub fn parse(text: &str) -> Result<Self, LinacError> {
        let f: PhantomFile = toml::from_str(text)?;
        check_schema(&f.schema, PHANTOM_SCHEMA)?;
        if !f.semi_axes_mm.iter().all(|s| *s > 0.0 && s.is_finite()) {
            return Err(LinacError::Invalid("phantom semi-axes must be positive".into()));
        }
        Ok(f)
    }

    /// Ellipsoid centred on the origin of its own frame.
    pub fn build(&self, detail: Detail) -> Result<Phantom, LinacError> {
        let mesh = primitives::ellipsoid(
            Vec3::zeros(),
            Vec3::from(self.semi_axes_mm),
            detail.scale(self.rings, 4),
            detail.scale(self.segments, 8),
        )
        .with_name(&self.id);
        Ok(Phantom {
            id: self.id.clone(),
            name: self.name.clone(),
            semi_axes_mm: self.semi_axes_mm,
            shape: Shape::shared(mesh)?,
        })
    }
}
