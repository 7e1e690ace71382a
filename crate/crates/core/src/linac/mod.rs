//! Parametric machine descriptions and forward kinematics.
//!
//! Angle conventions follow IEC 61217: gantry 0° puts the source straight
//! above the isocenter with the beam pointing down (−Z); positive gantry
//! rotation is clockwise seen from the couch foot, i.e. a right-handed
//! rotation about +Y. The collimator turns about the beam axis, the couch
//! about the vertical axis through the isocenter (positive =
//! counter-clockwise seen from above). Couch translations are expressed in
//! the rotated couch frame.

mod builtin;
mod kinematics;
mod machine_file;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::collision::{CollisionError, Shape};
use crate::geometry::{GeometryError, Transform};

pub use builtin::{builtin_catalog, builtin_machines, Catalog, BUILTIN_MACHINE_FILES, BUILTIN_PHANTOM_FILES};
pub use kinematics::{beam_frustum, clamp_state, forward_kinematics, source_position, Patient, Scene};
pub use machine_file::{
    AttachmentSpec, Axis, ComponentSpec, Detail, LimitsSpec, MachineFile, MountSpec, PartSpec, PhantomFile,
    MACHINE_SCHEMA, PHANTOM_SCHEMA,
};

#[derive(Debug, thiserror::Error)]
pub enum LinacError {
    #[error("machine file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("unsupported schema {found:?} (expected {expected:?})")]
    Schema { found: String, expected: String },
    #[error("invalid machine description: {0}")]
    Invalid(String),
    #[error("unknown attachment {0:?}")]
    UnknownAttachment(String),
    #[error("attachment {0:?} is already installed")]
    DuplicateAttachment(String),
    #[error("attachment {0:?} is not installed")]
    AttachmentNotInstalled(String),
    #[error("{axis} = {value} outside limits [{min}, {max}]")]
    OutOfLimits { axis: &'static str, value: f64, min: f64, max: f64 },
    #[error("{0} must be finite")]
    NonFinite(&'static str),
    #[error("field size must be positive, got {0} × {1} mm")]
    FieldSize(f64, f64),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Collision(#[from] CollisionError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Closed interval `[min, max]` for one motion axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct AxisLimit {
    pub min: f64,
    pub max: f64,
}

impl From<[f64; 2]> for AxisLimit {
    fn from(v: [f64; 2]) -> Self {
        Self { min: v[0], max: v[1] }
    }
}

impl From<AxisLimit> for [f64; 2] {
    fn from(l: AxisLimit) -> Self {
        [l.min, l.max]
    }
}

impl AxisLimit {
    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.min, self.max)
    }

    pub fn contains(&self, v: f64) -> bool {
        self.min <= v && v <= self.max
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionLimits {
    pub gantry_deg: AxisLimit,
    pub collimator_deg: AxisLimit,
    pub couch_rotation_deg: AxisLimit,
    pub couch_lateral_mm: AxisLimit,
    pub couch_longitudinal_mm: AxisLimit,
    pub couch_vertical_mm: AxisLimit,
    pub field_size_mm: AxisLimit,
}

impl MotionLimits {
    fn axes(&self) -> [(&'static str, AxisLimit); 7] {
        [
            ("gantry_deg", self.gantry_deg),
            ("collimator_deg", self.collimator_deg),
            ("couch_rotation_deg", self.couch_rotation_deg),
            ("couch_lateral_mm", self.couch_lateral_mm),
            ("couch_longitudinal_mm", self.couch_longitudinal_mm),
            ("couch_vertical_mm", self.couch_vertical_mm),
            ("field_size_mm", self.field_size_mm),
        ]
    }
}

/// The articulated degrees of freedom plus the beam's field size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MachineState {
    pub gantry_deg: f64,
    pub collimator_deg: f64,
    pub couch_lateral_mm: f64,
    pub couch_longitudinal_mm: f64,
    pub couch_vertical_mm: f64,
    pub couch_rotation_deg: f64,
    /// Field width (collimator x) and height (collimator y) at the isocenter.
    pub field_size_mm: [f64; 2],
}

impl Default for MachineState {
    fn default() -> Self {
        Self {
            gantry_deg: 0.0,
            collimator_deg: 0.0,
            couch_lateral_mm: 0.0,
            couch_longitudinal_mm: 0.0,
            couch_vertical_mm: 0.0,
            couch_rotation_deg: 0.0,
            field_size_mm: [100.0, 100.0],
        }
    }
}

impl MachineState {
    /// `(axis name, value, limit)` for every limited quantity.
    fn axis_values(&self, l: &MotionLimits) -> [(&'static str, f64, AxisLimit); 8] {
        [
            ("gantry_deg", self.gantry_deg, l.gantry_deg),
            ("collimator_deg", self.collimator_deg, l.collimator_deg),
            ("couch_rotation_deg", self.couch_rotation_deg, l.couch_rotation_deg),
            ("couch_lateral_mm", self.couch_lateral_mm, l.couch_lateral_mm),
            ("couch_longitudinal_mm", self.couch_longitudinal_mm, l.couch_longitudinal_mm),
            ("couch_vertical_mm", self.couch_vertical_mm, l.couch_vertical_mm),
            ("field_size_mm[0]", self.field_size_mm[0], l.field_size_mm),
            ("field_size_mm[1]", self.field_size_mm[1], l.field_size_mm),
        ]
    }

    pub fn check_finite(&self) -> Result<(), LinacError> {
        let l = MotionLimits {
            gantry_deg: AxisLimit::from([0.0, 0.0]),
            collimator_deg: AxisLimit::from([0.0, 0.0]),
            couch_rotation_deg: AxisLimit::from([0.0, 0.0]),
            couch_lateral_mm: AxisLimit::from([0.0, 0.0]),
            couch_longitudinal_mm: AxisLimit::from([0.0, 0.0]),
            couch_vertical_mm: AxisLimit::from([0.0, 0.0]),
            field_size_mm: AxisLimit::from([0.0, 0.0]),
        };
        match self.axis_values(&l).iter().find(|(_, v, _)| !v.is_finite()) {
            Some((axis, _, _)) => Err(LinacError::NonFinite(axis)),
            None => Ok(()),
        }
    }

    /// Error naming the first axis outside its limits.
    pub fn check_limits(&self, l: &MotionLimits) -> Result<(), LinacError> {
        self.check_finite()?;
        for (axis, value, lim) in self.axis_values(l) {
            if !lim.contains(value) {
                return Err(LinacError::OutOfLimits {
                    axis,
                    value,
                    min: lim.min,
                    max: lim.max,
                });
            }
        }
        Ok(())
    }

    /// Overrides the fields present in `p`.
    pub fn merged(&self, p: &PartialState) -> MachineState {
        MachineState {
            gantry_deg: p.gantry_deg.unwrap_or(self.gantry_deg),
            collimator_deg: p.collimator_deg.unwrap_or(self.collimator_deg),
            couch_lateral_mm: p.couch_lateral_mm.unwrap_or(self.couch_lateral_mm),
            couch_longitudinal_mm: p.couch_longitudinal_mm.unwrap_or(self.couch_longitudinal_mm),
            couch_vertical_mm: p.couch_vertical_mm.unwrap_or(self.couch_vertical_mm),
            couch_rotation_deg: p.couch_rotation_deg.unwrap_or(self.couch_rotation_deg),
            field_size_mm: p.field_size_mm.unwrap_or(self.field_size_mm),
        }
    }
}

/// A state update where absent fields keep their current value.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialState {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gantry_deg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub collimator_deg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub couch_lateral_mm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub couch_longitudinal_mm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub couch_vertical_mm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub couch_rotation_deg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field_size_mm: Option<[f64; 2]>,
}

/// Every field set, so applying it replaces the whole state.
impl From<MachineState> for PartialState {
    fn from(s: MachineState) -> Self {
        Self {
            gantry_deg: Some(s.gantry_deg),
            collimator_deg: Some(s.collimator_deg),
            couch_lateral_mm: Some(s.couch_lateral_mm),
            couch_longitudinal_mm: Some(s.couch_longitudinal_mm),
            couch_vertical_mm: Some(s.couch_vertical_mm),
            couch_rotation_deg: Some(s.couch_rotation_deg),
            field_size_mm: Some(s.field_size_mm),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MountKind {
    Collimator,
    Couch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentKind {
    Gantry,
    Collimator,
    CouchTop,
    CouchBase,
    CollimatorAttachment,
    CouchAttachment,
    Patient,
}

/// Well-known component ids.
pub mod ids {
    pub const GANTRY: &str = "gantry";
    pub const COLLIMATOR: &str = "collimator";
    pub const COUCH: &str = "couch";
    pub const COUCH_BASE: &str = "couch_base";
    pub const PATIENT: &str = "patient";
    pub const BEAM: &str = "beam";
}

/// A rigid part of the machine: mesh in its own frame plus home placement.
#[derive(Debug, Clone)]
pub struct ComponentModel {
    pub shape: Arc<Shape>,
    pub home: Transform,
}

#[derive(Debug, Clone)]
pub struct Attachment {
    pub id: String,
    pub name: String,
    pub mount: MountKind,
    /// Placement relative to the machine's mount point.
    pub offset: Transform,
    pub shape: Arc<Shape>,
}

/// Immutable, shareable machine model.
#[derive(Debug, Clone)]
pub struct MachineDescription {
    pub id: String,
    pub name: String,
    pub sad_mm: f64,
    /// How far the beam frustum extends past the isocenter.
    pub beam_extension_mm: f64,
    pub limits: MotionLimits,
    pub gantry: ComponentModel,
    pub collimator: ComponentModel,
    pub couch_top: ComponentModel,
    pub couch_base: ComponentModel,
    pub collimator_mount: Transform,
    pub couch_mount: Transform,
    pub attachments: Vec<Attachment>,
}

impl MachineDescription {
    pub fn attachment(&self, id: &str) -> Option<&Attachment> {
        self.attachments.iter().find(|a| a.id == id)
    }

    pub fn mount(&self, kind: MountKind) -> &Transform {
        match kind {
            MountKind::Collimator => &self.collimator_mount,
            MountKind::Couch => &self.couch_mount,
        }
    }

    pub fn component(&self, id: &str) -> Option<&ComponentModel> {
        match id {
            ids::GANTRY => Some(&self.gantry),
            ids::COLLIMATOR => Some(&self.collimator),
            ids::COUCH => Some(&self.couch_top),
            ids::COUCH_BASE => Some(&self.couch_base),
            _ => None,
        }
    }

    /// Triangles in the basic scene (machine only, no attachments or patient).
    pub fn basic_triangle_count(&self) -> usize {
        [&self.gantry, &self.collimator, &self.couch_top, &self.couch_base]
            .iter()
            .map(|c| c.shape.mesh().triangle_count())
            .sum()
    }
}

/// An elliptical test phantom standing in for a patient.
#[derive(Debug, Clone)]
pub struct Phantom {
    pub id: String,
    pub name: String,
    pub semi_axes_mm: [f64; 3],
    pub shape: Arc<Shape>,
}

/// A component placed in the world by forward kinematics.
#[derive(Debug, Clone)]
pub struct PlacedComponent {
    pub id: String,
    pub kind: ComponentKind,
    pub transform: Transform,
    pub shape: Arc<Shape>,
    pub collidable: bool,
}
