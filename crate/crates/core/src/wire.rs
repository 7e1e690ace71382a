//! JSON bodies exchanged between the HTTP service and its clients.
//!
//! Every response that concerns a session carries the session's current
//! `revision`. Lengths are millimeters, angles degrees.

use serde::{Deserialize, Serialize};

use crate::collision::CollisionReport;
use crate::geometry::Transform;
use crate::linac::{ComponentKind, MachineState, MotionLimits, MountKind, PlacedComponent};
use crate::measure::{MeasurementProbe, ProbeReading};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    pub machine: String,
}

/// World placement of one component; meshes from
/// `GET /machines/{id}/meshes/{component}` are in this frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub id: String,
    pub kind: ComponentKind,
    pub transform: Transform,
    pub collidable: bool,
}

impl From<&PlacedComponent> for Placement {
    fn from(p: &PlacedComponent) -> Self {
        Self {
            id: p.id.clone(),
            kind: p.kind,
            transform: p.transform,
            collidable: p.collidable,
        }
    }
}

/// Hard collisions and the beam warning for one room state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollisionSection {
    /// True when any registered pair collides. The beam flag does not count.
    pub collision: bool,
    pub pairs: Vec<CollisionReport>,
    pub beam_couch: CollisionReport,
    /// Union of colliding pair ids, in pair order, without repeats.
    pub highlighted: Vec<String>,
}

impl CollisionSection {
    pub fn new(pairs: Vec<CollisionReport>, beam_couch: CollisionReport) -> Self {
        let mut highlighted: Vec<String> = Vec::new();
        for id in pairs.iter().flat_map(|p| p.highlighted.iter()) {
            if !highlighted.contains(id) {
                highlighted.push(id.clone());
            }
        }
        Self {
            collision: pairs.iter().any(|p| p.colliding),
            pairs,
            beam_couch,
            highlighted,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientInfo {
    pub mesh_id: String,
    pub label: String,
    /// `phantom`, `mesh` or `ct`.
    pub source: String,
    pub triangle_count: usize,
    pub decimation_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub id: String,
    pub machine: String,
    pub revision: u64,
    pub state: MachineState,
    pub attachments: Vec<String>,
    pub patient: Option<PatientInfo>,
    pub probes: Vec<MeasurementProbe>,
    pub placements: Vec<Placement>,
}

/// Answer to any mutation: the authoritative state after the change and
/// the collision section for it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MutationResponse {
    pub revision: u64,
    pub state: MachineState,
    pub attachments: Vec<String>,
    pub patient: Option<PatientInfo>,
    pub placements: Vec<Placement>,
    pub collision: CollisionSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollisionResponse {
    pub revision: u64,
    pub collision: CollisionSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttachmentRequest {
    pub id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbesResponse {
    pub revision: u64,
    pub probes: Vec<MeasurementProbe>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureResponse {
    pub revision: u64,
    pub readings: Vec<ProbeReading>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttachmentSummary {
    pub id: String,
    pub name: String,
    pub mount: MountKind,
    pub triangle_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MachineSummary {
    pub id: String,
    pub name: String,
    pub sad_mm: f64,
    pub limits: MotionLimits,
    /// Mesh ids accepted by the mesh endpoint (fixed components first).
    pub components: Vec<String>,
    pub attachments: Vec<AttachmentSummary>,
    pub triangle_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSummary {
    pub id: String,
    pub name: String,
    pub semi_axes_mm: [f64; 3],
    pub triangle_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MachinesResponse {
    pub machines: Vec<MachineSummary>,
    pub phantoms: Vec<PhantomSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SaveScenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    /// Store the current results as the expected block.
    #[serde(default)]
    pub freeze: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavedScenario {
    pub revision: u64,
    pub file: String,
    pub toml: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioList {
    pub files: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshSummary {
    pub triangle_count: usize,
    pub vertex_count: usize,
    pub volume_mm3: f64,
    pub area_mm2: f64,
    pub watertight: bool,
    pub euler_characteristic: i64,
}

impl MeshSummary {
    pub fn of(m: &crate::geometry::TriMesh) -> Self {
        Self {
            triangle_count: m.triangle_count(),
            vertex_count: m.vertices().len(),
            volume_mm3: m.signed_volume(),
            area_mm2: m.surface_area(),
            watertight: m.is_watertight(),
            euler_characteristic: m.euler_characteristic(),
        }
    }
}

/// Result of a stand-alone reconstruction; the mesh travels as base64.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructResponse {
    pub iso: f64,
    pub status: crate::ct::IsoStatus,
    pub decimation_ratio: f64,
    pub summary: MeshSummary,
    pub format: crate::geometry::io::MeshFormat,
    pub mesh_base64: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub revision: Option<u64>,
}
