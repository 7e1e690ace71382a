use std::collections::HashSet;
use std::sync::Arc;

use super::{
    ids, Attachment, ComponentKind, LinacError, MachineDescription, MachineState, MountKind, PartialState, Phantom,
    PlacedComponent,
};
use crate::collision::Shape;
use crate::geometry::{primitives, Transform, TriMesh, Vec3};

/// A patient surface riding on the couch.
#[derive(Debug, Clone)]
pub struct Patient {
    pub label: String,
    pub shape: Arc<Shape>,
    /// Mesh frame → couch frame.
    pub offset: Transform,
}

impl Patient {
    pub fn new(label: impl Into<String>, shape: Arc<Shape>, offset: Transform) -> Self {
        Self {
            label: label.into(),
            shape,
            offset,
        }
    }

    /// The phantom centred on the couch mount, resting on the couch top.
    pub fn from_phantom(phantom: &Phantom, machine: &MachineDescription) -> Self {
        let lift = Transform::translation(0.0, 0.0, phantom.semi_axes_mm[2]);
        Self::new(phantom.id.clone(), phantom.shape.clone(), machine.couch_mount.compose(&lift))
    }

    /// Default placement for an arbitrary mesh: bounding-box centre over the
    /// couch mount point, lowest point on the couch top.
    pub fn on_couch(label: impl Into<String>, shape: Arc<Shape>, machine: &MachineDescription) -> Result<Self, LinacError> {
        let b = shape.mesh().aabb(&Transform::identity())?;
        let c = b.center();
        let shift = Transform::translation(-c.x, -c.y, -b.min.z);
        Ok(Self::new(label, shape, machine.couch_mount.compose(&shift)))
    }
}

/// Each axis clamped into the machine limits.
pub fn clamp_state(desc: &MachineDescription, s: &MachineState) -> MachineState {
    let l = &desc.limits;
    MachineState {
        gantry_deg: l.gantry_deg.clamp(s.gantry_deg),
        collimator_deg: l.collimator_deg.clamp(s.collimator_deg),
        couch_lateral_mm: l.couch_lateral_mm.clamp(s.couch_lateral_mm),
        couch_longitudinal_mm: l.couch_longitudinal_mm.clamp(s.couch_longitudinal_mm),
        couch_vertical_mm: l.couch_vertical_mm.clamp(s.couch_vertical_mm),
        couch_rotation_deg: l.couch_rotation_deg.clamp(s.couch_rotation_deg),
        field_size_mm: s.field_size_mm.map(|f| l.field_size_mm.clamp(f)),
    }
}

/// Gantry rotation about the horizontal (Y) axis through the isocenter.
pub(crate) fn gantry_rotation(s: &MachineState) -> Transform {
    Transform::rot_y(s.gantry_deg)
}

/// Isocenter-origin frame whose −Z axis is the beam direction and whose X/Y
/// axes are the collimator's field axes.
pub(crate) fn beam_frame(s: &MachineState) -> Transform {
    gantry_rotation(s).compose(&Transform::rot_z(s.collimator_deg))
}

/// Couch rotation about the vertical axis, then translation in the rotated
/// couch frame.
pub(crate) fn couch_frame(s: &MachineState) -> Transform {
    Transform::rot_z(s.couch_rotation_deg).compose(&Transform::translation(
        s.couch_lateral_mm,
        s.couch_longitudinal_mm,
        s.couch_vertical_mm,
    ))
}

/// World placement of every component. In strict mode an out-of-limit state
/// is an error; otherwise the state is clamped first. Attachments must come
/// from the machine's catalog and be unique.
pub fn forward_kinematics(
    desc: &MachineDescription,
    state: &MachineState,
    attachments: &[Attachment],
    patient: Option<&Patient>,
    strict: bool,
) -> Result<Vec<PlacedComponent>, LinacError> {
    state.check_finite()?;
    let state = if strict {
        state.check_limits(&desc.limits)?;
        *state
    } else {
        clamp_state(desc, state)
    };
    let mut seen = HashSet::new();
    for a in attachments {
        if desc.attachment(&a.id).is_none() {
            return Err(LinacError::UnknownAttachment(a.id.clone()));
        }
        if !seen.insert(a.id.as_str()) {
            return Err(LinacError::DuplicateAttachment(a.id.clone()));
        }
    }

    let gantry_rot = gantry_rotation(&state);
    let beam = beam_frame(&state);
    let couch = couch_frame(&state);
    let gantry_t = gantry_rot.compose(&desc.gantry.home);
    let collimator_t = beam.compose(&desc.collimator.home);
    let couch_t = couch.compose(&desc.couch_top.home);
    let base_t = Transform::rot_z(state.couch_rotation_deg).compose(&desc.couch_base.home);

    let place = |id: &str, kind, transform, shape: &Arc<Shape>| PlacedComponent {
        id: id.to_string(),
        kind,
        transform,
        shape: shape.clone(),
        collidable: true,
    };
    let mut out = vec![
        place(ids::GANTRY, ComponentKind::Gantry, gantry_t, &desc.gantry.shape),
        place(ids::COLLIMATOR, ComponentKind::Collimator, collimator_t, &desc.collimator.shape),
        place(ids::COUCH, ComponentKind::CouchTop, couch_t, &desc.couch_top.shape),
        place(ids::COUCH_BASE, ComponentKind::CouchBase, base_t, &desc.couch_base.shape),
    ];
    for a in attachments {
        let (parent, kind) = match a.mount {
            MountKind::Collimator => (&collimator_t, ComponentKind::CollimatorAttachment),
            MountKind::Couch => (&couch_t, ComponentKind::CouchAttachment),
        };
        out.push(place(&a.id, kind, parent.compose(&a.offset), &a.shape));
    }
    if let Some(p) = patient {
        out.push(place(ids::PATIENT, ComponentKind::Patient, couch_t.compose(&p.offset), &p.shape));
    }
    Ok(out)
}

/// World position of the radiation source.
pub fn source_position(desc: &MachineDescription, state: &MachineState) -> Vec3 {
    beam_frame(state).apply(&Vec3::new(0.0, 0.0, desc.sad_mm))
}

/// Closed pyramid from the source through the field rectangle at the
/// isocenter plane, extended `beam_extension_mm` past the isocenter.
pub fn beam_frustum(desc: &MachineDescription, state: &MachineState) -> Result<TriMesh, LinacError> {
    let [fx, fy] = state.field_size_mm;
    if !(fx > 0.0 && fy > 0.0 && fx.is_finite() && fy.is_finite()) {
        return Err(LinacError::FieldSize(fx, fy));
    }
    state.check_finite()?;
    let sad = desc.sad_mm;
    let ext = desc.beam_extension_mm;
    let k = (sad + ext) / sad;
    let (hx, hy) = (0.5 * fx * k, 0.5 * fy * k);
    let z = -ext;
    let mesh = primitives::pyramid(
        Vec3::new(0.0, 0.0, sad),
        [
            Vec3::new(-hx, -hy, z),
            Vec3::new(hx, -hy, z),
            Vec3::new(hx, hy, z),
            Vec3::new(-hx, hy, z),
        ],
    );
    Ok(mesh.transformed(&beam_frame(state)).with_name(ids::BEAM))
}

/// Mutable room state: one machine, its pose, installed attachments and an
/// optional patient.
#[derive(Debug, Clone)]
pub struct Scene {
    machine: Arc<MachineDescription>,
    state: MachineState,
    attachments: Vec<Attachment>,
    patient: Option<Patient>,
}

impl Scene {
    pub fn new(machine: Arc<MachineDescription>) -> Self {
        Self {
            machine,
            state: MachineState::default(),
            attachments: Vec::new(),
            patient: None,
        }
    }

    pub fn machine(&self) -> &Arc<MachineDescription> {
        &self.machine
    }

    pub fn state(&self) -> &MachineState {
        &self.state
    }

    /// Stores the clamped state and returns it.
    pub fn set_state(&mut self, s: MachineState) -> Result<MachineState, LinacError> {
        s.check_finite()?;
        self.state = clamp_state(&self.machine, &s);
        Ok(self.state)
    }

    pub fn update(&mut self, p: &PartialState) -> Result<MachineState, LinacError> {
        self.set_state(self.state.merged(p))
    }

    pub fn attachments(&self) -> &[Attachment] {
        &self.attachments
    }

    pub fn attachment_ids(&self) -> Vec<String> {
        self.attachments.iter().map(|a| a.id.clone()).collect()
    }

    /// Installs a catalog attachment by id.
    pub fn attach(&mut self, id: &str) -> Result<(), LinacError> {
        let a = self
            .machine
            .attachment(id)
            .ok_or_else(|| LinacError::UnknownAttachment(id.to_string()))?;
        if self.attachments.iter().any(|x| x.id == id) {
            return Err(LinacError::DuplicateAttachment(id.to_string()));
        }
        self.attachments.push(a.clone());
        Ok(())
    }

    pub fn detach(&mut self, id: &str) -> Result<Attachment, LinacError> {
        let i = self
            .attachments
            .iter()
            .position(|a| a.id == id)
            .ok_or_else(|| LinacError::AttachmentNotInstalled(id.to_string()))?;
        Ok(self.attachments.remove(i))
    }

    pub fn patient(&self) -> Option<&Patient> {
        self.patient.as_ref()
    }

    pub fn set_patient(&mut self, p: Option<Patient>) {
        self.patient = p;
    }

    pub fn placed(&self) -> Vec<PlacedComponent> {
        forward_kinematics(&self.machine, &self.state, &self.attachments, self.patient.as_ref(), false)
            .expect("scene state is finite and attachments come from the catalog")
    }

    pub fn beam(&self) -> Result<TriMesh, LinacError> {
        beam_frustum(&self.machine, &self.state)
    }
}
