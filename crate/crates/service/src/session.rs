use std::sync::Arc;

use ebrt_core::collision::{beam_couch_intersection, default_pairs, scene_collision, QueryOptions};
use ebrt_core::geometry::TriMesh;
use ebrt_core::linac::{MachineDescription, Patient, Scene};
use ebrt_core::measure::{reading, MeasurementProbe, PatientSpec, ProbeReading, Scenario};
use ebrt_core::wire::{CollisionSection, MutationResponse, PatientInfo, Placement, SessionView};

use crate::error::ApiError;

/// Where the session's patient came from; needed to write it back out.
#[derive(Debug, Clone)]
pub enum PatientOrigin {
    Phantom(String),
    /// Uploaded or reconstructed surface, kept for scenario export.
    Mesh(TriMesh),
}

#[derive(Debug, Clone)]
pub struct PatientRecord {
    pub info: PatientInfo,
    pub origin: PatientOrigin,
}

/// One operator's room. Mutations go through `&mut self` while the caller
/// holds the session lock; every successful mutation bumps `revision`.
#[derive(Debug)]
pub struct Session {
    pub id: String,
    pub scene: Scene,
    pub probes: Vec<MeasurementProbe>,
    pub patient: Option<PatientRecord>,
    pub revision: u64,
}

impl Session {
    pub fn new(id: String, machine: Arc<MachineDescription>) -> Self {
        Self {
            id,
            scene: Scene::new(machine),
            probes: Vec::new(),
            patient: None,
            revision: 0,
        }
    }

    pub fn bump(&mut self) {
        self.revision += 1;
    }

    pub fn placements(&self) -> Vec<Placement> {
        self.scene.placed().iter().map(Placement::from).collect()
    }

    pub fn view(&self) -> SessionView {
        SessionView {
            id: self.id.clone(),
            machine: self.scene.machine().id.clone(),
            revision: self.revision,
            state: *self.scene.state(),
            attachments: self.scene.attachment_ids(),
            patient: self.patient.as_ref().map(|p| p.info.clone()),
            probes: self.probes.clone(),
            placements: self.placements(),
        }
    }

    pub fn collision(&self) -> Result<CollisionSection, ApiError> {
        let placed = self.scene.placed();
        let pairs = scene_collision(&placed, &default_pairs(&placed), QueryOptions::default())?;
        let beam = beam_couch_intersection(&self.scene.beam()?, &placed)?;
        Ok(CollisionSection::new(pairs, beam))
    }

    pub fn mutation_response(&self) -> Result<MutationResponse, ApiError> {
        Ok(MutationResponse {
            revision: self.revision,
            state: *self.scene.state(),
            attachments: self.scene.attachment_ids(),
            patient: self.patient.as_ref().map(|p| p.info.clone()),
            placements: self.placements(),
            collision: self.collision()?,
        })
    }

    pub fn set_patient(&mut self, patient: Option<(Patient, PatientRecord)>) {
        match patient {
            Some((p, rec)) => {
                self.scene.set_patient(Some(p));
                self.patient = Some(rec);
            }
            None => {
                self.scene.set_patient(None);
                self.patient = None;
            }
        }
    }

    pub fn measure(&self, probes: &[MeasurementProbe]) -> Result<Vec<ProbeReading>, ApiError> {
        let placed = self.scene.placed();
        Ok(probes.iter().map(|p| reading(p, &placed)).collect::<Result<_, _>>()?)
    }

    /// The session as a scenario. `patient_file` names the mesh file an
    /// uploaded patient is written to, relative to the scenario.
    pub fn to_scenario(&self, name: &str, description: &str, patient_file: &str) -> Scenario {
        let mut s = Scenario::new(name, self.scene.machine().id.clone());
        s.description = description.to_string();
        s.state = *self.scene.state();
        s.attachments = self.scene.attachment_ids();
        s.probes = self.probes.clone();
        s.patient = self.patient.as_ref().map(|p| match &p.origin {
            PatientOrigin::Phantom(id) => PatientSpec::phantom(id.clone()),
            PatientOrigin::Mesh(_) => PatientSpec {
                mesh: Some(patient_file.into()),
                ..Default::default()
            },
        });
        s
    }
}
