use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{reading, MeasureError, MeasurementProbe, ProbeReading};
use crate::collision::{
    beam_couch_intersection, default_pairs, scene_collision, ColliderPair, CollisionError, CollisionReport,
    QueryOptions, Shape,
};
use crate::ct::{load_slice_stack, reconstruct, CtError, ReconstructOptions, DEFAULT_SKIN_ISO};
use crate::geometry::io::load_mesh;
use crate::geometry::GeometryError;
use crate::linac::{
    beam_frustum, clamp_state, forward_kinematics, Catalog, LinacError, MachineDescription, MachineState,
    MountSpec, Patient,
};

pub const SCENARIO_SCHEMA: &str = "ebrt-scenario/1";

/// Largest distance deviation (mm) accepted against stored results.
pub const DEVIATION_TOL_MM: f64 = 1e-6;

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("scenario parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("scenario serialisation error: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error("unsupported scenario schema {0:?}")]
    Schema(String),
    #[error("unknown machine {0:?}")]
    UnknownMachine(String),
    #[error("unknown phantom {0:?}")]
    UnknownPhantom(String),
    #[error("patient: {0}")]
    Patient(String),
    #[error(transparent)]
    Linac(#[from] LinacError),
    #[error(transparent)]
    Collision(#[from] CollisionError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Ct(#[from] CtError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// Patient source: a catalog phantom, a mesh file or a CT slice stack.
/// Paths are relative to the scenario file. The surface rests on the couch
/// top over the couch mount, then `shift` is applied in the mount frame.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatientSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phantom: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mesh: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ct: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iso: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decimate: Option<usize>,
    #[serde(default)]
    pub shift: MountSpec,
}

impl PatientSpec {
    pub fn phantom(id: impl Into<String>) -> Self {
        Self {
            phantom: Some(id.into()),
            ..Default::default()
        }
    }

    pub fn resolve(&self, catalog: &Catalog, machine: &MachineDescription, base: &Path) -> Result<Patient, ScenarioError> {
        let sources = [self.phantom.is_some(), self.mesh.is_some(), self.ct.is_some()];
        if sources.iter().filter(|s| **s).count() != 1 {
            return Err(ScenarioError::Patient("exactly one of phantom, mesh, ct is required".into()));
        }
        let mut p = if let Some(id) = &self.phantom {
            let ph = catalog.phantom(id).ok_or_else(|| ScenarioError::UnknownPhantom(id.clone()))?;
            Patient::from_phantom(ph, machine)
        } else if let Some(path) = &self.mesh {
            let mesh = load_mesh(&base.join(path))?;
            Patient::on_couch(path.display().to_string(), Shape::shared(mesh)?, machine)?
        } else {
            let dir = self.ct.as_ref().expect("one source is set");
            let grid = load_slice_stack(&base.join(dir))?;
            let opts = ReconstructOptions {
                iso: self.iso.unwrap_or(DEFAULT_SKIN_ISO),
                largest_component: true,
                target_triangles: self.decimate,
            };
            let iso = reconstruct(&grid, &dir.display().to_string(), &opts)?;
            if iso.mesh.is_empty() {
                return Err(ScenarioError::Patient(format!("iso {} gives an empty surface", opts.iso)));
            }
            Patient::on_couch(iso.source, Shape::shared(iso.mesh)?, machine)?
        };
        if self.shift != MountSpec::default() {
            let base_offset = p.offset;
            let mount = machine.couch_mount;
            p.offset = mount.compose(&self.shift.transform()).compose(&mount.inverse()).compose(&base_offset);
        }
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpectedPair {
    pub source: String,
    pub target: String,
    pub colliding: bool,
    pub distance_mm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpectedProbe {
    pub id: String,
    pub distance_mm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpectedResults {
    pub beam_couch: bool,
    #[serde(default)]
    pub pairs: Vec<ExpectedPair>,
    #[serde(default)]
    pub probes: Vec<ExpectedProbe>,
}

/// A reproducible room configuration, optionally with frozen results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema: String,
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    pub machine: String,
    #[serde(default)]
    pub state: MachineState,
    #[serde(default)]
    pub attachments: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patient: Option<PatientSpec>,
    /// Overrides the default collider pairs when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pairs: Option<Vec<ColliderPair>>,
    #[serde(default)]
    pub probes: Vec<MeasurementProbe>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected: Option<ExpectedResults>,
}

impl Scenario {
    pub fn new(name: impl Into<String>, machine: impl Into<String>) -> Self {
        Self {
            schema: SCENARIO_SCHEMA.to_string(),
            name: name.into(),
            description: String::new(),
            machine: machine.into(),
            state: MachineState::default(),
            attachments: Vec::new(),
            patient: None,
            pairs: None,
            probes: Vec::new(),
            expected: None,
        }
    }

    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let s: Scenario = toml::from_str(text)?;
        if s.schema != SCENARIO_SCHEMA {
            return Err(ScenarioError::Schema(s.schema));
        }
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> Result<String, ScenarioError> {
        Ok(toml::to_string(self)?)
    }

    /// Stores the report's results as the expected block.
    pub fn freeze(&mut self, r: &ScenarioReport) {
        self.expected = Some(ExpectedResults {
            beam_couch: r.beam_couch.colliding,
            pairs: r
                .pairs
                .iter()
                .map(|p| ExpectedPair {
                    source: p.source.clone(),
                    target: p.target.clone(),
                    colliding: p.colliding,
                    distance_mm: p.distance_mm,
                })
                .collect(),
            probes: r
                .probes
                .iter()
                .map(|p| ExpectedProbe {
                    id: p.id.clone(),
                    distance_mm: p.distance_mm,
                })
                .collect(),
        });
    }
}

/// One result that disagrees with the stored expectation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deviation {
    pub item: String,
    pub boolean_mismatch: bool,
    pub expected_mm: Option<f64>,
    pub actual_mm: Option<f64>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub name: String,
    pub machine: String,
    /// State after clamping to the machine limits.
    pub state: MachineState,
    pub attachments: Vec<String>,
    pub collision: bool,
    pub pairs: Vec<CollisionReport>,
    pub beam_couch: CollisionReport,
    pub probes: Vec<ProbeReading>,
    /// Whether an expected block was compared.
    pub checked: bool,
    pub max_deviation_mm: f64,
    pub deviations: Vec<Deviation>,
}

impl ScenarioReport {
    pub fn passed(&self) -> bool {
        self.deviations.is_empty()
    }
}

/// Forward kinematics, collision pairs, beam check and probes, in that
/// order, then comparison against the expected block if present.
pub fn run_scenario(s: &Scenario, catalog: &Catalog, base: &Path) -> Result<ScenarioReport, ScenarioError> {
    if s.schema != SCENARIO_SCHEMA {
        return Err(ScenarioError::Schema(s.schema.clone()));
    }
    let machine: &Arc<MachineDescription> =
        catalog.machine(&s.machine).ok_or_else(|| ScenarioError::UnknownMachine(s.machine.clone()))?;
    s.state.check_finite()?;
    let state = clamp_state(machine, &s.state);
    let attachments = s
        .attachments
        .iter()
        .map(|id| machine.attachment(id).cloned().ok_or_else(|| LinacError::UnknownAttachment(id.clone())))
        .collect::<Result<Vec<_>, _>>()?;
    let patient = s.patient.as_ref().map(|p| p.resolve(catalog, machine, base)).transpose()?;
    let placed = forward_kinematics(machine, &state, &attachments, patient.as_ref(), false)?;
    let pairs = s.pairs.clone().unwrap_or_else(|| default_pairs(&placed));
    let reports = scene_collision(&placed, &pairs, QueryOptions::default())?;
    let beam = beam_couch_intersection(&beam_frustum(machine, &state)?, &placed)?;
    let probes = s.probes.iter().map(|p| reading(p, &placed)).collect::<Result<Vec<_>, _>>()?;

    let mut report = ScenarioReport {
        name: s.name.clone(),
        machine: s.machine.clone(),
        state,
        attachments: s.attachments.clone(),
        collision: reports.iter().any(|r| r.colliding),
        pairs: reports,
        beam_couch: beam,
        probes,
        checked: false,
        max_deviation_mm: 0.0,
        deviations: Vec::new(),
    };
    if let Some(exp) = &s.expected {
        compare(exp, &mut report);
    }
    Ok(report)
}

fn compare(exp: &ExpectedResults, r: &mut ScenarioReport) {
    let mut devs = Vec::new();
    let mut max_dev: f64 = 0.0;
    let mut check_distance = |item: String, e: f64, a: f64, devs: &mut Vec<Deviation>| {
        let d = (e - a).abs();
        max_dev = max_dev.max(d);
        if !(d < DEVIATION_TOL_MM) {
            devs.push(Deviation {
                item,
                boolean_mismatch: false,
                expected_mm: Some(e),
                actual_mm: Some(a),
                detail: format!("distance off by {d:e} mm"),
            });
        }
    };
    if exp.beam_couch != r.beam_couch.colliding {
        devs.push(Deviation {
            item: "beam_couch".into(),
            boolean_mismatch: true,
            expected_mm: None,
            actual_mm: None,
            detail: format!("expected beam_couch={}, got {}", exp.beam_couch, r.beam_couch.colliding),
        });
    }
    for e in &exp.pairs {
        let item = format!("{}/{}", e.source, e.target);
        match r.pairs.iter().find(|p| p.source == e.source && p.target == e.target) {
            None => devs.push(Deviation {
                item,
                boolean_mismatch: true,
                expected_mm: Some(e.distance_mm),
                actual_mm: None,
                detail: "pair missing from results".into(),
            }),
            Some(p) if p.colliding != e.colliding => devs.push(Deviation {
                item,
                boolean_mismatch: true,
                expected_mm: Some(e.distance_mm),
                actual_mm: Some(p.distance_mm),
                detail: format!("expected colliding={}, got {}", e.colliding, p.colliding),
            }),
            Some(p) => check_distance(item, e.distance_mm, p.distance_mm, &mut devs),
        }
    }
    for p in &r.pairs {
        if !exp.pairs.iter().any(|e| e.source == p.source && e.target == p.target) {
            devs.push(Deviation {
                item: format!("{}/{}", p.source, p.target),
                boolean_mismatch: true,
                expected_mm: None,
                actual_mm: Some(p.distance_mm),
                detail: "pair not in expected results".into(),
            });
        }
    }
    for e in &exp.probes {
        match r.probes.iter().find(|p| p.id == e.id) {
            None => devs.push(Deviation {
                item: e.id.clone(),
                boolean_mismatch: true,
                expected_mm: Some(e.distance_mm),
                actual_mm: None,
                detail: "probe missing from results".into(),
            }),
            Some(p) => check_distance(e.id.clone(), e.distance_mm, p.distance_mm, &mut devs),
        }
    }
    r.checked = true;
    r.max_deviation_mm = max_dev;
    r.deviations = devs;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;
    use crate::linac::{builtin_catalog, ids, Detail};
    use crate::measure::ProbePoint;

    fn catalog() -> Catalog {
        builtin_catalog(Detail(0.15))
    }

    fn run(s: &Scenario) -> ScenarioReport {
        run_scenario(s, &catalog(), Path::new(".")).unwrap()
    }

    #[test]
    fn home_state_is_clear() {
        let mut s = Scenario::new("home", "varian-trilogy");
        s.patient = Some(PatientSpec::phantom("elliptical-phantom"));
        s.probes.push(MeasurementProbe {
            id: "collimator-couch".into(),
            a: ProbePoint::anchored(ids::COLLIMATOR, Vec3::new(0.0, 0.0, 400.0)),
            b: ProbePoint::anchored(ids::COUCH, Vec3::zeros()),
        });
        let r = run(&s);
        assert!(!r.collision);
        assert!(r.pairs.iter().all(|p| p.distance_mm > 0.0), "{:#?}", r.pairs);
        assert_eq!(r.probes[0].distance_mm, 400.0);
        assert!(!r.checked && r.passed());
    }

    #[test]
    fn raised_couch_hits_gantry() {
        let mut s = Scenario::new("raised", "varian-trilogy");
        s.state.gantry_deg = 90.0;
        s.state.couch_rotation_deg = 90.0;
        let r = run(&s);
        let p = r.pairs.iter().find(|p| p.source == ids::COUCH && p.target == ids::GANTRY).unwrap();
        assert!(p.colliding, "{p:?}");
        assert!(r.collision);
    }

    #[test]
    fn freeze_then_replay_has_no_deviation() {
        let mut s = Scenario::new("frozen", "novalis");
        s.state.couch_vertical_mm = 120.0;
        s.attachments.push("head-frame".into());
        s.probes.push(MeasurementProbe {
            id: "p".into(),
            a: ProbePoint::anchored(ids::COUCH, Vec3::new(0.0, 0.0, 10.0)),
            b: ProbePoint::Free([0.0, 0.0, 400.0]),
        });
        let first = run(&s);
        s.freeze(&first);
        let text = s.to_toml().unwrap();
        let back = Scenario::parse(&text).unwrap();
        assert_eq!(back, s);
        let again = run(&back);
        assert!(again.checked && again.passed(), "{:?}", again.deviations);
        assert_eq!(again.max_deviation_mm, 0.0);
    }

    #[test]
    fn deviations_are_reported() {
        let mut s = Scenario::new("dev", "varian-trilogy");
        let r = run(&s);
        s.freeze(&r);
        let exp = s.expected.as_mut().unwrap();
        exp.pairs[0].distance_mm += 1e-3;
        exp.pairs[1].colliding = !exp.pairs[1].colliding;
        exp.beam_couch = !exp.beam_couch;
        let again = run(&s);
        assert_eq!(again.deviations.len(), 3);
        assert_eq!(again.deviations.iter().filter(|d| d.boolean_mismatch).count(), 2);
        assert!((again.max_deviation_mm - 1e-3).abs() < 1e-9);
    }

    #[test]
    fn bad_references_fail() {
        let cat = catalog();
        let base = Path::new(".");
        let s = Scenario::new("x", "nope");
        assert!(matches!(run_scenario(&s, &cat, base), Err(ScenarioError::UnknownMachine(_))));
        let mut s = Scenario::new("x", "novalis");
        s.attachments.push("nope".into());
        assert!(matches!(
            run_scenario(&s, &cat, base),
            Err(ScenarioError::Linac(LinacError::UnknownAttachment(_)))
        ));
        let mut s = Scenario::new("x", "novalis");
        s.patient = Some(PatientSpec::phantom("nope"));
        assert!(matches!(run_scenario(&s, &cat, base), Err(ScenarioError::UnknownPhantom(_))));
        let mut s = Scenario::new("x", "novalis");
        s.probes.push(MeasurementProbe {
            id: "p".into(),
            a: ProbePoint::anchored("ghost", Vec3::zeros()),
            b: ProbePoint::Free([0.0; 3]),
        });
        assert!(matches!(
            run_scenario(&s, &cat, base),
            Err(ScenarioError::Measure(MeasureError::DanglingAnchor(_)))
        ));
        assert!(matches!(
            Scenario::parse("schema = \"other/2\"\nname = \"x\"\nmachine = \"m\"\n"),
            Err(ScenarioError::Schema(_))
        ));
    }

    #[test]
    fn reports_are_bitwise_deterministic() {
        let mut s = Scenario::new("det", "varian-trilogy");
        s.state.gantry_deg = 37.0;
        s.state.couch_rotation_deg = -20.0;
        s.patient = Some(PatientSpec::phantom("elliptical-phantom"));
        let cat = catalog();
        let a = serde_json::to_string(&run_scenario(&s, &cat, Path::new(".")).unwrap()).unwrap();
        let b = serde_json::to_string(&run_scenario(&s, &cat, Path::new(".")).unwrap()).unwrap();
        assert_eq!(a, b);
    }
}
