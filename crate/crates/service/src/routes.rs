use std::path::{Path as FsPath, PathBuf};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{DefaultBodyLimit, Multipart, Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use base64::Engine as _;
use ebrt_core::collision::Shape;
use ebrt_core::geometry::io::{obj_string, stl_bytes, MeshFormat};
use ebrt_core::geometry::TriMesh;
use ebrt_core::linac::{ids, Patient, PartialState};
use ebrt_core::measure::{run_scenario, MeasurementProbe, ProbePoint, Scenario, ScenarioReport};
use ebrt_core::wire::{
    AttachmentRequest, AttachmentSummary, CollisionResponse, CreateSession, MachineSummary, MachinesResponse,
    MeasureResponse, MeshSummary, MutationResponse, PatientInfo, PhantomSummary, ProbesResponse,
    ReconstructResponse, SaveScenario, SavedScenario, ScenarioList, SessionView,
};
use serde::Deserialize;

use crate::error::ApiError;
use crate::session::{PatientOrigin, PatientRecord, Session};
use crate::upload::{build_surface, read_upload, UploadSource};
use crate::AppState;

type ApiResult<T> = Result<T, ApiError>;

pub fn router(state: AppState) -> Router {
    let limit = state.config().max_upload_bytes;
    Router::new()
        .route("/health", get(|| async { "ok" }))
        .route("/machines", get(machines))
        .route("/machines/{id}/meshes/{component}", get(machine_mesh))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session).delete(delete_session))
        .route("/sessions/{id}/state", get(get_session).put(put_state))
        .route("/sessions/{id}/attachments", post(add_attachment))
        .route("/sessions/{id}/attachments/{attachment}", axum::routing::delete(remove_attachment))
        .route("/sessions/{id}/patient", post(upload_patient).delete(remove_patient))
        .route("/sessions/{id}/patient/mesh", get(patient_mesh))
        .route("/sessions/{id}/collision", get(collision))
        .route("/sessions/{id}/probes", put(put_probes))
        .route("/sessions/{id}/measure", get(measure))
        .route("/sessions/{id}/scenario", post(save_scenario))
        .route("/scenarios", get(list_scenarios))
        .route("/scenarios/run", post(run_inline_scenario))
        .route("/scenarios/{file}/run", post(run_stored_scenario))
        .route("/ct/reconstruct", post(reconstruct_upload))
        .layer(DefaultBodyLimit::max(limit))
        .with_state(state)
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

/// Runs `f` on the blocking pool while holding the session lock. Errors
/// carry the session revision as it stands afterwards.
async fn with_session<T: Send + 'static>(
    st: &AppState,
    id: &str,
    f: impl FnOnce(&mut Session) -> ApiResult<T> + Send + 'static,
) -> ApiResult<T> {
    let mut guard = st.session(id)?.lock_owned().await;
    blocking(move || {
        let out = f(&mut guard);
        out.map_err(|e| match e.revision {
            Some(_) => e,
            None => e.with_revision(guard.revision),
        })
    })
    .await
}

fn stl_response(mesh: &TriMesh) -> Response {
    ([(header::CONTENT_TYPE, "model/stl")], stl_bytes(mesh)).into_response()
}

async fn machines(State(st): State<AppState>) -> Json<MachinesResponse> {
    let c = st.catalog();
    let machines = c
        .machines
        .iter()
        .map(|m| {
            let mut components: Vec<String> =
                [ids::GANTRY, ids::COLLIMATOR, ids::COUCH, ids::COUCH_BASE].map(String::from).to_vec();
            components.extend(m.attachments.iter().map(|a| a.id.clone()));
            MachineSummary {
                id: m.id.clone(),
                name: m.name.clone(),
                sad_mm: m.sad_mm,
                limits: m.limits,
                components,
                attachments: m
                    .attachments
                    .iter()
                    .map(|a| AttachmentSummary {
                        id: a.id.clone(),
                        name: a.name.clone(),
                        mount: a.mount,
                        triangle_count: a.shape.mesh().triangle_count(),
                    })
                    .collect(),
                triangle_count: m.basic_triangle_count(),
            }
        })
        .collect();
    let phantoms = c
        .phantoms
        .iter()
        .map(|p| PhantomSummary {
            id: p.id.clone(),
            name: p.name.clone(),
            semi_axes_mm: p.semi_axes_mm,
            triangle_count: p.shape.mesh().triangle_count(),
        })
        .collect();
    Json(MachinesResponse { machines, phantoms })
}

/// Component mesh in its own frame. A phantom id with component `phantom`
/// returns the phantom surface.
async fn machine_mesh(State(st): State<AppState>, Path((id, component)): Path<(String, String)>) -> ApiResult<Response> {
    let c = st.catalog().clone();
    blocking(move || {
        if let Some(m) = c.machine(&id) {
            let shape = m
                .component(&component)
                .map(|x| x.shape.clone())
                .or_else(|| m.attachment(&component).map(|a| a.shape.clone()))
                .ok_or_else(|| ApiError::not_found(format!("machine {id:?} has no component {component:?}")))?;
            return Ok(stl_response(shape.mesh()));
        }
        match c.phantom(&id) {
            Some(p) if component == "phantom" => Ok(stl_response(p.shape.mesh())),
            Some(_) => Err(ApiError::not_found(format!("phantom {id:?} only has the mesh \"phantom\""))),
            None => Err(ApiError::not_found(format!("unknown machine {id:?}"))),
        }
    })
    .await
}

async fn create_session(
    State(st): State<AppState>,
    body: Result<Json<CreateSession>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<SessionView>)> {
    let Json(req) = body?;
    let machine = st
        .catalog()
        .machine(&req.machine)
        .cloned()
        .ok_or_else(|| ApiError::not_found(format!("unknown machine {:?}", req.machine)))?;
    let id = uuid::Uuid::new_v4().to_string();
    let session = Session::new(id.clone(), machine);
    let view = blocking(move || Ok((session.view(), session))).await?;
    st.0
        .sessions
        .write()
        .expect("session map lock")
        .insert(id, Arc::new(tokio::sync::Mutex::new(view.1)));
    Ok((StatusCode::CREATED, Json(view.0)))
}

async fn get_session(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<SessionView>> {
    with_session(&st, &id, |s| Ok(s.view())).await.map(Json)
}

async fn delete_session(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<StatusCode> {
    st.0
        .sessions
        .write()
        .expect("session map lock")
        .remove(&id)
        .map(|_| StatusCode::NO_CONTENT)
        .ok_or_else(|| ApiError::not_found(format!("unknown session {id:?}")))
}

async fn put_state(
    State(st): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<PartialState>, JsonRejection>,
) -> ApiResult<Json<MutationResponse>> {
    // look the session up first so an unknown id is a 404 whatever the body
    st.session(&id)?;
    let Json(partial) = body?;
    with_session(&st, &id, move |s| {
        s.scene.update(&partial)?;
        s.bump();
        s.mutation_response()
    })
    .await
    .map(Json)
}

async fn add_attachment(
    State(st): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<AttachmentRequest>, JsonRejection>,
) -> ApiResult<Json<MutationResponse>> {
    st.session(&id)?;
    let Json(req) = body?;
    with_session(&st, &id, move |s| {
        s.scene.attach(&req.id)?;
        s.bump();
        s.mutation_response()
    })
    .await
    .map(Json)
}

async fn remove_attachment(
    State(st): State<AppState>,
    Path((id, attachment)): Path<(String, String)>,
) -> ApiResult<Json<MutationResponse>> {
    with_session(&st, &id, move |s| {
        s.scene.detach(&attachment)?;
        s.bump();
        s.mutation_response()
    })
    .await
    .map(Json)
}

async fn upload_patient(
    State(st): State<AppState>,
    Path(id): Path<String>,
    mp: Multipart,
) -> ApiResult<Json<MutationResponse>> {
    st.session(&id)?;
    let upload = read_upload(mp).await?;
    let catalog = st.catalog().clone();
    with_session(&st, &id, move |s| {
        let machine = s.scene.machine().clone();
        let mesh_id = uuid::Uuid::new_v4().to_string();
        let (patient, record) = match &upload.source {
            UploadSource::Phantom(pid) => {
                let ph = catalog
                    .phantom(pid)
                    .ok_or_else(|| ApiError::not_found(format!("unknown phantom {pid:?}")))?;
                let info = PatientInfo {
                    mesh_id,
                    label: ph.name.clone(),
                    source: "phantom".into(),
                    triangle_count: ph.shape.mesh().triangle_count(),
                    decimation_ratio: 1.0,
                };
                let origin = PatientOrigin::Phantom(ph.id.clone());
                (Patient::from_phantom(ph, &machine), PatientRecord { info, origin })
            }
            source => {
                let (label, iso) = build_surface(&upload)?;
                let kind = if matches!(source, UploadSource::Stack { .. }) { "ct" } else { "mesh" };
                let info = PatientInfo {
                    mesh_id,
                    label: label.clone(),
                    source: kind.into(),
                    triangle_count: iso.mesh.triangle_count(),
                    decimation_ratio: iso.decimation_ratio,
                };
                let shape = Shape::shared(iso.mesh.clone())?;
                let patient = Patient::on_couch(label, shape, &machine)?;
                (patient, PatientRecord { info, origin: PatientOrigin::Mesh(iso.mesh) })
            }
        };
        s.set_patient(Some((patient, record)));
        s.bump();
        s.mutation_response()
    })
    .await
    .map(Json)
}

async fn remove_patient(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<MutationResponse>> {
    with_session(&st, &id, |s| {
        if s.patient.is_none() {
            return Err(ApiError::not_found("session has no patient"));
        }
        s.set_patient(None);
        s.bump();
        s.mutation_response()
    })
    .await
    .map(Json)
}

async fn patient_mesh(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    with_session(&st, &id, |s| {
        let p = s.scene.patient().ok_or_else(|| ApiError::not_found("session has no patient"))?;
        Ok(stl_response(p.shape.mesh()))
    })
    .await
}

async fn collision(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<CollisionResponse>> {
    with_session(&st, &id, |s| {
        Ok(CollisionResponse {
            revision: s.revision,
            collision: s.collision()?,
        })
    })
    .await
    .map(Json)
}

async fn put_probes(
    State(st): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<Vec<MeasurementProbe>>, JsonRejection>,
) -> ApiResult<Json<ProbesResponse>> {
    st.session(&id)?;
    let Json(probes) = body?;
    for (i, p) in probes.iter().enumerate() {
        if probes[..i].iter().any(|q| q.id == p.id) {
            return Err(ApiError::unprocessable(format!("duplicate probe id {:?}", p.id)));
        }
    }
    with_session(&st, &id, move |s| {
        s.probes = probes;
        s.bump();
        Ok(ProbesResponse {
            revision: s.revision,
            probes: s.probes.clone(),
        })
    })
    .await
    .map(Json)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MeasureQuery {
    /// `ax,ay,az,bx,by,bz` in world millimeters.
    probe: Option<String>,
}

fn parse_probe(text: &str) -> ApiResult<MeasurementProbe> {
    let v: Vec<f64> = text
        .split([',', ';'])
        .map(|x| x.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| ApiError::unprocessable(format!("probe {text:?} is not six numbers")))?;
    if v.len() != 6 {
        return Err(ApiError::unprocessable(format!("probe {text:?} is not six numbers")));
    }
    Ok(MeasurementProbe {
        id: "query".into(),
        a: ProbePoint::Free([v[0], v[1], v[2]]),
        b: ProbePoint::Free([v[3], v[4], v[5]]),
    })
}

async fn measure(
    State(st): State<AppState>,
    Path(id): Path<String>,
    q: Result<Query<MeasureQuery>, QueryRejection>,
) -> ApiResult<Json<MeasureResponse>> {
    st.session(&id)?;
    let Query(q) = q?;
    let adhoc = q.probe.as_deref().map(parse_probe).transpose()?;
    with_session(&st, &id, move |s| {
        let readings = match &adhoc {
            Some(p) => s.measure(std::slice::from_ref(p))?,
            None => s.measure(&s.probes)?,
        };
        Ok(MeasureResponse {
            revision: s.revision,
            readings,
        })
    })
    .await
    .map(Json)
}

fn scenario_stem(name: &str) -> ApiResult<String> {
    let stem: String = name
        .trim()
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '-' })
        .collect();
    let stem = stem.trim_matches('-').to_string();
    if stem.is_empty() {
        return Err(ApiError::unprocessable(format!("scenario name {name:?} has no usable characters")));
    }
    Ok(stem)
}

async fn save_scenario(
    State(st): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<SaveScenario>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<SavedScenario>)> {
    st.session(&id)?;
    let Json(req) = body?;
    let stem = scenario_stem(&req.name)?;
    let dir = st.config().scenario_dir.clone();
    let catalog = st.catalog().clone();
    let saved = with_session(&st, &id, move |s| {
        let io = |e: std::io::Error| ApiError::internal(format!("{}: {e}", dir.display()));
        std::fs::create_dir_all(&dir).map_err(io)?;
        let patient_file = format!("{stem}.patient.obj");
        if let Some(PatientRecord {
            origin: PatientOrigin::Mesh(mesh),
            ..
        }) = &s.patient
        {
            // OBJ keeps full precision, so a replay sees the same surface
            std::fs::write(dir.join(&patient_file), obj_string(mesh)).map_err(io)?;
        }
        let mut scenario = s.to_scenario(&req.name, &req.description, &patient_file);
        if req.freeze {
            let report = run_scenario(&scenario, &catalog, &dir)?;
            scenario.freeze(&report);
        }
        let toml = scenario.to_toml()?;
        let file = format!("{stem}.toml");
        std::fs::write(dir.join(&file), &toml).map_err(io)?;
        Ok(SavedScenario {
            revision: s.revision,
            file,
            toml,
        })
    })
    .await?;
    Ok((StatusCode::CREATED, Json(saved)))
}

fn scenario_files(dir: &FsPath) -> std::io::Result<Vec<String>> {
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    let mut files: Vec<String> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().to_str().map(str::to_string))
        .filter(|n| n.ends_with(".toml"))
        .collect();
    files.sort();
    Ok(files)
}

async fn list_scenarios(State(st): State<AppState>) -> ApiResult<Json<ScenarioList>> {
    let dir = st.config().scenario_dir.clone();
    blocking(move || {
        scenario_files(&dir)
            .map(|files| Json(ScenarioList { files }))
            .map_err(|e| ApiError::internal(e.to_string()))
    })
    .await
}

fn stored_scenario_path(dir: &FsPath, file: &str) -> ApiResult<PathBuf> {
    if file.is_empty() || file.starts_with('.') || file.contains(['/', '\\']) {
        return Err(ApiError::bad_request(format!("{file:?} is not a plain file name")));
    }
    let name = if file.ends_with(".toml") { file.to_string() } else { format!("{file}.toml") };
    let path = dir.join(name);
    if !path.is_file() {
        return Err(ApiError::not_found(format!("no scenario {file:?}")));
    }
    Ok(path)
}

async fn run_stored_scenario(State(st): State<AppState>, Path(file): Path<String>) -> ApiResult<Json<ScenarioReport>> {
    let dir = st.config().scenario_dir.clone();
    let catalog = st.catalog().clone();
    blocking(move || {
        let path = stored_scenario_path(&dir, &file)?;
        let scenario = Scenario::load(&path)?;
        Ok(Json(run_scenario(&scenario, &catalog, &dir)?))
    })
    .await
}

/// Runs a scenario sent as TOML; relative patient paths resolve against
/// the scenario directory.
async fn run_inline_scenario(State(st): State<AppState>, body: Bytes) -> ApiResult<Json<ScenarioReport>> {
    let dir = st.config().scenario_dir.clone();
    let catalog = st.catalog().clone();
    blocking(move || {
        let text = std::str::from_utf8(&body).map_err(|_| ApiError::unprocessable("scenario is not UTF-8"))?;
        let scenario = Scenario::parse(text)?;
        Ok(Json(run_scenario(&scenario, &catalog, &dir)?))
    })
    .await
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReconstructQuery {
    #[serde(default)]
    format: Option<MeshFormat>,
}

async fn reconstruct_upload(
    q: Result<Query<ReconstructQuery>, QueryRejection>,
    mp: Multipart,
) -> ApiResult<Json<ReconstructResponse>> {
    let Query(q) = q?;
    let format = q.format.unwrap_or(MeshFormat::Stl);
    let upload = read_upload(mp).await?;
    if matches!(upload.source, UploadSource::Phantom(_)) {
        return Err(ApiError::unprocessable("reconstruction needs a mesh or a slice stack"));
    }
    blocking(move || {
        let (_, iso) = build_surface(&upload)?;
        let bytes = match format {
            MeshFormat::Stl => stl_bytes(&iso.mesh),
            MeshFormat::Obj => obj_string(&iso.mesh).into_bytes(),
        };
        Ok(Json(ReconstructResponse {
            iso: iso.iso,
            status: iso.status,
            decimation_ratio: iso.decimation_ratio,
            summary: MeshSummary::of(&iso.mesh),
            format,
            mesh_base64: base64::engine::general_purpose::STANDARD.encode(bytes),
        }))
    })
    .await
}
