//! Thin async client for the simulator's HTTP API. Request and response
//! bodies are the types in [`ebrt_core::wire`].

use std::path::Path;

use ebrt_core::geometry::io::MeshFormat;
use ebrt_core::linac::PartialState;
use ebrt_core::measure::{MeasurementProbe, ScenarioReport};
use ebrt_core::wire::{
    AttachmentRequest, CollisionResponse, CreateSession, ErrorBody, MachinesResponse, MeasureResponse,
    MutationResponse, ProbesResponse, ReconstructResponse, SaveScenario, SavedScenario, ScenarioList, SessionView,
};
use reqwest::multipart::{Form, Part};
use reqwest::{Method, RequestBuilder, Response, StatusCode};
use serde::de::DeserializeOwned;

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("request failed: {0}")]
    Http(#[from] reqwest::Error),
    #[error("{status}: {} ({})", body.message, body.error)]
    Api { status: StatusCode, body: ErrorBody },
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl ClientError {
    /// HTTP status of an API error response.
    pub fn status(&self) -> Option<StatusCode> {
        match self {
            ClientError::Api { status, .. } => Some(*status),
            ClientError::Http(e) => e.status(),
            ClientError::Io { .. } => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, ClientError>;

/// Reconstruction options sent with slice-stack and mesh uploads.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SurfaceOptions {
    pub iso: Option<f64>,
    pub decimate: Option<usize>,
}

impl SurfaceOptions {
    fn apply(&self, mut form: Form) -> Form {
        if let Some(iso) = self.iso {
            form = form.text("iso", iso.to_string());
        }
        if let Some(n) = self.decimate {
            form = form.text("decimate", n.to_string());
        }
        form
    }
}

#[derive(Debug, Clone)]
pub struct Client {
    base: String,
    http: reqwest::Client,
}

impl Client {
    /// `base` is the service root, e.g. `http://127.0.0.1:8640`.
    pub fn new(base: impl Into<String>) -> Self {
        Self {
            base: base.into().trim_end_matches('/').to_string(),
            http: reqwest::Client::new(),
        }
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    fn req(&self, method: Method, path: &str) -> RequestBuilder {
        self.http.request(method, format!("{}{}", self.base, path))
    }

    async fn checked(resp: Response) -> Result<Response> {
        let status = resp.status();
        if status.is_success() {
            return Ok(resp);
        }
        let text = resp.text().await?;
        let body = serde_json::from_str(&text).unwrap_or(ErrorBody {
            error: "http".into(),
            message: text,
            revision: None,
        });
        Err(ClientError::Api { status, body })
    }

    async fn json<T: DeserializeOwned>(rb: RequestBuilder) -> Result<T> {
        Ok(Self::checked(rb.send().await?).await?.json().await?)
    }

    async fn bytes(rb: RequestBuilder) -> Result<Vec<u8>> {
        Ok(Self::checked(rb.send().await?).await?.bytes().await?.to_vec())
    }

    pub async fn health(&self) -> Result<()> {
        Self::checked(self.req(Method::GET, "/health").send().await?).await?;
        Ok(())
    }

    pub async fn machines(&self) -> Result<MachinesResponse> {
        Self::json(self.req(Method::GET, "/machines")).await
    }

    /// Binary STL of a machine component, attachment or phantom.
    pub async fn machine_mesh(&self, machine: &str, component: &str) -> Result<Vec<u8>> {
        Self::bytes(self.req(Method::GET, &format!("/machines/{machine}/meshes/{component}"))).await
    }

    pub async fn create_session(&self, machine: &str) -> Result<SessionView> {
        let body = CreateSession {
            machine: machine.to_string(),
        };
        Self::json(self.req(Method::POST, "/sessions").json(&body)).await
    }

    pub async fn session(&self, id: &str) -> Result<SessionView> {
        Self::json(self.req(Method::GET, &format!("/sessions/{id}/state"))).await
    }

    pub async fn delete_session(&self, id: &str) -> Result<()> {
        Self::checked(self.req(Method::DELETE, &format!("/sessions/{id}")).send().await?).await?;
        Ok(())
    }

    pub async fn put_state(&self, id: &str, state: &PartialState) -> Result<MutationResponse> {
        Self::json(self.req(Method::PUT, &format!("/sessions/{id}/state")).json(state)).await
    }

    pub async fn attach(&self, id: &str, attachment: &str) -> Result<MutationResponse> {
        let body = AttachmentRequest {
            id: attachment.to_string(),
        };
        Self::json(self.req(Method::POST, &format!("/sessions/{id}/attachments")).json(&body)).await
    }

    pub async fn detach(&self, id: &str, attachment: &str) -> Result<MutationResponse> {
        Self::json(self.req(Method::DELETE, &format!("/sessions/{id}/attachments/{attachment}"))).await
    }

    async fn upload(&self, id: &str, form: Form) -> Result<MutationResponse> {
        Self::json(self.req(Method::POST, &format!("/sessions/{id}/patient")).multipart(form)).await
    }

    pub async fn load_phantom(&self, id: &str, phantom: &str) -> Result<MutationResponse> {
        self.upload(id, Form::new().text("phantom", phantom.to_string())).await
    }

    pub async fn upload_mesh(
        &self,
        id: &str,
        file_name: &str,
        bytes: Vec<u8>,
        opts: &SurfaceOptions,
    ) -> Result<MutationResponse> {
        let form = Form::new().part("mesh", Part::bytes(bytes).file_name(file_name.to_string()));
        self.upload(id, opts.apply(form)).await
    }

    pub async fn upload_stack(&self, id: &str, dir: &Path, opts: &SurfaceOptions) -> Result<MutationResponse> {
        self.upload(id, opts.apply(stack_form(dir)?)).await
    }

    pub async fn remove_patient(&self, id: &str) -> Result<MutationResponse> {
        Self::json(self.req(Method::DELETE, &format!("/sessions/{id}/patient"))).await
    }

    pub async fn patient_mesh(&self, id: &str) -> Result<Vec<u8>> {
        Self::bytes(self.req(Method::GET, &format!("/sessions/{id}/patient/mesh"))).await
    }

    pub async fn collision(&self, id: &str) -> Result<CollisionResponse> {
        Self::json(self.req(Method::GET, &format!("/sessions/{id}/collision"))).await
    }

    pub async fn set_probes(&self, id: &str, probes: &[MeasurementProbe]) -> Result<ProbesResponse> {
        Self::json(self.req(Method::PUT, &format!("/sessions/{id}/probes")).json(probes)).await
    }

    /// Reads the stored probes, or only the free probe `a`–`b` if given.
    pub async fn measure(&self, id: &str, probe: Option<([f64; 3], [f64; 3])>) -> Result<MeasureResponse> {
        let mut rb = self.req(Method::GET, &format!("/sessions/{id}/measure"));
        if let Some((a, b)) = probe {
            let q = [a, b].concat().iter().map(f64::to_string).collect::<Vec<_>>().join(",");
            rb = rb.query(&[("probe", q)]);
        }
        Self::json(rb).await
    }

    pub async fn save_scenario(&self, id: &str, req: &SaveScenario) -> Result<SavedScenario> {
        Self::json(self.req(Method::POST, &format!("/sessions/{id}/scenario")).json(req)).await
    }

    pub async fn scenarios(&self) -> Result<ScenarioList> {
        Self::json(self.req(Method::GET, "/scenarios")).await
    }

    /// Replays a scenario stored in the service's scenario directory.
    pub async fn run_scenario_file(&self, file: &str) -> Result<ScenarioReport> {
        Self::json(self.req(Method::POST, &format!("/scenarios/{file}/run"))).await
    }

    /// Replays scenario TOML sent in the request body.
    pub async fn run_scenario_text(&self, toml: &str) -> Result<ScenarioReport> {
        let rb = self
            .req(Method::POST, "/scenarios/run")
            .header(reqwest::header::CONTENT_TYPE, "application/toml")
            .body(toml.to_string());
        Self::json(rb).await
    }

    pub async fn reconstruct_stack(
        &self,
        dir: &Path,
        opts: &SurfaceOptions,
        format: MeshFormat,
    ) -> Result<ReconstructResponse> {
        let fmt = match format {
            MeshFormat::Stl => "stl",
            MeshFormat::Obj => "obj",
        };
        let rb = self
            .req(Method::POST, "/ct/reconstruct")
            .query(&[("format", fmt)])
            .multipart(opts.apply(stack_form(dir)?));
        Self::json(rb).await
    }
}

/// `meta.json` plus every `slice_*.raw` file of a slice-stack directory.
fn stack_form(dir: &Path) -> Result<Form> {
    let read = |p: &Path| {
        std::fs::read(p).map_err(|source| ClientError::Io {
            path: p.display().to_string(),
            source,
        })
    };
    let mut form = Form::new().part("meta", Part::bytes(read(&dir.join("meta.json"))?).file_name("meta.json"));
    let entries = std::fs::read_dir(dir).map_err(|source| ClientError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let mut names: Vec<String> = entries
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().to_str().map(str::to_string))
        .filter(|n| n.starts_with("slice_") && n.ends_with(".raw"))
        .collect();
    names.sort();
    for name in names {
        let field = name.trim_end_matches(".raw").to_string();
        form = form.part(field, Part::bytes(read(&dir.join(&name))?).file_name(name));
    }
    Ok(form)
}
