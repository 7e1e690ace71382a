//! HTTP/JSON service exposing treatment-room sessions.
//!
//! Each session owns one room (machine, pose, attachments, patient,
//! probes) behind its own lock, so requests on different sessions run in
//! parallel while mutations within a session are serialized. Geometry work
//! runs on the blocking pool against immutable, shared machine data.

mod error;
mod routes;
mod session;
mod upload;

use std::collections::HashMap;
use std::future::Future;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use axum::Router;
use ebrt_core::linac::{builtin_catalog, Catalog, Detail, LinacError};
use tokio::net::TcpListener;
use tokio::sync::{oneshot, Mutex};

pub use error::ApiError;
pub use session::{PatientOrigin, PatientRecord, Session};

pub const DEFAULT_PORT: u16 = 8640;
pub const DEFAULT_MAX_UPLOAD_BYTES: usize = 256 * 1024 * 1024;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// Extra machine/phantom files; entries replace bundled ones by id.
    pub machines_dir: Option<PathBuf>,
    /// Where scenarios are saved and looked up by file name.
    pub scenario_dir: PathBuf,
    pub max_upload_bytes: usize,
    pub detail: Detail,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            machines_dir: None,
            scenario_dir: PathBuf::from("scenarios"),
            max_upload_bytes: DEFAULT_MAX_UPLOAD_BYTES,
            detail: Detail::default(),
        }
    }
}

/// Bundled machines plus those in `config.machines_dir`.
pub fn load_catalog(config: &ServiceConfig) -> Result<Catalog, LinacError> {
    let mut c = builtin_catalog(config.detail);
    if let Some(dir) = &config.machines_dir {
        c.load_dir(dir, config.detail)?;
    }
    Ok(c)
}

pub(crate) struct Inner {
    pub catalog: Arc<Catalog>,
    pub sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
    pub config: ServiceConfig,
}

#[derive(Clone)]
pub struct AppState(pub(crate) Arc<Inner>);

impl AppState {
    pub fn new(config: ServiceConfig) -> Result<Self, LinacError> {
        let catalog = Arc::new(load_catalog(&config)?);
        Ok(Self::with_catalog(config, catalog))
    }

    pub fn with_catalog(config: ServiceConfig, catalog: Arc<Catalog>) -> Self {
        Self(Arc::new(Inner {
            catalog,
            sessions: RwLock::new(HashMap::new()),
            config,
        }))
    }

    pub fn catalog(&self) -> &Arc<Catalog> {
        &self.0.catalog
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.0.config
    }

    pub(crate) fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>, ApiError> {
        self.0
            .sessions
            .read()
            .expect("session map lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("unknown session {id:?}")))
    }
}

pub fn router(state: AppState) -> Router {
    routes::router(state)
}

pub async fn serve(
    listener: TcpListener,
    state: AppState,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await
}

/// A service running on a background task.
pub struct RunningService {
    pub addr: SocketAddr,
    stop: Option<oneshot::Sender<()>>,
    task: tokio::task::JoinHandle<std::io::Result<()>>,
}

impl RunningService {
    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub async fn stop(mut self) -> std::io::Result<()> {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
        self.task.await.map_err(std::io::Error::other)?
    }
}

/// Binds `addr` (port 0 picks a free port) and serves in the background.
pub async fn spawn(state: AppState, addr: SocketAddr) -> std::io::Result<RunningService> {
    let listener = TcpListener::bind(addr).await?;
    let addr = listener.local_addr()?;
    let (tx, rx) = oneshot::channel();
    let task = tokio::spawn(serve(listener, state, async {
        let _ = rx.await;
    }));
    Ok(RunningService {
        addr,
        stop: Some(tx),
        task,
    })
}
