//! HTTP/JSON session service.
//!
//! Each session keeps its optimizer state behind an async mutex. Mutations
//! take it with `try_lock` and answer 409 while it is held, so a conflicting
//! write is rejected rather than queued. Solver work runs on the blocking
//! pool. Reads come from a snapshot that is replaced after each mutation and
//! never wait for the lock.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use popbo::bench::{episode_setup, ConfigOverrides, InstanceKind};
use popbo::session::{PopBoConfig, Session, StepRecord};
use tokio::sync::Mutex;

use crate::protocol::{
    CreateRequest, CreateResponse, DuelResponse, ErrorBody, PreferenceRequest, PreferenceResponse, ReportResponse,
    TraceResponse,
};
use crate::{store, CliError};

#[derive(Debug)]
pub enum ApiError {
    BadRequest(String),
    NotFound(String),
    Conflict(String),
    Internal(String),
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, error) = match self {
            ApiError::BadRequest(m) => (StatusCode::BAD_REQUEST, m),
            ApiError::NotFound(m) => (StatusCode::NOT_FOUND, m),
            ApiError::Conflict(m) => (StatusCode::CONFLICT, m),
            ApiError::Internal(m) => (StatusCode::INTERNAL_SERVER_ERROR, m),
        };
        (status, Json(ErrorBody { error })).into_response()
    }
}

impl From<popbo::Error> for ApiError {
    fn from(e: popbo::Error) -> Self {
        use popbo::Error as E;
        match e {
            E::Protocol(_) => ApiError::Conflict(e.to_string()),
            E::Input(_) | E::Dimension { .. } | E::Json(_) => ApiError::BadRequest(e.to_string()),
            _ => ApiError::Internal(e.to_string()),
        }
    }
}

impl From<CliError> for ApiError {
    fn from(e: CliError) -> Self {
        match e {
            CliError::Engine(e) => e.into(),
            other => ApiError::Internal(other.to_string()),
        }
    }
}

/// What readers see of a session between mutations.
#[derive(Clone, Debug)]
struct Snapshot {
    pending: Option<DuelResponse>,
    report: Option<ReportResponse>,
    steps: Vec<StepRecord>,
}

impl Snapshot {
    fn of(session: &Session) -> Result<Self, ApiError> {
        let labels = session.config().labels.clone();
        let pending = session.pending().map(|p| DuelResponse {
            t: p.t,
            x: p.x.clone(),
            x_prime: p.x_prime.clone(),
            labels: labels.clone(),
        });
        let report = if session.t() == 0 {
            None
        } else {
            let r = session.report_t_star()?;
            Some(ReportResponse { t_star: r.t_star, x: r.x, radius: r.radius, max_mle_point: session.report_max_mle()? })
        };
        Ok(Snapshot { pending, report, steps: session.trace().to_vec() })
    }
}

struct Slot {
    session: Arc<Mutex<Session>>,
    snapshot: RwLock<Snapshot>,
}

impl Slot {
    fn new(session: Session) -> Result<Self, ApiError> {
        let snapshot = RwLock::new(Snapshot::of(&session)?);
        Ok(Slot { session: Arc::new(Mutex::new(session)), snapshot })
    }

    fn read(&self) -> Snapshot {
        self.snapshot.read().unwrap_or_else(|p| p.into_inner()).clone()
    }

    fn publish(&self, snapshot: Snapshot) {
        *self.snapshot.write().unwrap_or_else(|p| p.into_inner()) = snapshot;
    }
}

pub struct AppState {
    sessions: RwLock<HashMap<String, Arc<Slot>>>,
    checkpoint_dir: Option<PathBuf>,
}

impl AppState {
    /// A service that keeps sessions only in memory.
    pub fn in_memory() -> Self {
        AppState { sessions: RwLock::new(HashMap::new()), checkpoint_dir: None }
    }

    /// A service persisting to `dir`, reloading every checkpoint found there.
    /// Checkpoints that fail to replay are skipped with an error log.
    pub fn open(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir)?;
        let mut sessions = HashMap::new();
        for entry in fs::read_dir(dir)? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let Some(id) = path.file_stem().and_then(|s| s.to_str()).map(String::from) else {
                continue;
            };
            match store::load(&path).map_err(ApiError::from).and_then(Slot::new) {
                Ok(slot) => {
                    sessions.insert(id, Arc::new(slot));
                }
                Err(e) => log::error!("skipping checkpoint {}: {e:?}", path.display()),
            }
        }
        log::info!("loaded {} sessions from {}", sessions.len(), dir.display());
        Ok(AppState { sessions: RwLock::new(sessions), checkpoint_dir: Some(dir.to_path_buf()) })
    }

    pub fn session_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.sessions.read().unwrap_or_else(|p| p.into_inner()).keys().cloned().collect();
        ids.sort();
        ids
    }

    /// The mutex guarding a session's optimizer state. Holding it makes the
    /// service answer 409 to writes on that session.
    pub fn session_handle(&self, id: &str) -> Option<Arc<Mutex<Session>>> {
        self.slot(id).ok().map(|s| s.session.clone())
    }

    fn slot(&self, id: &str) -> Result<Arc<Slot>, ApiError> {
        self.sessions
            .read()
            .unwrap_or_else(|p| p.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::NotFound(format!("no session '{id}'")))
    }

    fn checkpoint_path(&self, id: &str) -> Option<PathBuf> {
        self.checkpoint_dir.as_ref().map(|d| d.join(format!("{id}.json")))
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/v1/sessions", post(create))
        .route("/v1/sessions/{id}/duel", get(duel))
        .route("/v1/sessions/{id}/preference", post(preference))
        .route("/v1/sessions/{id}/report", get(report))
        .route("/v1/sessions/{id}/trace", get(trace))
        .with_state(state)
}

fn persist(session: &Session, path: Option<&Path>) -> Result<(), ApiError> {
    match path {
        Some(p) => store::save(session, p).map_err(ApiError::from),
        None => Ok(()),
    }
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::Internal(format!("worker failed: {e}")))?
}

fn config_for(req: CreateRequest) -> Result<PopBoConfig, ApiError> {
    if let Some(config) = req.config {
        return Ok(config);
    }
    let name = req.instance.unwrap_or_default();
    let kind: InstanceKind = name.parse().map_err(|e: popbo::Error| ApiError::BadRequest(e.to_string()))?;
    Ok(episode_setup(kind, req.seed.unwrap_or(0), &ConfigOverrides::default())?.config)
}

async fn create(State(state): State<Arc<AppState>>, body: Bytes) -> Result<impl IntoResponse, ApiError> {
    let req = CreateRequest::parse(&body).map_err(ApiError::BadRequest)?;
    let id = uuid::Uuid::new_v4().simple().to_string();
    let path = state.checkpoint_path(&id);
    let slot = blocking(move || {
        let session = Session::new(config_for(req)?)?;
        persist(&session, path.as_deref())?;
        Slot::new(session)
    })
    .await?;
    state
        .sessions
        .write()
        .unwrap_or_else(|p| p.into_inner())
        .insert(id.clone(), Arc::new(slot));
    log::info!("created session {id}");
    Ok((StatusCode::CREATED, Json(CreateResponse { session_id: id })))
}

fn busy() -> ApiError {
    ApiError::Conflict("session is busy with another request".into())
}

async fn duel(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Result<Json<DuelResponse>, ApiError> {
    let slot = state.slot(&id)?;
    if let Some(pending) = slot.read().pending {
        return Ok(Json(pending));
    }
    let guard = slot.session.clone().try_lock_owned().map_err(|_| busy())?;
    let path = state.checkpoint_path(&id);
    let worker_slot = slot.clone();
    blocking(move || {
        let mut session = guard;
        session.current_duel()?;
        persist(&session, path.as_deref())?;
        let snapshot = Snapshot::of(&session)?;
        let pending = snapshot.pending.clone();
        worker_slot.publish(snapshot);
        pending.map(Json).ok_or_else(|| ApiError::Internal("no comparison was proposed".into()))
    })
    .await
}

async fn preference(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> Result<Json<PreferenceResponse>, ApiError> {
    let slot = state.slot(&id)?;
    let pref = PreferenceRequest::parse(&body).map_err(ApiError::BadRequest)?;
    let guard = slot.session.clone().try_lock_owned().map_err(|_| busy())?;
    let path = state.checkpoint_path(&id);
    let worker_slot = slot.clone();
    blocking(move || {
        let mut session = guard;
        if session.pending().is_none() {
            return Err(ApiError::Conflict("no comparison is awaiting an answer".into()));
        }
        session.observe(pref)?;
        persist(&session, path.as_deref())?;
        let report = session.report_t_star()?;
        let t = session.t();
        worker_slot.publish(Snapshot::of(&session)?);
        Ok(Json(PreferenceResponse { t, report }))
    })
    .await
}

async fn report(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
) -> Result<Json<ReportResponse>, ApiError> {
    state
        .slot(&id)?
        .read()
        .report
        .map(Json)
        .ok_or_else(|| ApiError::Conflict("no comparisons answered yet".into()))
}

async fn trace(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Result<Json<TraceResponse>, ApiError> {
    let steps = state.slot(&id)?.read().steps;
    Ok(Json(TraceResponse { t: steps.len(), steps }))
}

/// Binds `127.0.0.1:port` and serves until interrupted.
pub async fn serve(state: Arc<AppState>, port: u16) -> Result<(), CliError> {
    let listener = tokio::net::TcpListener::bind(("127.0.0.1", port)).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
