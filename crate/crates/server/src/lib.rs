//! HTTP API for the interactive analysis workflow, under `/api/v1`.
//!
//! Every body is the JSON form of an engine value; the server only routes
//! requests to [`Session`] methods and maps their errors to status codes.

use std::collections::HashMap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use casts_core::dependency::{Choice, DependencyError, DependencySet};
use casts_core::model::{TypeName, Value};
use casts_core::scenario::{parse_scenario_with, ScenarioError};
use casts_core::session::{Session, SessionError};
use casts_core::composition::TraceError;
use parking_lot::Mutex;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;
use uuid::Uuid;

pub const SESSION_TTL: Duration = Duration::from_secs(24 * 60 * 60);

struct Entry {
    session: Mutex<Session>,
    touched: Mutex<Instant>,
}

/// Live sessions. Each one has its own lock, so requests on one session are
/// serialised while different sessions proceed independently.
#[derive(Clone)]
pub struct AppState {
    sessions: Arc<Mutex<HashMap<Uuid, Arc<Entry>>>>,
    ttl: Duration,
}

impl Default for AppState {
    fn default() -> Self {
        AppState::with_ttl(SESSION_TTL)
    }
}

impl AppState {
    pub fn with_ttl(ttl: Duration) -> Self {
        AppState {
            sessions: Arc::default(),
            ttl,
        }
    }

    /// Registers a session and returns its id.
    pub fn insert(&self, session: Session) -> Uuid {
        let id = Uuid::new_v4();
        self.sessions.lock().insert(
            id,
            Arc::new(Entry {
                session: Mutex::new(session),
                touched: Mutex::new(Instant::now()),
            }),
        );
        id
    }

    pub fn len(&self) -> usize {
        self.sweep();
        self.sessions.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn sweep(&self) {
        let ttl = self.ttl;
        self.sessions.lock().retain(|id, e| {
            let alive = e.touched.lock().elapsed() < ttl;
            if !alive {
                log::info!("session {id} expired");
            }
            alive
        });
    }

    fn entry(&self, id: &str) -> Result<Arc<Entry>, ApiError> {
        self.sweep();
        let uuid = Uuid::parse_str(id).map_err(|_| ApiError::NotFound(id.to_owned()))?;
        let e = self
            .sessions
            .lock()
            .get(&uuid)
            .cloned()
            .ok_or_else(|| ApiError::NotFound(id.to_owned()))?;
        *e.touched.lock() = Instant::now();
        Ok(e)
    }

    fn with<T>(&self, id: &str, f: impl FnOnce(&mut Session) -> Result<T, ApiError>) -> Result<T, ApiError> {
        let e = self.entry(id)?;
        let mut s = e.session.lock();
        f(&mut s)
    }
}

#[derive(Debug)]
pub enum ApiError {
    NotFound(String),
    BadRequest { field: String, message: String },
    Conflict { message: String, body: serde_json::Value },
}

impl ApiError {
    fn bad(field: impl Into<String>, message: impl ToString) -> Self {
        ApiError::BadRequest {
            field: field.into(),
            message: message.to_string(),
        }
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        match e {
            SessionError::Stage { needed, found } => ApiError::Conflict {
                message: e.to_string(),
                body: json!({ "error": "stage", "needed": needed, "found": found }),
            },
            SessionError::Refused(ref report) => ApiError::Conflict {
                message: e.to_string(),
                body: json!({ "error": "refused", "report": report }),
            },
            SessionError::BadRequest { field, message } => ApiError::BadRequest { field, message },
            SessionError::Dependency(DependencyError::IndexOutOfRange { .. } | DependencyError::DuplicateChoice(_)) => {
                ApiError::bad("choices", e)
            }
            SessionError::Trace(TraceError::InvalidChoice { .. }) => ApiError::bad("index", e),
            SessionError::Scenario(_) => ApiError::bad("session", e),
            SessionError::Composition(_) => ApiError::bad("value", e),
            other => ApiError::bad("", other),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        match self {
            ApiError::NotFound(id) => (
                StatusCode::NOT_FOUND,
                Json(json!({ "error": "notFound", "message": format!("no session `{id}`") })),
            )
                .into_response(),
            ApiError::BadRequest { field, message } => (
                StatusCode::BAD_REQUEST,
                Json(json!({ "error": "badRequest", "field": field, "message": message })),
            )
                .into_response(),
            ApiError::Conflict { message, mut body } => {
                body["message"] = json!(message);
                (StatusCode::CONFLICT, Json(body)).into_response()
            }
        }
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Parses a JSON body, reporting the path of the first offending field.
fn body<T: DeserializeOwned>(bytes: &Bytes) -> ApiResult<T> {
    let mut de = serde_json::Deserializer::from_slice(bytes);
    serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        ApiError::bad(if path == "." { String::new() } else { path }, e.into_inner())
    })
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct CreateSession {
    scenario: String,
    /// Documents referenced by `<ontology src>` or `||[file]`, by name.
    #[serde(default)]
    files: std::collections::BTreeMap<String, String>,
    left: Option<String>,
    right: Option<String>,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct LoadSession {
    session: String,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct Selection {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct StepRequest {
    index: usize,
    #[serde(default)]
    force: bool,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct ContextRequest {
    instance: String,
    name: String,
    #[serde(rename = "type")]
    ty: String,
    value: String,
    #[serde(default)]
    force: bool,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct ExploreRequest {
    #[serde(default = "default_bound")]
    bound: usize,
    #[serde(default)]
    force: bool,
}

fn default_bound() -> usize {
    casts_core::composition::DEFAULT_BOUND
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct Created {
    id: Uuid,
    #[serde(flatten)]
    summary: casts_core::session::SessionSummary,
}

async fn health() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok", "version": env!("CARGO_PKG_VERSION") }))
}

async fn create(State(st): State<AppState>, bytes: Bytes) -> ApiResult<(StatusCode, Json<Created>)> {
    let req: CreateSession = body(&bytes)?;
    let resolve = |src: &str| {
        req.files
            .get(src)
            .cloned()
            .ok_or_else(|| ScenarioError::Reference(format!("`{src}` is not among the uploaded files")))
    };
    let scenario = parse_scenario_with(&req.scenario, &resolve).map_err(|e| ApiError::bad("scenario", e))?;
    let s = Session::new(scenario, req.left.map(Into::into), req.right.map(Into::into))?;
    let summary = s.summary();
    let id = st.insert(s);
    Ok((StatusCode::CREATED, Json(Created { id, summary })))
}

async fn load(State(st): State<AppState>, bytes: Bytes) -> ApiResult<(StatusCode, Json<Created>)> {
    let req: LoadSession = body(&bytes)?;
    let s = Session::from_xml(&req.session).map_err(|e| ApiError::bad("session", e))?;
    let summary = s.summary();
    let id = st.insert(s);
    Ok((StatusCode::CREATED, Json(Created { id, summary })))
}

async fn summary(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    st.with(&id, |s| Ok(Json(s.summary()).into_response()))
}

async fn remove(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<StatusCode> {
    st.entry(&id)?;
    if let Ok(u) = Uuid::parse_str(&id) {
        st.sessions.lock().remove(&u);
    }
    Ok(StatusCode::NO_CONTENT)
}

async fn graphs(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    st.with(&id, |s| Ok(Json(s.graphs()).into_response()))
}

async fn candidates(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    st.with(&id, |s| Ok(Json(s.analyze()?).into_response()))
}

async fn put_selection(State(st): State<AppState>, Path(id): Path<String>, bytes: Bytes) -> ApiResult<Response> {
    let req: Selection = body(&bytes)?;
    st.with(&id, |s| {
        s.select(req.choices)?;
        Ok(Json(json!({
            "stage": s.stage(),
            "selected": DependencySet::Selected(s.selected()?.clone()),
            "extended": DependencySet::Extended(s.extended()?.clone()),
            "report": s.report()?,
        }))
        .into_response())
    })
}

async fn get_selection(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    st.with(&id, |s| {
        Ok(Json(json!({
            "choices": s.selection()?,
            "selected": DependencySet::Selected(s.selected()?.clone()),
        }))
        .into_response())
    })
}

async fn extended(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    st.with(&id, |s| Ok(Json(DependencySet::Extended(s.extended()?.clone())).into_response()))
}

async fn verification(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    st.with(&id, |s| Ok(Json(s.report()?).into_response()))
}

async fn moves(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    st.with(&id, |s| Ok(Json(s.moves()?).into_response()))
}

async fn step(State(st): State<AppState>, Path(id): Path<String>, bytes: Bytes) -> ApiResult<Response> {
    let req: StepRequest = body(&bytes)?;
    st.with(&id, |s| {
        let action = s.step(req.index, req.force)?;
        Ok(Json(json!({ "action": action, "moves": s.moves()? })).into_response())
    })
}

async fn context(State(st): State<AppState>, Path(id): Path<String>, bytes: Bytes) -> ApiResult<Response> {
    let req: ContextRequest = body(&bytes)?;
    let value = Value::parse_typed(&TypeName::new(req.ty.as_str()), &req.value).map_err(|m| ApiError::bad("value", m))?;
    st.with(&id, |s| {
        s.update_context(&req.instance.as_str().into(), &req.name, value, req.force)?;
        Ok(Json(s.moves()?).into_response())
    })
}

async fn explore(State(st): State<AppState>, Path(id): Path<String>, bytes: Bytes) -> ApiResult<Response> {
    let req: ExploreRequest = if bytes.is_empty() {
        ExploreRequest {
            bound: default_bound(),
            force: false,
        }
    } else {
        body(&bytes)?
    };
    st.with(&id, |s| Ok(Json(s.explore(req.bound, req.force)?).into_response()))
}

async fn trace(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    st.with(&id, |s| Ok(Json(s.trace()).into_response()))
}

async fn reset_trace(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    st.with(&id, |s| {
        s.reset_execution();
        Ok(Json(s.trace()).into_response())
    })
}

async fn save(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    st.with(&id, |s| Ok(([(header::CONTENT_TYPE, "application/xml")], s.to_xml()).into_response()))
}

async fn not_found() -> ApiError {
    ApiError::NotFound(String::new())
}

pub fn router(state: AppState) -> Router {
    let api = Router::new()
        .route("/health", get(health))
        .route("/sessions", post(create))
        .route("/sessions/load", post(load))
        .route("/sessions/{id}", get(summary).delete(remove))
        .route("/sessions/{id}/graphs", get(graphs))
        .route("/sessions/{id}/candidates", get(candidates))
        .route("/sessions/{id}/selection", put(put_selection).get(get_selection))
        .route("/sessions/{id}/extended", get(extended))
        .route("/sessions/{id}/verification", get(verification))
        .route("/sessions/{id}/moves", get(moves))
        .route("/sessions/{id}/step", post(step))
        .route("/sessions/{id}/context", post(context))
        .route("/sessions/{id}/explore", post(explore))
        .route("/sessions/{id}/trace", get(trace).delete(reset_trace))
        .route("/sessions/{id}/save", get(save));
    Router::new().nest("/api/v1", api).fallback(not_found).with_state(state)
}

/// Serves until the listener fails or the process is interrupted.
pub async fn serve(listener: tokio::net::TcpListener, state: AppState) -> std::io::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
