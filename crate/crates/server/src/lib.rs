//! HTTP API over a directory of processed sessions:
//!
//! - `GET /api/sessions`
//! - `GET /api/sessions/{id}`
//! - `GET /api/sessions/{id}/frames/{n}`
//! - `GET /api/compare?teacher=..&student=..&samples=..&grid_ms=..`
//! - `POST /api/refresh`

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};
use std::time::SystemTime;

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tower_http::cors::CorsLayer;
use tower_http::services::ServeDir;

use callisense_core::compare::{build_report, CompareError, GlyphSession, DEFAULT_GRID_MS, DEFAULT_SAMPLES};
use callisense_core::ingest::{binarize, read_gray};
use callisense_core::model::{Role, Session, ValidationLimits};
use callisense_core::pipeline::{frame_png_name, load_session};

#[derive(Debug, Clone)]
pub struct IndexEntry {
    pub path: PathBuf,
    pub role: Role,
    pub character_label: String,
    pub mtime: Option<SystemTime>,
    pub session: Arc<Session>,
    /// The file as read, served verbatim.
    pub doc: Arc<String>,
    /// Glyph mask, when its sidecar could be read.
    pub glyph: Option<Arc<GlyphSession>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub id: String,
    pub role: Role,
    pub character_label: String,
    pub stroke_count: usize,
}

/// Immutable snapshot of the data directory.
#[derive(Debug, Clone, Default)]
pub struct SessionIndex {
    pub entries: BTreeMap<String, IndexEntry>,
    pub skipped: Vec<PathBuf>,
}

impl SessionIndex {
    /// Indexes every valid `*.json` session directly inside `dir`. Invalid
    /// files are skipped with a warning; on duplicate ids the first path in
    /// sorted order wins.
    pub fn build(dir: &Path, limits: &ValidationLimits) -> std::io::Result<Self> {
        let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        let mut index = SessionIndex::default();
        for path in paths {
            let (session, doc) = match load_session(&path, limits) {
                Ok(v) => v,
                Err(e) => {
                    log::warn!("skipping {}: {e}", path.display());
                    index.skipped.push(path);
                    continue;
                }
            };
            if index.entries.contains_key(&session.id) {
                log::warn!("skipping {}: duplicate session id {}", path.display(), session.id);
                index.skipped.push(path);
                continue;
            }
            let glyph = session.glyph_mask.as_ref().and_then(|name| {
                let p = path.parent().unwrap_or(Path::new(".")).join(name);
                match read_gray(&p) {
                    Ok(img) => Some(Arc::new(GlyphSession {
                        session: session.clone(),
                        glyph: binarize(&img, 128, 0),
                    })),
                    Err(e) => {
                        log::warn!("{}: glyph mask unavailable: {e}", path.display());
                        None
                    }
                }
            });
            let mtime = std::fs::metadata(&path).and_then(|m| m.modified()).ok();
            index.entries.insert(
                session.id.clone(),
                IndexEntry {
                    role: session.role,
                    character_label: session.character_label.clone(),
                    path,
                    mtime,
                    session: Arc::new(session),
                    doc: Arc::new(doc),
                    glyph,
                },
            );
        }
        log::info!("indexed {} sessions from {}", index.entries.len(), dir.display());
        Ok(index)
    }

    pub fn summaries(&self) -> Vec<SessionSummary> {
        self.entries
            .iter()
            .map(|(id, e)| SessionSummary {
                id: id.clone(),
                role: e.role,
                character_label: e.character_label.clone(),
                stroke_count: e.session.strokes.len(),
            })
            .collect()
    }
}

pub struct AppState {
    pub data_dir: PathBuf,
    pub limits: ValidationLimits,
    index: RwLock<Arc<SessionIndex>>,
}

impl AppState {
    pub fn new(data_dir: PathBuf, limits: ValidationLimits) -> std::io::Result<Self> {
        let index = SessionIndex::build(&data_dir, &limits)?;
        Ok(AppState {
            data_dir,
            limits,
            index: RwLock::new(Arc::new(index)),
        })
    }

    pub fn index(&self) -> Arc<SessionIndex> {
        self.index.read().expect("index lock").clone()
    }

    /// Rebuilds the index off to the side and swaps it in.
    pub fn refresh(&self) -> std::io::Result<usize> {
        let fresh = Arc::new(SessionIndex::build(&self.data_dir, &self.limits)?);
        let n = fresh.entries.len();
        *self.index.write().expect("index lock") = fresh;
        Ok(n)
    }
}

#[derive(Debug, Error)]
pub enum ApiError {
    #[error("unknown session id `{0}`")]
    UnknownId(String),
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    Unprocessable(String),
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    Internal(String),
}

#[derive(Serialize)]
struct ErrorBody {
    error: String,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match self {
            ApiError::UnknownId(_) | ApiError::NotFound(_) => StatusCode::NOT_FOUND,
            ApiError::Unprocessable(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ApiError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(ErrorBody { error: self.to_string() })).into_response()
    }
}

type Shared = Arc<AppState>;

fn json_text(body: String) -> Response {
    ([(header::CONTENT_TYPE, "application/json")], body).into_response()
}

async fn list_sessions(State(st): State<Shared>) -> Json<Vec<SessionSummary>> {
    Json(st.index().summaries())
}

async fn get_session(State(st): State<Shared>, UrlPath(id): UrlPath<String>) -> Result<Response, ApiError> {
    let index = st.index();
    let e = index.entries.get(&id).ok_or(ApiError::UnknownId(id))?;
    Ok(json_text(e.doc.as_str().to_owned()))
}

async fn get_frame(State(st): State<Shared>, UrlPath((id, n)): UrlPath<(String, usize)>) -> Result<Response, ApiError> {
    let index = st.index();
    let e = index.entries.get(&id).ok_or_else(|| ApiError::UnknownId(id.clone()))?;
    let dir = e
        .session
        .frames_dir
        .as_ref()
        .ok_or_else(|| ApiError::NotFound("frames not retained".into()))?;
    if n >= e.session.frame_count {
        return Err(ApiError::NotFound(format!(
            "frame {n} out of range (session has {})",
            e.session.frame_count
        )));
    }
    let path = e.path.parent().unwrap_or(Path::new(".")).join(dir).join(frame_png_name(n));
    let bytes = tokio::fs::read(&path)
        .await
        .map_err(|_| ApiError::NotFound(format!("frame {n} not found")))?;
    Ok(([(header::CONTENT_TYPE, "image/png")], bytes).into_response())
}

#[derive(Debug, Deserialize)]
pub struct CompareQuery {
    pub teacher: String,
    pub student: String,
    pub samples: Option<usize>,
    pub grid_ms: Option<i64>,
}

fn glyph_of(index: &SessionIndex, id: &str) -> Result<Arc<GlyphSession>, ApiError> {
    let e = index.entries.get(id).ok_or_else(|| ApiError::UnknownId(id.to_string()))?;
    e.glyph
        .clone()
        .ok_or_else(|| ApiError::Unprocessable(format!("session `{id}` has no glyph mask")))
}

async fn get_comparison(State(st): State<Shared>, Query(q): Query<CompareQuery>) -> Result<Response, ApiError> {
    let index = st.index();
    let t = glyph_of(&index, &q.teacher)?;
    let s = glyph_of(&index, &q.student)?;
    let n = q.samples.unwrap_or(DEFAULT_SAMPLES);
    let grid = q.grid_ms.unwrap_or(DEFAULT_GRID_MS);
    let report = build_report(&t, &s, n, grid).map_err(|e| match e {
        CompareError::EmptySession(_) => ApiError::Unprocessable(e.to_string()),
        CompareError::BadSampling => ApiError::BadRequest(e.to_string()),
        other => ApiError::Internal(other.to_string()),
    })?;
    Ok(json_text(report.to_json()))
}

#[derive(Serialize)]
struct RefreshBody {
    sessions: usize,
}

async fn refresh(State(st): State<Shared>) -> Result<Json<RefreshBody>, ApiError> {
    let st2 = st.clone();
    let n = tokio::task::spawn_blocking(move || st2.refresh())
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))?
        .map_err(|e| ApiError::Internal(format!("cannot read {}: {e}", st.data_dir.display())))?;
    Ok(Json(RefreshBody { sessions: n }))
}

/// The API router, plus static UI assets at `/` when `ui_dir` is given.
pub fn router(state: Shared, ui_dir: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/api/sessions", get(list_sessions))
        .route("/api/sessions/:id", get(get_session))
        .route("/api/sessions/:id/frames/:n", get(get_frame))
        .route("/api/compare", get(get_comparison))
        .route("/api/refresh", post(refresh))
        .with_state(state)
        .layer(CorsLayer::permissive());
    match ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Serves `data_dir` on `0.0.0.0:port` until the process is stopped.
pub async fn serve(data_dir: &Path, port: u16, ui_dir: Option<&Path>) -> std::io::Result<()> {
    let state = Arc::new(AppState::new(data_dir.to_path_buf(), ValidationLimits::default())?);
    let app = router(state, ui_dir);
    let addr = SocketAddr::from(([0, 0, 0, 0], port));
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, app).await
}
