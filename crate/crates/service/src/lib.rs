//! REST facade over the re-annotation store, plus static hosting for the
//! annotator console.

use std::future::Future;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;
use tokio::net::TcpListener;
use tower_http::services::ServeDir;

use xma_core::export::{estimate_annotation_hours, CostParams};
use xma_core::ingest::Dataset;
use xma_core::item::{MediaKind, VisionSource};
use xma_core::labels::{BinaryLabel, TaskDef};
use xma_core::reannotate::{AnnotationEvent, LeasedTask, ReannotateError, StateCounts, Store, VoteState};
use xma_core::visionprep::sample_single_frame;

pub const ANNOTATOR_HEADER: &str = "x-annotator-id";

/// Queue progress as served to the console.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProgressSnapshot {
    pub seq: u64,
    pub total: usize,
    pub agreed: usize,
    pub queued: usize,
    pub leased: usize,
    pub resolved: usize,
    pub failed: usize,
    pub model_failures: usize,
    pub disagreement_rate: f64,
    /// Hours to annotate what is still queued.
    pub estimated_remaining_hours: f64,
    pub annotations: usize,
    pub annotation_hours: f64,
}

impl ProgressSnapshot {
    pub fn new(seq: u64, c: &StateCounts, kind: MediaKind, cost: &CostParams, annotations: usize, hours: f64) -> Self {
        ProgressSnapshot {
            seq,
            total: c.total,
            agreed: c.agreed,
            queued: c.queued,
            leased: c.leased,
            resolved: c.resolved,
            failed: c.failed,
            model_failures: c.model_failures,
            disagreement_rate: c.disagreement_rate(),
            estimated_remaining_hours: estimate_annotation_hours(kind, c.queued, cost),
            annotations,
            annotation_hours: hours,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub addr: SocketAddr,
    pub lease_ttl_s: f64,
    pub static_assets_dir: Option<PathBuf>,
    pub reports_dir: Option<PathBuf>,
    pub cost: CostParams,
    /// How often leases past their deadline are returned to the queue.
    pub reap_interval: Duration,
}

impl Default for ServeConfig {
    fn default() -> Self {
        ServeConfig {
            addr: SocketAddr::from(([127, 0, 0, 1], 8080)),
            lease_ttl_s: 600.0,
            static_assets_dir: None,
            reports_dir: None,
            cost: CostParams::default(),
            reap_interval: Duration::from_secs(5),
        }
    }
}

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        #[source]
        source: std::io::Error,
    },
    #[error("server: {0}")]
    Server(#[source] std::io::Error),
    #[error(transparent)]
    Store(#[from] ReannotateError),
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// Shared handler state.
pub struct AppState {
    pub store: Arc<Store>,
    pub dataset: Dataset,
    pub task: TaskDef,
    pub cfg: ServeConfig,
}

type Shared = Arc<AppState>;

struct ApiError(StatusCode, serde_json::Value);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(self.1)).into_response()
    }
}

fn err(status: StatusCode, message: impl Into<String>) -> ApiError {
    ApiError(status, json!({ "error": message.into() }))
}

impl From<ReannotateError> for ApiError {
    fn from(e: ReannotateError) -> Self {
        let status = match &e {
            ReannotateError::UnknownLease | ReannotateError::UnknownItem(_) => StatusCode::NOT_FOUND,
            ReannotateError::LeaseExpired { .. } => StatusCode::GONE,
            ReannotateError::Duplicate { outcome, .. } => {
                return ApiError(
                    StatusCode::CONFLICT,
                    json!({ "error": e.to_string(), "outcome": outcome }),
                )
            }
            ReannotateError::LeaseMismatch { .. } | ReannotateError::Invalid(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        err(status, e.to_string())
    }
}

/// Run a store mutation off the async workers; appends may fsync.
async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ReannotateError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| err(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
        .map_err(ApiError::from)
}

async fn health(State(s): State<Shared>) -> Json<serde_json::Value> {
    Json(json!({ "status": "ok", "seq": s.store.seq() }))
}

#[derive(Deserialize)]
struct LeaseQuery {
    ttl_s: Option<f64>,
}

async fn lease(State(s): State<Shared>, headers: HeaderMap, Query(q): Query<LeaseQuery>) -> Result<Response, ApiError> {
    let annotator = headers
        .get(ANNOTATOR_HEADER)
        .and_then(|v| v.to_str().ok())
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .ok_or_else(|| err(StatusCode::BAD_REQUEST, "missing X-Annotator-Id header"))?
        .to_string();
    let ttl = q.ttl_s.unwrap_or(s.cfg.lease_ttl_s);
    if !(ttl.is_finite() && ttl > 0.0) {
        return Err(err(StatusCode::BAD_REQUEST, "ttl_s must be a positive number"));
    }
    let store = s.store.clone();
    match blocking(move || store.lease_next(&annotator, ttl)).await? {
        None => Ok(StatusCode::NO_CONTENT.into_response()),
        Some(l) => Ok(Json(LeasedTask::new(&l, &s.dataset, &s.task)?).into_response()),
    }
}

#[derive(Deserialize)]
struct AnnotationBody {
    item_id: String,
    lease_token: String,
    label: BinaryLabel,
    elapsed_s: f64,
}

async fn annotate(
    State(s): State<Shared>,
    headers: HeaderMap,
    body: Result<Json<AnnotationBody>, axum::extract::rejection::JsonRejection>,
) -> Result<Response, ApiError> {
    let Json(body) = body.map_err(|e| err(StatusCode::BAD_REQUEST, e.body_text()))?;
    let annotator_id = headers
        .get(ANNOTATOR_HEADER)
        .and_then(|v| v.to_str().ok())
        .unwrap_or_default()
        .to_string();
    let event = AnnotationEvent {
        item_id: body.item_id,
        annotator_id,
        label: body.label,
        elapsed_s: body.elapsed_s,
        lease_token: body.lease_token,
    };
    let store = s.store.clone();
    let outcome = blocking(move || store.submit(&event)).await?;
    Ok(Json(outcome).into_response())
}

/// Item payload without any vote attribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemView {
    pub item_id: String,
    pub kind: MediaKind,
    pub title: Option<String>,
    pub text: String,
    pub media_url: String,
    pub state: Option<VoteState>,
}

async fn item(State(s): State<Shared>, UrlPath(id): UrlPath<String>) -> Result<Json<ItemView>, ApiError> {
    let item = s
        .dataset
        .get(&id)
        .ok_or_else(|| err(StatusCode::NOT_FOUND, format!("unknown item {id:?}")))?;
    Ok(Json(ItemView {
        item_id: item.item_id.clone(),
        kind: item.kind,
        title: item.title.clone(),
        text: item.text.clone(),
        media_url: format!("/media/{}", item.item_id),
        state: s.store.record(&id).map(|r| r.state),
    }))
}

fn content_type(path: &Path) -> &'static str {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .as_deref()
    {
        Some("png") => "image/png",
        Some("jpg" | "jpeg") => "image/jpeg",
        Some("gif") => "image/gif",
        Some("webp") => "image/webp",
        Some("json") => "application/json",
        Some("jsonl" | "mft") => "application/x-ndjson",
        Some("html") => "text/html; charset=utf-8",
        Some("mp4") => "video/mp4",
        _ => "text/plain; charset=utf-8",
    }
}

async fn file_response(path: &Path) -> Result<Response, ApiError> {
    let bytes = tokio::fs::read(path)
        .await
        .map_err(|e| err(StatusCode::NOT_FOUND, format!("{}: {e}", path.display())))?;
    Ok(([(header::CONTENT_TYPE, content_type(path))], Body::from(bytes)).into_response())
}

async fn media(State(s): State<Shared>, UrlPath(id): UrlPath<String>) -> Result<Response, ApiError> {
    let item = s
        .dataset
        .get(&id)
        .ok_or_else(|| err(StatusCode::NOT_FOUND, format!("unknown item {id:?}")))?;
    let path = match &item.vision {
        VisionSource::Image(p) | VisionSource::VideoFile { path: p, .. } => s.dataset.resolve(p),
        VisionSource::FrameDir { .. } => sample_single_frame(item, 0)
            .and_then(|f| f.resolve_file(&s.dataset.root))
            .map_err(|e| err(StatusCode::NOT_FOUND, e.to_string()))?,
    };
    file_response(&path).await
}

fn safe_name(name: &str) -> bool {
    !name.is_empty()
        && !name.starts_with('.')
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

async fn report(State(s): State<Shared>, UrlPath(name): UrlPath<String>) -> Result<Response, ApiError> {
    let dir = s
        .cfg
        .reports_dir
        .as_ref()
        .ok_or_else(|| err(StatusCode::NOT_FOUND, "no reports directory configured"))?;
    if !safe_name(&name) {
        return Err(err(StatusCode::BAD_REQUEST, format!("bad report name {name:?}")));
    }
    let exact = dir.join(&name);
    let path = if exact.is_file() {
        exact
    } else {
        ["json", "jsonl", "html", "txt"]
            .iter()
            .map(|ext| dir.join(format!("{name}.{ext}")))
            .find(|p| p.is_file())
            .ok_or_else(|| err(StatusCode::NOT_FOUND, format!("no report named {name:?}")))?
    };
    file_response(&path).await
}

async fn progress(State(s): State<Shared>) -> Json<ProgressSnapshot> {
    Json(progress_of(&s))
}

pub fn progress_of(s: &AppState) -> ProgressSnapshot {
    let (seq, counts) = (s.store.seq(), s.store.counts());
    let ledger = s.store.cost_ledger();
    ProgressSnapshot::new(
        seq,
        &counts,
        s.dataset.kind,
        &s.cfg.cost,
        ledger.annotations,
        ledger.total_hours(),
    )
}

const PLACEHOLDER: &str = "<!DOCTYPE html>\n<html>\n<head><meta charset=\"utf-8\"><title>xma</title></head>\n<body>\n<p>The annotator console is not installed. Point --static at its build directory. The API lives under /api/v1/.</p>\n</body>\n</html>\n";

async fn placeholder() -> Html<&'static str> {
    Html(PLACEHOLDER)
}

pub fn router(state: Arc<AppState>) -> Router {
    let api = Router::new()
        .route("/api/v1/health", get(health))
        .route("/api/v1/queue/lease", get(lease))
        .route("/api/v1/annotations", post(annotate))
        .route("/api/v1/items/{id}", get(item))
        .route("/api/v1/progress", get(progress))
        .route("/api/v1/reports/{name}", get(report))
        .route("/media/{id}", get(media));
    let api = match &state.cfg.static_assets_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.route("/", get(placeholder)),
    };
    api.with_state(state)
}

impl AppState {
    pub fn new(store: Store, dataset: Dataset, task: TaskDef, cfg: ServeConfig) -> Result<Self, ServiceError> {
        if !(cfg.lease_ttl_s.is_finite() && cfg.lease_ttl_s > 0.0) {
            return Err(ServiceError::Config("lease_ttl_s must be positive".into()));
        }
        if cfg.reap_interval.is_zero() {
            return Err(ServiceError::Config("reap interval must be positive".into()));
        }
        if let Some(dir) = &cfg.static_assets_dir {
            if !dir.is_dir() {
                return Err(ServiceError::Config(format!("{} is not a directory", dir.display())));
            }
        }
        cfg.cost.validate().map_err(|e| ServiceError::Config(e.to_string()))?;
        Ok(AppState {
            store: Arc::new(store),
            dataset,
            task,
            cfg,
        })
    }
}

/// Serve on an already bound listener until `shutdown` resolves, then write
/// a snapshot.
pub async fn serve_on(
    listener: TcpListener,
    state: Arc<AppState>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> Result<(), ServiceError> {
    let reaper = {
        let store = state.store.clone();
        let every = state.cfg.reap_interval;
        tokio::spawn(async move {
            let mut tick = tokio::time::interval(every);
            tick.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
            loop {
                tick.tick().await;
                let store = store.clone();
                if let Ok(Err(e)) = tokio::task::spawn_blocking(move || store.expire_leases()).await {
                    eprintln!("lease reaper: {e}");
                }
            }
        })
    };
    let result = axum::serve(listener, router(state.clone()))
        .with_graceful_shutdown(shutdown)
        .await
        .map_err(ServiceError::Server);
    reaper.abort();
    let store = state.store.clone();
    tokio::task::spawn_blocking(move || store.write_snapshot())
        .await
        .map_err(|e| ServiceError::Server(std::io::Error::other(e)))??;
    result
}

/// Bind `cfg.addr` and serve until Ctrl-C or SIGTERM.
pub async fn serve(state: Arc<AppState>) -> Result<(), ServiceError> {
    let addr = state.cfg.addr;
    let listener = TcpListener::bind(addr)
        .await
        .map_err(|source| ServiceError::Bind { addr, source })?;
    let local = listener.local_addr().map_err(ServiceError::Server)?;
    eprintln!("listening on http://{local}");
    serve_on(listener, state, shutdown_signal()).await
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
}
