//! HTTP API backing the parameter explorer.
//!
//! | route | |
//! |---|---|
//! | `POST /api/estimate` | multipart `image` (PNG) + optional `params` (JSON) |
//! | `GET /api/illusion?spec=<json>&targetOnly=&srgb=` | stimulus PNG |
//! | `POST /api/illusion/process` | `{"spec": …, "params": …}` → shift report |
//! | `GET /api/algorithms` | estimator registry and parameter ranges |
//! | `GET /artifacts/{id}/{file}` | PNG/JSON results of earlier requests |
//!
//! Errors are JSON `{"error": "..."}` with status 400, 404, 413 or 500.

use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::hash::{Hash, Hasher};
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::body::Bytes;
use axum::extract::multipart::MultipartRejection;
use axum::extract::rejection::QueryRejection;
use axum::extract::{DefaultBodyLimit, Multipart, Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use illumap::image::png_dimensions;
use illumap::{Error, IllusionSpec};
use serde::Deserialize;
use serde_json::json;
use tower_http::services::ServeDir;

use crate::ops::{self, EstimateOptions};

pub const DEFAULT_MAX_SIDE: usize = 4096;
const BODY_LIMIT: usize = 256 * 1024 * 1024;

#[derive(Clone, Debug)]
pub struct ServeConfig {
    pub max_side: usize,
    pub artifact_ttl: Duration,
    pub static_dir: Option<PathBuf>,
}

impl Default for ServeConfig {
    fn default() -> Self {
        Self {
            max_side: DEFAULT_MAX_SIDE,
            artifact_ttl: Duration::from_secs(600),
            static_dir: None,
        }
    }
}

/// Result files under a private temporary directory, one subdirectory per
/// request. Ids are content hashes of the request, so repeated requests share
/// one directory. Publishing and sweeping hold the same lock, which keeps a
/// directory from being deleted between its publication and registration.
#[derive(Debug)]
pub struct ArtifactStore {
    root: tempfile::TempDir,
    ttl: Duration,
    published: Mutex<HashMap<String, Instant>>,
    staging: AtomicU64,
}

fn valid_name(s: &str) -> bool {
    !s.is_empty()
        && !s.starts_with('.')
        && s.chars()
            .all(|c| c.is_ascii_alphanumeric() || "._-".contains(c))
}

impl ArtifactStore {
    pub fn new(ttl: Duration) -> std::io::Result<Self> {
        Ok(Self {
            root: tempfile::Builder::new()
                .prefix("illumap-artifacts")
                .tempdir()?,
            ttl,
            published: Mutex::new(HashMap::new()),
            staging: AtomicU64::new(0),
        })
    }

    pub fn root(&self) -> &std::path::Path {
        self.root.path()
    }

    pub fn publish(&self, id: &str, files: &[(&str, &[u8])]) -> std::io::Result<()> {
        let stage = self.root.path().join(format!(
            ".stage-{}",
            self.staging.fetch_add(1, Ordering::Relaxed)
        ));
        std::fs::create_dir(&stage)?;
        for (name, bytes) in files {
            std::fs::write(stage.join(name), bytes)?;
        }
        let target = self.root.path().join(id);
        let mut published = self.published.lock().expect("artifact lock");
        if published.contains_key(id) {
            std::fs::remove_dir_all(&stage)?;
        } else {
            if target.exists() {
                std::fs::remove_dir_all(&target)?;
            }
            std::fs::rename(&stage, &target)?;
        }
        published.insert(id.to_string(), Instant::now());
        Ok(())
    }

    pub fn read(&self, id: &str, file: &str) -> Option<Vec<u8>> {
        if !valid_name(id) || !valid_name(file) {
            return None;
        }
        let published = self.published.lock().expect("artifact lock");
        let created = published.get(id)?;
        if created.elapsed() > self.ttl {
            return None;
        }
        std::fs::read(self.root.path().join(id).join(file)).ok()
    }

    /// Remove expired directories; returns how many were removed.
    pub fn sweep(&self) -> usize {
        let mut published = self.published.lock().expect("artifact lock");
        let expired: Vec<String> = published
            .iter()
            .filter(|(_, t)| t.elapsed() > self.ttl)
            .map(|(id, _)| id.clone())
            .collect();
        for id in &expired {
            published.remove(id);
            let _ = std::fs::remove_dir_all(self.root.path().join(id));
        }
        expired.len()
    }
}

#[derive(Clone)]
struct AppState {
    config: Arc<ServeConfig>,
    store: Arc<ArtifactStore>,
}

struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        Self {
            status: StatusCode::BAD_REQUEST,
            message: message.into(),
        }
    }

    fn internal(message: impl Into<String>) -> Self {
        Self {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            message: message.into(),
        }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        match e {
            Error::Io { .. } | Error::Json(_) | Error::Csv(_) => ApiError::internal(e.to_string()),
            _ => ApiError::bad_request(e.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

type ApiResult<T = Response> = std::result::Result<T, ApiError>;

fn content_id(parts: &[&[u8]]) -> String {
    let mut h = DefaultHasher::new();
    for p in parts {
        p.hash(&mut h);
    }
    format!("{:016x}", h.finish())
}

fn artifact_url(id: &str, file: &str) -> String {
    format!("/artifacts/{id}/{file}")
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> illumap::Result<T> + Send + 'static,
) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
        .map_err(ApiError::from)
}

fn parse_options(text: Option<&str>) -> ApiResult<EstimateOptions> {
    let opts: EstimateOptions = match text {
        None => EstimateOptions::default(),
        Some(t) if t.trim().is_empty() => EstimateOptions::default(),
        Some(t) => serde_json::from_str(t)
            .map_err(|e| ApiError::bad_request(format!("invalid params: {e}")))?,
    };
    opts.validate()?;
    Ok(opts)
}

async fn estimate(
    State(state): State<AppState>,
    multipart: Result<Multipart, MultipartRejection>,
) -> ApiResult {
    let mut multipart = multipart.map_err(|e| ApiError::bad_request(e.body_text()))?;
    let mut image = None;
    let mut params = None;
    while let Some(field) = multipart
        .next_field()
        .await
        .map_err(|e| ApiError::bad_request(e.body_text()))?
    {
        match field.name() {
            Some("image") => {
                image = Some(
                    field
                        .bytes()
                        .await
                        .map_err(|e| ApiError::bad_request(e.body_text()))?,
                )
            }
            Some("params") => {
                params = Some(
                    field
                        .text()
                        .await
                        .map_err(|e| ApiError::bad_request(e.body_text()))?,
                )
            }
            _ => {}
        }
    }
    let image = image.ok_or_else(|| ApiError::bad_request("missing multipart field `image`"))?;
    let opts = parse_options(params.as_deref())?;
    let (w, h) = png_dimensions(&image)?;
    let max = state.config.max_side;
    if w > max || h > max {
        return Err(ApiError {
            status: StatusCode::PAYLOAD_TOO_LARGE,
            message: format!("image is {w}x{h}; the limit is {max}x{max}"),
        });
    }

    let opts_json = serde_json::to_vec(&opts).expect("serializable");
    let id = content_id(&[&image, &opts_json]);
    let out = blocking(move || ops::estimate_png(&image, &opts)).await?;
    let meta_json = serde_json::to_vec_pretty(&out.meta).expect("serializable");
    let mut files: Vec<(&str, &[u8])> = vec![
        ("meta.json", &meta_json),
        ("corrected.png", &out.corrected_png),
    ];
    if let Some(field) = &out.field_png {
        files.push(("field.png", field));
    }
    state
        .store
        .publish(&id, &files)
        .map_err(|e| ApiError::internal(format!("cannot store artifacts: {e}")))?;

    let mut body = serde_json::to_value(&out.meta).expect("serializable");
    body["artifacts"] = json!({
        "meta": artifact_url(&id, "meta.json"),
        "corrected": artifact_url(&id, "corrected.png"),
        "field": out.field_png.as_ref().map(|_| artifact_url(&id, "field.png")),
    });
    Ok(Json(body).into_response())
}

fn flag(query: &HashMap<String, String>, key: &str) -> ApiResult<bool> {
    match query.get(key).map(String::as_str) {
        None | Some("false" | "0" | "") => Ok(false),
        Some("true" | "1") => Ok(true),
        Some(other) => Err(ApiError::bad_request(format!(
            "`{key}` must be true or false, got `{other}`"
        ))),
    }
}

fn png_response(bytes: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "image/png")], bytes).into_response()
}

async fn illusion(query: Result<Query<HashMap<String, String>>, QueryRejection>) -> ApiResult {
    let Query(query) = query.map_err(|e| ApiError::bad_request(e.body_text()))?;
    let spec = match query.get("spec") {
        Some(text) => ops::parse_spec(text)?,
        None => IllusionSpec::default(),
    };
    let target_only = flag(&query, "targetOnly")?;
    let srgb = flag(&query, "srgb")?;
    let png = blocking(move || ops::render_illusion(&spec, target_only, srgb)).await?;
    Ok(png_response(png))
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct ProcessRequest {
    #[serde(default)]
    spec: IllusionSpec,
    #[serde(default)]
    params: EstimateOptions,
}

async fn illusion_process(State(state): State<AppState>, body: Bytes) -> ApiResult {
    let req: ProcessRequest = if body.is_empty() {
        ProcessRequest {
            spec: IllusionSpec::default(),
            params: EstimateOptions::default(),
        }
    } else {
        serde_json::from_slice(&body)
            .map_err(|e| ApiError::bad_request(format!("invalid request: {e}")))?
    };
    req.spec.validate()?;
    let opts = EstimateOptions {
        mode: illumap::Mode::Pixelwise,
        ..req.params
    };
    opts.validate()?;
    let spec = req.spec;
    let id = content_id(&[
        b"illusion",
        &serde_json::to_vec(&spec).expect("serializable"),
        &serde_json::to_vec(&opts).expect("serializable"),
    ]);
    let out = blocking(move || ops::run_illusion(&spec, &opts)).await?;
    let report = serde_json::to_vec_pretty(&out.shift).expect("serializable");
    state
        .store
        .publish(
            &id,
            &[
                ("stimulus.png", &out.stimulus_png),
                ("estimates.png", &out.estimates_png),
                ("corrected.png", &out.corrected_png),
                ("shift.json", &report),
            ],
        )
        .map_err(|e| ApiError::internal(format!("cannot store artifacts: {e}")))?;
    Ok(Json(json!({
        "shift": out.shift,
        "artifacts": {
            "stimulus": artifact_url(&id, "stimulus.png"),
            "estimates": artifact_url(&id, "estimates.png"),
            "corrected": artifact_url(&id, "corrected.png"),
            "report": artifact_url(&id, "shift.json"),
        }
    }))
    .into_response())
}

async fn algorithms() -> Json<serde_json::Value> {
    Json(ops::algorithms_listing())
}

async fn artifact(
    State(state): State<AppState>,
    Path((id, file)): Path<(String, String)>,
) -> ApiResult {
    let bytes = state.store.read(&id, &file).ok_or_else(|| ApiError {
        status: StatusCode::NOT_FOUND,
        message: format!("no artifact {id}/{file}"),
    })?;
    let kind = if file.ends_with(".png") {
        "image/png"
    } else {
        "application/json"
    };
    Ok(([(header::CONTENT_TYPE, kind)], bytes).into_response())
}

/// Build the application. The store is returned so callers can sweep it.
pub fn router(config: ServeConfig) -> std::io::Result<(Router, Arc<ArtifactStore>)> {
    let store = Arc::new(ArtifactStore::new(config.artifact_ttl)?);
    let static_dir = config.static_dir.clone();
    let state = AppState {
        config: Arc::new(config),
        store: store.clone(),
    };
    let mut app = Router::new()
        .route("/api/estimate", post(estimate))
        .route("/api/illusion", get(illusion))
        .route("/api/illusion/process", post(illusion_process))
        .route("/api/algorithms", get(algorithms))
        .route("/artifacts/{id}/{file}", get(artifact))
        .layer(DefaultBodyLimit::max(BODY_LIMIT))
        .with_state(state);
    if let Some(dir) = static_dir {
        app = app.fallback_service(ServeDir::new(dir));
    }
    Ok((app, store))
}

/// Serve until Ctrl-C, sweeping expired artifacts in the background.
pub async fn serve(listener: tokio::net::TcpListener, config: ServeConfig) -> std::io::Result<()> {
    let period = (config.artifact_ttl / 4).max(Duration::from_secs(1));
    let (app, store) = router(config)?;
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(period);
        loop {
            tick.tick().await;
            let store = store.clone();
            let _ = tokio::task::spawn_blocking(move || store.sweep()).await;
        }
    });
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
