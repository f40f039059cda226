//! JSON-over-HTTP API for decoding and interactive editing sessions.

use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use axum::extract::{FromRequest, Path as UrlPath, Request, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use clap::Args;
use gbs_core::constraint::{ConstraintError, FilterSpec};
use gbs_core::engine::{DecodeError, DecodeParams, MaxLen};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tower_http::services::ServeDir;
use tower_http::trace::TraceLayer;

use crate::commands::{ModelArgs, ParamArgs};
use crate::model::{DecodeOutput, Model, ModelConfig, ServiceConfig};

#[derive(Args, Debug)]
pub struct ServeArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub params: ParamArgs,
    /// JSON file listing several models; replaces the single-model flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    /// Directory for session snapshots, reloaded at startup.
    #[arg(long)]
    pub state_dir: Option<PathBuf>,
    /// Files served outside `/v1`.
    #[arg(long, default_value = "static")]
    pub static_dir: PathBuf,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
    detail: Option<Value>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
            detail: None,
        }
    }

    fn not_found(id: &str) -> Self {
        Self::new(
            StatusCode::NOT_FOUND,
            "not_found",
            format!("no session `{id}`"),
        )
    }

    fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut err = json!({"code": self.code, "message": self.message});
        if let Some(d) = self.detail {
            err["detail"] = d;
        }
        (self.status, Json(json!({ "error": err }))).into_response()
    }
}

impl From<ConstraintError> for ApiError {
    fn from(e: ConstraintError) -> Self {
        let code = match e {
            ConstraintError::UnknownToken { .. } => "unknown_token",
            _ => "invalid_constraint",
        };
        Self::new(StatusCode::BAD_REQUEST, code, e.to_string())
    }
}

fn decode_error(model: &Model, e: DecodeError) -> ApiError {
    match e {
        DecodeError::InfeasibleConstraints { num_c, max_len } => {
            let mut err = ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "infeasible",
                e.to_string(),
            );
            err.detail = Some(json!({"constraint_tokens": num_c, "max_len": max_len}));
            err
        }
        DecodeError::NoFinishedHypothesis {
            max_len,
            ref best_partial,
            stats,
        } => {
            let mut err = ApiError::internal(e.to_string());
            err.code = "no_finished_hypothesis";
            err.detail = Some(json!({
                "max_len": max_len,
                "best_partial": best_partial.as_ref().map(|p| json!({
                    "tokens": model.vocab().decode(&p.tokens),
                    "score": p.score,
                    "covered": p.covered,
                })),
                "stats": stats,
            }));
            err
        }
        DecodeError::ZeroBeam => {
            ApiError::new(StatusCode::BAD_REQUEST, "bad_params", e.to_string())
        }
        DecodeError::Scorer(_) => {
            ApiError::new(StatusCode::BAD_REQUEST, "unknown_input", e.to_string())
        }
        _ => ApiError::internal(e.to_string()),
    }
}

/// JSON body whose parse failures use the API error shape.
pub struct ApiJson<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequest<S> for ApiJson<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, ApiError> {
        match Json::<T>::from_request(req, state).await {
            Ok(Json(v)) => Ok(Self(v)),
            Err(r) => Err(ApiError::new(
                StatusCode::BAD_REQUEST,
                "bad_request",
                r.body_text(),
            )),
        }
    }
}

/// Per-request overrides of the server's decode parameters.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsOverride {
    pub k: Option<usize>,
    pub max_len: Option<usize>,
    pub max_len_factor: Option<f64>,
    pub n_best: Option<usize>,
    pub length_normalize: Option<bool>,
}

impl ParamsOverride {
    fn apply(&self, base: &DecodeParams) -> DecodeParams {
        let mut p = base.clone();
        if let Some(k) = self.k {
            p.k = k;
        }
        if let Some(f) = self.max_len_factor {
            p.max_len = MaxLen::Factor(f);
        }
        if let Some(n) = self.max_len {
            p.max_len = MaxLen::Fixed(n);
        }
        if let Some(n) = self.n_best {
            p.n_best = n.max(1);
        }
        if let Some(l) = self.length_normalize {
            p.length_normalize = l;
        }
        p
    }
}

#[derive(Debug, Deserialize)]
pub struct DecodeRequest {
    pub model_id: String,
    pub source: String,
    #[serde(default)]
    pub constraints: Vec<Vec<String>>,
    #[serde(default)]
    pub filters: Vec<FilterSpec>,
    #[serde(default)]
    pub params: Option<ParamsOverride>,
}

#[derive(Debug, Deserialize)]
pub struct CreateSession {
    pub model_id: String,
    pub source: String,
    #[serde(default)]
    pub params: Option<ParamsOverride>,
}

#[derive(Debug, Deserialize)]
pub struct AddConstraint {
    pub tokens: Vec<String>,
    #[serde(default)]
    pub filters: Vec<FilterSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub tokens: Vec<String>,
    pub text: String,
    pub detokenized: String,
    pub score: f64,
    /// Number of constraints active for this decode.
    pub constraints: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub id: String,
    pub model_id: String,
    pub source: String,
    pub constraints: Vec<Vec<String>>,
    pub filters: Vec<FilterSpec>,
    pub history: Vec<HistoryEntry>,
    #[serde(default)]
    pub params: ParamsOverride,
    /// Seconds since the Unix epoch.
    pub created: u64,
    pub updated: u64,
}

type SessionSlot = Arc<tokio::sync::Mutex<SessionRecord>>;

pub struct AppState {
    models: BTreeMap<String, Arc<Model>>,
    params: DecodeParams,
    sessions: Mutex<HashMap<String, SessionSlot>>,
    next_id: AtomicU64,
    state_dir: Option<PathBuf>,
}

fn now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

impl AppState {
    pub fn new(
        models: Vec<Model>,
        params: DecodeParams,
        state_dir: Option<PathBuf>,
    ) -> Result<Self> {
        let mut sessions = HashMap::new();
        let mut next = 1;
        if let Some(dir) = &state_dir {
            std::fs::create_dir_all(dir)
                .with_context(|| format!("cannot create {}", dir.display()))?;
            for entry in std::fs::read_dir(dir)? {
                let path = entry?.path();
                if path.extension().is_none_or(|e| e != "json") {
                    continue;
                }
                let text = std::fs::read_to_string(&path)?;
                let rec: SessionRecord = serde_json::from_str(&text)
                    .with_context(|| format!("reading {}", path.display()))?;
                if let Some(n) = rec.id.strip_prefix('s').and_then(|n| n.parse::<u64>().ok()) {
                    next = next.max(n + 1);
                }
                sessions.insert(rec.id.clone(), Arc::new(tokio::sync::Mutex::new(rec)));
            }
        }
        Ok(Self {
            models: models
                .into_iter()
                .map(|m| (m.id.clone(), Arc::new(m)))
                .collect(),
            params,
            sessions: Mutex::new(sessions),
            next_id: AtomicU64::new(next),
            state_dir,
        })
    }

    fn model(&self, id: &str) -> Result<Arc<Model>, ApiError> {
        self.models.get(id).cloned().ok_or_else(|| {
            ApiError::new(
                StatusCode::BAD_REQUEST,
                "unknown_model",
                format!("no model `{id}`"),
            )
        })
    }

    fn slot(&self, id: &str) -> Result<SessionSlot, ApiError> {
        self.sessions
            .lock()
            .expect("session map poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(id))
    }

    fn persist(&self, rec: &SessionRecord) -> Result<(), ApiError> {
        let Some(dir) = &self.state_dir else {
            return Ok(());
        };
        let tmp = dir.join(format!(".{}.json.tmp", rec.id));
        let text =
            serde_json::to_string_pretty(rec).map_err(|e| ApiError::internal(e.to_string()))?;
        std::fs::write(&tmp, text)
            .and_then(|_| std::fs::rename(&tmp, dir.join(format!("{}.json", rec.id))))
            .map_err(|e| ApiError::internal(format!("saving session: {e}")))
    }

    fn forget(&self, id: &str) {
        if let Some(dir) = &self.state_dir {
            let _ = std::fs::remove_file(dir.join(format!("{id}.json")));
        }
    }
}

async fn run_decode(
    model: Arc<Model>,
    source: String,
    constraints: Vec<Vec<String>>,
    filters: Vec<FilterSpec>,
    params: DecodeParams,
) -> Result<DecodeOutput, ApiError> {
    let set = model.constraint_set(&constraints, &filters)?;
    tokio::task::spawn_blocking(move || {
        model
            .decode(&source, &set, &params)
            .map_err(|e| decode_error(&model, e))
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))?
}

fn entry(out: DecodeOutput, constraints: usize) -> HistoryEntry {
    HistoryEntry {
        tokens: out.tokens,
        text: out.text,
        detokenized: out.detokenized,
        score: out.score,
        constraints,
    }
}

async fn health(State(s): State<Arc<AppState>>) -> Json<Value> {
    Json(json!({"status": "ok", "models": s.models.keys().collect::<Vec<_>>()}))
}

async fn decode(
    State(s): State<Arc<AppState>>,
    ApiJson(req): ApiJson<DecodeRequest>,
) -> Result<Json<DecodeOutput>, ApiError> {
    let model = s.model(&req.model_id)?;
    let params = req.params.unwrap_or_default().apply(&s.params);
    Ok(Json(
        run_decode(model, req.source, req.constraints, req.filters, params).await?,
    ))
}

async fn create_session(
    State(s): State<Arc<AppState>>,
    ApiJson(req): ApiJson<CreateSession>,
) -> Result<(StatusCode, Json<SessionRecord>), ApiError> {
    let model = s.model(&req.model_id)?;
    let overrides = req.params.unwrap_or_default();
    let params = overrides.apply(&s.params);
    let out = run_decode(model, req.source.clone(), Vec::new(), Vec::new(), params).await?;
    let id = format!("s{:06}", s.next_id.fetch_add(1, Ordering::SeqCst));
    let t = now();
    let rec = SessionRecord {
        id: id.clone(),
        model_id: req.model_id,
        source: req.source,
        constraints: Vec::new(),
        filters: Vec::new(),
        history: vec![entry(out, 0)],
        params: overrides,
        created: t,
        updated: t,
    };
    s.persist(&rec)?;
    s.sessions
        .lock()
        .expect("session map poisoned")
        .insert(id, Arc::new(tokio::sync::Mutex::new(rec.clone())));
    Ok((StatusCode::CREATED, Json(rec)))
}

async fn get_session(
    State(s): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
) -> Result<Json<SessionRecord>, ApiError> {
    let slot = s.slot(&id)?;
    let rec = slot.lock().await;
    Ok(Json(rec.clone()))
}

async fn delete_session(
    State(s): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
) -> Result<StatusCode, ApiError> {
    let removed = s.sessions.lock().expect("session map poisoned").remove(&id);
    match removed {
        Some(_) => {
            s.forget(&id);
            Ok(StatusCode::NO_CONTENT)
        }
        None => Err(ApiError::not_found(&id)),
    }
}

async fn add_constraint(
    State(s): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    ApiJson(req): ApiJson<AddConstraint>,
) -> Result<Json<SessionRecord>, ApiError> {
    let slot = s.slot(&id)?;
    let mut rec = slot.try_lock_owned().map_err(|_| {
        ApiError::new(
            StatusCode::CONFLICT,
            "busy",
            format!("session `{id}` is already being updated"),
        )
    })?;
    let model = s.model(&rec.model_id)?;
    let mut constraints = rec.constraints.clone();
    constraints.push(req.tokens);
    let mut filters = rec.filters.clone();
    filters.extend(req.filters);
    let params = rec.params.apply(&s.params);
    let out = run_decode(
        model,
        rec.source.clone(),
        constraints.clone(),
        filters.clone(),
        params,
    )
    .await?;
    let n = constraints.len();
    rec.constraints = constraints;
    rec.filters = filters;
    rec.history.push(entry(out, n));
    rec.updated = now();
    s.persist(&rec)?;
    Ok(Json(rec.clone()))
}

pub fn router(state: Arc<AppState>, static_dir: &Path) -> Router {
    let api = Router::new()
        .route("/health", get(health))
        .route("/decode", post(decode))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session).delete(delete_session))
        .route("/sessions/{id}/constraints", post(add_constraint))
        .with_state(state);
    Router::new()
        .nest("/v1", api)
        .fallback_service(ServeDir::new(static_dir))
        .layer(TraceLayer::new_for_http())
}

pub fn load_models(args: &ServeArgs) -> Result<Vec<Model>> {
    let configs: Vec<ModelConfig> = match &args.config {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("cannot open {}", p.display()))?;
            let cfg: ServiceConfig =
                serde_json::from_str(&text).with_context(|| format!("reading {}", p.display()))?;
            cfg.models
        }
        None => vec![args.model.config()],
    };
    configs.iter().map(Model::load).collect()
}

pub fn serve_blocking(args: ServeArgs) -> Result<()> {
    let params = args.params.params()?;
    let models = load_models(&args)?;
    let state = Arc::new(AppState::new(models, params, args.state_dir.clone())?);
    let app = router(state, &args.static_dir);
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let addr: SocketAddr = format!("{}:{}", args.host, args.port)
            .parse()
            .with_context(|| format!("bad address {}:{}", args.host, args.port))?;
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .with_context(|| format!("cannot bind {addr}"))?;
        tracing::info!(%addr, "listening");
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}
