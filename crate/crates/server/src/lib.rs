//! HTTP/JSON service over the classification engine.
//!
//! | Method | Path                 | Body                  | Response               |
//! |--------|----------------------|-----------------------|------------------------|
//! | GET    | `/health`            |                       | `Health`               |
//! | GET    | `/v1/configs`        |                       | `[ConfigSummary]`      |
//! | GET    | `/v1/configs/{id}`   |                       | `LabelConfig`          |
//! | POST   | `/v1/classify`       | `ClassifyRequest`     | `ClassifyResponse`     |
//! | POST   | `/v1/experiments`    | `ExperimentRequest`   | `ExperimentResponse`   |
//! | POST   | `/v1/labelgen`       | `LabelgenRequest`     | `LabelgenResponse`     |
//! | POST   | `/v1/irr`            | `IrrRequest`          | `IrrResponse`          |
//! | POST   | `/v1/compare`        | `CompareRequest`      | `CompareResponse`      |
//!
//! Errors are `{"kind": "usage"|"data"|"backend", "message": ...}` with
//! status 400, 422 and 502 respectively.

use std::io;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::SystemTime;

use axum::extract::rejection::JsonRejection;
use axum::extract::{FromRequest, Path as UrlPath, Request, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use dashmap::DashMap;
use tokio::net::TcpListener;
use tokio::task::JoinHandle;

use zslreq_core::agreement::{aggregate, breakdown, fleiss_kappa, interpret_kappa, krippendorff_alpha, load_tags};
use zslreq_core::agreement::{AgreementBreakdown, AnnotationTable, Level, Statistic};
use zslreq_core::api::*;
use zslreq_core::classifier::{predict_single, predict_topk, rank_labels};
use zslreq_core::embedding::{
    load_lexicon, CachedEmbedder, Embedder, EmbedderKind, EmbedderSpec, EmbeddingCache, Lexicon, RemoteEmbedder,
    StaticEmbedder, DEFAULT_BATCH_SIZE,
};
use zslreq_core::experiment::{compare_runs, embed_labels, run_task};
use zslreq_core::labelgen::nearest_terms;
use zslreq_core::labelspace::{builtin_config, builtin_configs, LabelConfig};
use zslreq_core::metrics::render_report;
use zslreq_core::ErrorKind;

/// Environment variable naming the directory of the persistent embedding
/// cache.
pub const CACHE_DIR_ENV: &str = "ZSLREQ_CACHE_DIR";
pub const CACHE_FILE: &str = "embeddings.jsonl";

type LexiconKey = (PathBuf, Option<SystemTime>);

/// Shared service state.
#[derive(Clone, Default)]
pub struct AppState {
    inner: Arc<Inner>,
}

#[derive(Default)]
struct Inner {
    cache: Arc<EmbeddingCache>,
    cache_path: Option<PathBuf>,
    save_lock: Mutex<()>,
    lexicons: DashMap<LexiconKey, Arc<Lexicon>>,
}

impl AppState {
    /// State with an in-memory embedding cache only.
    pub fn new() -> Self {
        Self::default()
    }

    /// State whose cache is loaded from and saved to `<dir>/embeddings.jsonl`.
    pub fn with_cache_dir(dir: impl AsRef<Path>) -> Result<Self, ApiError> {
        let path = dir.as_ref().join(CACHE_FILE);
        let cache = EmbeddingCache::load(&path)?;
        Ok(Self {
            inner: Arc::new(Inner { cache: Arc::new(cache), cache_path: Some(path), ..Inner::default() }),
        })
    }

    /// Uses [`CACHE_DIR_ENV`] when it is set.
    pub fn from_env() -> Result<Self, ApiError> {
        match std::env::var_os(CACHE_DIR_ENV) {
            Some(dir) if !dir.is_empty() => Self::with_cache_dir(PathBuf::from(dir)),
            _ => Ok(Self::new()),
        }
    }

    pub fn cache(&self) -> &Arc<EmbeddingCache> {
        &self.inner.cache
    }

    fn lexicon(&self, path: &Path) -> Result<Arc<Lexicon>, ApiError> {
        let modified = std::fs::metadata(path).and_then(|m| m.modified()).ok();
        let key = (path.to_path_buf(), modified);
        if let Some(lex) = self.inner.lexicons.get(&key) {
            return Ok(lex.clone());
        }
        let lex = Arc::new(load_lexicon(path)?);
        self.inner.lexicons.retain(|k, _| k.0 != path);
        self.inner.lexicons.insert(key, lex.clone());
        Ok(lex)
    }

    /// Static embedders read the lexicon directly; remote embedders go
    /// through the shared cache.
    fn embedder(&self, spec: &EmbedderSpec, batch_size: usize) -> Result<Arc<dyn Embedder>, ApiError> {
        Ok(match spec.kind {
            EmbedderKind::StaticLexicon => {
                let lexicon = self.lexicon(Path::new(&spec.source))?;
                Arc::new(StaticEmbedder::new(lexicon, spec.identifier()))
            }
            EmbedderKind::Remote => {
                let remote = Arc::new(RemoteEmbedder::new(spec.clone()).with_batch_size(batch_size));
                Arc::new(CachedEmbedder::new(remote, self.inner.cache.clone()))
            }
        })
    }

    fn persist_cache(&self, spec: &EmbedderSpec) -> Result<(), ApiError> {
        if spec.kind != EmbedderKind::Remote {
            return Ok(());
        }
        if let Some(path) = &self.inner.cache_path {
            let _guard = self.inner.save_lock.lock().unwrap_or_else(|e| e.into_inner());
            if let Some(dir) = path.parent() {
                std::fs::create_dir_all(dir).map_err(|e| ApiError::new(ErrorKind::Data, e.to_string()))?;
            }
            self.inner.cache.save(path)?;
        }
        Ok(())
    }
}

/// An [`ApiError`] as an HTTP response.
#[derive(Debug)]
pub struct ServerError(pub ApiError);

impl<E: Into<ApiError>> From<E> for ServerError {
    fn from(e: E) -> Self {
        Self(e.into())
    }
}

pub fn status_for(kind: ErrorKind) -> StatusCode {
    match kind {
        ErrorKind::Usage => StatusCode::BAD_REQUEST,
        ErrorKind::Data => StatusCode::UNPROCESSABLE_ENTITY,
        ErrorKind::Backend => StatusCode::BAD_GATEWAY,
    }
}

impl IntoResponse for ServerError {
    fn into_response(self) -> Response {
        if self.0.kind == ErrorKind::Backend {
            tracing::warn!(message = %self.0.message, "backend error");
        }
        (status_for(self.0.kind), Json(self.0)).into_response()
    }
}

/// JSON body whose rejections use the service error format.
pub struct ApiJson<T>(pub T);

impl<S, T> FromRequest<S> for ApiJson<T>
where
    Json<T>: FromRequest<S, Rejection = JsonRejection>,
    S: Send + Sync,
{
    type Rejection = ServerError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        match Json::<T>::from_request(req, state).await {
            Ok(Json(v)) => Ok(Self(v)),
            Err(rejection) => Err(ServerError(ApiError::usage(rejection.body_text()))),
        }
    }
}

type ApiResult<T> = Result<Json<T>, ServerError>;

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/v1/configs", get(list_configs))
        .route("/v1/configs/{id}", get(get_config))
        .route("/v1/classify", post(classify))
        .route("/v1/experiments", post(experiments))
        .route("/v1/labelgen", post(labelgen))
        .route("/v1/irr", post(irr))
        .route("/v1/compare", post(compare))
        .with_state(state)
}

async fn health() -> Json<Health> {
    Json(Health { status: "ok".into(), version: env!("CARGO_PKG_VERSION").into() })
}

async fn list_configs() -> Json<Vec<ConfigSummary>> {
    Json(builtin_configs().into_iter().map(ConfigSummary::from).collect())
}

async fn get_config(UrlPath(id): UrlPath<String>) -> ApiResult<LabelConfig> {
    Ok(Json(builtin_config(&id)?))
}

async fn classify(State(state): State<AppState>, ApiJson(req): ApiJson<ClassifyRequest>) -> ApiResult<ClassifyResponse> {
    if req.texts.is_empty() {
        return Err(ServerError(ApiError::usage("no texts to classify")));
    }
    let config = req.config.load()?;
    let embedder = state.embedder(&req.backend, DEFAULT_BATCH_SIZE)?;
    let labels = embed_labels(&config, embedder.as_ref()).await?;
    let vectors = embedder.embed_batch(&req.texts).await;
    state.persist_cache(&req.backend)?;

    let mut results = Vec::with_capacity(vectors.len());
    for v in vectors {
        let ranking = rank_labels(&v?, labels.iter().map(|(c, v)| (c, v)))?;
        let predicted = match req.k {
            Some(k) => predict_topk(&ranking, k)?,
            None => vec![predict_single(&ranking)?],
        };
        results.push(Classification { predicted, ranking });
    }
    Ok(Json(ClassifyResponse { config: config.id, results }))
}

async fn experiments(
    State(state): State<AppState>,
    ApiJson(req): ApiJson<ExperimentRequest>,
) -> ApiResult<ExperimentResponse> {
    let (task, config) = req.spec.prepare()?;
    let embedder = state.embedder(&req.spec.backend, req.spec.batch_size)?;
    let outcome = run_task(&task, &config, embedder.as_ref()).await;
    state.persist_cache(&req.spec.backend)?;
    let outcome = outcome?;
    let rendered = render_report(&outcome.report, req.format);
    Ok(Json(ExperimentResponse { report: outcome.report, rendered, log: outcome.log }))
}

async fn labelgen(State(state): State<AppState>, ApiJson(req): ApiJson<LabelgenRequest>) -> ApiResult<LabelgenResponse> {
    let lexicon = state.lexicon(&req.lexicon)?;
    Ok(Json(LabelgenResponse { suggestions: nearest_terms(&lexicon, &req.term, req.top)? }))
}

fn macro_breakdown(table: &AnnotationTable, level: Level) -> Result<AgreementBreakdown, ApiError> {
    let parts = match level {
        Level::Micro => vec![breakdown(table)?],
        Level::Macro => table
            .split_by_group()
            .iter()
            .map(|(_, t)| breakdown(t))
            .collect::<Result<Vec<_>, _>>()?,
    };
    let n = parts.len() as f64;
    Ok(AgreementBreakdown {
        perfect: parts.iter().map(|b| b.perfect).sum::<f64>() / n,
        partial: parts.iter().map(|b| b.partial).sum::<f64>() / n,
        disagreement: parts.iter().map(|b| b.disagreement).sum::<f64>() / n,
    })
}

async fn irr(ApiJson(req): ApiJson<IrrRequest>) -> ApiResult<IrrResponse> {
    let table = load_tags(&req.tags)?;
    let mut resp = IrrResponse {
        stat: req.stat,
        level: req.level,
        items: table.items().len(),
        annotators: table.annotators().len(),
        value: None,
        band: None,
        breakdown: None,
    };
    match req.stat {
        Statistic::Breakdown => resp.breakdown = Some(macro_breakdown(&table, req.level)?),
        Statistic::Kappa | Statistic::Alpha => {
            let stat = if req.stat == Statistic::Kappa { fleiss_kappa } else { krippendorff_alpha };
            let value = aggregate(&table, req.level, stat)?;
            resp.band = interpret_kappa(value).ok().map(|b| b.label().to_owned());
            resp.value = Some(value);
        }
    }
    Ok(Json(resp))
}

async fn compare(ApiJson(req): ApiJson<CompareRequest>) -> ApiResult<CompareResponse> {
    if req.reports.is_empty() {
        return Err(ServerError(ApiError::usage("at least one report is required")));
    }
    let pairs: Vec<_> = req.reports.into_iter().map(|r| (r.label, r.report)).collect();
    Ok(Json(CompareResponse { table: compare_runs(&pairs) }))
}

/// Serves on an already-bound listener until `shutdown` resolves.
pub async fn serve(
    listener: TcpListener,
    state: AppState,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> io::Result<()> {
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await
}

/// Starts the service on an ephemeral loopback port in the background.
pub async fn spawn_local(state: AppState) -> io::Result<(SocketAddr, JoinHandle<io::Result<()>>)> {
    let listener = TcpListener::bind(("127.0.0.1", 0)).await?;
    let addr = listener.local_addr()?;
    let handle = tokio::spawn(async move { axum::serve(listener, router(state)).await });
    Ok((addr, handle))
}
