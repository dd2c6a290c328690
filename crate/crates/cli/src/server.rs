use std::path::PathBuf;
use std::sync::{Arc, OnceLock};
use std::time::Instant;

use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use qac_core::pipeline::{ModelBundle, ModelChoice, RunConfig, Suggester};
use qac_core::QacError;

/// Shared service state. Empty until the models finish loading.
#[derive(Clone, Default)]
pub struct AppState {
    suggester: Arc<OnceLock<Arc<Suggester>>>,
}

impl AppState {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn loaded(suggester: Suggester) -> Self {
        let state = Self::default();
        state.set(suggester);
        state
    }

    /// Installs the models; later calls are ignored.
    pub fn set(&self, suggester: Suggester) {
        let _ = self.suggester.set(Arc::new(suggester));
    }

    fn get(&self) -> Option<Arc<Suggester>> {
        self.suggester.get().cloned()
    }
}

#[derive(Debug, Deserialize)]
pub struct SuggestParams {
    pub prefix: Option<String>,
    pub n: Option<String>,
    pub model: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuggestRow {
    pub query: String,
    pub score: f64,
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuggestResponse {
    pub prefix: String,
    pub normalized_prefix: String,
    pub model: ModelChoice,
    pub candidates: Vec<SuggestRow>,
    pub latency_ms: f64,
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

fn not_loaded() -> Response {
    error(StatusCode::SERVICE_UNAVAILABLE, "models are still loading")
}

async fn suggest(State(state): State<AppState>, Query(params): Query<SuggestParams>) -> Response {
    let started = Instant::now();
    let Some(suggester) = state.get() else {
        return not_loaded();
    };
    let Some(prefix) = params.prefix else {
        return error(StatusCode::BAD_REQUEST, "missing `prefix`");
    };
    let n = match params.n.as_deref().map(str::parse::<usize>) {
        None => None,
        Some(Ok(n)) => Some(n),
        Some(Err(_)) => return error(StatusCode::BAD_REQUEST, "`n` must be a positive integer"),
    };
    let model = match params
        .model
        .as_deref()
        .unwrap_or("lm")
        .parse::<ModelChoice>()
    {
        Ok(m) => m,
        Err(e) => return error(StatusCode::BAD_REQUEST, e),
    };
    let result = tokio::task::spawn_blocking(move || suggester.suggest(&prefix, n, model)).await;
    match result {
        Ok(Ok(s)) => Json(SuggestResponse {
            prefix: s.prefix,
            normalized_prefix: s.normalized_prefix,
            model: s.model,
            candidates: s
                .candidates
                .into_iter()
                .map(|c| SuggestRow {
                    query: c.query,
                    score: c.score,
                    rank: c.rank,
                })
                .collect(),
            latency_ms: started.elapsed().as_secs_f64() * 1e3,
        })
        .into_response(),
        Ok(Err(e @ (QacError::Config(_) | QacError::TooLong { .. }))) => {
            error(StatusCode::BAD_REQUEST, e.to_string())
        }
        Ok(Err(e)) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

async fn health(State(state): State<AppState>) -> Response {
    let Some(s) = state.get() else {
        return (
            StatusCode::SERVICE_UNAVAILABLE,
            Json(json!({ "status": "loading" })),
        )
            .into_response();
    };
    Json(json!({
        "status": "ok",
        "models": ["lm", "mpc"],
        "models_dir": s.bundle.dir,
        "metadata": s.bundle.metadata(),
        "decode": s.decode,
    }))
    .into_response()
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/suggest", get(suggest))
        .route("/health", get(health))
        .with_state(state)
}

/// Binds the configured address, then loads the models in the background.
/// Requests made before loading completes get 503.
pub async fn serve(cfg: RunConfig, models_dir: PathBuf) -> Result<(), crate::CliError> {
    let addr = format!("{}:{}", cfg.serve.host, cfg.serve.port);
    let listener = tokio::net::TcpListener::bind(&addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    let state = AppState::empty();
    let loader = {
        let state = state.clone();
        let decode = cfg.decode.clone();
        tokio::task::spawn_blocking(move || -> Result<(), QacError> {
            let bundle = ModelBundle::load(&models_dir)?;
            state.set(Suggester::new(bundle, decode)?);
            eprintln!("models loaded from {}", models_dir.display());
            Ok(())
        })
    };
    let server = axum::serve(listener, router(state)).with_graceful_shutdown(async {
        let _ = tokio::signal::ctrl_c().await;
    });
    let server = tokio::spawn(async move { server.await });
    match loader.await {
        Ok(Ok(())) => {}
        Ok(Err(e)) => return Err(e.into()),
        Err(e) => return Err(crate::CliError::Usage(e.to_string())),
    }
    server
        .await
        .map_err(|e| crate::CliError::Usage(e.to_string()))??;
    Ok(())
}
