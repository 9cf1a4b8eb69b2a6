//! HTTP service over read-only artifacts.

use std::sync::Arc;

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::json;

use autorefine::{
    Config, Error, EvaluationResponse, Evaluator, NGramModel, RewriteConfig, TokenValueModel,
};

use crate::service::{
    generation_config, rewrite_description, EvaluateRequest, RewriteRequest, RewriteResponse,
};

pub struct AppState {
    pub config: Config,
    pub evaluator: Evaluator,
    /// Generator and value model; `/rewrite` is unavailable without them.
    pub rewriter: Option<(NGramModel, TokenValueModel)>,
}

pub struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::EmptyText | Error::InvalidParameter(_) | Error::MissingField(_) => {
                StatusCode::UNPROCESSABLE_ENTITY
            }
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(status, e.to_string())
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/config", get(config))
        .route("/evaluate", post(evaluate))
        .route("/rewrite", post(rewrite))
        .with_state(state)
}

async fn health() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok" }))
}

async fn config(State(state): State<Arc<AppState>>) -> Json<Config> {
    Json(state.config.clone())
}

async fn evaluate(
    State(state): State<Arc<AppState>>,
    Json(req): Json<EvaluateRequest>,
) -> Result<Json<EvaluationResponse>, ApiError> {
    Ok(Json(state.evaluator.evaluate(&req.description)?))
}

async fn rewrite(
    State(state): State<Arc<AppState>>,
    Json(req): Json<RewriteRequest>,
) -> Result<Json<RewriteResponse>, ApiError> {
    let (lm, values) = state.rewriter.as_ref().ok_or_else(|| {
        ApiError(
            StatusCode::SERVICE_UNAVAILABLE,
            "no language model or value model loaded".into(),
        )
    })?;
    let rewrite = RewriteConfig {
        beta: req.beta.unwrap_or(state.config.beta),
        generation: generation_config(&state.config, req.seed),
    };
    let out = rewrite_description(
        lm,
        values,
        Some(&state.evaluator),
        &req.description,
        None,
        rewrite,
    )?;
    Ok(Json(out))
}

/// Serves until interrupted.
pub async fn serve(state: Arc<AppState>, addr: std::net::SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
