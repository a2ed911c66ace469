//! Policy service: answers "what should I do from here?" with a ranked
//! policy table composed on demand.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use kgpolicy_core::compose::{compose, ComposeError, ComposerConfig, PolicyTable};
use kgpolicy_core::embed::{load_tsv, EmbedError, EmbeddingSpace};
use kgpolicy_core::expr::Value;
use kgpolicy_core::sim::SimConfig;
use kgpolicy_core::store::{GraphStore, StoreError};
use serde::Deserialize;
use thiserror::Error;

pub const DEFAULT_BIND: &str = "127.0.0.1:8080";
pub const BIND_ENV: &str = "KGPOLICY_BIND";

/// The two files behind an embeddings prefix.
pub fn embedding_paths(prefix: &Path) -> (PathBuf, PathBuf) {
    let p = prefix.as_os_str().to_string_lossy();
    (
        PathBuf::from(format!("{p}_vectors.tsv")),
        PathBuf::from(format!("{p}_metadata.tsv")),
    )
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct PolicyRequest {
    pub feature_values: Option<BTreeMap<String, Value>>,
    pub state_name: Option<String>,
    /// Restricts the lookup to one activity.
    pub activity: Option<String>,
}

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("malformed request: {0}")]
    Malformed(String),
    #[error("unknown state: {0}")]
    UnknownState(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Embedding(#[from] EmbedError),
    #[error(transparent)]
    Compose(#[from] ComposeError),
}

impl ServiceError {
    /// Requests the model cannot serve: no state matches, or no action
    /// improves the reward within the radius cap.
    pub fn is_rejection(&self) -> bool {
        match self {
            ServiceError::UnknownState(_) => true,
            ServiceError::Store(e) => e.is_unknown_situation() || matches!(e, StoreError::UnknownActivity(_)),
            ServiceError::Compose(e) => {
                e.is_unknown_situation() || matches!(e, ComposeError::RadiusCapExceeded { .. })
            }
            _ => false,
        }
    }
}

pub fn parse_request(body: &[u8]) -> Result<PolicyRequest, ServiceError> {
    let req: PolicyRequest = serde_json::from_slice(body).map_err(|e| ServiceError::Malformed(e.to_string()))?;
    match (&req.feature_values, &req.state_name) {
        (Some(_), Some(_)) => Err(ServiceError::Malformed(
            "give either featureValues or stateName, not both".into(),
        )),
        (None, None) => Err(ServiceError::Malformed("featureValues or stateName is required".into())),
        _ => Ok(req),
    }
}

/// Shared, read-only state behind every request.
pub struct Engine {
    pub store: GraphStore,
    pub space: EmbeddingSpace,
    pub composer: ComposerConfig,
}

impl Engine {
    pub fn load(store: &Path, embeddings: &Path, composer: ComposerConfig) -> Result<Self, ServiceError> {
        let store = GraphStore::load(store)?;
        let (vectors, metadata) = embedding_paths(embeddings);
        let space = load_tsv(&vectors, &metadata)?;
        Ok(Engine { store, space, composer })
    }

    pub fn policies(&self, req: &PolicyRequest) -> Result<PolicyTable, ServiceError> {
        let activity = req.activity.as_deref();
        let start = match (&req.feature_values, &req.state_name) {
            (Some(f), None) => self.store.simulation_from_features(f, activity, SimConfig::default())?,
            (None, Some(s)) => self.store.simulation_at_state(s, activity, SimConfig::default())?,
            _ => return Err(ServiceError::Malformed("give exactly one of featureValues and stateName".into())),
        };
        let (table, _) = compose(&start, &self.space, &self.composer)?;
        Ok(table)
    }
}

fn json_response(status: StatusCode, body: String) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

fn reason(status: StatusCode, reason: &str) -> Response {
    json_response(status, serde_json::json!({ "reason": reason }).to_string())
}

async fn policies(State(engine): State<Arc<Engine>>, body: Bytes) -> Response {
    let req = match parse_request(&body) {
        Ok(r) => r,
        Err(e) => return reason(StatusCode::BAD_REQUEST, &e.to_string()),
    };
    let result = tokio::task::spawn_blocking(move || engine.policies(&req)).await;
    match result {
        Ok(Ok(table)) => json_response(StatusCode::OK, table.to_json()),
        Ok(Err(e)) if e.is_rejection() => {
            log::info!("rejected: {e}");
            reason(StatusCode::UNPROCESSABLE_ENTITY, "unknown state")
        }
        Ok(Err(e @ ServiceError::Malformed(_))) => reason(StatusCode::BAD_REQUEST, &e.to_string()),
        Ok(Err(e)) => {
            log::warn!("composition failed: {e}");
            reason(StatusCode::INTERNAL_SERVER_ERROR, &e.to_string())
        }
        Err(e) => reason(StatusCode::INTERNAL_SERVER_ERROR, &e.to_string()),
    }
}

async fn health() -> &'static str {
    "ok"
}

pub fn router(engine: Arc<Engine>) -> Router {
    Router::new()
        .route("/policies", post(policies))
        .route("/health", get(health))
        .with_state(engine)
}

/// Serves until interrupted.
pub async fn serve(engine: Arc<Engine>, bind: &str) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(bind).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(engine))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
