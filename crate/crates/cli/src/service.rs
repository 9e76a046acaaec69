use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::rejection::QueryRejection;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::net::TcpListener;

use splain_core::explain::{expand_node, ExplanationNode, Justification, Subject};
use splain_core::model::{Level, ThreatLevel, TimeWindow};
use splain_core::pipeline::Artifacts;
use splain_core::IdTag;

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("cannot listen on {addr}: {source}")]
    Bind { addr: SocketAddr, source: std::io::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Serialize)]
struct WarningRecord<'a> {
    id: &'a IdTag,
    target: &'a str,
    threat_level: ThreatLevel,
    confidence: f64,
    window: &'a TimeWindow,
}

#[derive(Debug, Serialize)]
struct NodeRecord<'a> {
    id: &'a IdTag,
    level: Level,
    subject: &'a Subject,
    text: &'a str,
    justification: Justification,
    child_ids: &'a [IdTag],
    depth: usize,
}

impl<'a> NodeRecord<'a> {
    fn new(node: &'a ExplanationNode, depth: usize) -> Self {
        Self {
            id: &node.id,
            level: node.level,
            subject: &node.subject,
            text: &node.text,
            justification: node.justification,
            child_ids: &node.child_ids,
            depth,
        }
    }
}

#[derive(Debug, Serialize)]
struct ExplanationRecord<'a> {
    fused_id: &'a IdTag,
    depth: usize,
    nodes: Vec<NodeRecord<'a>>,
}

#[derive(Debug, Deserialize)]
struct DepthQuery {
    depth: Option<usize>,
}

struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(serde_json::json!({ "error": self.1 }))).into_response()
    }
}

fn not_found(what: &str, id: &str) -> ApiError {
    ApiError(StatusCode::NOT_FOUND, format!("unknown {what} {id}"))
}

type Shared = Arc<Artifacts>;

async fn warnings(State(artifacts): State<Shared>) -> Response {
    let records: Vec<WarningRecord> = artifacts
        .fused_warnings()
        .map(|f| WarningRecord {
            id: &f.id,
            target: &f.target,
            threat_level: f.threat_level,
            confidence: f.confidence,
            window: &f.window,
        })
        .collect();
    Json(records).into_response()
}

async fn explanation(
    State(artifacts): State<Shared>,
    Path(id): Path<String>,
    query: Result<Query<DepthQuery>, QueryRejection>,
) -> Result<Response, ApiError> {
    let Query(query) = query.map_err(|e| ApiError(StatusCode::BAD_REQUEST, e.body_text()))?;
    let tree = id
        .parse::<IdTag>()
        .ok()
        .and_then(|tag| artifacts.trees.get(&tag))
        .ok_or_else(|| not_found("fused warning", &id))?;
    let depth = query.depth.unwrap_or_else(|| tree.height());
    let nodes = tree.walk(depth).into_iter().map(|(d, n)| NodeRecord::new(n, d)).collect();
    Ok(Json(ExplanationRecord { fused_id: &tree.fused_id, depth, nodes }).into_response())
}

async fn children(State(artifacts): State<Shared>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let (tree, node) = id
        .parse::<IdTag>()
        .ok()
        .and_then(|tag| artifacts.node(&tag))
        .ok_or_else(|| not_found("node", &id))?;
    let depth = tree
        .walk(usize::MAX)
        .into_iter()
        .find(|(_, n)| n.id == node.id)
        .map_or(0, |(d, _)| d);
    let kids = expand_node(tree, &node.id).map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    let records: Vec<NodeRecord> = kids.into_iter().map(|n| NodeRecord::new(n, depth + 1)).collect();
    Ok(Json(records).into_response())
}

async fn fallback() -> ApiError {
    ApiError(StatusCode::NOT_FOUND, "no such endpoint".into())
}

/// Routes over frozen artifacts. Every handler only reads shared state.
pub fn router(artifacts: Arc<Artifacts>) -> Router {
    Router::new()
        .route("/warnings", get(warnings))
        .route("/warnings/:id/explanation", get(explanation))
        .route("/nodes/:id/children", get(children))
        .fallback(fallback)
        .with_state(artifacts)
}

/// Binds the listener up front so a busy port fails before serving.
pub async fn bind(addr: SocketAddr) -> Result<TcpListener, ServeError> {
    TcpListener::bind(addr).await.map_err(|source| ServeError::Bind { addr, source })
}
