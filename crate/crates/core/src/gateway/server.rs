//! HTTP routes for the tool service.
//!
//! ```text
//! POST /tools/entity_matcher   {"node_name", "graph_type", "top_k"?}
//! POST /tools/node_info        {"node_name", "graph_type"}
//! GET  /health                 -> {"graphs": [..]}
//! ```

use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

use super::{GatewayError, ToolRequest, ToolResponse, ToolService};
use crate::episode::ToolName;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Health {
    pub graphs: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

struct ApiError(StatusCode, String);

impl From<GatewayError> for ApiError {
    fn from(e: GatewayError) -> Self {
        let status = match e {
            GatewayError::UnknownGraph(_) => StatusCode::NOT_FOUND,
            GatewayError::EmptyNodeName | GatewayError::ZeroTopK => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(ErrorBody { error: self.1 })).into_response()
    }
}

async fn dispatch(service: Arc<ToolService>, tool: ToolName, req: ToolRequest) -> Result<Json<ToolResponse>, ApiError> {
    // embedders may block (remote HTTP), keep them off the async workers
    let result = tokio::task::spawn_blocking(move || service.handle(tool, &req))
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    Ok(Json(result?))
}

async fn entity_matcher(
    State(service): State<Arc<ToolService>>,
    Json(req): Json<ToolRequest>,
) -> Result<Json<ToolResponse>, ApiError> {
    dispatch(service, ToolName::EntityMatcher, req).await
}

async fn node_info(
    State(service): State<Arc<ToolService>>,
    Json(req): Json<ToolRequest>,
) -> Result<Json<ToolResponse>, ApiError> {
    dispatch(service, ToolName::NodeInfo, req).await
}

async fn health(State(service): State<Arc<ToolService>>) -> Json<Health> {
    Json(Health {
        graphs: service.graph_ids().iter().map(ToString::to_string).collect(),
    })
}

pub fn router(service: Arc<ToolService>) -> Router {
    Router::new()
        .route("/tools/entity_matcher", post(entity_matcher))
        .route("/tools/node_info", post(node_info))
        .route("/health", get(health))
        .with_state(service)
}

/// A running gateway. Dropping the handle leaves the server running until the
/// runtime stops; call [`ServerHandle::shutdown`] for a graceful stop.
#[derive(Debug)]
pub struct ServerHandle {
    addr: SocketAddr,
    shutdown: oneshot::Sender<()>,
    task: JoinHandle<std::io::Result<()>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub async fn shutdown(self) -> std::io::Result<()> {
        let _ = self.shutdown.send(());
        self.task.await.map_err(|e| std::io::Error::other(e.to_string()))?
    }

    /// Waits until the server exits on its own (it normally never does).
    pub async fn wait(self) -> std::io::Result<()> {
        let _keep_open = self.shutdown;
        self.task.await.map_err(|e| std::io::Error::other(e.to_string()))?
    }
}

/// Binds `addr` and serves in a background task. Port 0 picks a free port.
pub async fn serve(service: Arc<ToolService>, addr: SocketAddr) -> Result<ServerHandle, GatewayError> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|source| GatewayError::Bind {
            addr: addr.to_string(),
            source,
        })?;
    let addr = listener.local_addr().map_err(|source| GatewayError::Bind {
        addr: addr.to_string(),
        source,
    })?;
    let (tx, rx) = oneshot::channel::<()>();
    let app = router(service);
    let task = tokio::spawn(async move {
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = rx.await;
            })
            .await
    });
    tracing::info!(%addr, "tool gateway listening");
    Ok(ServerHandle {
        addr,
        shutdown: tx,
        task,
    })
}
