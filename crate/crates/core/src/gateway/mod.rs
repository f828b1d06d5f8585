//! The `entity_matcher` and `node_info` tools.
//!
//! [`ToolService`] owns the loaded graphs and their entity indexes and turns
//! tool requests into LLM-facing text plus a structured payload. The text is
//! always derived from the payload by [`render`], so the two never disagree.
//! [`server`] exposes the service over HTTP; [`HttpToolExecutor`] is the
//! matching client.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::embedding::{EmbedError, Embedder, EntityIndex, MatchResult, DEFAULT_TOP_K};
use crate::episode::{ToolCall, ToolExecutor, ToolName};
use crate::graph::{GraphId, KnowledgeGraph, Node};

mod client;
pub mod server;

pub use client::HttpToolExecutor;
pub use server::{router, serve, ServerHandle};

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("unknown graph_type '{0}'")]
    UnknownGraph(String),
    #[error("node_name must be non-empty")]
    EmptyNodeName,
    #[error("top_k must be at least 1")]
    ZeroTopK,
    #[error("failed to build index for '{graph}': {source}")]
    Index {
        graph: String,
        #[source]
        source: EmbedError,
    },
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolRequest {
    pub node_name: String,
    pub graph_type: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_k: Option<usize>,
}

impl ToolRequest {
    pub fn new(node_name: impl Into<String>, graph_type: impl Into<String>) -> Self {
        Self {
            node_name: node_name.into(),
            graph_type: graph_type.into(),
            top_k: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeighborInfo {
    pub name: String,
    pub edge_description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ToolPayload {
    Matches { query: String, matches: Vec<MatchResult> },
    NodeInfo { entity: Node, neighbors: Vec<NeighborInfo> },
    Error { error: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolResponse {
    pub rendered: String,
    #[serde(flatten)]
    pub payload: ToolPayload,
}

impl From<ToolPayload> for ToolResponse {
    fn from(payload: ToolPayload) -> Self {
        Self {
            rendered: render(&payload),
            payload,
        }
    }
}

/// LLM-facing text for a payload.
pub fn render(payload: &ToolPayload) -> String {
    let mut out = String::new();
    match payload {
        ToolPayload::Matches { query, matches } => {
            let _ = write!(out, "Found {} entities matching '{query}':", matches.len());
            for (i, m) in matches.iter().enumerate() {
                let _ = write!(out, "\n{}. Entity: {} Description: {}", i + 1, m.name, m.description);
            }
        }
        ToolPayload::NodeInfo { entity, neighbors } => {
            let _ = write!(
                out,
                "Entity: {}\nDescription: {}\nNeighbors ({}):",
                entity.name,
                entity.description,
                neighbors.len()
            );
            for nb in neighbors {
                let _ = write!(out, "\n- {}: {}", nb.name, nb.edge_description);
            }
        }
        ToolPayload::Error { error } => out.push_str(error),
    }
    out
}

struct LoadedGraph {
    graph: KnowledgeGraph,
    index: EntityIndex,
}

/// Immutable tool state shared by all requests.
pub struct ToolService {
    graphs: BTreeMap<GraphId, LoadedGraph>,
    embedder: Arc<dyn Embedder>,
}

impl std::fmt::Debug for ToolService {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ToolService")
            .field("graphs", &self.graphs.keys().collect::<Vec<_>>())
            .finish_non_exhaustive()
    }
}

impl ToolService {
    /// Builds an entity index for every graph.
    pub fn build(
        graphs: impl IntoIterator<Item = KnowledgeGraph>,
        embedder: Arc<dyn Embedder>,
    ) -> Result<Self, GatewayError> {
        let mut loaded = BTreeMap::new();
        for graph in graphs {
            let index = EntityIndex::build(&graph, embedder.as_ref()).map_err(|source| GatewayError::Index {
                graph: graph.id().to_string(),
                source,
            })?;
            loaded.insert(graph.id().clone(), LoadedGraph { graph, index });
        }
        Ok(Self {
            graphs: loaded,
            embedder,
        })
    }

    pub fn graph_ids(&self) -> Vec<GraphId> {
        self.graphs.keys().cloned().collect()
    }

    pub fn graph(&self, id: &str) -> Option<&KnowledgeGraph> {
        self.lookup(id).ok().map(|g| &g.graph)
    }

    pub fn index(&self, id: &str) -> Option<&EntityIndex> {
        self.lookup(id).ok().map(|g| &g.index)
    }

    fn lookup(&self, id: &str) -> Result<&LoadedGraph, GatewayError> {
        GraphId::new(id)
            .ok()
            .and_then(|gid| self.graphs.get(&gid))
            .ok_or_else(|| GatewayError::UnknownGraph(id.to_string()))
    }

    pub fn handle(&self, tool: ToolName, req: &ToolRequest) -> Result<ToolResponse, GatewayError> {
        match tool {
            ToolName::EntityMatcher => self.handle_entity_matcher(req),
            ToolName::NodeInfo => self.handle_node_info(req),
        }
    }

    pub fn handle_entity_matcher(&self, req: &ToolRequest) -> Result<ToolResponse, GatewayError> {
        let loaded = self.lookup(&req.graph_type)?;
        if req.node_name.is_empty() {
            return Err(GatewayError::EmptyNodeName);
        }
        let top_k = req.top_k.unwrap_or(DEFAULT_TOP_K);
        if top_k == 0 {
            return Err(GatewayError::ZeroTopK);
        }
        let payload = match loaded
            .index
            .match_entities(&req.node_name, top_k, self.embedder.as_ref())
        {
            Ok(matches) => ToolPayload::Matches {
                query: req.node_name.clone(),
                matches,
            },
            Err(e) => ToolPayload::Error {
                error: format!("Tool error: entity_matcher failed: {e}"),
            },
        };
        Ok(payload.into())
    }

    pub fn handle_node_info(&self, req: &ToolRequest) -> Result<ToolResponse, GatewayError> {
        let loaded = self.lookup(&req.graph_type)?;
        if req.node_name.is_empty() {
            return Err(GatewayError::EmptyNodeName);
        }
        let graph = &loaded.graph;
        let payload = match (graph.node(&req.node_name), graph.neighbors(&req.node_name)) {
            (Some(node), Ok(neighbors)) => ToolPayload::NodeInfo {
                entity: node.clone(),
                neighbors: neighbors
                    .into_iter()
                    .map(|(name, desc)| NeighborInfo {
                        name: name.to_string(),
                        edge_description: desc.to_string(),
                    })
                    .collect(),
            },
            _ => ToolPayload::Error {
                error: format!("No entity named '{}' in graph '{}'", req.node_name, req.graph_type),
            },
        };
        Ok(payload.into())
    }
}

impl ToolExecutor for ToolService {
    fn execute(&self, graph_type: &GraphId, call: &ToolCall) -> String {
        let req = ToolRequest::new(
            call.node_name().unwrap_or_default(),
            call.graph_type().unwrap_or(graph_type.as_str()),
        );
        match self.handle(call.function, &req) {
            Ok(resp) => resp.rendered,
            Err(e) => format!("Tool error: {e}"),
        }
    }
}
