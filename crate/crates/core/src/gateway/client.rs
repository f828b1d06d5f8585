use std::time::Duration;

use super::{ToolRequest, ToolResponse};
use crate::episode::{ToolCall, ToolExecutor};
use crate::graph::GraphId;

/// [`ToolExecutor`] backed by a remote gateway.
#[derive(Debug, Clone)]
pub struct HttpToolExecutor {
    base_url: String,
    client: reqwest::blocking::Client,
}

impl HttpToolExecutor {
    pub fn new(base_url: impl Into<String>) -> reqwest::Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(60))
            .build()?;
        Ok(Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            client,
        })
    }

    pub fn call(&self, call: &ToolCall, graph_type: &GraphId) -> Result<ToolResponse, String> {
        let req = ToolRequest::new(
            call.node_name().unwrap_or_default(),
            call.graph_type().unwrap_or(graph_type.as_str()),
        );
        let url = format!("{}/tools/{}", self.base_url, call.function);
        let resp = self.client.post(url).json(&req).send().map_err(|e| e.to_string())?;
        let status = resp.status();
        if !status.is_success() {
            let body = resp.text().unwrap_or_default();
            let detail = serde_json::from_str::<serde_json::Value>(&body)
                .ok()
                .and_then(|v| v.get("error").and_then(|e| e.as_str()).map(str::to_string))
                .unwrap_or(body);
            return Err(format!("{status}: {detail}"));
        }
        resp.json().map_err(|e| e.to_string())
    }
}

impl ToolExecutor for HttpToolExecutor {
    fn execute(&self, graph_type: &GraphId, call: &ToolCall) -> String {
        match self.call(call, graph_type) {
            Ok(resp) => resp.rendered,
            Err(e) => format!("Tool error: {e}"),
        }
    }
}
