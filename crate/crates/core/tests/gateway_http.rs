mod common;

use common::{post, GatewayFixture};
use kgqa_core::episode::ToolName;
use kgqa_core::gateway::server::{ErrorBody, Health};
use kgqa_core::gateway::{HttpToolExecutor, ToolRequest};
use kgqa_core::{GraphId, ToolCall, ToolExecutor, ToolResponse};

#[test]
fn health_and_error_statuses() {
    let server = GatewayFixture::start();
    let client = reqwest::blocking::Client::new();

    let health: Health = client.get(server.url("/health")).send().unwrap().json().unwrap();
    assert_eq!(health.graphs, ["agriculture", "cs"]);

    let (status, body) = post(
        &client,
        &server.url("/tools/node_info"),
        &ToolRequest::new("Humus", "biology"),
    );
    assert_eq!(status, 404);
    assert!(serde_json::from_str::<ErrorBody>(&body)
        .unwrap()
        .error
        .contains("biology"));

    let (status, _) = post(
        &client,
        &server.url("/tools/entity_matcher"),
        &ToolRequest::new("", "cs"),
    );
    assert_eq!(status, 400);

    let mut zero = ToolRequest::new("Humus", "agriculture");
    zero.top_k = Some(0);
    let (status, _) = post(&client, &server.url("/tools/entity_matcher"), &zero);
    assert_eq!(status, 400);

    let (status, body) = post(
        &client,
        &server.url("/tools/node_info"),
        &ToolRequest::new("Nowhere", "cs"),
    );
    assert_eq!(status, 200);
    let resp: ToolResponse = serde_json::from_str(&body).unwrap();
    assert!(resp.rendered.contains("No entity named 'Nowhere'"));
}

#[test]
fn http_executor_matches_in_process_service() {
    let server = GatewayFixture::start();
    let exec = HttpToolExecutor::new(server.base_url()).unwrap();
    let graph = GraphId::new("agriculture").unwrap();
    for (tool, node) in [
        (ToolName::EntityMatcher, "rational grazing"),
        (ToolName::NodeInfo, "Pays de Caux"),
        (ToolName::NodeInfo, "missing"),
    ] {
        let call = ToolCall::new(tool, node, "agriculture");
        assert_eq!(exec.execute(&graph, &call), server.service.execute(&graph, &call));
    }
    let wrong = ToolCall::new(ToolName::NodeInfo, "Humus", "nope");
    assert!(exec.execute(&graph, &wrong).starts_with("Tool error: 404"));
}

#[test]
fn concurrent_requests_match_serial_results() {
    let server = GatewayFixture::start();
    let (serial, concurrent) = server.serial_and_concurrent(64);
    assert_eq!(serial, concurrent);
    assert!(serial.iter().all(|(status, _)| *status == 200));
}
