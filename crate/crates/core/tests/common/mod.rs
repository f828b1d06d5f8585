//! Fixtures and brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;
use std::sync::Arc;

use kgqa_core::gateway::{serve, ServerHandle, ToolRequest};
use kgqa_core::graph::{load_graph, load_graph_file, GraphId, KnowledgeGraph};
use kgqa_core::synth::read_qa_jsonl;
use kgqa_core::{run_episode, Episode, EpisodeLimits, HashingEmbedder, QaRecord, ScriptedClient, ToolService};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const GRAZING_QUESTION: &str = "Which traditional grazing method in regional agriculture is practiced in the same region where Rational Grazing is compared in terms of grazing methods and regional practices?";

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

pub fn fixture_graph(id: &str) -> KnowledgeGraph {
    load_graph_file(fixture(&format!("graphs/{id}.jsonl"))).unwrap()
}

pub fn fixture_service() -> ToolService {
    ToolService::build(
        [fixture_graph("agriculture"), fixture_graph("cs")],
        Arc::new(HashingEmbedder),
    )
    .unwrap()
}

pub fn scripted_from(name: &str) -> ScriptedClient {
    ScriptedClient::from_jsonl(BufReader::new(File::open(fixture(name)).unwrap())).unwrap()
}

pub fn fixture_qa(name: &str) -> Vec<QaRecord> {
    read_qa_jsonl(BufReader::new(File::open(fixture(name)).unwrap())).unwrap()
}

/// Replays the grazing transcript against the fixture graphs.
pub fn run_grazing(service: &ToolService) -> Episode {
    run_episode(
        GRAZING_QUESTION,
        &GraphId::new("agriculture").unwrap(),
        Some("Continuous Grazing"),
        &scripted_from("grazing_trace.jsonl"),
        service,
        EpisodeLimits::default(),
    )
    .unwrap()
}

pub struct GatewayFixture {
    pub runtime: tokio::runtime::Runtime,
    pub handle: Option<ServerHandle>,
    pub service: Arc<ToolService>,
}

impl GatewayFixture {
    pub fn start() -> Self {
        let service = Arc::new(fixture_service());
        let runtime = tokio::runtime::Runtime::new().unwrap();
        let handle = runtime
            .block_on(serve(service.clone(), "127.0.0.1:0".parse().unwrap()))
            .unwrap();
        Self {
            runtime,
            handle: Some(handle),
            service,
        }
    }

    pub fn base_url(&self) -> String {
        self.handle.as_ref().unwrap().base_url()
    }

    pub fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base_url())
    }

    /// Sends `count` mixed tool requests one at a time, then all at once from
    /// separate threads, returning `(status, body)` pairs for both runs.
    pub fn serial_and_concurrent(&self, count: usize) -> (Vec<(u16, String)>, Vec<(u16, String)>) {
        let client = reqwest::blocking::Client::new();
        let names = [
            "Rational Grazing",
            "Pays de Caux",
            "Humus",
            "Almond Pollination",
            "Rastrigin Function",
            "grazing",
            "bee hives",
            "Unknown Thing",
        ];
        let requests: Vec<(String, ToolRequest)> = (0..count)
            .map(|i| {
                let tool = if i % 2 == 0 { "entity_matcher" } else { "node_info" };
                let name = names[(i / 2) % names.len()];
                let graph = if name == "Rastrigin Function" {
                    "cs"
                } else {
                    "agriculture"
                };
                (self.url(&format!("/tools/{tool}")), ToolRequest::new(name, graph))
            })
            .collect();
        let serial = requests.iter().map(|(u, r)| post(&client, u, r)).collect();
        let concurrent = std::thread::scope(|s| {
            let handles: Vec<_> = requests
                .iter()
                .map(|(u, r)| {
                    let client = client.clone();
                    s.spawn(move || post(&client, u, r))
                })
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });
        (serial, concurrent)
    }
}

impl Drop for GatewayFixture {
    fn drop(&mut self) {
        if let Some(h) = self.handle.take() {
            let _ = self.runtime.block_on(h.shutdown());
        }
    }
}

pub fn post(client: &reqwest::blocking::Client, url: &str, req: &ToolRequest) -> (u16, String) {
    let resp = client.post(url).json(req).send().unwrap();
    (resp.status().as_u16(), resp.text().unwrap())
}

/// A random simple graph on `n` nodes named `v0..`, with each pair joined
/// independently with probability `p`. Returns the graph and its adjacency
/// matrix.
pub fn random_graph(rng: &mut ChaCha8Rng, n: usize, p: f64) -> (KnowledgeGraph, Vec<Vec<bool>>) {
    let mut adj = vec![vec![false; n]; n];
    let mut text = String::new();
    for i in 0..n {
        text.push_str(&format!(
            "{{\"type\":\"node\",\"name\":\"v{i}\",\"description\":\"node {i}\"}}\n"
        ));
    }
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(p) {
                adj[i][j] = true;
                adj[j][i] = true;
                text.push_str(&format!(
                    "{{\"type\":\"edge\",\"source\":\"v{i}\",\"target\":\"v{j}\",\"description\":\"e{i}_{j}\"}}\n"
                ));
            }
        }
    }
    let graph = load_graph(text.as_bytes(), GraphId::new("rand").unwrap()).unwrap();
    (graph, adj)
}

/// All-pairs hop distances by Floyd-Warshall.
pub fn all_pairs(adj: &[Vec<bool>]) -> Vec<Vec<usize>> {
    let n = adj.len();
    let inf = usize::MAX / 4;
    let mut d = vec![vec![inf; n]; n];
    for i in 0..n {
        d[i][i] = 0;
        for j in 0..n {
            if adj[i][j] {
                d[i][j] = 1;
            }
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    d
}

/// Nodes within `depth` of `seed` with their distances, and the induced
/// edge set, from the distance matrix.
pub fn oracle_subgraph(
    adj: &[Vec<bool>],
    dist: &[Vec<usize>],
    seed: usize,
    depth: usize,
) -> (BTreeMap<String, usize>, BTreeSet<(String, String)>) {
    let n = adj.len();
    let inside: Vec<usize> = (0..n).filter(|&j| dist[seed][j] <= depth).collect();
    let nodes = inside.iter().map(|&j| (format!("v{j}"), dist[seed][j])).collect();
    let mut edges = BTreeSet::new();
    for &a in &inside {
        for &b in &inside {
            if a < b && adj[a][b] {
                edges.insert((format!("v{a}"), format!("v{b}")));
            }
        }
    }
    (nodes, edges)
}

/// A path is valid when it has two or more nodes, every node exists, every
/// consecutive pair is adjacent and the answer is the last node.
pub fn oracle_path_valid(adj: &[Vec<bool>], path: &[String], answer: &str) -> bool {
    let idx: Option<Vec<usize>> = path
        .iter()
        .map(|s| {
            s.strip_prefix('v')
                .and_then(|k| k.parse::<usize>().ok())
                .filter(|&k| k < adj.len())
        })
        .collect();
    let Some(idx) = idx else {
        return false;
    };
    path.len() >= 2 && idx.windows(2).all(|w| adj[w[0]][w[1]]) && path.last().map(String::as_str) == Some(answer)
}

/// GAE by the direct double sum `A_t = sum_l (gamma*lam)^l delta_{t+l}`.
pub fn oracle_gae(rewards: &[f64], values: &[f64], bootstrap: f64, gamma: f64, lam: f64) -> Vec<f64> {
    let n = rewards.len();
    let next = |t: usize| if t + 1 < n { values[t + 1] } else { bootstrap };
    (0..n)
        .map(|t| {
            (t..n)
                .map(|k| {
                    let delta = rewards[k] + gamma * next(k) - values[k];
                    (gamma * lam).powi((k - t) as i32) * delta
                })
                .sum()
        })
        .collect()
}

/// Exhaustive cosine top-k over explicit vectors, ties broken by name.
pub fn oracle_top_k(query: &[f64], entries: &[(String, Vec<f64>)], k: usize) -> Vec<(String, f64)> {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let qn = norm(query);
    let mut scored: Vec<(String, f64)> = entries
        .iter()
        .map(|(name, v)| {
            let dot: f64 = v.iter().zip(query).map(|(a, b)| a * b).sum();
            (name.clone(), dot / (norm(v) * qn))
        })
        .collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    scored.truncate(k);
    scored
}

pub fn think_call(function: &str, node: &str, graph: &str) -> String {
    format!("<think>\nlooking up {node}\n</think>\n<tool_call>\n{function}(node_name=\"{node}\", graph_type=\"{graph}\")\n</tool_call>")
}

pub fn think_answer(answer: &str) -> String {
    format!("<think>\nI have enough information.\n</think>\n<answer>{answer}</answer>")
}
