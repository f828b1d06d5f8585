//! Schema-free knowledge graphs.
//!
//! A graph is a set of named, described entities joined by undirected,
//! described edges. Graphs are loaded once from JSON Lines files and are
//! immutable afterwards, so every query here is a plain read.
//!
//! File format, one record per line:
//!
//! ```text
//! {"type":"node","name":"Humus","description":"..."}
//! {"type":"edge","source":"Humus","target":"Soil Fertility","description":"..."}
//! ```
//!
//! Nodes may appear after the edges that reference them; validation runs once
//! the whole stream has been read.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Default BFS radius used for seed subgraphs.
pub const DEFAULT_DEPTH: usize = 3;

#[derive(Debug, thiserror::Error)]
pub enum GraphError {
    #[error("graph id must be non-empty")]
    EmptyId,
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: node name must be non-empty")]
    EmptyName { line: usize },
    #[error("line {line}: duplicate node '{name}'")]
    DuplicateNode { line: usize, name: String },
    #[error("line {line}: self-loop on '{name}'")]
    SelfLoop { line: usize, name: String },
    #[error("line {line}: edge {source_name} - {target_name} references unknown node '{missing}'")]
    DanglingEdge {
        line: usize,
        source_name: String,
        target_name: String,
        missing: String,
    },
    #[error("unknown node '{0}'")]
    UnknownNode(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Identifier of a knowledge domain, e.g. `agriculture` or `cs`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct GraphId(String);

impl GraphId {
    pub fn new(name: impl Into<String>) -> Result<Self, GraphError> {
        let name = name.into();
        if name.trim().is_empty() {
            return Err(GraphError::EmptyId);
        }
        Ok(Self(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for GraphId {
    type Error = GraphError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<GraphId> for String {
    fn from(id: GraphId) -> Self {
        id.0
    }
}

impl fmt::Display for GraphId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::str::FromStr for GraphId {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::new(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub name: String,
    pub description: String,
}

/// An undirected edge. `source`/`target` keep the orientation of the record
/// that introduced the edge, which is only used for rendering.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub source: String,
    pub target: String,
    pub description: String,
}

impl Edge {
    /// The other endpoint, if `name` is one of the endpoints.
    pub fn opposite(&self, name: &str) -> Option<&str> {
        if self.source == name {
            Some(&self.target)
        } else if self.target == name {
            Some(&self.source)
        } else {
            None
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum Record {
    Node {
        name: String,
        #[serde(default)]
        description: String,
    },
    Edge {
        source: String,
        target: String,
        #[serde(default)]
        description: String,
    },
}

/// An immutable undirected knowledge graph.
#[derive(Debug, Clone)]
pub struct KnowledgeGraph {
    id: GraphId,
    nodes: BTreeMap<String, Node>,
    edges: Vec<Edge>,
    // name -> neighbor -> index into `edges`
    adjacency: BTreeMap<String, BTreeMap<String, usize>>,
}

/// Reads a graph from a JSON Lines stream.
pub fn load_graph<R: BufRead>(reader: R, id: GraphId) -> Result<KnowledgeGraph, GraphError> {
    let mut nodes: BTreeMap<String, Node> = BTreeMap::new();
    let mut pending_edges: Vec<(usize, Edge)> = Vec::new();

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| GraphError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: Record = serde_json::from_str(&line).map_err(|e| GraphError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        match record {
            Record::Node { name, description } => {
                if name.is_empty() {
                    return Err(GraphError::EmptyName { line: line_no });
                }
                if nodes.contains_key(&name) {
                    return Err(GraphError::DuplicateNode { line: line_no, name });
                }
                nodes.insert(name.clone(), Node { name, description });
            }
            Record::Edge {
                source,
                target,
                description,
            } => {
                if source == target {
                    return Err(GraphError::SelfLoop {
                        line: line_no,
                        name: source,
                    });
                }
                pending_edges.push((
                    line_no,
                    Edge {
                        source,
                        target,
                        description,
                    },
                ));
            }
        }
    }

    let mut adjacency: BTreeMap<String, BTreeMap<String, usize>> =
        nodes.keys().map(|name| (name.clone(), BTreeMap::new())).collect();
    let mut edges = Vec::with_capacity(pending_edges.len());

    for (line, edge) in pending_edges {
        for endpoint in [&edge.source, &edge.target] {
            if !nodes.contains_key(endpoint) {
                return Err(GraphError::DanglingEdge {
                    line,
                    missing: endpoint.clone(),
                    source_name: edge.source.clone(),
                    target_name: edge.target.clone(),
                });
            }
        }
        // duplicates (in either orientation) keep the first description
        if adjacency[&edge.source].contains_key(&edge.target) {
            continue;
        }
        let index = edges.len();
        adjacency
            .get_mut(&edge.source)
            .expect("checked above")
            .insert(edge.target.clone(), index);
        adjacency
            .get_mut(&edge.target)
            .expect("checked above")
            .insert(edge.source.clone(), index);
        edges.push(edge);
    }

    Ok(KnowledgeGraph {
        id,
        nodes,
        edges,
        adjacency,
    })
}

/// Loads `<dir>/<name>.jsonl` style files; the graph id is the file stem.
pub fn load_graph_file(path: impl AsRef<Path>) -> Result<KnowledgeGraph, GraphError> {
    let path = path.as_ref();
    let io_err = |source| GraphError::Io {
        path: path.display().to_string(),
        source,
    };
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or_default()
        .to_string();
    let id = GraphId::new(stem)?;
    let file = File::open(path).map_err(io_err)?;
    load_graph(BufReader::new(file), id).map_err(|e| match e {
        GraphError::Parse { line, message } => GraphError::Parse {
            line,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    })
}

/// Loads every `*.jsonl` file in `dir`, keyed by graph id.
pub fn load_graph_dir(dir: impl AsRef<Path>) -> Result<BTreeMap<GraphId, KnowledgeGraph>, GraphError> {
    let dir = dir.as_ref();
    let io_err = |source| GraphError::Io {
        path: dir.display().to_string(),
        source,
    };
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .map_err(io_err)?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "jsonl"))
        .collect();
    paths.sort();

    let mut graphs = BTreeMap::new();
    for path in paths {
        let graph = load_graph_file(&path)?;
        graphs.insert(graph.id().clone(), graph);
    }
    Ok(graphs)
}

impl KnowledgeGraph {
    pub fn id(&self) -> &GraphId {
        &self.id
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.nodes.contains_key(name)
    }

    pub fn node(&self, name: &str) -> Option<&Node> {
        self.nodes.get(name)
    }

    /// Nodes in ascending name order.
    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values()
    }

    /// Edges in load order (after duplicate collapsing).
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge_between(&self, a: &str, b: &str) -> Option<&Edge> {
        self.adjacency
            .get(a)
            .and_then(|adj| adj.get(b))
            .map(|&i| &self.edges[i])
    }

    pub fn has_edge(&self, a: &str, b: &str) -> bool {
        self.edge_between(a, b).is_some()
    }

    /// Neighbors of `name` with the connecting edge description, sorted by
    /// neighbor name.
    pub fn neighbors(&self, name: &str) -> Result<Vec<(&str, &str)>, GraphError> {
        let adj = self
            .adjacency
            .get(name)
            .ok_or_else(|| GraphError::UnknownNode(name.to_string()))?;
        Ok(adj
            .iter()
            .map(|(nb, &i)| (nb.as_str(), self.edges[i].description.as_str()))
            .collect())
    }

    pub fn degree(&self, name: &str) -> usize {
        self.adjacency.get(name).map_or(0, BTreeMap::len)
    }

    /// BFS distances from `seed`, stopping at `depth` hops. When `limit` is
    /// given the search stops early once more than `limit` nodes are found.
    fn distances_from(&self, seed: &str, depth: usize, limit: Option<usize>) -> BTreeMap<String, usize> {
        let mut dist = BTreeMap::new();
        dist.insert(seed.to_string(), 0);
        let mut queue = VecDeque::from([(seed, 0usize)]);
        while let Some((current, d)) = queue.pop_front() {
            if d == depth {
                continue;
            }
            for nb in self.adjacency[current].keys() {
                if !dist.contains_key(nb) {
                    dist.insert(nb.clone(), d + 1);
                    if limit.is_some_and(|l| dist.len() > l) {
                        return dist;
                    }
                    queue.push_back((nb, d + 1));
                }
            }
        }
        dist
    }

    /// All nodes within `depth` hops of `seed`, with the induced edges.
    pub fn bfs_subgraph(&self, seed: &str, depth: usize) -> Result<Subgraph, GraphError> {
        if !self.contains(seed) {
            return Err(GraphError::UnknownNode(seed.to_string()));
        }
        let distances = self.distances_from(seed, depth, None);
        let mut edges = BTreeSet::new();
        for name in distances.keys() {
            for (nb, &i) in &self.adjacency[name] {
                if name < nb && distances.contains_key(nb) {
                    edges.insert(i);
                }
            }
        }
        Ok(Subgraph {
            seed: seed.to_string(),
            depth,
            distances,
            edges: edges.into_iter().map(|i| self.edges[i].clone()).collect(),
        })
    }

    /// Whether `seed` qualifies as a question seed: some node lies at distance
    /// exactly `criteria.depth`, and the depth-bounded neighborhood has
    /// between `min_nodes` and `max_nodes` nodes.
    pub fn is_qualifying_seed(&self, seed: &str, criteria: &SeedCriteria) -> bool {
        if !self.contains(seed) {
            return false;
        }
        let dist = self.distances_from(seed, criteria.depth, Some(criteria.max_nodes));
        let size = dist.len();
        size >= criteria.min_nodes && size <= criteria.max_nodes && dist.values().any(|&d| d == criteria.depth)
    }

    /// Uniformly samples up to `count` qualifying seeds without replacement.
    /// Deterministic for a fixed `rng_seed`.
    pub fn sample_seed_nodes(&self, criteria: &SeedCriteria, count: usize, rng_seed: u64) -> Vec<String> {
        let mut qualifying: Vec<&str> = self
            .nodes
            .keys()
            .map(String::as_str)
            .filter(|name| self.is_qualifying_seed(name, criteria))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        let take = count.min(qualifying.len());
        let (chosen, _) = qualifying.partial_shuffle(&mut rng, take);
        chosen.iter().map(|s| s.to_string()).collect()
    }

    /// Checks that `path` is a walk in this graph ending at `answer`.
    pub fn validate_path(&self, path: &[String], answer: &str) -> PathVerdict {
        if path.len() < 2 {
            return PathVerdict::invalid(PathFailure::TooShort(path.len()));
        }
        if let Some(missing) = path.iter().find(|n| !self.contains(n)) {
            return PathVerdict::invalid(PathFailure::UnknownNode(missing.clone()));
        }
        if let Some(pair) = path.windows(2).find(|w| !self.has_edge(&w[0], &w[1])) {
            return PathVerdict::invalid(PathFailure::MissingEdge(pair[0].clone(), pair[1].clone()));
        }
        if path.last().map(String::as_str) != Some(answer) {
            return PathVerdict::invalid(PathFailure::AnswerNotTerminal);
        }
        PathVerdict {
            valid: true,
            reason: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedCriteria {
    pub depth: usize,
    pub min_nodes: usize,
    pub max_nodes: usize,
}

impl Default for SeedCriteria {
    fn default() -> Self {
        Self {
            depth: DEFAULT_DEPTH,
            min_nodes: 20,
            max_nodes: 400,
        }
    }
}

/// Depth-bounded BFS neighborhood of a seed node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subgraph {
    pub seed: String,
    pub depth: usize,
    /// Hop distance from the seed for every node in the subgraph.
    pub distances: BTreeMap<String, usize>,
    /// Every graph edge with both endpoints in the subgraph.
    pub edges: Vec<Edge>,
}

impl Subgraph {
    pub fn node_names(&self) -> BTreeSet<&str> {
        self.distances.keys().map(String::as_str).collect()
    }

    pub fn len(&self) -> usize {
        self.distances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.distances.is_empty()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.distances.contains_key(name)
    }

    pub fn max_distance(&self) -> usize {
        self.distances.values().copied().max().unwrap_or(0)
    }

    /// One `"{a} - {b}: {description}"` line per edge, sorted by `(a, b)`,
    /// joined with newlines.
    pub fn render_relations(&self) -> String {
        let mut lines: Vec<(&str, &str, &str)> = self
            .edges
            .iter()
            .map(|e| (e.source.as_str(), e.target.as_str(), e.description.as_str()))
            .collect();
        lines.sort();
        lines
            .iter()
            .map(|(a, b, d)| format!("{a} - {b}: {d}"))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// An ordered node sequence with at least two entries.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct PathSpec(Vec<String>);

impl PathSpec {
    pub fn new(nodes: Vec<String>) -> Result<Self, PathFailure> {
        if nodes.len() < 2 {
            return Err(PathFailure::TooShort(nodes.len()));
        }
        Ok(Self(nodes))
    }

    pub fn nodes(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn terminal(&self) -> &str {
        self.0.last().expect("path has at least two nodes")
    }
}

impl TryFrom<Vec<String>> for PathSpec {
    type Error = PathFailure;

    fn try_from(value: Vec<String>) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<PathSpec> for Vec<String> {
    fn from(p: PathSpec) -> Self {
        p.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error, Serialize, Deserialize)]
pub enum PathFailure {
    #[error("path has {0} node(s), need at least 2")]
    TooShort(usize),
    #[error("unknown node '{0}'")]
    UnknownNode(String),
    #[error("missing edge {0}\u{2013}{1}")]
    MissingEdge(String, String),
    #[error("answer not terminal node")]
    AnswerNotTerminal,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathVerdict {
    pub valid: bool,
    pub reason: Option<PathFailure>,
}

impl PathVerdict {
    fn invalid(reason: PathFailure) -> Self {
        Self {
            valid: false,
            reason: Some(reason),
        }
    }

    pub fn reason_text(&self) -> String {
        self.reason
            .as_ref()
            .map_or_else(|| "ok".to_string(), ToString::to_string)
    }
}
