//! Embedding-based entity matching.
//!
//! Entity names are embedded once per graph into an [`EntityIndex`]; a query is
//! embedded with the same [`Embedder`] and scored against every entry by cosine
//! similarity. The scan is exhaustive, so results are exact.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::graph::{GraphId, KnowledgeGraph};

/// Dimension of the [`HashingEmbedder`] output.
pub const HASHING_DIM: usize = 256;

/// Default number of matches returned by [`EntityIndex::match_entities`].
pub const DEFAULT_TOP_K: usize = 5;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

#[derive(Debug, thiserror::Error)]
pub enum EmbedError {
    #[error("cannot embed empty text")]
    EmptyInput,
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("embedder unavailable: {0}")]
    Unavailable(String),
    #[error("bad embedder response: {0}")]
    BadResponse(String),
    #[error("top_k must be at least 1")]
    ZeroTopK,
}

/// An L2-normalized embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    /// Normalizes `components` to unit length. Fails on an all-zero vector.
    pub fn normalized(mut components: Vec<f64>) -> Result<Self, EmbedError> {
        let norm = components.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(EmbedError::BadResponse("embedding has zero or non-finite norm".into()));
        }
        components.iter_mut().for_each(|x| *x /= norm);
        Ok(Self(components))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// `dot(a, b) / (|a| |b|)`.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64, EmbedError> {
    if a.len() != b.len() {
        return Err(EmbedError::DimensionMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    Ok(dot / (na * nb))
}

/// Text-to-vector model. Implementations must be usable from many threads.
pub trait Embedder: Send + Sync {
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError>;

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        self.embed_batch(&[text])?
            .pop()
            .ok_or_else(|| EmbedError::BadResponse("empty batch result".into()))
    }
}

/// Deterministic offline embedder based on hashed character trigrams.
///
/// 1. Lowercase the text and pad it with one space on each side.
/// 2. Slide a three-character window (Unicode scalar values) over it.
/// 3. Hash each trigram's UTF-8 bytes with 64-bit FNV-1a and add one to
///    bucket `hash % 256`.
/// 4. L2-normalize the 256 counts.
#[derive(Debug, Clone, Copy, Default)]
pub struct HashingEmbedder;

impl HashingEmbedder {
    fn embed_one(text: &str) -> Result<EmbeddingVector, EmbedError> {
        if text.is_empty() {
            return Err(EmbedError::EmptyInput);
        }
        let padded: Vec<char> = std::iter::once(' ')
            .chain(text.to_lowercase().chars())
            .chain(std::iter::once(' '))
            .collect();
        let mut counts = vec![0.0; HASHING_DIM];
        let mut buf = [0u8; 4];
        for window in padded.windows(3) {
            let mut hash = FNV_OFFSET;
            for ch in window {
                for byte in ch.encode_utf8(&mut buf).as_bytes() {
                    hash ^= u64::from(*byte);
                    hash = hash.wrapping_mul(FNV_PRIME);
                }
            }
            counts[(hash % HASHING_DIM as u64) as usize] += 1.0;
        }
        EmbeddingVector::normalized(counts)
    }
}

impl Embedder for HashingEmbedder {
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        texts.iter().map(|t| Self::embed_one(t)).collect()
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    input: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbedResponse {
    embeddings: Vec<Vec<f64>>,
}

/// Client for an HTTP embedding service:
/// `POST {"input": [..]}` returning `{"embeddings": [[..], ..]}`.
#[derive(Debug, Clone)]
pub struct RemoteEmbedder {
    endpoint: String,
    client: reqwest::blocking::Client,
    batch_size: usize,
}

impl RemoteEmbedder {
    pub fn new(endpoint: impl Into<String>) -> Result<Self, EmbedError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(60))
            .build()
            .map_err(|e| EmbedError::Unavailable(e.to_string()))?;
        Ok(Self {
            endpoint: endpoint.into(),
            client,
            batch_size: 64,
        })
    }

    /// Reads the endpoint from `EMBED_ENDPOINT`.
    pub fn from_env() -> Option<Result<Self, EmbedError>> {
        std::env::var("EMBED_ENDPOINT")
            .ok()
            .filter(|s| !s.is_empty())
            .map(Self::new)
    }

    fn request(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        let response = self
            .client
            .post(&self.endpoint)
            .json(&EmbedRequest { input: texts })
            .send()
            .and_then(reqwest::blocking::Response::error_for_status)
            .map_err(|e| EmbedError::Unavailable(e.to_string()))?;
        let body: EmbedResponse = response.json().map_err(|e| EmbedError::BadResponse(e.to_string()))?;
        if body.embeddings.len() != texts.len() {
            return Err(EmbedError::BadResponse(format!(
                "expected {} embeddings, got {}",
                texts.len(),
                body.embeddings.len()
            )));
        }
        body.embeddings.into_iter().map(EmbeddingVector::normalized).collect()
    }
}

impl Embedder for RemoteEmbedder {
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        if texts.iter().any(|t| t.is_empty()) {
            return Err(EmbedError::EmptyInput);
        }
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(self.batch_size) {
            out.extend(self.request(chunk)?);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub name: String,
    pub description: String,
    pub vector: EmbeddingVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub name: String,
    pub description: String,
    pub similarity: f64,
}

/// Per-graph table of entity name embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct EntityIndex {
    graph_id: GraphId,
    entries: Vec<IndexEntry>,
}

impl EntityIndex {
    /// Embeds every node name of `graph` (descriptions are carried, not embedded).
    pub fn build(graph: &KnowledgeGraph, embedder: &dyn Embedder) -> Result<Self, EmbedError> {
        let names: Vec<&str> = graph.nodes().map(|n| n.name.as_str()).collect();
        let vectors = if names.is_empty() {
            Vec::new()
        } else {
            embedder.embed_batch(&names)?
        };
        if vectors.len() != names.len() {
            return Err(EmbedError::BadResponse(format!(
                "expected {} embeddings, got {}",
                names.len(),
                vectors.len()
            )));
        }
        if let Some(first) = vectors.first() {
            if let Some(bad) = vectors.iter().find(|v| v.dim() != first.dim()) {
                return Err(EmbedError::DimensionMismatch {
                    left: first.dim(),
                    right: bad.dim(),
                });
            }
        }
        let entries = graph
            .nodes()
            .zip(vectors)
            .map(|(node, vector)| IndexEntry {
                name: node.name.clone(),
                description: node.description.clone(),
                vector,
            })
            .collect();
        Ok(Self {
            graph_id: graph.id().clone(),
            entries,
        })
    }

    pub fn graph_id(&self) -> &GraphId {
        &self.graph_id
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Scores a precomputed query vector against all entries.
    pub fn match_vector(&self, query: &EmbeddingVector, top_k: usize) -> Result<Vec<MatchResult>, EmbedError> {
        if top_k == 0 {
            return Err(EmbedError::ZeroTopK);
        }
        let mut scored = self
            .entries
            .iter()
            .map(|e| Ok((cosine_similarity(query.as_slice(), e.vector.as_slice())?, e)))
            .collect::<Result<Vec<_>, EmbedError>>()?;
        scored.sort_by(|(sa, a), (sb, b)| sb.total_cmp(sa).then_with(|| a.name.cmp(&b.name)));
        scored.truncate(top_k);
        Ok(scored
            .into_iter()
            .map(|(similarity, e)| MatchResult {
                name: e.name.clone(),
                description: e.description.clone(),
                similarity,
            })
            .collect())
    }

    /// Top-`top_k` entities by cosine similarity to `query`, ties broken by
    /// ascending name.
    pub fn match_entities(
        &self,
        query: &str,
        top_k: usize,
        embedder: &dyn Embedder,
    ) -> Result<Vec<MatchResult>, EmbedError> {
        if top_k == 0 {
            return Err(EmbedError::ZeroTopK);
        }
        if self.entries.is_empty() {
            return Ok(Vec::new());
        }
        let q = embedder.embed(query)?;
        self.match_vector(&q, top_k)
    }
}
