//! Multi-hop QA synthesis from knowledge graphs.
//!
//! For every sampled seed the depth-bounded neighborhood is rendered as a
//! relation list and handed to a generator model, which proposes a path, a
//! question and an answer. The path is checked mechanically against the graph
//! first and the question is then checked by a judge model. Failed attempts
//! are retried with feedback describing what went wrong.

mod prompts;
mod stats;

use std::collections::HashSet;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::episode::{ChatMessage, LlmClient, LlmError};
use crate::graph::{GraphId, KnowledgeGraph, PathSpec, SeedCriteria};

pub use prompts::{build_generation_prompt, build_judge_prompt, py_list_repr, py_str_repr};
pub use stats::{domain_stats, DomainRow, DomainStats};

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("malformed generator output: {raw}")]
    MalformedGeneration { raw: String },
    #[error("malformed judge output: {raw}")]
    MalformedJudge { raw: String },
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("invalid synth config: {0}")]
    Config(String),
    #[error("invalid question spec: {0}")]
    InvalidSpec(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HopCategory {
    OneTwo,
    ThreePlus,
}

impl HopCategory {
    pub const ALL: [HopCategory; 2] = [HopCategory::OneTwo, HopCategory::ThreePlus];

    /// Whether a path with `len` nodes fits this category.
    pub fn accepts(self, len: usize) -> bool {
        match self {
            HopCategory::OneTwo => len == 2 || len == 3,
            HopCategory::ThreePlus => len >= 4,
        }
    }

    pub fn for_path_len(len: usize) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.accepts(len))
    }

    pub fn as_str(self) -> &'static str {
        match self {
            HopCategory::OneTwo => "one_two",
            HopCategory::ThreePlus => "three_plus",
        }
    }
}

impl std::fmt::Display for HopCategory {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionSpec {
    pub path: PathSpec,
    pub question: String,
    pub answer: String,
    pub hop_category: HopCategory,
    pub graph_type: GraphId,
}

impl QuestionSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        if !self.hop_category.accepts(self.path.len()) {
            return Err(SynthError::InvalidSpec(format!(
                "{} path has {} nodes",
                self.hop_category,
                self.path.len()
            )));
        }
        if self.path.terminal() != self.answer {
            return Err(SynthError::InvalidSpec("answer is not the last path node".into()));
        }
        Ok(())
    }

    /// Content hash of graph type, question and answer.
    pub fn id(&self) -> String {
        qa_id(self.graph_type.as_str(), &self.question, &self.answer)
    }

    pub fn to_record(&self) -> QaRecord {
        QaRecord {
            id: self.id(),
            graph_type: self.graph_type.to_string(),
            path: self.path.nodes().to_vec(),
            question: self.question.clone(),
            golden_answer: self.answer.clone(),
            hop_category: self.hop_category,
        }
    }
}

/// First 16 hex digits of SHA-256 over the NUL-joined fields.
pub fn qa_id(graph_type: &str, question: &str, answer: &str) -> String {
    let mut h = Sha256::new();
    for part in [graph_type, question, answer] {
        h.update(part.as_bytes());
        h.update([0u8]);
    }
    hex::encode(h.finalize())[..16].to_string()
}

/// One line of a QA dataset file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaRecord {
    pub id: String,
    pub graph_type: String,
    pub path: Vec<String>,
    pub question: String,
    pub golden_answer: String,
    pub hop_category: HopCategory,
}

impl TryFrom<&QaRecord> for QuestionSpec {
    type Error = SynthError;

    fn try_from(r: &QaRecord) -> Result<Self, Self::Error> {
        let spec = QuestionSpec {
            path: PathSpec::new(r.path.clone()).map_err(|e| SynthError::InvalidSpec(e.to_string()))?,
            question: r.question.clone(),
            answer: r.golden_answer.clone(),
            hop_category: r.hop_category,
            graph_type: GraphId::new(r.graph_type.clone()).map_err(|e| SynthError::InvalidSpec(e.to_string()))?,
        };
        spec.validate()?;
        Ok(spec)
    }
}

pub fn read_qa_jsonl<R: BufRead>(reader: R) -> Result<Vec<QaRecord>, SynthError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| SynthError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_qa_jsonl<W: Write>(mut writer: W, records: &[QaRecord]) -> Result<(), SynthError> {
    for r in records {
        serde_json::to_writer(&mut writer, r).map_err(std::io::Error::from)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

/// Anything carrying a question/answer pair and its domain labels.
pub trait QaItem {
    fn question(&self) -> &str;
    fn answer(&self) -> &str;
    fn graph_type(&self) -> &str;
    fn hop_category(&self) -> HopCategory;
}

impl QaItem for QuestionSpec {
    fn question(&self) -> &str {
        &self.question
    }
    fn answer(&self) -> &str {
        &self.answer
    }
    fn graph_type(&self) -> &str {
        self.graph_type.as_str()
    }
    fn hop_category(&self) -> HopCategory {
        self.hop_category
    }
}

impl QaItem for QaRecord {
    fn question(&self) -> &str {
        &self.question
    }
    fn answer(&self) -> &str {
        &self.golden_answer
    }
    fn graph_type(&self) -> &str {
        &self.graph_type
    }
    fn hop_category(&self) -> HopCategory {
        self.hop_category
    }
}

/// Keeps the first item for each trimmed (question, answer) pair.
pub fn dedupe<T: QaItem>(items: Vec<T>) -> Vec<T> {
    let mut seen = HashSet::new();
    items
        .into_iter()
        .filter(|it| seen.insert((it.question().trim().to_string(), it.answer().trim().to_string())))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationFeedback {
    pub previous_path: Vec<String>,
    pub previous_question: String,
    pub path_valid: bool,
    pub question_feedback: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub depth: usize,
    pub min_nodes: usize,
    pub max_nodes: usize,
    pub max_retries: usize,
    pub target_one_two: usize,
    pub target_three_plus: usize,
    pub rng_seed: u64,
    pub max_tokens: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            depth: 3,
            min_nodes: 20,
            max_nodes: 400,
            max_retries: 3,
            target_one_two: 10,
            target_three_plus: 10,
            rng_seed: 0,
            max_tokens: 4096,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.depth == 0 {
            return Err(SynthError::Config("depth must be positive".into()));
        }
        if self.min_nodes == 0 || self.min_nodes > self.max_nodes {
            return Err(SynthError::Config(format!(
                "need 0 < min_nodes <= max_nodes, got {}..{}",
                self.min_nodes, self.max_nodes
            )));
        }
        if self.target_one_two + self.target_three_plus == 0 {
            return Err(SynthError::Config("no questions requested".into()));
        }
        if self.max_tokens == 0 {
            return Err(SynthError::Config("max_tokens must be positive".into()));
        }
        Ok(())
    }

    pub fn criteria(&self) -> SeedCriteria {
        SeedCriteria {
            depth: self.depth,
            min_nodes: self.min_nodes,
            max_nodes: self.max_nodes,
        }
    }

    pub fn target(&self, category: HopCategory) -> usize {
        match category {
            HopCategory::OneTwo => self.target_one_two,
            HopCategory::ThreePlus => self.target_three_plus,
        }
    }
}

/// The generator's proposal before validation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedFragment {
    pub path: Vec<String>,
    pub question: String,
    pub answer: String,
}

/// Strips surrounding whitespace and an optional Markdown code fence, leaving
/// what should be a bare JSON object.
fn strip_fence(text: &str) -> &str {
    let t = text.trim();
    let Some(rest) = t.strip_prefix("```") else {
        return t;
    };
    let Some(body) = rest.strip_suffix("```") else {
        return t;
    };
    // drop the info string (e.g. `json`) on the opening line
    let body = match body.find('\n') {
        Some(nl) if !body[..nl].trim_start().starts_with('{') => &body[nl + 1..],
        _ => body.trim_start_matches(|c: char| c.is_ascii_alphabetic()),
    };
    body.trim()
}

fn parse_json_object<T: serde::de::DeserializeOwned>(text: &str) -> Option<T> {
    let body = strip_fence(text);
    if !body.starts_with('{') || !body.ends_with('}') {
        return None;
    }
    serde_json::from_str(body).ok()
}

pub fn parse_generation_output(text: &str) -> Result<GeneratedFragment, SynthError> {
    parse_json_object(text).ok_or_else(|| SynthError::MalformedGeneration { raw: text.to_string() })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionVerdict {
    pub valid: bool,
    pub reason: String,
}

pub fn parse_judge_output(text: &str) -> Result<QuestionVerdict, SynthError> {
    parse_json_object(text).ok_or_else(|| SynthError::MalformedJudge { raw: text.to_string() })
}

pub fn validate_question_llm(
    path: &PathSpec,
    question: &str,
    judge: &dyn LlmClient,
    max_tokens: usize,
) -> Result<QuestionVerdict, SynthError> {
    let prompt = build_judge_prompt(path, question);
    let raw = judge.complete(&[ChatMessage::user(prompt)], max_tokens)?;
    parse_judge_output(&raw)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "detail", rename_all = "snake_case")]
pub enum AttemptOutcome {
    Malformed(String),
    InvalidPath(String),
    Rejected(String),
    Accepted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttemptRecord {
    pub feedback: Option<GenerationFeedback>,
    pub outcome: AttemptOutcome,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedReport {
    pub seed: String,
    pub hop_category: HopCategory,
    pub attempts: Vec<AttemptRecord>,
    pub accepted: Option<QuestionSpec>,
    pub error: Option<String>,
}

impl SeedReport {
    pub fn retries(&self) -> usize {
        self.attempts.len().saturating_sub(1)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthOutcome {
    pub seeds: Vec<SeedReport>,
}

impl SynthOutcome {
    /// Accepted specs in seed order.
    pub fn specs(&self) -> Vec<QuestionSpec> {
        self.seeds.iter().filter_map(|s| s.accepted.clone()).collect()
    }

    pub fn failures(&self) -> impl Iterator<Item = &SeedReport> {
        self.seeds.iter().filter(|s| s.accepted.is_none())
    }
}

/// Runs generation and validation for one seed, retrying with feedback.
pub fn synthesize_seed(
    graph: &KnowledgeGraph,
    seed: &str,
    category: HopCategory,
    config: &SynthConfig,
    generator: &dyn LlmClient,
    judge: &dyn LlmClient,
) -> SeedReport {
    let mut report = SeedReport {
        seed: seed.to_string(),
        hop_category: category,
        attempts: Vec::new(),
        accepted: None,
        error: None,
    };
    let relations = match graph.bfs_subgraph(seed, config.depth) {
        Ok(sub) => sub.render_relations(),
        Err(e) => {
            report.error = Some(e.to_string());
            return report;
        }
    };
    let mut feedback: Option<GenerationFeedback> = None;
    for _ in 0..=config.max_retries {
        let prompt = build_generation_prompt(&relations, category, feedback.as_ref());
        let raw = match generator.complete(&[ChatMessage::user(prompt)], config.max_tokens) {
            Ok(raw) => raw,
            Err(e) => {
                report.error = Some(e.to_string());
                return report;
            }
        };
        let used = feedback.clone();
        let fragment = match parse_generation_output(&raw) {
            Ok(f) => f,
            Err(e) => {
                report.attempts.push(AttemptRecord {
                    feedback: used,
                    outcome: AttemptOutcome::Malformed(e.to_string()),
                });
                continue;
            }
        };
        let verdict = graph.validate_path(&fragment.path, &fragment.answer);
        let path_problem = if !verdict.valid {
            Some(format!("invalid path: {}", verdict.reason_text()))
        } else if !category.accepts(fragment.path.len()) {
            Some(format!(
                "invalid path: {} nodes does not fit a {} question",
                fragment.path.len(),
                category
            ))
        } else {
            None
        };
        if let Some(problem) = path_problem {
            feedback = Some(GenerationFeedback {
                previous_path: fragment.path,
                previous_question: fragment.question,
                path_valid: false,
                question_feedback: problem.clone(),
            });
            report.attempts.push(AttemptRecord {
                feedback: used,
                outcome: AttemptOutcome::InvalidPath(problem),
            });
            continue;
        }
        let path = PathSpec::new(fragment.path.clone()).expect("validated path has two nodes");
        let judged = match validate_question_llm(&path, &fragment.question, judge, config.max_tokens) {
            Ok(v) => v,
            Err(SynthError::MalformedJudge { raw }) => QuestionVerdict {
                valid: false,
                reason: format!("judge output unreadable: {raw}"),
            },
            Err(e) => {
                report.error = Some(e.to_string());
                return report;
            }
        };
        if !judged.valid {
            feedback = Some(GenerationFeedback {
                previous_path: fragment.path,
                previous_question: fragment.question,
                path_valid: true,
                question_feedback: judged.reason.clone(),
            });
            report.attempts.push(AttemptRecord {
                feedback: used,
                outcome: AttemptOutcome::Rejected(judged.reason),
            });
            continue;
        }
        report.attempts.push(AttemptRecord {
            feedback: used,
            outcome: AttemptOutcome::Accepted,
        });
        report.accepted = Some(QuestionSpec {
            path,
            question: fragment.question,
            answer: fragment.answer,
            hop_category: category,
            graph_type: graph.id().clone(),
        });
        return report;
    }
    report.error = Some(format!("no valid question after {} attempts", report.attempts.len()));
    report
}

/// Samples seeds for each category and synthesizes one question per seed.
/// Seeds are processed in order; failures are reported, never fatal.
pub fn synthesize(
    graph: &KnowledgeGraph,
    config: &SynthConfig,
    generator: &dyn LlmClient,
    judge: &dyn LlmClient,
) -> Result<SynthOutcome, SynthError> {
    config.validate()?;
    let criteria = config.criteria();
    let mut outcome = SynthOutcome::default();
    for (i, category) in HopCategory::ALL.into_iter().enumerate() {
        let target = config.target(category);
        if target == 0 {
            continue;
        }
        let seeds = graph.sample_seed_nodes(&criteria, target, config.rng_seed.wrapping_add(i as u64));
        for seed in seeds {
            let report = synthesize_seed(graph, &seed, category, config, generator, judge);
            if let Some(e) = &report.error {
                tracing::warn!(seed = %report.seed, category = %category, error = %e, "seed dropped");
            }
            outcome.seeds.push(report);
        }
    }
    Ok(outcome)
}
