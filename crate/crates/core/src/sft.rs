//! ShareGPT-style SFT samples built from answered episodes.
//!
//! The question is the first `human` message, every assistant turn (reasoning
//! plus its tool call or answer) is one `gpt` message, and each tool result is
//! an `observation` message holding the rendered text without transcript tags.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::episode::{
    build_system_prompt, parse_assistant_output, tools_block, unwrap_tool_response, Action, Episode, Role, Termination,
};
use crate::graph::GraphId;
use crate::synth::qa_id;

#[derive(Debug, thiserror::Error)]
pub enum SftError {
    #[error("episode ended with {0:?}, only answered episodes convert")]
    NotAnswered(Termination),
    #[error("episode has no golden or final answer")]
    NoAnswer,
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Speaker {
    Human,
    Gpt,
    Observation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub from: Speaker,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShareGptSample {
    pub id: String,
    pub graph_type: GraphId,
    pub question: String,
    pub golden_answer: String,
    pub conversations: Vec<Message>,
    pub tools: String,
    pub system: String,
}

impl ShareGptSample {
    pub fn count(&self, speaker: Speaker) -> usize {
        self.conversations.iter().filter(|m| m.from == speaker).count()
    }
}

pub fn episode_to_sharegpt(
    episode: &Episode,
    tools_schema: &str,
    system_prompt: &str,
) -> Result<ShareGptSample, SftError> {
    if episode.termination != Termination::Answered {
        return Err(SftError::NotAnswered(episode.termination));
    }
    let golden = episode
        .golden_answer
        .clone()
        .or_else(|| episode.final_answer.clone())
        .ok_or(SftError::NoAnswer)?;
    let mut conversations = vec![Message {
        from: Speaker::Human,
        value: episode.question.clone(),
    }];
    for turn in &episode.turns {
        let msg = match turn.role {
            Role::System | Role::User => continue,
            Role::Assistant => Message {
                from: Speaker::Gpt,
                value: turn.content.trim().to_string(),
            },
            Role::ToolResponse => Message {
                from: Speaker::Observation,
                value: unwrap_tool_response(&turn.content).to_string(),
            },
        };
        conversations.push(msg);
    }
    Ok(ShareGptSample {
        id: qa_id(episode.graph_type.as_str(), &episode.question, &golden),
        graph_type: episode.graph_type.clone(),
        question: episode.question.clone(),
        golden_answer: golden,
        conversations,
        tools: tools_schema.to_string(),
        system: system_prompt.to_string(),
    })
}

/// Converts with the standard tool block and system prompt for the episode's graph.
pub fn episode_to_sharegpt_default(episode: &Episode) -> Result<ShareGptSample, SftError> {
    episode_to_sharegpt(
        episode,
        &tools_block(&episode.graph_type),
        &build_system_prompt(&episode.graph_type),
    )
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleVerdict {
    pub valid: bool,
    pub violations: Vec<String>,
}

/// Checks every structural rule and reports all violations found.
pub fn validate_sharegpt(sample: &ShareGptSample) -> SampleVerdict {
    let mut violations = Vec::new();
    let conv = &sample.conversations;
    match conv.first() {
        None => violations.push("empty conversation".to_string()),
        Some(m) if m.from != Speaker::Human => {
            violations.push(format!("message 0 is from {:?}, expected human", m.from))
        }
        _ => {}
    }
    for (i, m) in conv.iter().enumerate() {
        let gpt_slot = i % 2 == 1;
        if gpt_slot != (m.from == Speaker::Gpt) {
            violations.push(format!("alternation violated at message {i} ({:?})", m.from));
        }
    }
    let gpt: Vec<(usize, &Message)> = conv
        .iter()
        .enumerate()
        .filter(|(_, m)| m.from == Speaker::Gpt)
        .collect();
    for (k, (i, m)) in gpt.iter().enumerate() {
        let parsed = parse_assistant_output(&m.value, Some(&sample.graph_type));
        match parsed.action {
            Action::Malformed(reason) => violations.push(format!("message {i}: {reason}")),
            Action::ToolCall(_) if k + 1 == gpt.len() => {
                violations.push(format!("message {i}: final gpt turn has no <answer>"))
            }
            _ => {}
        }
    }
    if gpt.is_empty() && !conv.is_empty() {
        violations.push("no gpt turn".to_string());
    }
    if conv.last().is_some_and(|m| m.from != Speaker::Gpt) {
        violations.push("conversation does not end with a gpt turn".to_string());
    }
    SampleVerdict {
        valid: violations.is_empty(),
        violations,
    }
}

pub fn to_json(samples: &[ShareGptSample]) -> String {
    let mut text = serde_json::to_string_pretty(samples).expect("samples serialize");
    text.push('\n');
    text
}

pub fn write_dataset(samples: &[ShareGptSample], path: impl AsRef<Path>) -> Result<(), SftError> {
    let path = path.as_ref();
    fs::write(path, to_json(samples)).map_err(|source| SftError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Vec<ShareGptSample>, SftError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| SftError::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| SftError::Parse {
        path: path.display().to_string(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}
