use serde::{Deserialize, Serialize};

use super::llm::{ChatMessage, LlmClient, LlmError};
use super::parse::{answer_blocks, parse_assistant_output, Action, AssistantParse, ToolCall};
use super::prompt::build_system_prompt;
use crate::graph::GraphId;

pub const DEFAULT_MAX_ROUNDS: usize = 7;
pub const DEFAULT_MAX_TOKENS_PER_ROUND: usize = 3000;

const TOOL_RESPONSE_OPEN: &str = "<tool_response>\n";
const TOOL_RESPONSE_CLOSE: &str = "\n</tool_response>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeLimits {
    /// Maximum number of dispatched tool calls.
    pub max_rounds: usize,
    /// Generation budget handed to the LLM client for each turn.
    pub max_tokens_per_round: usize,
}

impl Default for EpisodeLimits {
    fn default() -> Self {
        Self {
            max_rounds: DEFAULT_MAX_ROUNDS,
            max_tokens_per_round: DEFAULT_MAX_TOKENS_PER_ROUND,
        }
    }
}

impl EpisodeLimits {
    pub fn new(max_rounds: usize, max_tokens_per_round: usize) -> Result<Self, EpisodeError> {
        if max_rounds == 0 || max_tokens_per_round == 0 {
            return Err(EpisodeError::InvalidLimits);
        }
        Ok(Self {
            max_rounds,
            max_tokens_per_round,
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EpisodeError {
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("episode limits must be at least 1")]
    InvalidLimits,
    #[error("episode is not answered")]
    NotAnswered,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
    ToolResponse,
}

impl Role {
    /// Chat role sent to the model; tool responses travel as user messages.
    pub fn wire_role(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User | Role::ToolResponse => "user",
            Role::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub role: Role,
    pub content: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Answered,
    RoundCap,
    MalformedStop,
}

/// A complete multi-turn reasoning trace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Episode {
    pub graph_type: GraphId,
    pub question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub golden_answer: Option<String>,
    pub turns: Vec<Turn>,
    pub rounds_used: usize,
    pub termination: Termination,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_answer: Option<String>,
}

impl Episode {
    pub fn assistant_turns(&self) -> impl Iterator<Item = &str> {
        self.turns
            .iter()
            .filter(|t| t.role == Role::Assistant)
            .map(|t| t.content.as_str())
    }

    /// Re-parses every assistant turn against this episode's graph type.
    pub fn parsed_assistant_turns(&self) -> Vec<AssistantParse> {
        self.assistant_turns()
            .map(|t| parse_assistant_output(t, Some(&self.graph_type)))
            .collect()
    }

    /// Tool calls issued by the assistant, in order.
    pub fn tool_calls(&self) -> Vec<ToolCall> {
        self.parsed_assistant_turns()
            .into_iter()
            .filter_map(|p| match p.action {
                Action::ToolCall(c) => Some(c),
                _ => None,
            })
            .collect()
    }

    pub fn messages(&self) -> Vec<ChatMessage> {
        self.turns
            .iter()
            .map(|t| ChatMessage::new(t.role.wire_role(), t.content.clone()))
            .collect()
    }
}

/// Executes a tool call and renders the result for the model. Failures are
/// rendered as text; they never abort an episode.
pub trait ToolExecutor: Send + Sync {
    fn execute(&self, graph_type: &GraphId, call: &ToolCall) -> String;
}

impl<T: ToolExecutor + ?Sized> ToolExecutor for &T {
    fn execute(&self, graph_type: &GraphId, call: &ToolCall) -> String {
        (**self).execute(graph_type, call)
    }
}

impl<T: ToolExecutor + ?Sized> ToolExecutor for std::sync::Arc<T> {
    fn execute(&self, graph_type: &GraphId, call: &ToolCall) -> String {
        (**self).execute(graph_type, call)
    }
}

/// Executor with no graph backend; every call reports that.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoTools;

impl ToolExecutor for NoTools {
    fn execute(&self, graph_type: &GraphId, call: &ToolCall) -> String {
        format!(
            "Tool error: no tool backend available for {} on graph '{graph_type}'",
            call.function
        )
    }
}

pub fn wrap_tool_response(rendered: &str) -> String {
    format!("{TOOL_RESPONSE_OPEN}{rendered}{TOOL_RESPONSE_CLOSE}")
}

/// Inverse of [`wrap_tool_response`]; returns the input unchanged when it is
/// not wrapped.
pub fn unwrap_tool_response(content: &str) -> &str {
    content
        .strip_prefix(TOOL_RESPONSE_OPEN)
        .and_then(|s| s.strip_suffix(TOOL_RESPONSE_CLOSE))
        .unwrap_or(content)
}

/// Runs the think / act / observe loop until the model answers, emits a
/// malformed turn, or asks for a tool call beyond `limits.max_rounds`.
pub fn run_episode(
    question: &str,
    graph_type: &GraphId,
    golden_answer: Option<&str>,
    llm: &dyn LlmClient,
    tools: &dyn ToolExecutor,
    limits: EpisodeLimits,
) -> Result<Episode, EpisodeError> {
    let mut turns = vec![
        Turn {
            role: Role::System,
            content: build_system_prompt(graph_type),
        },
        Turn {
            role: Role::User,
            content: question.to_string(),
        },
    ];
    let mut messages: Vec<ChatMessage> = turns
        .iter()
        .map(|t| ChatMessage::new(t.role.wire_role(), t.content.clone()))
        .collect();
    let mut rounds_used = 0;

    let (termination, final_answer) = loop {
        let reply = llm.complete(&messages, limits.max_tokens_per_round)?;
        let parsed = parse_assistant_output(&reply, Some(graph_type));
        messages.push(ChatMessage::new(Role::Assistant.wire_role(), reply.clone()));
        turns.push(Turn {
            role: Role::Assistant,
            content: reply,
        });
        match parsed.action {
            Action::Answer(answer) => break (Termination::Answered, Some(answer)),
            Action::Malformed(_) => break (Termination::MalformedStop, None),
            Action::ToolCall(call) => {
                if rounds_used == limits.max_rounds {
                    break (Termination::RoundCap, None);
                }
                rounds_used += 1;
                let observation = wrap_tool_response(&tools.execute(graph_type, &call));
                messages.push(ChatMessage::new(Role::ToolResponse.wire_role(), observation.clone()));
                turns.push(Turn {
                    role: Role::ToolResponse,
                    content: observation,
                });
            }
        }
    };

    Ok(Episode {
        graph_type: graph_type.clone(),
        question: question.to_string(),
        golden_answer: golden_answer.map(str::to_string),
        turns,
        rounds_used,
        termination,
        final_answer,
    })
}

/// Content of the last complete `<answer>` block across assistant turns.
pub fn extract_final_answer(episode: &Episode) -> Option<String> {
    episode
        .assistant_turns()
        .flat_map(answer_blocks)
        .last()
        .map(str::to_string)
}
