//! The multi-turn reasoning loop: prompt assembly, strict parsing of
//! assistant output, tool dispatch and termination.

mod engine;
pub mod llm;
pub mod parse;
mod prompt;

pub use engine::{
    extract_final_answer, run_episode, unwrap_tool_response, wrap_tool_response, Episode, EpisodeError, EpisodeLimits,
    NoTools, Role, Termination, ToolExecutor, Turn, DEFAULT_MAX_ROUNDS, DEFAULT_MAX_TOKENS_PER_ROUND,
};
pub use llm::{ChatMessage, HttpLlmClient, LlmClient, LlmError, ScriptedClient};
pub use parse::{parse_assistant_output, parse_tool_call, Action, AssistantParse, ToolCall, ToolCallError, ToolName};
pub use prompt::{build_system_prompt, tools_block};
