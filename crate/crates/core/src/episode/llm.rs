//! Chat-completion clients.

use std::collections::HashMap;
use std::io::BufRead;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: &str, content: impl Into<String>) -> Self {
        Self {
            role: role.to_string(),
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self::new("user", content)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LlmError {
    #[error("llm transport error: {0}")]
    Transport(String),
    #[error("bad llm response: {0}")]
    BadResponse(String),
    #[error("script exhausted: {0}")]
    ScriptExhausted(String),
    #[error("script line {line}: {message}")]
    Script { line: usize, message: String },
}

/// One assistant message per call, given the running transcript.
/// Implementations must tolerate concurrent calls.
pub trait LlmClient: Send + Sync {
    fn complete(&self, messages: &[ChatMessage], max_tokens: usize) -> Result<String, LlmError>;
}

impl<T: LlmClient + ?Sized> LlmClient for &T {
    fn complete(&self, messages: &[ChatMessage], max_tokens: usize) -> Result<String, LlmError> {
        (**self).complete(messages, max_tokens)
    }
}

impl<T: LlmClient + ?Sized> LlmClient for std::sync::Arc<T> {
    fn complete(&self, messages: &[ChatMessage], max_tokens: usize) -> Result<String, LlmError> {
        (**self).complete(messages, max_tokens)
    }
}

#[derive(Serialize)]
struct CompletionRequest<'a> {
    messages: &'a [ChatMessage],
    max_tokens: usize,
}

#[derive(Deserialize)]
struct CompletionResponse {
    content: String,
}

/// HTTP client: `POST {"messages": [..], "max_tokens": n}` returning
/// `{"content": ".."}`.
#[derive(Debug, Clone)]
pub struct HttpLlmClient {
    endpoint: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpLlmClient {
    pub fn new(endpoint: impl Into<String>, api_key: Option<String>) -> Result<Self, LlmError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(600))
            .build()
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        Ok(Self {
            endpoint: endpoint.into(),
            api_key,
            client,
        })
    }

    /// Reads `LLM_ENDPOINT` and the optional `LLM_API_KEY`.
    pub fn from_env() -> Option<Result<Self, LlmError>> {
        let endpoint = std::env::var("LLM_ENDPOINT").ok().filter(|s| !s.is_empty())?;
        let key = std::env::var("LLM_API_KEY").ok().filter(|s| !s.is_empty());
        Some(Self::new(endpoint, key))
    }
}

impl LlmClient for HttpLlmClient {
    fn complete(&self, messages: &[ChatMessage], max_tokens: usize) -> Result<String, LlmError> {
        let mut req = self
            .client
            .post(&self.endpoint)
            .json(&CompletionRequest { messages, max_tokens });
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req
            .send()
            .and_then(reqwest::blocking::Response::error_for_status)
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        let body: CompletionResponse = resp.json().map_err(|e| LlmError::BadResponse(e.to_string()))?;
        Ok(body.content)
    }
}

/// Keeps the prefix of `text` holding its first `max_tokens`
/// whitespace-separated pieces.
pub fn truncate_to_tokens(text: &str, max_tokens: usize) -> &str {
    let mut pieces = 0;
    let mut in_piece = false;
    let mut last_end = 0;
    for (i, ch) in text.char_indices() {
        if ch.is_whitespace() {
            if in_piece {
                in_piece = false;
                last_end = i;
            }
        } else if !in_piece {
            if pieces == max_tokens {
                return &text[..last_end];
            }
            in_piece = true;
            pieces += 1;
        }
    }
    text
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum ScriptLine {
    Bare(String),
    Keyed {
        content: String,
        #[serde(default)]
        question: Option<String>,
    },
}

#[derive(Debug)]
enum ScriptMode {
    /// Reply index = number of assistant messages already in the transcript;
    /// the script is chosen by the first user message.
    Transcript {
        default: Vec<String>,
        by_question: HashMap<String, Vec<String>>,
    },
    /// Replies handed out in call order.
    Sequential { replies: Vec<String>, next: AtomicUsize },
}

/// Replays canned assistant messages. Once a script runs out its last
/// message is repeated. Output is cut to `max_tokens` whitespace pieces.
#[derive(Debug)]
pub struct ScriptedClient {
    mode: ScriptMode,
}

impl ScriptedClient {
    /// One script shared by every conversation.
    pub fn new(replies: Vec<String>) -> Self {
        Self {
            mode: ScriptMode::Transcript {
                default: replies,
                by_question: HashMap::new(),
            },
        }
    }

    /// Per-question scripts, keyed by the first user message, with a fallback.
    pub fn keyed(default: Vec<String>, by_question: HashMap<String, Vec<String>>) -> Self {
        Self {
            mode: ScriptMode::Transcript { default, by_question },
        }
    }

    /// Replies in global call order, ignoring the transcript. Useful for
    /// single-prompt generators that are retried.
    pub fn sequential(replies: Vec<String>) -> Self {
        Self {
            mode: ScriptMode::Sequential {
                replies,
                next: AtomicUsize::new(0),
            },
        }
    }

    /// Reads a JSONL replay file. Each line is either a JSON string or
    /// `{"content": "..", "question": ".."}`; lines without `question` form
    /// the shared script.
    pub fn from_jsonl<R: BufRead>(reader: R) -> Result<Self, LlmError> {
        let mut default = Vec::new();
        let mut by_question: HashMap<String, Vec<String>> = HashMap::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| LlmError::Script {
                line: i + 1,
                message: e.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: ScriptLine = serde_json::from_str(&line).map_err(|e| LlmError::Script {
                line: i + 1,
                message: e.to_string(),
            })?;
            match parsed {
                ScriptLine::Bare(content)
                | ScriptLine::Keyed {
                    content,
                    question: None,
                } => default.push(content),
                ScriptLine::Keyed {
                    content,
                    question: Some(q),
                } => by_question.entry(q).or_default().push(content),
            }
        }
        Ok(Self::keyed(default, by_question))
    }

    /// Reads a JSONL replay file as a [`ScriptedClient::sequential`] script;
    /// `question` keys are ignored.
    pub fn sequential_from_jsonl<R: BufRead>(reader: R) -> Result<Self, LlmError> {
        let mut replies = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| LlmError::Script {
                line: i + 1,
                message: e.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: ScriptLine = serde_json::from_str(&line).map_err(|e| LlmError::Script {
                line: i + 1,
                message: e.to_string(),
            })?;
            replies.push(match parsed {
                ScriptLine::Bare(content) | ScriptLine::Keyed { content, .. } => content,
            });
        }
        Ok(Self::sequential(replies))
    }

    fn pick(replies: &[String], index: usize) -> Option<&String> {
        replies.get(index).or_else(|| replies.last())
    }
}

impl LlmClient for ScriptedClient {
    fn complete(&self, messages: &[ChatMessage], max_tokens: usize) -> Result<String, LlmError> {
        let reply = match &self.mode {
            ScriptMode::Transcript { default, by_question } => {
                let question = messages
                    .iter()
                    .find(|m| m.role == "user")
                    .map(|m| m.content.as_str())
                    .unwrap_or_default();
                let script = by_question.get(question).unwrap_or(default);
                let index = messages.iter().filter(|m| m.role == "assistant").count();
                Self::pick(script, index)
                    .ok_or_else(|| LlmError::ScriptExhausted(format!("no reply for '{question}'")))?
            }
            ScriptMode::Sequential { replies, next } => {
                let index = next.fetch_add(1, Ordering::SeqCst);
                Self::pick(replies, index).ok_or_else(|| LlmError::ScriptExhausted("empty script".into()))?
            }
        };
        Ok(truncate_to_tokens(reply, max_tokens).to_string())
    }
}
