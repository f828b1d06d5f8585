//! Strict parsing of assistant turns.
//!
//! A well-formed turn is one `<think>` block followed by exactly one
//! `<tool_call>` or `<answer>` block, with only whitespace around them. Tool
//! calls use Python keyword-call syntax with string literal arguments:
//!
//! ```text
//! entity_matcher(node_name="Rational Grazing", graph_type="agriculture")
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::graph::GraphId;

pub const THINK_OPEN: &str = "<think>";
pub const THINK_CLOSE: &str = "</think>";
pub const TOOL_CALL_OPEN: &str = "<tool_call>";
pub const TOOL_CALL_CLOSE: &str = "</tool_call>";
pub const ANSWER_OPEN: &str = "<answer>";
pub const ANSWER_CLOSE: &str = "</answer>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolName {
    EntityMatcher,
    NodeInfo,
}

impl ToolName {
    pub const ALL: [ToolName; 2] = [ToolName::EntityMatcher, ToolName::NodeInfo];

    pub fn as_str(self) -> &'static str {
        match self {
            ToolName::EntityMatcher => "entity_matcher",
            ToolName::NodeInfo => "node_info",
        }
    }

    pub fn required_args(self) -> &'static [&'static str] {
        &["node_name", "graph_type"]
    }
}

impl fmt::Display for ToolName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ToolName {
    type Err = ToolCallError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ToolName::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| ToolCallError::UnknownFunction(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ToolCallError {
    #[error("bad tool call syntax at byte {position}: {message}")]
    BadSyntax { position: usize, message: String },
    #[error("unknown function '{0}'")]
    UnknownFunction(String),
    #[error("{function} is missing required argument '{arg}'")]
    MissingRequiredArg { function: ToolName, arg: &'static str },
    #[error("{function} does not accept argument '{arg}'")]
    UnknownArg { function: ToolName, arg: String },
    #[error("graph_type must be '{expected}', got '{found}'")]
    WrongGraphType { expected: String, found: String },
}

/// A parsed tool invocation. `args` keeps the order written by the model.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ToolCall {
    pub function: ToolName,
    pub args: Vec<(String, String)>,
}

impl ToolCall {
    pub fn new(function: ToolName, node_name: &str, graph_type: &str) -> Self {
        Self {
            function,
            args: vec![
                ("node_name".into(), node_name.into()),
                ("graph_type".into(), graph_type.into()),
            ],
        }
    }

    pub fn arg(&self, key: &str) -> Option<&str> {
        self.args.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn node_name(&self) -> Option<&str> {
        self.arg("node_name")
    }

    pub fn graph_type(&self) -> Option<&str> {
        self.arg("graph_type")
    }

    /// Function plus arguments sorted by key; argument order is not significant.
    pub fn canonical(&self) -> (ToolName, BTreeMap<&str, &str>) {
        (
            self.function,
            self.args.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect(),
        )
    }
}

impl fmt::Display for ToolCall {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.function)?;
        for (i, (k, v)) in self.args.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{k}=\"")?;
            for ch in v.chars() {
                match ch {
                    '"' => f.write_str("\\\"")?,
                    '\\' => f.write_str("\\\\")?,
                    '\n' => f.write_str("\\n")?,
                    '\t' => f.write_str("\\t")?,
                    '\r' => f.write_str("\\r")?,
                    c => write!(f, "{c}")?,
                }
            }
            f.write_str("\"")?;
        }
        f.write_str(")")
    }
}

struct Cursor<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn peek(&self) -> Option<char> {
        self.text[self.pos..].chars().next()
    }

    fn bump(&mut self) -> Option<char> {
        let ch = self.peek()?;
        self.pos += ch.len_utf8();
        Some(ch)
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.bump();
        }
    }

    fn error(&self, message: impl Into<String>) -> ToolCallError {
        ToolCallError::BadSyntax {
            position: self.pos,
            message: message.into(),
        }
    }

    fn expect(&mut self, want: char) -> Result<(), ToolCallError> {
        match self.peek() {
            Some(c) if c == want => {
                self.bump();
                Ok(())
            }
            Some(c) => Err(self.error(format!("expected '{want}', found '{c}'"))),
            None => Err(self.error(format!("expected '{want}', found end of input"))),
        }
    }

    fn identifier(&mut self) -> Result<&'a str, ToolCallError> {
        let start = self.pos;
        match self.peek() {
            Some(c) if c.is_ascii_alphabetic() || c == '_' => {
                self.bump();
            }
            _ => return Err(self.error("expected identifier")),
        }
        while self.peek().is_some_and(|c| c.is_ascii_alphanumeric() || c == '_') {
            self.bump();
        }
        Ok(&self.text[start..self.pos])
    }

    fn string_literal(&mut self) -> Result<String, ToolCallError> {
        let quote = match self.peek() {
            Some(q @ ('"' | '\'')) => q,
            _ => return Err(self.error("expected string literal")),
        };
        self.bump();
        let mut out = String::new();
        loop {
            match self.bump() {
                None => return Err(self.error("unterminated string literal")),
                Some(c) if c == quote => return Ok(out),
                Some('\\') => match self.bump() {
                    Some('n') => out.push('\n'),
                    Some('t') => out.push('\t'),
                    Some('r') => out.push('\r'),
                    Some(c @ ('"' | '\'' | '\\')) => out.push(c),
                    // unknown escapes are kept verbatim, as in Python
                    Some(c) => {
                        out.push('\\');
                        out.push(c);
                    }
                    None => return Err(self.error("unterminated string literal")),
                },
                Some(c) => out.push(c),
            }
        }
    }
}

/// Parses a Python-style keyword call. When `expected_graph` is given, the
/// `graph_type` argument must equal it.
pub fn parse_tool_call(text: &str, expected_graph: Option<&GraphId>) -> Result<ToolCall, ToolCallError> {
    let mut cur = Cursor { text, pos: 0 };
    cur.skip_ws();
    let name = cur.identifier()?;
    cur.skip_ws();
    cur.expect('(')?;
    let mut args: Vec<(String, String)> = Vec::new();
    loop {
        cur.skip_ws();
        if cur.peek() == Some(')') {
            cur.bump();
            break;
        }
        let key_pos = cur.pos;
        let key = cur.identifier()?;
        cur.skip_ws();
        cur.expect('=')?;
        cur.skip_ws();
        let value = cur.string_literal()?;
        if args.iter().any(|(k, _)| k == key) {
            return Err(ToolCallError::BadSyntax {
                position: key_pos,
                message: format!("duplicate keyword argument '{key}'"),
            });
        }
        args.push((key.to_string(), value));
        cur.skip_ws();
        match cur.bump() {
            Some(',') => continue,
            Some(')') => break,
            Some(c) => return Err(cur.error(format!("expected ',' or ')', found '{c}'"))),
            None => return Err(cur.error("expected ')'")),
        }
    }
    cur.skip_ws();
    if cur.pos != text.len() {
        return Err(cur.error("trailing characters after call"));
    }

    let function: ToolName = name.parse()?;
    if let Some((k, _)) = args
        .iter()
        .find(|(k, _)| !function.required_args().contains(&k.as_str()))
    {
        return Err(ToolCallError::UnknownArg {
            function,
            arg: k.clone(),
        });
    }
    for &required in function.required_args() {
        if !args.iter().any(|(k, _)| k == required) {
            return Err(ToolCallError::MissingRequiredArg {
                function,
                arg: required,
            });
        }
    }
    let call = ToolCall { function, args };
    if let Some(expected) = expected_graph {
        let found = call.graph_type().unwrap_or_default();
        if found != expected.as_str() {
            return Err(ToolCallError::WrongGraphType {
                expected: expected.to_string(),
                found: found.to_string(),
            });
        }
    }
    Ok(call)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Action {
    ToolCall(ToolCall),
    Answer(String),
    Malformed(String),
}

/// An assistant turn split into its reasoning and its action.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssistantParse {
    pub think: String,
    pub action: Action,
}

impl AssistantParse {
    fn malformed(think: &str, reason: impl Into<String>) -> Self {
        Self {
            think: think.to_string(),
            action: Action::Malformed(reason.into()),
        }
    }

    pub fn is_well_formed(&self) -> bool {
        !matches!(self.action, Action::Malformed(_))
    }

    pub fn tool_call(&self) -> Option<&ToolCall> {
        match &self.action {
            Action::ToolCall(c) => Some(c),
            _ => None,
        }
    }

    pub fn answer(&self) -> Option<&str> {
        match &self.action {
            Action::Answer(a) => Some(a),
            _ => None,
        }
    }

    /// Tag-form text for a well-formed parse; `None` for malformed ones.
    pub fn render(&self) -> Option<String> {
        match &self.action {
            Action::ToolCall(c) => Some(format!(
                "{THINK_OPEN}{}{THINK_CLOSE}\n{TOOL_CALL_OPEN}{c}{TOOL_CALL_CLOSE}",
                self.think
            )),
            Action::Answer(a) => Some(format!(
                "{THINK_OPEN}{}{THINK_CLOSE}\n{ANSWER_OPEN}{a}{ANSWER_CLOSE}",
                self.think
            )),
            Action::Malformed(_) => None,
        }
    }
}

/// Splits `s` (which starts with `open`) into the block body and the text
/// after `close`.
fn take_block<'a>(s: &'a str, open: &str, close: &str) -> Option<(&'a str, &'a str)> {
    let body = &s[open.len()..];
    let end = body.find(close)?;
    Some((&body[..end], &body[end + close.len()..]))
}

fn trailing_reason(tail: &str, block: &str) -> String {
    if tail.contains(TOOL_CALL_OPEN) {
        "multiple action blocks: only one tool call per turn".to_string()
    } else if tail.contains(ANSWER_OPEN) {
        "multiple action blocks".to_string()
    } else {
        format!("unexpected text after </{block}>")
    }
}

/// Parses one assistant message. `graph`, when given, is checked against the
/// tool call's `graph_type`.
pub fn parse_assistant_output(text: &str, graph: Option<&GraphId>) -> AssistantParse {
    let s = text.trim_start();
    if !s.starts_with(THINK_OPEN) {
        return AssistantParse::malformed("", "missing <think>");
    }
    let Some((think, rest)) = take_block(s, THINK_OPEN, THINK_CLOSE) else {
        return AssistantParse::malformed(&s[THINK_OPEN.len()..], "missing </think>");
    };
    if think.contains(THINK_OPEN) {
        return AssistantParse::malformed(think, "nested <think>");
    }
    let rest = rest.trim_start();

    if rest.starts_with(TOOL_CALL_OPEN) {
        let Some((body, tail)) = take_block(rest, TOOL_CALL_OPEN, TOOL_CALL_CLOSE) else {
            return AssistantParse::malformed(think, "missing </tool_call>");
        };
        if !tail.trim().is_empty() {
            return AssistantParse::malformed(think, trailing_reason(tail, "tool_call"));
        }
        match parse_tool_call(body.trim(), graph) {
            Ok(call) => AssistantParse {
                think: think.to_string(),
                action: Action::ToolCall(call),
            },
            Err(e) => AssistantParse::malformed(think, format!("invalid tool call: {e}")),
        }
    } else if rest.starts_with(ANSWER_OPEN) {
        let Some((body, tail)) = take_block(rest, ANSWER_OPEN, ANSWER_CLOSE) else {
            return AssistantParse::malformed(think, "missing </answer>");
        };
        if body.contains(ANSWER_OPEN) {
            return AssistantParse::malformed(think, "nested <answer>");
        }
        if !tail.trim().is_empty() {
            return AssistantParse::malformed(think, trailing_reason(tail, "answer"));
        }
        AssistantParse {
            think: think.to_string(),
            action: Action::Answer(body.to_string()),
        }
    } else if rest.is_empty() {
        AssistantParse::malformed(think, "missing <tool_call> or <answer>")
    } else {
        AssistantParse::malformed(think, "unexpected text after </think>")
    }
}

/// Contents of every complete `<answer>...</answer>` block in `text`, in order.
pub fn answer_blocks(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(start) = rest.find(ANSWER_OPEN) {
        let after = &rest[start + ANSWER_OPEN.len()..];
        match after.find(ANSWER_CLOSE) {
            Some(end) => {
                out.push(&after[..end]);
                rest = &after[end + ANSWER_CLOSE.len()..];
            }
            None => break,
        }
    }
    out
}
