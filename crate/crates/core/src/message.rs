//! Message, entity, tool-call and control-marker vocabulary shared by agents
//! and tasks.

use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

/// Prefix that introduces a structured tool block in model output.
pub const TOOL_PREFIX: &str = "FUNC:";
pub const DONE: &str = "DONE";
pub const NO_ANSWER: &str = "NO_ANSWER";

/// Who produced a message.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "task")]
pub enum EntityKind {
    Llm,
    User,
    Agent,
    SubTask(String),
}

impl fmt::Display for EntityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EntityKind::Llm => f.write_str("LLM"),
            EntityKind::User => f.write_str("USER"),
            EntityKind::Agent => f.write_str("AGENT"),
            EntityKind::SubTask(name) => write!(f, "SUBTASK({name})"),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Control {
    pub done: bool,
    pub no_answer: bool,
}

/// A parsed structured action request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    pub name: String,
    /// The `to` field of the wire format.
    #[serde(rename = "to", default)]
    pub recipient_hint: String,
    #[serde(default)]
    pub arguments: Map<String, Value>,
}

impl ToolCall {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            recipient_hint: String::new(),
            arguments: Map::new(),
        }
    }

    pub fn arg(mut self, key: impl Into<String>, value: impl Into<Value>) -> Self {
        self.arguments.insert(key.into(), value.into());
        self
    }

    pub fn str_arg(&self, key: &str) -> Option<&str> {
        self.arguments.get(key).and_then(Value::as_str)
    }

    /// Canonical serialization: `FUNC: ` followed by the pretty-printed object.
    pub fn render(&self) -> String {
        let body = serde_json::to_string_pretty(self).expect("tool call serializes");
        format!("{TOOL_PREFIX} {body}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed tool call: {0}")]
pub struct MalformedTool(pub String);

/// Outcome of a critic review, attached to the message that carries it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CriticVerdict {
    pub round: u32,
    pub accepted: bool,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub forced: bool,
}

/// One entity-attributed conversational turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub sender: EntityKind,
    pub content: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_call: Option<ToolCall>,
    /// Set when the content held a tool block that failed to parse.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub malformed_tool: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recipient: Option<String>,
    #[serde(default)]
    pub control: Control,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<CriticVerdict>,
}

impl Message {
    /// Builds a message, scanning the content for control markers.
    pub fn new(sender: EntityKind, content: impl Into<String>) -> Self {
        let content = content.into();
        let control = scan_control_markers(&content);
        Self {
            sender,
            content,
            tool_call: None,
            malformed_tool: None,
            recipient: None,
            control,
            verdict: None,
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self::new(EntityKind::User, content)
    }

    /// Builds an LLM message, parsing any tool block in the content.
    pub fn from_llm(content: impl Into<String>) -> Self {
        let mut msg = Self::new(EntityKind::Llm, content);
        match parse_tool_call(&msg.content) {
            Ok(Some(call)) => {
                if !call.recipient_hint.is_empty() {
                    msg.recipient = Some(call.recipient_hint.clone());
                }
                msg.tool_call = Some(call);
            }
            Ok(None) => {}
            Err(err) => msg.malformed_tool = Some(err.0),
        }
        msg
    }

    pub fn with_recipient(mut self, recipient: impl Into<String>) -> Self {
        self.recipient = Some(recipient.into());
        self
    }

    pub fn is_done(&self) -> bool {
        self.control.done
    }
}

fn marker_regex(token: &str) -> Regex {
    // Word characters include `_`, so NO_ANSWER never matches inside NO_ANSWERS
    // and DONE never matches inside ABANDONED.
    Regex::new(&format!(r"(^|[^A-Za-z0-9_]){token}($|[^A-Za-z0-9_])")).expect("valid marker regex")
}

fn done_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| marker_regex(DONE))
}

fn no_answer_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| marker_regex(NO_ANSWER))
}

/// Detects the DONE and NO_ANSWER markers as whole tokens. `{DONE}`, `<DONE>`
/// and a bare `DONE` word all count.
pub fn scan_control_markers(text: &str) -> Control {
    Control {
        done: done_re().is_match(text),
        no_answer: no_answer_re().is_match(text),
    }
}

/// Removes every DONE marker (`{DONE}`, `<DONE>`, bare `DONE`) and trims the
/// result. NO_ANSWER is content, not control flow, so it stays.
pub fn strip_done_markers(text: &str) -> String {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"\{DONE\}|<DONE>|\bDONE\b").expect("valid strip regex"));
    re.replace_all(text, "").trim().to_string()
}

/// Extracts the single `FUNC:` block from model output.
///
/// Returns `Ok(None)` when no block is present, and an error when a block is
/// present but cannot be parsed, lacks a `name`, or when more than one block
/// appears.
pub fn parse_tool_call(text: &str) -> Result<Option<ToolCall>, MalformedTool> {
    let mut blocks = text.match_indices(TOOL_PREFIX);
    let Some((start, _)) = blocks.next() else {
        return Ok(None);
    };
    if blocks.next().is_some() {
        return Err(MalformedTool("more than one tool block in a single message".into()));
    }
    let rest = text[start + TOOL_PREFIX.len()..].trim_start();
    let mut stream = serde_json::Deserializer::from_str(rest).into_iter::<Value>();
    let value = match stream.next() {
        Some(Ok(v)) => v,
        Some(Err(e)) => return Err(MalformedTool(format!("invalid JSON: {e}"))),
        None => return Err(MalformedTool("empty tool block".into())),
    };
    let Value::Object(mut obj) = value else {
        return Err(MalformedTool("tool block is not a JSON object".into()));
    };
    let name = match obj.remove("name") {
        Some(Value::String(s)) if !s.trim().is_empty() => s,
        Some(_) => return Err(MalformedTool("`name` must be a non-empty string".into())),
        None => return Err(MalformedTool("missing `name`".into())),
    };
    let recipient_hint = match obj.remove("to") {
        None | Some(Value::Null) => String::new(),
        Some(Value::String(s)) => s,
        Some(_) => return Err(MalformedTool("`to` must be a string".into())),
    };
    let arguments = match obj.remove("arguments") {
        None | Some(Value::Null) => Map::new(),
        Some(Value::Object(m)) => m,
        Some(_) => return Err(MalformedTool("`arguments` must be an object".into())),
    };
    Ok(Some(ToolCall {
        name,
        recipient_hint,
        arguments,
    }))
}

/// Ordered conversation turns plus the pinned system prompt.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ChatHistory {
    system_prompt: String,
    messages: Vec<Message>,
}

impl ChatHistory {
    pub fn new(system_prompt: impl Into<String>) -> Self {
        Self {
            system_prompt: system_prompt.into(),
            messages: Vec::new(),
        }
    }

    pub fn system_prompt(&self) -> &str {
        &self.system_prompt
    }

    pub fn push(&mut self, message: Message) {
        self.messages.push(message);
    }

    pub fn messages(&self) -> &[Message] {
        &self.messages
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }
}
