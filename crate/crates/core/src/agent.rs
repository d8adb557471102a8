//! Agents: message transformers with LLM, tool and user responders.

use std::collections::VecDeque;
use std::io::BufRead;
use std::sync::Arc;

use thiserror::Error;

use crate::llm::{BackendError, BackendRequest, LlmBackend, Role, Sampling, Turn};
use crate::message::{ChatHistory, EntityKind, Message, ToolCall};
use crate::tool::{render_tool_section, ToolSchema};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("tool `{0}` is already registered")]
    DuplicateTool(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// What a tool handler hands back: a reply for the task, nothing, or an error
/// message that is turned into a corrective message for the LLM.
pub type ToolResult = Result<Option<Message>, String>;

pub type ToolHandler = Box<dyn FnMut(&ToolCall) -> ToolResult + Send>;

/// Called by `agent_respond` for messages without a tool call.
pub type FallbackHandler = Box<dyn FnMut(&Message) -> Option<Message> + Send>;

pub struct ToolSpec {
    pub schema: ToolSchema,
    pub handler: ToolHandler,
}

impl ToolSpec {
    pub fn new<F>(schema: ToolSchema, handler: F) -> Self
    where
        F: FnMut(&ToolCall) -> ToolResult + Send + 'static,
    {
        Self {
            schema,
            handler: Box::new(handler),
        }
    }
}

/// Source of user input for `user_respond`.
pub enum UserInput {
    Disabled,
    Scripted(VecDeque<String>),
    Console,
}

impl UserInput {
    pub fn scripted<I, S>(lines: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        UserInput::Scripted(lines.into_iter().map(Into::into).collect())
    }

    fn next(&mut self) -> Option<String> {
        match self {
            UserInput::Disabled => None,
            UserInput::Scripted(lines) => lines.pop_front(),
            UserInput::Console => {
                let mut line = String::new();
                match std::io::stdin().lock().read_line(&mut line) {
                    Ok(0) | Err(_) => None,
                    Ok(_) => Some(line),
                }
            }
        }
    }
}

pub fn malformed_tool_message(reason: &str) -> String {
    format!(
        "Your tool request could not be parsed ({reason}). Send exactly one FUNC block whose JSON object has a non-empty `name`, a `to` string and an `arguments` object."
    )
}

pub fn unknown_tool_message(name: &str, registered: &[&str]) -> String {
    let list = if registered.is_empty() {
        "none".to_string()
    } else {
        registered
            .iter()
            .map(|n| format!("`{n}`"))
            .collect::<Vec<_>>()
            .join(", ")
    };
    format!("There is no tool named `{name}`. Available tools: {list}.")
}

pub fn tool_failed_message(name: &str, reason: &str) -> String {
    format!("The `{name}` tool could not be completed: {reason}. Please correct the request and try again.")
}

fn agent_message(content: String) -> Message {
    Message::new(EntityKind::Agent, content)
}

pub struct Agent {
    name: String,
    history: ChatHistory,
    tools: Vec<ToolSpec>,
    fallback: Option<FallbackHandler>,
    backend: Arc<dyn LlmBackend>,
    user: UserInput,
    sampling: Sampling,
    max_turns: Option<usize>,
}

impl Agent {
    pub fn new(name: &str, system_prompt: &str, backend: Arc<dyn LlmBackend>) -> Self {
        Self {
            name: name.to_string(),
            history: ChatHistory::new(system_prompt),
            tools: Vec::new(),
            fallback: None,
            backend,
            user: UserInput::Disabled,
            sampling: Sampling::default(),
            max_turns: None,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn history(&self) -> &ChatHistory {
        &self.history
    }

    pub fn with_user_input(mut self, user: UserInput) -> Self {
        self.user = user;
        self
    }

    pub fn with_sampling(mut self, sampling: Sampling) -> Self {
        self.sampling = sampling;
        self
    }

    /// Only the most recent `n` turns are sent to the backend.
    pub fn with_max_turns(mut self, n: usize) -> Self {
        self.max_turns = Some(n);
        self
    }

    pub fn set_fallback<F>(&mut self, handler: F)
    where
        F: FnMut(&Message) -> Option<Message> + Send + 'static,
    {
        self.fallback = Some(Box::new(handler));
    }

    pub fn register_tool(&mut self, spec: ToolSpec) -> Result<(), AgentError> {
        if self.has_tool(&spec.schema.name) {
            return Err(AgentError::DuplicateTool(spec.schema.name));
        }
        self.tools.push(spec);
        Ok(())
    }

    pub fn has_tool(&self, name: &str) -> bool {
        self.tools.iter().any(|t| t.schema.name == name)
    }

    pub fn tool_schemas(&self) -> Vec<ToolSchema> {
        self.tools.iter().map(|t| t.schema.clone()).collect()
    }

    /// System prompt with the tool section appended.
    pub fn system_prompt(&self) -> String {
        let section = render_tool_section(&self.tool_schemas());
        if section.is_empty() {
            self.history.system_prompt().to_string()
        } else {
            format!("{}\n\n{}", self.history.system_prompt().trim_end(), section)
        }
    }

    fn request_with(&self, incoming: &Message) -> BackendRequest {
        let mut turns: Vec<Turn> = self
            .history
            .messages()
            .iter()
            .chain(std::iter::once(incoming))
            .map(|m| Turn {
                role: if m.sender == EntityKind::Llm {
                    Role::Assistant
                } else {
                    Role::User
                },
                content: m.content.clone(),
            })
            .collect();
        if let Some(n) = self.max_turns {
            let drop = turns.len().saturating_sub(n.max(1));
            turns.drain(..drop);
        }
        BackendRequest {
            system_prompt: self.system_prompt(),
            turns,
            tool_schemas: self.tool_schemas(),
            sampling: self.sampling,
        }
    }

    /// Asks the backend for a reply. History grows by the incoming message
    /// and the reply; a declined request leaves it untouched.
    pub fn llm_respond(&mut self, incoming: &Message) -> Result<Option<Message>, AgentError> {
        let request = self.request_with(incoming);
        let Some(text) = self.backend.complete(&request)? else {
            return Ok(None);
        };
        let reply = Message::from_llm(text);
        self.history.push(incoming.clone());
        self.history.push(reply.clone());
        Ok(Some(reply))
    }

    /// Dispatches a tool call carried by `incoming`. Malformed, unknown and
    /// failing calls produce corrective messages.
    pub fn agent_respond(&mut self, incoming: &Message) -> Option<Message> {
        if let Some(reason) = &incoming.malformed_tool {
            return Some(agent_message(malformed_tool_message(reason)));
        }
        let Some(call) = &incoming.tool_call else {
            let fallback = self.fallback.as_mut()?;
            return fallback(incoming).map(Self::as_agent);
        };
        let Some(tool) = self.tools.iter_mut().find(|t| t.schema.name == call.name) else {
            let names: Vec<&str> = self.tools.iter().map(|t| t.schema.name.as_str()).collect();
            return Some(agent_message(unknown_tool_message(&call.name, &names)));
        };
        if let Err(reason) = tool.schema.validate(call) {
            return Some(agent_message(tool_failed_message(&call.name, &reason)));
        }
        match (tool.handler)(call) {
            Ok(reply) => reply.map(Self::as_agent),
            Err(reason) => Some(agent_message(tool_failed_message(&call.name, &reason))),
        }
    }

    pub fn user_respond(&mut self, _incoming: &Message) -> Option<Message> {
        let line = self.user.next()?;
        let line = line.trim();
        (!line.is_empty()).then(|| Message::user(line))
    }

    fn as_agent(mut message: Message) -> Message {
        message.sender = EntityKind::Agent;
        message
    }
}
