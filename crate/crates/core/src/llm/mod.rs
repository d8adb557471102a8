//! Pluggable text-completion providers.
//!
//! [`ScriptedBackend`] answers from a fixed script and is what every offline
//! test and fixture run uses; [`ChatCompletionsClient`] talks to an
//! OpenAI-style HTTP endpoint.

mod http;
mod scripted;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tool::ToolSchema;

pub use http::{ChatCompletionsClient, ClientConfig, RetryPolicy};
pub use scripted::{ConversationKey, MatchRule, Script, ScriptBook, ScriptEntry, ScriptError, ScriptedBackend};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub role: Role,
    pub content: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sampling {
    pub temperature: f32,
    pub seed: Option<u64>,
    pub max_tokens: u32,
}

impl Default for Sampling {
    fn default() -> Self {
        Self {
            temperature: 0.2,
            seed: Some(42),
            max_tokens: 2048,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackendRequest {
    pub system_prompt: String,
    pub turns: Vec<Turn>,
    pub tool_schemas: Vec<ToolSchema>,
    pub sampling: Sampling,
}

impl BackendRequest {
    /// Content of the most recent turn, or the empty string.
    pub fn last_text(&self) -> &str {
        self.turns.last().map(|t| t.content.as_str()).unwrap_or("")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("backend error (status {status:?}, retriable {retriable}, attempts {attempts}): {message}")]
pub struct BackendError {
    pub status: Option<u16>,
    pub retriable: bool,
    pub attempts: u32,
    pub message: String,
}

impl BackendError {
    pub fn fatal(message: impl Into<String>) -> Self {
        Self {
            status: None,
            retriable: false,
            attempts: 0,
            message: message.into(),
        }
    }
}

pub trait LlmBackend: Send + Sync {
    /// Returns `Ok(None)` when the backend declines to answer (a scripted
    /// backend with no matching entry).
    fn complete(&self, request: &BackendRequest) -> Result<Option<String>, BackendError>;
}

/// Hands out a backend per conversation. Scripted providers build a fresh
/// backend (with its own sequence counter) for every key; a live provider
/// shares one client.
pub trait BackendProvider: Send + Sync {
    fn backend_for(&self, key: &ConversationKey) -> Arc<dyn LlmBackend>;
}

/// Provider that returns the same backend for every conversation.
pub struct SharedBackend(pub Arc<dyn LlmBackend>);

impl BackendProvider for SharedBackend {
    fn backend_for(&self, _key: &ConversationKey) -> Arc<dyn LlmBackend> {
        Arc::clone(&self.0)
    }
}
