use std::time::Duration;

use log::{debug, warn};
use parking_lot::{Condvar, Mutex};
use serde_json::{json, Value};

use super::{BackendError, BackendRequest, LlmBackend, Role};
use crate::message::ToolCall;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    /// Attempts after the first one.
    pub max_retries: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 5,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(30),
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `attempt` (1-based): `base * 2^(attempt-1)`,
    /// capped at `max_delay`.
    pub fn delay(&self, attempt: u32) -> Duration {
        let factor = 2u32.saturating_pow(attempt.saturating_sub(1));
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }
}

#[derive(Debug, Clone)]
pub struct ClientConfig {
    /// Endpoint root, e.g. `https://api.openai.com/v1`.
    pub base_url: String,
    pub api_key: Option<String>,
    pub model: String,
    pub timeout: Duration,
    pub max_concurrency: usize,
    pub retry: RetryPolicy,
    /// Send tool schemas in the request `tools` field. Native tool calls in the
    /// reply are rewritten into the textual `FUNC:` form either way.
    pub native_tools: bool,
}

impl Default for ClientConfig {
    fn default() -> Self {
        Self {
            base_url: "https://api.openai.com/v1".into(),
            api_key: None,
            model: "gpt-4-turbo".into(),
            timeout: Duration::from_secs(120),
            max_concurrency: 4,
            retry: RetryPolicy::default(),
            native_tools: false,
        }
    }
}

impl ClientConfig {
    /// Reads `MALADE_API_KEY` (falling back to `OPENAI_API_KEY`),
    /// `MALADE_BASE_URL` and `MALADE_MODEL` on top of the defaults.
    pub fn from_env() -> Self {
        let mut cfg = Self {
            api_key: std::env::var("MALADE_API_KEY")
                .or_else(|_| std::env::var("OPENAI_API_KEY"))
                .ok()
                .filter(|k| !k.is_empty()),
            ..Self::default()
        };
        if let Ok(url) = std::env::var("MALADE_BASE_URL") {
            cfg.base_url = url;
        }
        if let Ok(model) = std::env::var("MALADE_MODEL") {
            cfg.model = model;
        }
        cfg
    }
}

struct Semaphore {
    permits: Mutex<usize>,
    freed: Condvar,
}

impl Semaphore {
    fn new(n: usize) -> Self {
        Self {
            permits: Mutex::new(n.max(1)),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut permits = self.permits.lock();
        while *permits == 0 {
            self.freed.wait(&mut permits);
        }
        *permits -= 1;
        Permit(self)
    }
}

struct Permit<'a>(&'a Semaphore);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.permits.lock() += 1;
        self.0.freed.notify_one();
    }
}

/// Blocking client for an OpenAI-style `/chat/completions` endpoint.
pub struct ChatCompletionsClient {
    config: ClientConfig,
    http: reqwest::blocking::Client,
    gate: Semaphore,
}

enum Attempt {
    Done(Option<String>),
    Retry { status: Option<u16>, message: String },
    Fail { status: Option<u16>, message: String },
}

impl ChatCompletionsClient {
    pub fn new(config: ClientConfig) -> Result<Self, BackendError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| BackendError::fatal(format!("cannot build HTTP client: {e}")))?;
        let gate = Semaphore::new(config.max_concurrency);
        Ok(Self { config, http, gate })
    }

    pub fn config(&self) -> &ClientConfig {
        &self.config
    }

    fn body(&self, request: &BackendRequest) -> Value {
        let mut messages = vec![json!({"role": "system", "content": request.system_prompt})];
        for turn in &request.turns {
            let role = match turn.role {
                Role::User => "user",
                Role::Assistant => "assistant",
            };
            messages.push(json!({"role": role, "content": turn.content}));
        }
        let mut body = json!({
            "model": self.config.model,
            "messages": messages,
            "temperature": request.sampling.temperature,
            "max_tokens": request.sampling.max_tokens,
        });
        if let Some(seed) = request.sampling.seed {
            body["seed"] = json!(seed);
        }
        if self.config.native_tools && !request.tool_schemas.is_empty() {
            let tools: Vec<Value> = request.tool_schemas.iter().map(|t| t.to_function_json()).collect();
            body["tools"] = Value::Array(tools);
        }
        body
    }

    fn attempt(&self, body: &Value) -> Attempt {
        let url = format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'));
        let mut req = self.http.post(&url).json(body);
        if let Some(key) = &self.config.api_key {
            req = req.bearer_auth(key);
        }
        let response = match req.send() {
            Ok(r) => r,
            Err(e) if e.is_connect() || e.is_timeout() => {
                return Attempt::Retry {
                    status: None,
                    message: e.to_string(),
                }
            }
            Err(e) => {
                return Attempt::Fail {
                    status: None,
                    message: e.to_string(),
                }
            }
        };
        let status = response.status().as_u16();
        if status == 429 || (500..600).contains(&status) {
            let message = response.text().unwrap_or_default();
            return Attempt::Retry {
                status: Some(status),
                message,
            };
        }
        if !(200..300).contains(&status) {
            let message = response.text().unwrap_or_default();
            return Attempt::Fail {
                status: Some(status),
                message,
            };
        }
        match response.json::<Value>() {
            Ok(v) => match extract_reply(&v) {
                Ok(reply) => Attempt::Done(reply),
                Err(message) => Attempt::Fail {
                    status: Some(status),
                    message,
                },
            },
            Err(e) => Attempt::Fail {
                status: Some(status),
                message: format!("invalid response body: {e}"),
            },
        }
    }
}

/// Pulls the assistant text out of a completions response. A native tool call
/// is rewritten into the canonical `FUNC:` block; an empty reply is `None`.
pub(crate) fn extract_reply(response: &Value) -> Result<Option<String>, String> {
    let message = response
        .pointer("/choices/0/message")
        .ok_or_else(|| "response has no choices[0].message".to_string())?;
    if let Some(call) = message
        .get("tool_calls")
        .and_then(Value::as_array)
        .and_then(|calls| calls.first())
    {
        let function = call.get("function").ok_or("tool call without function")?;
        let name = function
            .get("name")
            .and_then(Value::as_str)
            .ok_or("tool call without name")?;
        let arguments = match function.get("arguments") {
            Some(Value::String(s)) if !s.trim().is_empty() => {
                serde_json::from_str::<Value>(s).map_err(|e| format!("tool arguments are not JSON: {e}"))?
            }
            Some(Value::Object(m)) => Value::Object(m.clone()),
            _ => json!({}),
        };
        let Value::Object(arguments) = arguments else {
            return Err("tool arguments are not an object".into());
        };
        let mut tool = ToolCall::new(name);
        tool.arguments = arguments;
        let prose = message.get("content").and_then(Value::as_str).unwrap_or("").trim();
        let rendered = tool.render();
        return Ok(Some(if prose.is_empty() {
            rendered
        } else {
            format!("{prose}\n{rendered}")
        }));
    }
    Ok(message
        .get("content")
        .and_then(Value::as_str)
        .filter(|s| !s.trim().is_empty())
        .map(str::to_string))
}

impl LlmBackend for ChatCompletionsClient {
    fn complete(&self, request: &BackendRequest) -> Result<Option<String>, BackendError> {
        let body = self.body(request);
        let _permit = self.gate.acquire();
        let policy = self.config.retry;
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.attempt(&body) {
                Attempt::Done(reply) => {
                    debug!("completion succeeded after {attempts} attempt(s)");
                    return Ok(reply);
                }
                Attempt::Fail { status, message } => {
                    return Err(BackendError {
                        status,
                        retriable: false,
                        attempts,
                        message,
                    })
                }
                Attempt::Retry { status, message } => {
                    if attempts > policy.max_retries {
                        return Err(BackendError {
                            status,
                            retriable: true,
                            attempts,
                            message,
                        });
                    }
                    let delay = policy.delay(attempts);
                    warn!("completion attempt {attempts} failed ({status:?}), retrying in {delay:?}");
                    std::thread::sleep(delay);
                }
            }
        }
    }
}
