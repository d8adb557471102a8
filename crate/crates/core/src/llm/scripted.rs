use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{BackendError, BackendProvider, BackendRequest, LlmBackend};

#[derive(Debug, Error)]
pub enum ScriptError {
    #[error("cannot read script {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse script {path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid script `{conversation}`: {reason}")]
    Invalid { conversation: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MatchRule {
    Exact(String),
    Substring(String),
    SequenceIndex(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawEntry", into = "RawEntry")]
pub struct ScriptEntry {
    pub rule: MatchRule,
    pub response: String,
}

impl ScriptEntry {
    pub fn at(index: usize, response: impl Into<String>) -> Self {
        Self {
            rule: MatchRule::SequenceIndex(index),
            response: response.into(),
        }
    }

    pub fn containing(pattern: impl Into<String>, response: impl Into<String>) -> Self {
        Self {
            rule: MatchRule::Substring(pattern.into()),
            response: response.into(),
        }
    }

    pub fn exact(pattern: impl Into<String>, response: impl Into<String>) -> Self {
        Self {
            rule: MatchRule::Exact(pattern.into()),
            response: response.into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    exact: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    contains: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    index: Option<usize>,
    response: String,
}

impl TryFrom<RawEntry> for ScriptEntry {
    type Error = String;

    fn try_from(raw: RawEntry) -> Result<Self, Self::Error> {
        let rule = match (raw.exact, raw.contains, raw.index) {
            (Some(p), None, None) => MatchRule::Exact(p),
            (None, Some(p), None) => MatchRule::Substring(p),
            (None, None, Some(i)) => MatchRule::SequenceIndex(i),
            _ => return Err("entry needs exactly one of `exact`, `contains`, `index`".into()),
        };
        Ok(ScriptEntry {
            rule,
            response: raw.response,
        })
    }
}

impl From<ScriptEntry> for RawEntry {
    fn from(entry: ScriptEntry) -> Self {
        let mut raw = RawEntry {
            exact: None,
            contains: None,
            index: None,
            response: entry.response,
        };
        match entry.rule {
            MatchRule::Exact(p) => raw.exact = Some(p),
            MatchRule::Substring(p) => raw.contains = Some(p),
            MatchRule::SequenceIndex(i) => raw.index = Some(i),
        }
        raw
    }
}

/// Ordered entries; the first entry matching a request wins.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Script {
    pub entries: Vec<ScriptEntry>,
}

impl Script {
    pub fn new(entries: Vec<ScriptEntry>) -> Self {
        Self { entries }
    }

    /// Responses returned in order, one per request.
    pub fn sequence<I, S>(responses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::new(
            responses
                .into_iter()
                .enumerate()
                .map(|(i, r)| ScriptEntry::at(i, r))
                .collect(),
        )
    }

    /// Sequence indices must be unique and dense from zero.
    pub fn validate(&self) -> Result<(), String> {
        let mut indices: Vec<usize> = self
            .entries
            .iter()
            .filter_map(|e| match e.rule {
                MatchRule::SequenceIndex(i) => Some(i),
                _ => None,
            })
            .collect();
        indices.sort_unstable();
        for (expected, got) in indices.iter().enumerate() {
            if *got != expected {
                return Err(format!(
                    "sequence indices must be dense from 0 without repeats, found {indices:?}"
                ));
            }
        }
        Ok(())
    }

    fn lookup(&self, seq: usize, text: &str, vars: &BTreeMap<String, String>) -> Option<&ScriptEntry> {
        self.entries.iter().find(|entry| match &entry.rule {
            MatchRule::SequenceIndex(i) => *i == seq,
            MatchRule::Exact(p) => fill_template(p, vars, text) == text,
            MatchRule::Substring(p) => text.contains(&fill_template(p, vars, text)),
        })
    }
}

/// Identifies one conversation: an agent role applied to a subject (a drug or
/// category), optionally an outcome, optionally a trial index.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ConversationKey {
    pub role: String,
    pub subject: String,
    pub outcome: Option<String>,
    pub trial: Option<u32>,
    pub category: Option<String>,
}

impl ConversationKey {
    pub fn new(role: &str, subject: &str) -> Self {
        Self {
            role: role.to_string(),
            subject: subject.to_string(),
            outcome: None,
            trial: None,
            category: None,
        }
    }

    pub fn with_outcome(mut self, outcome: &str) -> Self {
        self.outcome = Some(outcome.to_string());
        self
    }

    pub fn with_trial(mut self, trial: u32) -> Self {
        self.trial = Some(trial);
        self
    }

    pub fn with_category(mut self, category: &str) -> Self {
        self.category = Some(category.to_string());
        self
    }

    /// Human-readable label, `role|subject|outcome`.
    pub fn label(&self) -> String {
        format!(
            "{}|{}|{}",
            self.role,
            self.subject,
            self.outcome.as_deref().unwrap_or("*")
        )
    }

    /// Script keys to try, most specific first.
    pub fn candidates(&self) -> Vec<String> {
        let subject = normalize_key_part(&self.subject);
        let outcome = self.outcome.as_deref().map(normalize_key_part);
        let role = normalize_key_part(&self.role);
        let mut out = Vec::new();
        let trials: Vec<Option<u32>> = match self.trial {
            Some(t) => vec![Some(t), None],
            None => vec![None],
        };
        for trial in trials {
            let suffix = trial.map(|t| format!("#t{t}")).unwrap_or_default();
            for s in [subject.as_str(), "*"] {
                let outcomes: Vec<&str> = match &outcome {
                    Some(o) => vec![o.as_str(), "*"],
                    None => vec!["*"],
                };
                for o in outcomes {
                    out.push(format!("{role}|{s}|{o}{suffix}"));
                }
            }
        }
        out.dedup();
        out
    }

    fn vars(&self) -> BTreeMap<String, String> {
        let mut vars = BTreeMap::new();
        vars.insert("subject".into(), self.subject.clone());
        vars.insert("SUBJECT".into(), self.subject.to_uppercase());
        if let Some(o) = &self.outcome {
            vars.insert("outcome".into(), o.clone());
        }
        if let Some(c) = &self.category {
            vars.insert("category".into(), c.clone());
        }
        if let Some(t) = self.trial {
            vars.insert("trial".into(), t.to_string());
        }
        vars
    }
}

fn normalize_key_part(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// Replaces `${name}` placeholders. `${incoming}` is the latest turn verbatim
/// and `${incoming_json}` the same text escaped for a JSON string body.
/// Unknown placeholders are left untouched.
fn fill_template(template: &str, vars: &BTreeMap<String, String>, incoming: &str) -> String {
    if !template.contains("${") {
        return template.to_string();
    }
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(start) = rest.find("${") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let Some(end) = after.find('}') else {
            out.push_str(&rest[start..]);
            return out;
        };
        let name = &after[..end];
        match name {
            "incoming" => out.push_str(incoming),
            "incoming_json" => {
                let quoted = serde_json::to_string(incoming).expect("string serializes");
                out.push_str(&quoted[1..quoted.len() - 1]);
            }
            _ => match vars.get(name) {
                Some(v) => out.push_str(v),
                None => out.push_str(&rest[start..start + 2 + end + 1]),
            },
        }
        rest = &after[end + 1..];
    }
    out.push_str(rest);
    out
}

/// Deterministic backend: a pure function of the script, the request's
/// sequence number and the latest turn's text.
#[derive(Debug)]
pub struct ScriptedBackend {
    script: Arc<Script>,
    vars: BTreeMap<String, String>,
    next: AtomicUsize,
}

impl ScriptedBackend {
    pub fn new(script: Script) -> Self {
        Self::with_key(Arc::new(script), None)
    }

    pub fn with_key(script: Arc<Script>, key: Option<&ConversationKey>) -> Self {
        Self {
            script,
            vars: key.map(ConversationKey::vars).unwrap_or_default(),
            next: AtomicUsize::new(0),
        }
    }

    /// Number of requests seen so far.
    pub fn requests(&self) -> usize {
        self.next.load(Ordering::SeqCst)
    }
}

impl LlmBackend for ScriptedBackend {
    fn complete(&self, request: &BackendRequest) -> Result<Option<String>, BackendError> {
        let seq = self.next.fetch_add(1, Ordering::SeqCst);
        let text = request.last_text();
        Ok(self
            .script
            .lookup(seq, text, &self.vars)
            .map(|entry| fill_template(&entry.response, &self.vars, text)))
    }
}

/// A collection of scripts keyed by conversation pattern
/// (`role|subject|outcome`, with `*` wildcards and optional `#t<n>` trial
/// suffix).
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ScriptBook {
    #[serde(default)]
    pub conversations: BTreeMap<String, Script>,
}

impl ScriptBook {
    pub fn from_json(text: &str, origin: &str) -> Result<Self, ScriptError> {
        let raw: ScriptBook = serde_json::from_str(text).map_err(|source| ScriptError::Parse {
            path: origin.to_string(),
            source,
        })?;
        let mut book = ScriptBook::default();
        for (key, script) in raw.conversations {
            script.validate().map_err(|reason| ScriptError::Invalid {
                conversation: key.clone(),
                reason,
            })?;
            book.conversations.insert(normalize_pattern(&key), script);
        }
        Ok(book)
    }

    pub fn load(path: &Path) -> Result<Self, ScriptError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScriptError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text, &path.display().to_string())
    }

    pub fn insert(&mut self, pattern: &str, script: Script) {
        self.conversations.insert(normalize_pattern(pattern), script);
    }

    pub fn find(&self, key: &ConversationKey) -> Option<&Script> {
        key.candidates()
            .iter()
            .find_map(|candidate| self.conversations.get(candidate))
    }
}

fn normalize_pattern(pattern: &str) -> String {
    let (body, trial) = match pattern.rsplit_once("#t") {
        Some((body, t)) if t.chars().all(|c| c.is_ascii_digit()) && !t.is_empty() => (body, format!("#t{t}")),
        _ => (pattern, String::new()),
    };
    let mut parts: Vec<String> = body.split('|').map(normalize_key_part).collect();
    while parts.len() < 3 {
        parts.push("*".into());
    }
    format!("{}{}", parts.join("|"), trial)
}

impl BackendProvider for ScriptBook {
    fn backend_for(&self, key: &ConversationKey) -> Arc<dyn LlmBackend> {
        let script = self.find(key).cloned().unwrap_or_default();
        Arc::new(ScriptedBackend::with_key(Arc::new(script), Some(key)))
    }
}
