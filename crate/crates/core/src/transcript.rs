//! Line-delimited JSON transcripts of task runs, plus a verifier that checks
//! the orchestration rules over a recorded trace.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::sync::Arc;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::message::{CriticVerdict, EntityKind, Message};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    Start,
    Input,
    Message,
    Null,
    End,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndReason {
    Done,
    InChargeNull,
    Quiescent,
    StepLimit,
}

impl EndReason {
    pub fn as_str(self) -> &'static str {
        match self {
            EndReason::Done => "done",
            EndReason::InChargeNull => "in_charge_null",
            EndReason::Quiescent => "quiescent",
            EndReason::StepLimit => "step_limit",
        }
    }
}

/// Message as it appears in a transcript; the tool call is kept in its
/// canonical rendered form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MessageRecord {
    pub sender: String,
    pub content: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_call: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recipient: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub control: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<CriticVerdict>,
}

impl From<&Message> for MessageRecord {
    fn from(m: &Message) -> Self {
        let mut control = Vec::new();
        if m.control.done {
            control.push("DONE".to_string());
        }
        if m.control.no_answer {
            control.push("NO_ANSWER".to_string());
        }
        let sender = match &m.sender {
            EntityKind::SubTask(name) => format!("SUBTASK:{name}"),
            other => other.to_string(),
        };
        Self {
            sender,
            content: m.content.clone(),
            tool_call: m.tool_call.as_ref().map(|t| t.render()),
            recipient: m.recipient.clone(),
            control,
            verdict: m.verdict,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    /// Logical timestamp, strictly increasing within one transcript.
    pub seq: u64,
    pub conversation: String,
    pub run: u64,
    pub task: String,
    pub kind: RecordKind,
    #[serde(default)]
    pub step: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub responder: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<MessageRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub in_charge: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub responders: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<EndReason>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time: Option<String>,
}

impl Record {
    fn bare(kind: RecordKind, task: &str, run: u64, step: u32) -> Self {
        Self {
            seq: 0,
            conversation: String::new(),
            run,
            task: task.to_string(),
            kind,
            step,
            responder: None,
            message: None,
            in_charge: None,
            responders: None,
            reason: None,
            wall_time: None,
        }
    }

    pub fn start(task: &str, run: u64, in_charge: &str, responders: Vec<String>) -> Self {
        Self {
            in_charge: Some(in_charge.to_string()),
            responders: Some(responders),
            ..Self::bare(RecordKind::Start, task, run, 0)
        }
    }

    pub fn input(task: &str, run: u64, message: &Message) -> Self {
        Self {
            message: Some(message.into()),
            ..Self::bare(RecordKind::Input, task, run, 0)
        }
    }

    pub fn message(task: &str, run: u64, step: u32, responder: &str, message: &Message) -> Self {
        Self {
            responder: Some(responder.to_string()),
            message: Some(message.into()),
            ..Self::bare(RecordKind::Message, task, run, step)
        }
    }

    pub fn null(task: &str, run: u64, step: u32, responder: &str) -> Self {
        Self {
            responder: Some(responder.to_string()),
            ..Self::bare(RecordKind::Null, task, run, step)
        }
    }

    pub fn end(task: &str, run: u64, step: u32, reason: EndReason) -> Self {
        Self {
            reason: Some(reason),
            ..Self::bare(RecordKind::End, task, run, step)
        }
    }
}

#[derive(Debug, Default)]
struct Inner {
    conversation: String,
    next_seq: u64,
    next_run: u64,
    wall_clock: bool,
    records: Vec<Record>,
}

/// Shared in-memory sink for one conversation's records.
#[derive(Debug, Clone, Default)]
pub struct Transcript {
    inner: Arc<Mutex<Inner>>,
}

impl Transcript {
    pub fn new(conversation: &str) -> Self {
        let t = Self::default();
        t.inner.lock().conversation = conversation.to_string();
        t
    }

    /// Stamp records with wall-clock time. Off by default so that scripted
    /// runs produce byte-identical files.
    pub fn with_wall_clock(self) -> Self {
        self.inner.lock().wall_clock = true;
        self
    }

    pub fn conversation(&self) -> String {
        self.inner.lock().conversation.clone()
    }

    pub fn next_run(&self) -> u64 {
        let mut inner = self.inner.lock();
        inner.next_run += 1;
        inner.next_run
    }

    pub fn push(&self, mut record: Record) {
        let mut inner = self.inner.lock();
        record.seq = inner.next_seq;
        inner.next_seq += 1;
        record.conversation = inner.conversation.clone();
        if inner.wall_clock {
            record.wall_time = Some(chrono::Utc::now().to_rfc3339());
        }
        inner.records.push(record);
    }

    pub fn records(&self) -> Vec<Record> {
        self.inner.lock().records.clone()
    }

    pub fn len(&self) -> usize {
        self.inner.lock().records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Error)]
pub enum TranscriptError {
    #[error("transcript I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("transcript is empty")]
    Empty,
}

pub fn write_jsonl<W: Write>(mut out: W, records: &[Record]) -> Result<(), TranscriptError> {
    for r in records {
        serde_json::to_writer(&mut out, r).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_jsonl<R: BufRead>(input: R) -> Result<Vec<Record>, TranscriptError> {
    let mut records = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|source| TranscriptError::Parse { line: i + 1, source })?;
        records.push(record);
    }
    if records.is_empty() {
        return Err(TranscriptError::Empty);
    }
    Ok(records)
}

/// Human-readable rendering of a transcript.
pub fn render_dialog(records: &[Record]) -> String {
    let mut out = String::new();
    for r in records {
        let indent = "  ";
        match r.kind {
            RecordKind::Start => out.push_str(&format!(
                "== [{}] task {} run {} (in charge: {})\n",
                r.conversation,
                r.task,
                r.run,
                r.in_charge.as_deref().unwrap_or("?")
            )),
            RecordKind::Input | RecordKind::Message => {
                let Some(m) = &r.message else { continue };
                let who = r.responder.as_deref().unwrap_or("input");
                out.push_str(&format!("{indent}[{} step {}] {} ({})", r.task, r.step, who, m.sender));
                if let Some(to) = &m.recipient {
                    out.push_str(&format!(" -> {to}"));
                }
                if let Some(v) = &m.verdict {
                    out.push_str(&format!(
                        " [critic round {}: {}{}]",
                        v.round,
                        if v.accepted { "accepted" } else { "rejected" },
                        if v.forced { ", forced" } else { "" }
                    ));
                }
                out.push('\n');
                for line in m.content.lines() {
                    out.push_str(&format!("{indent}{indent}{line}\n"));
                }
            }
            RecordKind::Null => out.push_str(&format!(
                "{indent}[{} step {}] {} gave no response\n",
                r.task,
                r.step,
                r.responder.as_deref().unwrap_or("?")
            )),
            RecordKind::End => out.push_str(&format!(
                "== end task {} run {} ({:?})\n",
                r.task,
                r.run,
                r.reason.unwrap_or(EndReason::Quiescent)
            )),
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub rule: char,
    pub seq: u64,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "rule ({}) violated at seq {}: {}", self.rule, self.seq, self.detail)
    }
}

/// Responder identifier that a recipient name routes to, if any.
fn routed_responder(recipient: &str, responders: &[String]) -> Option<String> {
    let wanted = recipient.trim().to_lowercase();
    responders
        .iter()
        .find(|r| r.strip_prefix("task:").is_some_and(|n| n.to_lowercase() == wanted))
        .cloned()
}

/// Re-checks the orchestration rules over every run in the trace:
/// (a) no responder produces two consecutive CPM updates; (b) a DONE message
/// ends the run; (c) a null response comes only from the responder in charge
/// and ends the run; (d) a message addressed to a responder is answered by
/// that responder. Structural problems (missing start or end) are reported
/// under rule `s`.
pub fn verify(records: &[Record]) -> Vec<Violation> {
    let mut runs: BTreeMap<(String, u64), Vec<&Record>> = BTreeMap::new();
    for r in records {
        runs.entry((r.conversation.clone(), r.run)).or_default().push(r);
    }
    let mut violations = Vec::new();
    for ((conversation, run), recs) in runs {
        let mut v = |rule: char, seq: u64, detail: String| {
            violations.push(Violation {
                rule,
                seq,
                detail: format!("[{conversation} run {run}] {detail}"),
            })
        };
        let Some(start) = recs.first().filter(|r| r.kind == RecordKind::Start) else {
            v('s', recs[0].seq, "run does not begin with a start record".into());
            continue;
        };
        let in_charge = start.in_charge.clone().unwrap_or_default();
        let responders = start.responders.clone().unwrap_or_default();
        let mut last_responder: Option<&str> = None;
        let mut pending_route: Option<String> = None;
        let mut terminal: Option<(u64, EndReason)> = None;
        let mut ended = false;
        for r in recs.iter().skip(1) {
            if ended {
                v('s', r.seq, "record after end of run".into());
                break;
            }
            if let Some((seq, reason)) = terminal {
                if r.kind != RecordKind::End {
                    let rule = if reason == EndReason::Done { 'b' } else { 'c' };
                    v(
                        rule,
                        r.seq,
                        format!("run continued after terminating record at seq {seq}"),
                    );
                    terminal = None;
                }
            }
            match r.kind {
                RecordKind::Start => v('s', r.seq, "duplicate start record".into()),
                RecordKind::Input => {
                    pending_route = r
                        .message
                        .as_ref()
                        .and_then(|m| m.recipient.as_deref())
                        .and_then(|to| routed_responder(to, &responders));
                }
                RecordKind::Message => {
                    let who = r.responder.as_deref().unwrap_or("");
                    if last_responder == Some(who) {
                        v('a', r.seq, format!("responder `{who}` responded twice in a row"));
                    }
                    if let Some(route) = pending_route.take() {
                        if route != who {
                            v(
                                'd',
                                r.seq,
                                format!("message addressed to `{route}` was answered by `{who}`"),
                            );
                        }
                    }
                    last_responder = Some(who);
                    let m = r.message.as_ref();
                    pending_route = m
                        .and_then(|m| m.recipient.as_deref())
                        .and_then(|to| routed_responder(to, &responders));
                    if m.is_some_and(|m| m.control.iter().any(|c| c == "DONE")) {
                        terminal = Some((r.seq, EndReason::Done));
                    }
                }
                RecordKind::Null => {
                    let who = r.responder.as_deref().unwrap_or("");
                    if who != in_charge {
                        v(
                            'c',
                            r.seq,
                            format!("null response recorded for `{who}`, which is not in charge"),
                        );
                    }
                    terminal = Some((r.seq, EndReason::InChargeNull));
                }
                RecordKind::End => {
                    ended = true;
                    let reason = r.reason.unwrap_or(EndReason::Quiescent);
                    match (terminal, reason) {
                        (Some((_, EndReason::Done)), EndReason::Done) => {}
                        (Some((_, EndReason::InChargeNull)), EndReason::InChargeNull) => {}
                        (Some((seq, expected)), _) if reason != EndReason::StepLimit => {
                            let rule = if expected == EndReason::Done { 'b' } else { 'c' };
                            v(
                                rule,
                                r.seq,
                                format!("end reason {reason:?} does not match terminating record at seq {seq}"),
                            );
                        }
                        (None, EndReason::Done) => v('b', r.seq, "run ended as done without a DONE message".into()),
                        (None, EndReason::InChargeNull) => {
                            v('c', r.seq, "run ended on a null response that was not recorded".into())
                        }
                        _ => {}
                    }
                }
            }
        }
        if !ended {
            let last = recs.last().map(|r| r.seq).unwrap_or_default();
            v('s', last, "run has no end record".into());
        }
    }
    violations
}
