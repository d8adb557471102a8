//! Tasks: run an agent's responders (and sub-tasks) over a current pending
//! message until the task is done.

use std::fmt;
use std::sync::Arc;

use log::warn;
use parking_lot::{Mutex, MutexGuard};
use thiserror::Error;

use crate::agent::{Agent, AgentError};
use crate::message::{strip_done_markers, EntityKind, Message};
use crate::transcript::{EndReason, Record, Transcript};

pub const DEFAULT_MAX_STEPS: u32 = 64;

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("task `{task}` exceeded its step limit of {limit}")]
    StepLimitExceeded { task: String, limit: u32 },
    #[error("adding `{child}` under `{parent}` would create a delegation cycle")]
    CycleDetected { parent: String, child: String },
    #[error("task `{task}`: {source}")]
    Agent {
        task: String,
        #[source]
        source: AgentError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Responder {
    Agent,
    Llm,
    User,
    /// Index into the task's sub-task list.
    SubTask(usize),
}

pub type ResultFilter = Box<dyn Fn(&str) -> String + Send>;

pub struct Task {
    name: String,
    agent: Agent,
    subtasks: Vec<TaskHandle>,
    max_steps: u32,
    in_charge: Responder,
    transcript: Option<Transcript>,
    result_filter: Option<ResultFilter>,
    cpm: Option<Message>,
    last_responder: Option<Responder>,
    done: bool,
    steps: u32,
    run: u64,
    end_reason: Option<EndReason>,
}

impl fmt::Debug for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Task")
            .field("name", &self.name)
            .field("subtasks", &self.subtasks.len())
            .field("done", &self.done)
            .field("steps", &self.steps)
            .finish()
    }
}

impl Task {
    pub fn new(name: &str, agent: Agent) -> Self {
        Self {
            name: name.to_string(),
            agent,
            subtasks: Vec::new(),
            max_steps: DEFAULT_MAX_STEPS,
            in_charge: Responder::Llm,
            transcript: None,
            result_filter: None,
            cpm: None,
            last_responder: None,
            done: false,
            steps: 0,
            run: 0,
            end_reason: None,
        }
    }

    pub fn with_max_steps(mut self, max_steps: u32) -> Self {
        self.max_steps = max_steps;
        self
    }

    pub fn with_in_charge(mut self, responder: Responder) -> Self {
        self.in_charge = responder;
        self
    }

    /// Applied to the task's result text (after DONE markers are stripped).
    pub fn with_result_filter<F>(mut self, filter: F) -> Self
    where
        F: Fn(&str) -> String + Send + 'static,
    {
        self.result_filter = Some(Box::new(filter));
        self
    }

    pub fn with_transcript(mut self, transcript: Transcript) -> Self {
        self.transcript = Some(transcript);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn agent(&self) -> &Agent {
        &self.agent
    }

    pub fn agent_mut(&mut self) -> &mut Agent {
        &mut self.agent
    }

    pub fn cpm(&self) -> Option<&Message> {
        self.cpm.as_ref()
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn steps(&self) -> u32 {
        self.steps
    }

    pub fn last_responder(&self) -> Option<Responder> {
        self.last_responder
    }

    pub fn end_reason(&self) -> Option<EndReason> {
        self.end_reason
    }

    /// Responders in the order they are tried: the agent's native trio, then
    /// sub-tasks in registration order.
    pub fn responders(&self) -> Vec<Responder> {
        let mut all = vec![Responder::Agent, Responder::Llm, Responder::User];
        all.extend((0..self.subtasks.len()).map(Responder::SubTask));
        all
    }

    pub fn responder_id(&self, r: Responder) -> String {
        match r {
            Responder::Agent => "agent".into(),
            Responder::Llm => "llm".into(),
            Responder::User => "user".into(),
            Responder::SubTask(i) => format!("task:{}", self.subtasks[i].name()),
        }
    }

    fn record(&self, record: Record) {
        if let Some(t) = &self.transcript {
            t.push(record);
        }
    }

    fn route(&self, recipient: &str) -> Option<Responder> {
        let wanted = recipient.trim().to_lowercase();
        let found = self
            .subtasks
            .iter()
            .position(|s| s.name().to_lowercase() == wanted)
            .map(Responder::SubTask);
        if found.is_none() {
            warn!(
                "task `{}`: recipient `{recipient}` is not a responder, ignoring route",
                self.name
            );
        }
        found
    }

    fn finish(&mut self, reason: EndReason) {
        self.done = true;
        self.end_reason = Some(reason);
    }

    fn invoke(&mut self, r: Responder, cpm: &Message) -> Result<Option<Message>, TaskError> {
        match r {
            Responder::Agent => Ok(self.agent.agent_respond(cpm)),
            Responder::Llm => self.agent.llm_respond(cpm).map_err(|source| TaskError::Agent {
                task: self.name.clone(),
                source,
            }),
            Responder::User => Ok(self.agent.user_respond(cpm)),
            Responder::SubTask(i) => {
                let sub = self.subtasks[i].clone();
                sub.run_message(Message::user(cpm.content.clone()))
            }
        }
    }

    /// Tries responders in order until one produces a valid response.
    pub fn step(&mut self) -> Result<(), TaskError> {
        if self.done {
            return Ok(());
        }
        if self.steps >= self.max_steps {
            self.finish(EndReason::StepLimit);
            self.record(Record::end(&self.name, self.run, self.steps, EndReason::StepLimit));
            return Err(TaskError::StepLimitExceeded {
                task: self.name.clone(),
                limit: self.max_steps,
            });
        }
        self.steps += 1;
        let cpm = self.cpm.clone().unwrap_or_else(|| Message::user(""));
        let candidates = match cpm.recipient.as_deref().and_then(|to| self.route(to)) {
            Some(r) => vec![r],
            None => self.responders(),
        };
        for r in candidates {
            if self.last_responder == Some(r) {
                continue;
            }
            match self.invoke(r, &cpm)? {
                Some(reply) => {
                    self.record(Record::message(
                        &self.name,
                        self.run,
                        self.steps,
                        &self.responder_id(r),
                        &reply,
                    ));
                    if reply.control.done {
                        self.finish(EndReason::Done);
                    }
                    self.cpm = Some(reply);
                    self.last_responder = Some(r);
                    return Ok(());
                }
                None if r == self.in_charge => {
                    self.record(Record::null(&self.name, self.run, self.steps, &self.responder_id(r)));
                    self.finish(EndReason::InChargeNull);
                    return Ok(());
                }
                None => {}
            }
        }
        self.finish(EndReason::Quiescent);
        Ok(())
    }

    fn run_inner(&mut self, input: Message) -> Result<(), TaskError> {
        self.run = self
            .transcript
            .as_ref()
            .map(Transcript::next_run)
            .unwrap_or(self.run + 1);
        self.cpm = Some(input.clone());
        self.last_responder = None;
        self.done = false;
        self.steps = 0;
        self.end_reason = None;
        let ids = self.responders().into_iter().map(|r| self.responder_id(r)).collect();
        self.record(Record::start(
            &self.name,
            self.run,
            &self.responder_id(self.in_charge),
            ids,
        ));
        self.record(Record::input(&self.name, self.run, &input));
        while !self.done {
            self.step()?;
        }
        let reason = self.end_reason.unwrap_or(EndReason::Quiescent);
        self.record(Record::end(&self.name, self.run, self.steps, reason));
        Ok(())
    }

    fn result_text(&self) -> String {
        let raw = self.cpm.as_ref().map(|m| m.content.as_str()).unwrap_or("");
        let stripped = strip_done_markers(raw);
        match &self.result_filter {
            Some(f) => f(&stripped),
            None => stripped,
        }
    }

    /// Runs the task on `input` and returns the final CPM content with DONE
    /// markers removed. Agent history carries over between runs.
    pub fn run(&mut self, input: &str) -> Result<String, TaskError> {
        self.run_inner(Message::user(input))?;
        Ok(self.result_text())
    }

    /// Runs as a responder of a parent task. `None` when no responder of this
    /// task produced anything.
    pub fn run_message(&mut self, input: Message) -> Result<Option<Message>, TaskError> {
        self.run_inner(input)?;
        if self.last_responder.is_none() {
            return Ok(None);
        }
        let mut result = Message::new(EntityKind::SubTask(self.name.clone()), self.result_text());
        result.verdict = self.cpm.as_ref().and_then(|m| m.verdict);
        Ok(Some(result))
    }
}

/// Shared handle to a task, used to build delegation trees.
#[derive(Clone)]
pub struct TaskHandle {
    inner: Arc<Mutex<Task>>,
    name: Arc<str>,
}

impl fmt::Debug for TaskHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("TaskHandle").field(&self.name).finish()
    }
}

impl TaskHandle {
    pub fn new(task: Task) -> Self {
        let name: Arc<str> = Arc::from(task.name.as_str());
        Self {
            inner: Arc::new(Mutex::new(task)),
            name,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn lock(&self) -> MutexGuard<'_, Task> {
        self.inner.lock()
    }

    fn same(&self, other: &TaskHandle) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner)
    }

    /// True when `target` is `self` or reachable through sub-task edges.
    fn reaches(&self, target: &TaskHandle) -> bool {
        let mut stack = vec![self.clone()];
        let mut seen: Vec<TaskHandle> = Vec::new();
        while let Some(node) = stack.pop() {
            if node.same(target) {
                return true;
            }
            if seen.iter().any(|s| s.same(&node)) {
                continue;
            }
            let children = node.lock().subtasks.clone();
            seen.push(node);
            stack.extend(children);
        }
        false
    }

    /// Appends each sub-task's run as a responder of this task.
    pub fn add_sub_tasks(&self, subs: &[TaskHandle]) -> Result<(), TaskError> {
        for sub in subs {
            if sub.reaches(self) {
                return Err(TaskError::CycleDetected {
                    parent: self.name().to_string(),
                    child: sub.name().to_string(),
                });
            }
        }
        self.lock().subtasks.extend(subs.iter().cloned());
        Ok(())
    }

    pub fn sub_tasks(&self) -> Vec<TaskHandle> {
        self.lock().subtasks.clone()
    }

    /// Points this task and every task below it at `transcript`.
    pub fn set_transcript(&self, transcript: &Transcript) {
        let subs = {
            let mut task = self.lock();
            task.transcript = Some(transcript.clone());
            task.subtasks.clone()
        };
        for sub in subs {
            sub.set_transcript(transcript);
        }
    }

    pub fn run(&self, input: &str) -> Result<String, TaskError> {
        self.lock().run(input)
    }

    pub fn run_message(&self, input: Message) -> Result<Option<Message>, TaskError> {
        self.lock().run_message(input)
    }
}
