//! Agent-Critic pairing: a primary agent's `final_answer` is reviewed by a
//! critic sub-task until the critic accepts or the round cap forces acceptance.

use std::sync::Arc;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use crate::agent::{AgentError, ToolSpec};
use crate::message::{CriticVerdict, EntityKind, Message, ToolCall};
use crate::task::{TaskError, TaskHandle};
use crate::tool::{FieldKind, ToolField, ToolSchema};

pub const FINAL_ANSWER: &str = "final_answer";
pub const FEEDBACK: &str = "feedback";
pub const DEFAULT_MAX_ROUNDS: u32 = 5;

pub const ACCEPTED_TEXT: &str = "Your reasoning is valid, no feedback was provided.";
pub const RETRY_TEXT: &str =
    "If any flaws in the reasoning used to produce your answer were identified, you must try again.";
pub const FORCED_TEXT: &str = "The maximum number of feedback rounds was reached; your last answer is accepted.";
pub const NO_CRITIC_TEXT: &str = "Your answer is accepted.";

/// Review state shared between a primary agent's tools and its critic.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CritiqueState {
    pub rounds: u32,
    pub accepted: bool,
    pub forced: bool,
    pub max_rounds: u32,
    pub verdicts: Vec<CriticVerdict>,
}

#[derive(Debug, Clone)]
pub struct CritiqueLedger(Arc<Mutex<CritiqueState>>);

impl CritiqueLedger {
    pub fn new(max_rounds: u32) -> Self {
        Self(Arc::new(Mutex::new(CritiqueState {
            rounds: 0,
            accepted: false,
            forced: false,
            max_rounds: max_rounds.max(1),
            verdicts: Vec::new(),
        })))
    }

    pub fn snapshot(&self) -> CritiqueState {
        self.0.lock().clone()
    }

    pub fn is_accepted(&self) -> bool {
        self.0.lock().accepted
    }

    fn accept_without_review(&self) {
        self.0.lock().accepted = true;
    }

    /// Records one critic verdict. An empty critique accepts; a rejection in
    /// the final allowed round is turned into a forced acceptance.
    pub fn review(&self, critique: &str) -> CriticVerdict {
        let mut s = self.0.lock();
        s.rounds += 1;
        let verdict = if critique.trim().is_empty() {
            CriticVerdict {
                round: s.rounds,
                accepted: true,
                forced: false,
            }
        } else if s.rounds >= s.max_rounds {
            CriticVerdict {
                round: s.rounds,
                accepted: true,
                forced: true,
            }
        } else {
            CriticVerdict {
                round: s.rounds,
                accepted: false,
                forced: false,
            }
        };
        s.accepted = verdict.accepted;
        s.forced = verdict.forced;
        s.verdicts.push(verdict);
        verdict
    }
}

pub fn final_answer_schema() -> ToolSchema {
    ToolSchema::new(
        FINAL_ANSWER,
        "present your answer for review, with the question, your reasoning steps and the answer",
        vec![
            ToolField::required(
                "question",
                FieldKind::Text,
                "the question being answered, with any requirements",
            ),
            ToolField::required(
                "steps",
                FieldKind::TextList,
                "the reasoning steps used to derive the answer",
            ),
            ToolField::required("answer", FieldKind::Text, "the final answer"),
        ],
    )
}

pub fn feedback_schema() -> ToolSchema {
    ToolSchema::new(
        FEEDBACK,
        "give feedback on the answer; leave `critique` empty when the reasoning is valid",
        vec![ToolField::required(
            "critique",
            FieldKind::Text,
            "the flaws found, or the empty string to accept",
        )],
    )
}

/// Natural-language form of a `final_answer` call, as forwarded to the critic.
pub fn render_final_answer(call: &ToolCall) -> String {
    let question = call.str_arg("question").unwrap_or_default();
    let answer = call.str_arg("answer").unwrap_or_default();
    let steps: Vec<&str> = call
        .arguments
        .get("steps")
        .and_then(|v| v.as_array())
        .map(|items| items.iter().filter_map(|s| s.as_str()).collect())
        .unwrap_or_default();
    let mut out = format!("Question: {question}\n-----\nReasoning:\n");
    for (i, step) in steps.iter().enumerate() {
        out.push_str(&format!("{}. {}\n", i + 1, step));
    }
    out.push_str(&format!("-----\nFinal answer: {answer}"));
    out
}

/// Registers `final_answer` on the primary task's agent and, when a critic
/// is given, wires it up as a sub-task with the `feedback` tool. Without a
/// critic, `final_answer` is accepted immediately and no rounds are recorded.
pub fn attach_critic(
    primary: &TaskHandle,
    critic: Option<&TaskHandle>,
    ledger: &CritiqueLedger,
) -> Result<(), TaskError> {
    let agent_err = |task: &str, source: AgentError| TaskError::Agent {
        task: task.to_string(),
        source,
    };
    let route = critic.map(|c| c.name().to_string());
    let auto = ledger.clone();
    primary
        .lock()
        .agent_mut()
        .register_tool(ToolSpec::new(final_answer_schema(), move |call| {
            let summary = render_final_answer(call);
            Ok(Some(match &route {
                Some(to) => Message::new(EntityKind::Agent, summary).with_recipient(to.clone()),
                None => {
                    auto.accept_without_review();
                    Message::new(EntityKind::Agent, NO_CRITIC_TEXT)
                }
            }))
        }))
        .map_err(|e| agent_err(primary.name(), e))?;
    let Some(critic) = critic else {
        return Ok(());
    };
    let reviews = ledger.clone();
    critic
        .lock()
        .agent_mut()
        .register_tool(ToolSpec::new(feedback_schema(), move |call| {
            let critique = call.str_arg("critique").unwrap_or_default().trim().to_string();
            let verdict = reviews.review(&critique);
            let content = if critique.is_empty() {
                format!("{{DONE}} {ACCEPTED_TEXT}")
            } else if verdict.forced {
                format!("{{DONE}} Feedback: {critique}\n\n{FORCED_TEXT}")
            } else {
                format!("{{DONE}} Feedback: {critique}\n\n{RETRY_TEXT}")
            };
            let mut m = Message::new(EntityKind::Agent, content);
            m.verdict = Some(verdict);
            Ok(Some(m))
        }))
        .map_err(|e| agent_err(critic.name(), e))?;
    primary.add_sub_tasks(std::slice::from_ref(critic))
}

/// Corrective text sent when a submit tool is used before acceptance.
pub fn not_yet_accepted_message(tool: &str) -> String {
    format!(
        "Do not use `{tool}` yet. First present your answer with the `{FINAL_ANSWER}` tool and wait until the critic accepts it."
    )
}

/// Attaches `critic` to `primary` with a fresh ledger and runs `primary` on
/// `input`. Returns the primary's result and the final review state.
pub fn critique_loop(
    primary: &TaskHandle,
    critic: &TaskHandle,
    max_rounds: u32,
    input: &str,
) -> Result<(String, CritiqueState), TaskError> {
    let ledger = CritiqueLedger::new(max_rounds);
    attach_critic(primary, Some(critic), &ledger)?;
    let out = primary.run(input)?;
    Ok((out, ledger.snapshot()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::Agent;
    use crate::llm::{Script, ScriptedBackend};
    use crate::task::Task;

    fn handle(name: &str, responses: Vec<String>) -> TaskHandle {
        let backend = Arc::new(ScriptedBackend::new(Script::sequence(responses)));
        TaskHandle::new(Task::new(name, Agent::new(name, "test", backend)))
    }

    fn answer(n: usize) -> String {
        ToolCall::new(FINAL_ANSWER)
            .arg("question", "Q?")
            .arg("steps", vec![format!("step {n}")])
            .arg("answer", format!("answer {n}"))
            .render()
    }

    fn feedback(text: &str) -> String {
        ToolCall::new(FEEDBACK).arg("critique", text).render()
    }

    #[test]
    fn render_layout() {
        let call = ToolCall::new(FINAL_ANSWER)
            .arg("question", "Q?")
            .arg("steps", vec!["a", "b"])
            .arg("answer", "A");
        assert_eq!(
            render_final_answer(&call),
            "Question: Q?\n-----\nReasoning:\n1. a\n2. b\n-----\nFinal answer: A"
        );
    }

    #[test]
    fn accepts_in_first_round() {
        let primary = handle("Primary", vec![answer(1), "<DONE> final".into()]);
        let critic = handle("Critic", vec![feedback("")]);
        let (out, state) = critique_loop(&primary, &critic, 5, "Q?").unwrap();
        assert_eq!(out, "final");
        assert_eq!(state.rounds, 1);
        assert!(state.accepted && !state.forced);
    }

    #[test]
    fn cap_forces_acceptance() {
        let mut p: Vec<String> = (1..=5).map(answer).collect();
        p.push("<DONE> last".into());
        let primary = handle("Primary", p);
        let critic = handle("Critic", (0..10).map(|i| feedback(&format!("wrong {i}"))).collect());
        let (out, state) = critique_loop(&primary, &critic, 5, "Q?").unwrap();
        assert_eq!(out, "last");
        assert_eq!(state.rounds, 5);
        assert!(state.accepted && state.forced);
        assert_eq!(state.verdicts.iter().filter(|v| !v.accepted).count(), 4);
    }

    #[test]
    fn no_critic_auto_accepts() {
        let primary = handle("Primary", vec![answer(1), "<DONE> ok".into()]);
        let ledger = CritiqueLedger::new(5);
        attach_critic(&primary, None, &ledger).unwrap();
        assert_eq!(primary.run("Q?").unwrap(), "ok");
        let s = ledger.snapshot();
        assert!(s.accepted);
        assert_eq!(s.rounds, 0);
        assert!(s.verdicts.is_empty());
    }
}
