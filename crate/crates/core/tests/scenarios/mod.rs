//! Scripted orchestration scenarios. Each one runs a small task tree on
//! scripted backends, checks the emitted trace, and returns it.
//!
//! Shared with the CLI acceptance suite, which also replays the traces.

#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use malade_core::agent::{Agent, ToolSpec, UserInput};
use malade_core::critic::{critique_loop, CritiqueState};
use malade_core::drugdata::{LabelSource, NdcDirectory, PrescriptionRates};
use malade_core::llm::{Script, ScriptBook, ScriptEntry, ScriptedBackend};
use malade_core::message::{EntityKind, Message};
use malade_core::pipeline::{Pipeline, PipelineSettings};
use malade_core::rag::{HashEmbedder, RagStore};
use malade_core::task::{Responder, Task, TaskError, TaskHandle};
use malade_core::tool::{FieldKind, ToolField, ToolSchema};
use malade_core::transcript::{verify, EndReason, Record, RecordKind, Transcript};

pub struct Scenario {
    pub name: &'static str,
    pub run: fn() -> Result<Vec<Record>, String>,
}

pub fn all() -> Vec<Scenario> {
    vec![
        Scenario {
            name: "done_marker_ends_run",
            run: done_marker_ends_run,
        },
        Scenario {
            name: "no_consecutive_responder",
            run: no_consecutive_responder,
        },
        Scenario {
            name: "in_charge_null_ends_run",
            run: in_charge_null_ends_run,
        },
        Scenario {
            name: "quiescent_pass_returns_cpm",
            run: quiescent_pass_returns_cpm,
        },
        Scenario {
            name: "recipient_routes_to_named_subtask",
            run: recipient_routes_to_named_subtask,
        },
        Scenario {
            name: "route_consumed_after_one_step",
            run: route_consumed_after_one_step,
        },
        Scenario {
            name: "subtask_order_is_declaration_order",
            run: subtask_order_is_declaration_order,
        },
        Scenario {
            name: "silent_subtask_falls_through",
            run: silent_subtask_falls_through,
        },
        Scenario {
            name: "subtask_done_does_not_end_parent",
            run: subtask_done_does_not_end_parent,
        },
        Scenario {
            name: "step_limit_stops_ping_pong",
            run: step_limit_stops_ping_pong,
        },
        Scenario {
            name: "malformed_tool_is_corrected",
            run: malformed_tool_is_corrected,
        },
        Scenario {
            name: "unknown_tool_lists_tools",
            run: unknown_tool_lists_tools,
        },
        Scenario {
            name: "user_in_charge",
            run: user_in_charge,
        },
        Scenario {
            name: "unknown_recipient_ignored",
            run: unknown_recipient_ignored,
        },
        Scenario {
            name: "critic_loop_reject_then_accept",
            run: critic_loop_reject_then_accept,
        },
        Scenario {
            name: "drug_agent_topology",
            run: drug_agent_topology,
        },
        Scenario {
            name: "identical_scripts_identical_traces",
            run: identical_scripts_identical_traces,
        },
    ]
}

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn ensure(cond: bool, what: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(what.into())
    }
}

fn agent(name: &str, responses: &[&str]) -> Agent {
    Agent::new(
        name,
        "You are a test agent.",
        Arc::new(ScriptedBackend::new(Script::sequence(responses.iter().copied()))),
    )
}

fn task(name: &str, responses: &[&str]) -> TaskHandle {
    TaskHandle::new(Task::new(name, agent(name, responses)))
}

fn echo_tool(name: &str, recipient: Option<&'static str>) -> ToolSpec {
    ToolSpec::new(
        ToolSchema::new(
            name,
            "echo the text",
            vec![ToolField::required("text", FieldKind::Text, "text")],
        ),
        move |call| {
            let m = Message::new(EntityKind::Agent, call.str_arg("text").unwrap_or_default());
            Ok(Some(match recipient {
                Some(to) => m.with_recipient(to),
                None => m,
            }))
        },
    )
}

fn run_traced(root: &TaskHandle, conversation: &str, input: &str) -> (Result<String, TaskError>, Vec<Record>) {
    let t = Transcript::new(conversation);
    root.set_transcript(&t);
    let result = root.run(input);
    (result, t.records())
}

/// Message records of `task`, as (responder, content) pairs.
fn steps(records: &[Record], task: &str) -> Vec<(String, String)> {
    records
        .iter()
        .filter(|r| r.kind == RecordKind::Message && r.task == task)
        .map(|r| {
            (
                r.responder.clone().unwrap_or_default(),
                r.message.as_ref().map(|m| m.content.clone()).unwrap_or_default(),
            )
        })
        .collect()
}

fn responders(records: &[Record], task: &str) -> Vec<String> {
    steps(records, task).into_iter().map(|(r, _)| r).collect()
}

fn end_reasons(records: &[Record], task: &str) -> Vec<EndReason> {
    records
        .iter()
        .filter(|r| r.kind == RecordKind::End && r.task == task)
        .filter_map(|r| r.reason)
        .collect()
}

fn verified(records: Vec<Record>) -> Result<Vec<Record>, String> {
    let v = verify(&records);
    ensure(v.is_empty(), format!("trace violations: {v:?}"))?;
    Ok(records)
}

fn done_marker_ends_run() -> Result<Vec<Record>, String> {
    let root = task("Main", &["thinking", "still thinking", "{DONE} 42"]);
    root.lock().agent_mut().set_fallback(|_| None);
    let (result, records) = run_traced(&root, "done", "question");
    // Agent has no tool call to handle, so the LLM answers every step; rule
    // (a) forbids that, which leaves the run quiescent after one reply.
    ensure(
        result.map_err(|e| e.to_string())? == "thinking",
        "first reply is the result",
    )?;
    ensure(end_reasons(&records, "Main") == [EndReason::Quiescent], "quiescent end")?;

    let root = task("Main", &["{DONE} 42"]);
    let (result, records) = run_traced(&root, "done", "question");
    ensure(result.map_err(|e| e.to_string())? == "42", "DONE stripped from result")?;
    ensure(end_reasons(&records, "Main") == [EndReason::Done], "done end")?;
    ensure(responders(&records, "Main") == ["llm"], "one step")?;
    verified(records)
}

fn no_consecutive_responder() -> Result<Vec<Record>, String> {
    let root = task(
        "Main",
        &[
            r#"FUNC: {"name": "echo", "arguments": {"text": "one"}}"#,
            r#"FUNC: {"name": "echo", "arguments": {"text": "two"}}"#,
            "{DONE} finished",
        ],
    );
    root.lock()
        .agent_mut()
        .register_tool(echo_tool("echo", None))
        .map_err(|e| e.to_string())?;
    let (result, records) = run_traced(&root, "alternation", "go");
    result.map_err(|e| e.to_string())?;
    let who = responders(&records, "Main");
    ensure(
        who == ["llm", "agent", "llm", "agent", "llm"],
        format!("alternation, got {who:?}"),
    )?;
    ensure(who.windows(2).all(|w| w[0] != w[1]), "no responder twice in a row")?;
    verified(records)
}

fn in_charge_null_ends_run() -> Result<Vec<Record>, String> {
    let root = task("Main", &[]);
    let (result, records) = run_traced(&root, "null", "hello");
    ensure(result.map_err(|e| e.to_string())? == "hello", "CPM returned unchanged")?;
    let nulls: Vec<_> = records.iter().filter(|r| r.kind == RecordKind::Null).collect();
    ensure(
        nulls.len() == 1 && nulls[0].responder.as_deref() == Some("llm"),
        "null recorded for the LLM",
    )?;
    ensure(
        end_reasons(&records, "Main") == [EndReason::InChargeNull],
        "in-charge null end",
    )?;
    verified(records)
}

fn quiescent_pass_returns_cpm() -> Result<Vec<Record>, String> {
    let root = task("Main", &["plain reply"]);
    let (result, records) = run_traced(&root, "quiescent", "hello");
    ensure(
        result.map_err(|e| e.to_string())? == "plain reply",
        "current message returned",
    )?;
    ensure(end_reasons(&records, "Main") == [EndReason::Quiescent], "quiescent end")?;
    verified(records)
}

fn recipient_routes_to_named_subtask() -> Result<Vec<Record>, String> {
    let root = task(
        "Main",
        &[
            r#"FUNC: {"name": "send", "arguments": {"text": "for beta"}}"#,
            "{DONE} got it",
        ],
    );
    root.lock()
        .agent_mut()
        .register_tool(echo_tool("send", Some("Beta")))
        .map_err(|e| e.to_string())?;
    let alpha = task("Alpha", &["{DONE} alpha answer"]);
    let beta = task("Beta", &["{DONE} beta answer"]);
    root.add_sub_tasks(&[alpha, beta]).map_err(|e| e.to_string())?;
    let (result, records) = run_traced(&root, "routing", "go");
    ensure(result.map_err(|e| e.to_string())? == "got it", "main finishes")?;
    let who = responders(&records, "Main");
    ensure(
        who == ["llm", "agent", "task:Beta", "llm"],
        format!("routed to Beta, got {who:?}"),
    )?;
    ensure(!records.iter().any(|r| r.task == "Alpha"), "Alpha never ran")?;
    verified(records)
}

fn route_consumed_after_one_step() -> Result<Vec<Record>, String> {
    let root = task(
        "Main",
        &[
            r#"FUNC: {"name": "send", "arguments": {"text": "x"}}"#,
            "back to main",
            "{DONE} end",
        ],
    );
    root.lock()
        .agent_mut()
        .register_tool(echo_tool("send", Some("Beta")))
        .map_err(|e| e.to_string())?;
    let alpha = task("Alpha", &["{DONE} from alpha"]);
    let beta = task("Beta", &["{DONE} from beta"]);
    root.add_sub_tasks(&[alpha, beta]).map_err(|e| e.to_string())?;
    let (result, records) = run_traced(&root, "route_once", "go");
    result.map_err(|e| e.to_string())?;
    // After Beta answers, the plain LLM reply has no recipient, so the normal
    // order applies and Alpha (first sub-task) is the next eligible responder.
    let who = responders(&records, "Main");
    ensure(
        who == ["llm", "agent", "task:Beta", "llm", "task:Alpha", "llm"],
        format!("route used once, got {who:?}"),
    )?;
    verified(records)
}

fn subtask_order_is_declaration_order() -> Result<Vec<Record>, String> {
    let root = task("Main", &["need help", "{DONE} thanks"]);
    let first = task("First", &["{DONE} first helps"]);
    let second = task("Second", &["{DONE} second helps"]);
    root.add_sub_tasks(&[first, second]).map_err(|e| e.to_string())?;
    let (result, records) = run_traced(&root, "order", "go");
    result.map_err(|e| e.to_string())?;
    let who = responders(&records, "Main");
    ensure(
        who == ["llm", "task:First", "llm"],
        format!("first sub-task answers, got {who:?}"),
    )?;
    let contents = steps(&records, "Main");
    ensure(contents[1].1 == "first helps", "sub-task result has DONE stripped")?;
    verified(records)
}

fn silent_subtask_falls_through() -> Result<Vec<Record>, String> {
    let root = task("Main", &["need help", "{DONE} thanks"]);
    let silent = task("Silent", &[]);
    let helper = task("Helper", &["{DONE} helper answer"]);
    root.add_sub_tasks(&[silent, helper]).map_err(|e| e.to_string())?;
    let (result, records) = run_traced(&root, "fallthrough", "go");
    result.map_err(|e| e.to_string())?;
    let who = responders(&records, "Main");
    ensure(
        who == ["llm", "task:Helper", "llm"],
        format!("Helper answers, got {who:?}"),
    )?;
    ensure(
        end_reasons(&records, "Silent") == [EndReason::InChargeNull],
        "Silent ended on null",
    )?;
    verified(records)
}

fn subtask_done_does_not_end_parent() -> Result<Vec<Record>, String> {
    let root = task("Main", &["ask", "noted", "{DONE} all done"]);
    let helper = task("Helper", &["{DONE} partial", "{DONE} second"]);
    root.add_sub_tasks(&[helper]).map_err(|e| e.to_string())?;
    let (result, records) = run_traced(&root, "nested_done", "go");
    ensure(
        result.map_err(|e| e.to_string())? == "all done",
        "parent runs to its own DONE",
    )?;
    let who = responders(&records, "Main");
    ensure(
        who == ["llm", "task:Helper", "llm", "task:Helper", "llm"],
        format!("got {who:?}"),
    )?;
    let helper_runs = records
        .iter()
        .filter(|r| r.task == "Helper" && r.kind == RecordKind::Start)
        .count();
    ensure(helper_runs == 2, "helper invoked twice")?;
    verified(records)
}

fn step_limit_stops_ping_pong() -> Result<Vec<Record>, String> {
    let backend = ScriptedBackend::new(Script::new(vec![ScriptEntry::containing(
        "",
        r#"FUNC: {"name": "echo", "arguments": {"text": "again"}}"#,
    )]));
    let mut a = Agent::new("Loop", "loop", Arc::new(backend));
    a.register_tool(echo_tool("echo", None)).map_err(|e| e.to_string())?;
    let root = TaskHandle::new(Task::new("Loop", a).with_max_steps(6));
    let (result, records) = run_traced(&root, "limit", "go");
    ensure(
        matches!(result, Err(TaskError::StepLimitExceeded { limit: 6, .. })),
        "step limit error",
    )?;
    ensure(steps(&records, "Loop").len() == 6, "exactly six steps")?;
    ensure(
        end_reasons(&records, "Loop") == [EndReason::StepLimit],
        "step-limit end",
    )?;
    verified(records)
}

fn malformed_tool_is_corrected() -> Result<Vec<Record>, String> {
    let root = task(
        "Main",
        &[
            r#"FUNC: {"name": "echo", "arguments": {"text": "unterminated"}"#,
            r#"FUNC: {"name": "echo", "arguments": {"text": "fixed"}}"#,
            "{DONE} ok",
        ],
    );
    root.lock()
        .agent_mut()
        .register_tool(echo_tool("echo", None))
        .map_err(|e| e.to_string())?;
    let (result, records) = run_traced(&root, "malformed", "go");
    result.map_err(|e| e.to_string())?;
    let s = steps(&records, "Main");
    ensure(
        s[1].0 == "agent" && s[1].1.contains("could not be parsed"),
        "corrective message",
    )?;
    ensure(s[3].1 == "fixed", "tool ran after the fix")?;
    verified(records)
}

fn unknown_tool_lists_tools() -> Result<Vec<Record>, String> {
    let root = task(
        "Main",
        &[r#"FUNC: {"name": "search_web", "arguments": {}}"#, "{DONE} gave up"],
    );
    root.lock()
        .agent_mut()
        .register_tool(echo_tool("echo", None))
        .map_err(|e| e.to_string())?;
    let (result, records) = run_traced(&root, "unknown_tool", "go");
    result.map_err(|e| e.to_string())?;
    let s = steps(&records, "Main");
    ensure(
        s[1].1.contains("no tool named `search_web`") && s[1].1.contains("`echo`"),
        "tool list",
    )?;
    verified(records)
}

fn user_in_charge() -> Result<Vec<Record>, String> {
    let a = agent("Chat", &["Hi! What do you need?", "Here it is."])
        .with_user_input(UserInput::scripted(["a summary please", "{DONE} thanks"]));
    let root = TaskHandle::new(Task::new("Chat", a).with_in_charge(Responder::User));
    let (result, records) = run_traced(&root, "user", "start");
    ensure(result.map_err(|e| e.to_string())? == "thanks", "user ends the chat")?;
    let who = responders(&records, "Chat");
    ensure(who == ["llm", "user", "llm", "user"], format!("got {who:?}"))?;
    verified(records)
}

fn unknown_recipient_ignored() -> Result<Vec<Record>, String> {
    let root = task(
        "Main",
        &[
            r#"FUNC: {"name": "send", "arguments": {"text": "hello"}}"#,
            "{DONE} done anyway",
        ],
    );
    root.lock()
        .agent_mut()
        .register_tool(echo_tool("send", Some("Nobody")))
        .map_err(|e| e.to_string())?;
    let (result, records) = run_traced(&root, "unknown_recipient", "go");
    result.map_err(|e| e.to_string())?;
    ensure(
        responders(&records, "Main") == ["llm", "agent", "llm"],
        "normal order used",
    )?;
    verified(records)
}

fn critic_loop_reject_then_accept() -> Result<Vec<Record>, String> {
    let fa = r#"FUNC: {"name": "final_answer", "arguments": {"question": "q", "steps": ["s"], "answer": "a"}}"#;
    let primary = task("Primary", &[fa, fa, "{DONE} accepted answer"]);
    let critic = task(
        "Critic",
        &[
            r#"FUNC: {"name": "feedback", "arguments": {"critique": "Step one is unsupported."}}"#,
            r#"FUNC: {"name": "feedback", "arguments": {"critique": ""}}"#,
        ],
    );
    let t = Transcript::new("critic");
    primary.set_transcript(&t);
    critic.set_transcript(&t);
    let (result, state): (String, CritiqueState) =
        critique_loop(&primary, &critic, 5, "question").map_err(|e| e.to_string())?;
    ensure(result == "accepted answer", "primary result")?;
    ensure(
        state.rounds == 2 && state.accepted && !state.forced,
        format!("state {state:?}"),
    )?;
    let records = t.records();
    let who = responders(&records, "Primary");
    ensure(
        who == ["llm", "agent", "task:Critic", "llm", "agent", "task:Critic", "llm"],
        format!("got {who:?}"),
    )?;
    verified(records)
}

pub fn fixture_pipeline(settings: PipelineSettings) -> Pipeline {
    let data = fixtures().join("data");
    let book = ScriptBook::load(&fixtures().join("omop3x3/scripts.json")).expect("fixture scripts");
    Pipeline::new(
        Arc::new(book),
        NdcDirectory::from_file(&data.join("ndc.json")).expect("fixture NDC"),
        PrescriptionRates::load(&data.join("prescriptions.csv"), "drug").expect("fixture prescriptions"),
        LabelSource::fixture(data.join("labels")),
        Arc::new(RagStore::new(Arc::new(HashEmbedder::default()))),
    )
    .with_settings(settings)
}

/// DrugAgent with FDAHandler and the critic as sub-tasks.
fn drug_agent_topology() -> Result<Vec<Record>, String> {
    let p = fixture_pipeline(PipelineSettings::default());
    let t = Transcript::new("topology");
    p.drug_effect_report("Lisinopril", "angioedema", Some(&t))
        .map_err(|e| e.to_string())?;
    let records = t.records();
    let start = records
        .iter()
        .find(|r| r.kind == RecordKind::Start && r.task == "DrugAgent")
        .ok_or("no DrugAgent start")?;
    ensure(
        start.responders.as_deref()
            == Some(&["agent", "llm", "user", "task:FDAHandler", "task:DrugAgentCritic"].map(String::from)[..]),
        format!("responder order {:?}", start.responders),
    )?;
    let who = responders(&records, "DrugAgent");
    ensure(
        who == [
            "llm",
            "agent",
            "task:FDAHandler",
            "llm",
            "agent",
            "task:DrugAgentCritic",
            "llm",
        ],
        format!("got {who:?}"),
    )?;
    ensure(
        responders(&records, "FDAHandler") == ["llm", "agent", "llm"],
        "handler used its tool",
    )?;
    verified(records)
}

fn identical_scripts_identical_traces() -> Result<Vec<Record>, String> {
    let once = || -> Result<Vec<Record>, String> {
        let p = fixture_pipeline(PipelineSettings::default());
        let t = Transcript::new("determinism");
        p.drug_effect_report("Clonazepam", "hip fracture", Some(&t))
            .map_err(|e| e.to_string())?;
        Ok(t.records())
    };
    let a = once()?;
    let b = once()?;
    let bytes = |r: &[Record]| serde_json::to_string(r).unwrap_or_default();
    ensure(bytes(&a) == bytes(&b), "byte-identical traces")?;
    verified(a)
}
