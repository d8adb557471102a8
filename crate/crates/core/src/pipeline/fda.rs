//! Step 2: FDAHandler (label retrieval) and DrugAgent (per-drug report).

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::agent::ToolSpec;
use crate::critic::CritiqueState;
use crate::drugdata::{DrugDataError, LabelSource};
use crate::llm::ConversationKey;
use crate::message::{scan_control_markers, EntityKind, Message, NO_ANSWER};
use crate::rag::{augment_prompt, Hit, RagStore, RetrievalQuery};
use crate::task::{TaskError, TaskHandle};
use crate::tool::{FieldKind, ToolField, ToolSchema};
use crate::transcript::Transcript;

use super::{prompts, require_done, Pipeline, PipelineError, DRUG_AGENT, DRUG_AGENT_CRITIC, FDA_HANDLER};

pub const RECIPIENT_MESSAGE: &str = "recipient_message";
pub const RELEVANT_EXTRACTS: &str = "relevant_extracts";
pub const RELEVANT_SEARCH_EXTRACTS: &str = "relevant_search_extracts";

const EXTRACT_LABEL: &str = "EXTRACT_START_END:";
const EXTRACT_EDGE_WORDS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrugReport {
    pub drug: String,
    pub outcome: String,
    pub text: String,
    pub no_answer: bool,
    pub critique: CritiqueState,
}

/// Shortens the `EXTRACT_START_END` field to its first and last three words.
pub fn truncate_extract(text: &str) -> String {
    let Some(pos) = text.find(EXTRACT_LABEL) else {
        return text.to_string();
    };
    let head = &text[..pos + EXTRACT_LABEL.len()];
    let words: Vec<&str> = text[pos + EXTRACT_LABEL.len()..].split_whitespace().collect();
    if words.len() <= 2 * EXTRACT_EDGE_WORDS {
        return format!("{head} {}", words.join(" "));
    }
    format!(
        "{head} {} ... {}",
        words[..EXTRACT_EDGE_WORDS].join(" "),
        words[words.len() - EXTRACT_EDGE_WORDS..].join(" ")
    )
}

fn relevant_extracts_schema() -> ToolSchema {
    ToolSchema::new(
        RELEVANT_EXTRACTS,
        "retrieve label passages relevant to a query from the document store",
        vec![
            ToolField::required("query", FieldKind::Text, "the question to find passages for"),
            ToolField::optional("filter_drugs", FieldKind::TextList, "restrict passages to these drugs"),
        ],
    )
}

fn relevant_search_extracts_schema() -> ToolSchema {
    ToolSchema::new(
        RELEVANT_SEARCH_EXTRACTS,
        "fetch the FDA label of a drug and retrieve passages relevant to a query",
        vec![
            ToolField::required("query", FieldKind::Text, "the question to find passages for"),
            ToolField::required("drug", FieldKind::Text, "the drug whose label to fetch"),
        ],
    )
}

fn recipient_message_schema() -> ToolSchema {
    ToolSchema::new(
        RECIPIENT_MESSAGE,
        "send a message to a named recipient",
        vec![
            ToolField::required("intended_recipient", FieldKind::Text, "who the message is for"),
            ToolField::required("content", FieldKind::Text, "the message"),
        ],
    )
}

/// Retrieval context shared by the FDAHandler tools.
#[derive(Clone)]
struct LabelRetriever {
    store: Arc<RagStore>,
    labels: Arc<LabelSource>,
    k: usize,
}

impl LabelRetriever {
    /// Hits sharing at least one term with the query.
    fn search(&self, query: &str, filter: Option<&[String]>) -> Result<Vec<Hit>, String> {
        let mut q = RetrievalQuery::new(query).k(self.k);
        if let Some(f) = filter {
            q = q.filter(f);
        }
        let hits = self.store.retrieve(&q).map_err(|e| e.to_string())?;
        Ok(hits.into_iter().filter(|h| h.bm25 > 0.0).collect())
    }

    /// Fetches and indexes the label of `drug` unless the store has it.
    /// Returns false when no label exists.
    fn ensure_label(&self, drug: &str) -> Result<bool, String> {
        if self.store.contains_drug(drug) {
            return Ok(true);
        }
        match self.labels.fetch_label(drug) {
            Ok(label) => {
                self.store.ingest(drug, &label.sections).map_err(|e| e.to_string())?;
                Ok(true)
            }
            Err(DrugDataError::NotFound(_)) => Ok(false),
            Err(e) => Err(e.to_string()),
        }
    }

    fn reply(query: &str, hits: Vec<Hit>) -> Message {
        if hits.is_empty() {
            return Message::new(EntityKind::Agent, NO_ANSWER);
        }
        let chunks: Vec<_> = hits.into_iter().map(|h| h.chunk).collect();
        Message::new(EntityKind::Agent, augment_prompt(query, &chunks))
    }

    /// Store first; on a miss, fetch the filtered drugs' labels and retry,
    /// then retry without the filter.
    fn relevant_extracts(&self, query: &str, filter: Option<Vec<String>>) -> Result<Message, String> {
        let filter = filter.filter(|f| !f.is_empty());
        let mut hits = self.search(query, filter.as_deref())?;
        if let (true, Some(drugs)) = (hits.is_empty(), &filter) {
            let mut fetched = false;
            for d in drugs {
                if !self.store.contains_drug(d) {
                    fetched |= self.ensure_label(d)?;
                }
            }
            if fetched {
                hits = self.search(query, Some(drugs))?;
            }
            if hits.is_empty() {
                hits = self.search(query, None)?;
            }
        }
        Ok(Self::reply(query, hits))
    }

    fn relevant_search_extracts(&self, query: &str, drug: &str) -> Result<Message, String> {
        if !self.ensure_label(drug)? {
            return Ok(Message::new(EntityKind::Agent, NO_ANSWER));
        }
        let filter = [drug.to_string()];
        Ok(Self::reply(query, self.search(query, Some(&filter))?))
    }
}

fn agent_err(task: &str, source: crate::agent::AgentError) -> PipelineError {
    PipelineError::Task(TaskError::Agent {
        task: task.to_string(),
        source,
    })
}

impl Pipeline {
    /// FDAHandler task: retrieval tools over the label store, or a bare
    /// answerer when retrieval is ablated.
    fn fda_handler(&self, key: &ConversationKey) -> Result<TaskHandle, PipelineError> {
        let prompt = if self.settings.ablation.rag {
            prompts::FDA_HANDLER
        } else {
            prompts::FDA_BARE
        };
        let mut task = self.task(FDA_HANDLER, prompt, key).with_result_filter(truncate_extract);
        if self.settings.ablation.rag {
            let retriever = LabelRetriever {
                store: self.store.clone(),
                labels: self.labels.clone(),
                k: self.settings.retrieval_k,
            };
            let r = retriever.clone();
            task.agent_mut()
                .register_tool(ToolSpec::new(relevant_extracts_schema(), move |call| {
                    let query = call.str_arg("query").unwrap_or_default();
                    let filter = call.arguments.get("filter_drugs").and_then(|v| v.as_array()).map(|a| {
                        a.iter()
                            .filter_map(|s| s.as_str().map(str::to_string))
                            .collect::<Vec<_>>()
                    });
                    r.relevant_extracts(query, filter).map(Some)
                }))
                .map_err(|e| agent_err(FDA_HANDLER, e))?;
            task.agent_mut()
                .register_tool(ToolSpec::new(relevant_search_extracts_schema(), move |call| {
                    let query = call.str_arg("query").unwrap_or_default();
                    let drug = call.str_arg("drug").unwrap_or_default();
                    retriever.relevant_search_extracts(query, drug).map(Some)
                }))
                .map_err(|e| agent_err(FDA_HANDLER, e))?;
        }
        Ok(TaskHandle::new(task))
    }

    /// Runs FDAHandler alone on `question`. `drug` and `outcome` select the
    /// conversation script.
    pub fn fda_answer(
        &self,
        question: &str,
        drug: Option<&str>,
        outcome: Option<&str>,
        transcript: Option<&Transcript>,
    ) -> Result<Message, PipelineError> {
        let mut key = self.key(FDA_HANDLER, drug.unwrap_or("*"));
        if let Some(o) = outcome {
            key = key.with_outcome(o);
        }
        let handler = self.fda_handler(&key)?;
        if let Some(t) = transcript {
            handler.set_transcript(t);
        }
        let reply = handler.run_message(Message::user(question))?;
        require_done(FDA_HANDLER, handler.lock().end_reason())?;
        reply.ok_or_else(|| PipelineError::Incomplete {
            stage: FDA_HANDLER.to_string(),
            reason: "no response".into(),
        })
    }

    /// DrugAgent/critic pair with FDAHandler as its sub-task.
    pub fn drug_effect_report(
        &self,
        drug: &str,
        outcome: &str,
        transcript: Option<&Transcript>,
    ) -> Result<DrugReport, PipelineError> {
        let key = self.key(DRUG_AGENT, drug).with_outcome(outcome);
        let primary = TaskHandle::new(self.task(DRUG_AGENT, prompts::DRUG_AGENT, &key));
        primary
            .lock()
            .agent_mut()
            .register_tool(ToolSpec::new(recipient_message_schema(), |call| {
                let to = call.str_arg("intended_recipient").unwrap_or_default().trim();
                if !to.eq_ignore_ascii_case(FDA_HANDLER) {
                    return Err(format!("`intended_recipient` must be `{FDA_HANDLER}`, not `{to}`"));
                }
                let content = call.str_arg("content").unwrap_or_default();
                Ok(Some(
                    Message::new(EntityKind::Agent, content).with_recipient(FDA_HANDLER),
                ))
            }))
            .map_err(|e| agent_err(DRUG_AGENT, e))?;
        let fda_key = self.key(FDA_HANDLER, drug).with_outcome(outcome);
        primary.add_sub_tasks(&[self.fda_handler(&fda_key)?])?;
        let ledger = self.pair_with_critic(&primary, DRUG_AGENT_CRITIC, prompts::DRUG_AGENT_CRITIC, &key)?;
        if let Some(t) = transcript {
            primary.set_transcript(t);
        }
        let text = primary.run(&prompts::drug_question(drug, outcome))?;
        let task = primary.lock();
        require_done(DRUG_AGENT, task.end_reason())?;
        let handler_said_no_answer = task
            .agent()
            .history()
            .messages()
            .iter()
            .rev()
            .find(|m| m.sender == EntityKind::SubTask(FDA_HANDLER.to_string()))
            .is_some_and(|m| m.control.no_answer);
        Ok(DrugReport {
            drug: drug.to_string(),
            outcome: outcome.to_string(),
            no_answer: handler_said_no_answer || scan_control_markers(&text).no_answer,
            text,
            critique: ledger.snapshot(),
        })
    }
}
