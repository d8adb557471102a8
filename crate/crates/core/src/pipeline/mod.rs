//! The three-stage application: representative selection, per-drug label
//! reports, and the category-level verdict, each run as an agent/critic pair.

mod category;
mod fda;
mod finder;
mod matrix;
pub mod prompts;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::Agent;
use crate::critic::{attach_critic, CritiqueLedger, DEFAULT_MAX_ROUNDS};
use crate::drugdata::{name_slug, DrugDataError, LabelSource, NdcDirectory, PrescriptionRates};
use crate::llm::{BackendProvider, ConversationKey};
use crate::par::Parallelism;
use crate::rag::{RagError, RagStore, DEFAULT_K};
use crate::task::{Task, TaskError, TaskHandle, DEFAULT_MAX_STEPS};
use crate::transcript::EndReason;

pub use category::{merge_subcategories, render_passages, CategoryVerdict, CATEGORY_EFFECT_TOOL};
pub use fda::{truncate_extract, DrugReport, RECIPIENT_MESSAGE, RELEVANT_EXTRACTS, RELEVANT_SEARCH_EXTRACTS};
pub use finder::{render_candidates, Representatives, SUBMIT_ANSWER};
pub use matrix::{CellResult, CellStatus, GroupResult, MatrixResult};

pub const DRUG_FINDER: &str = "DrugFinder";
pub const DRUG_FINDER_CRITIC: &str = "DrugFinderCritic";
pub const DRUG_AGENT: &str = "DrugAgent";
pub const DRUG_AGENT_CRITIC: &str = "DrugAgentCritic";
pub const FDA_HANDLER: &str = "FDAHandler";
pub const CATEGORY_AGENT: &str = "CategoryAgent";
pub const CATEGORY_AGENT_CRITIC: &str = "CategoryAgentCritic";

pub const DEFAULT_REPRESENTATIVES: usize = 3;
pub const DEFAULT_FANOUT: usize = 4;
/// Corrective round-trips allowed for an invalid submission before it is
/// reported as a validation error.
pub const REPAIR_ROUNDS: u32 = 1;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("no NDC drugs match category `{0}`")]
    EmptyCategory(String),
    #[error("{stage}: invalid submission: {message}")]
    Validation { stage: String, message: String },
    #[error("{stage} ended without a result ({reason})")]
    Incomplete { stage: String, reason: String },
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    DrugData(#[from] DrugDataError),
    #[error(transparent)]
    Rag(#[from] RagError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ablation {
    /// Critic feedback; when off every `final_answer` is accepted at once.
    pub critics: bool,
    /// Label retrieval; when off FDAHandler answers without tools.
    pub rag: bool,
}

impl Default for Ablation {
    fn default() -> Self {
        Self {
            critics: true,
            rag: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubcategorySpec {
    pub name: String,
    #[serde(default)]
    pub search_terms: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategorySpec {
    pub name: String,
    /// NDC search terms; the category name when empty.
    #[serde(default)]
    pub search_terms: Vec<String>,
    #[serde(default)]
    pub subcategories: Vec<SubcategorySpec>,
    #[serde(default = "default_representatives")]
    pub representatives: usize,
}

fn default_representatives() -> usize {
    DEFAULT_REPRESENTATIVES
}

impl CategorySpec {
    pub fn new(name: &str, search_terms: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            search_terms: search_terms.iter().map(|s| s.to_string()).collect(),
            subcategories: Vec::new(),
            representatives: DEFAULT_REPRESENTATIVES,
        }
    }

    /// The units Step 1 and Step 3 run on: the subcategories, or the
    /// category itself when it has none.
    pub fn groups(&self) -> Vec<Group> {
        let terms = |name: &str, terms: &[String]| {
            if terms.is_empty() {
                vec![name.to_string()]
            } else {
                terms.to_vec()
            }
        };
        if self.subcategories.is_empty() {
            return vec![Group {
                category: self.name.clone(),
                name: self.name.clone(),
                search_terms: terms(&self.name, &self.search_terms),
                representatives: self.representatives,
            }];
        }
        self.subcategories
            .iter()
            .map(|s| Group {
                category: self.name.clone(),
                name: s.name.clone(),
                search_terms: terms(&s.name, &s.search_terms),
                representatives: self.representatives,
            })
            .collect()
    }
}

/// A category or one of its subcategories.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Group {
    pub category: String,
    pub name: String,
    pub search_terms: Vec<String>,
    pub representatives: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineSettings {
    pub ablation: Ablation,
    pub max_rounds: u32,
    pub max_steps: u32,
    pub retrieval_k: usize,
    pub parallelism: Parallelism,
    /// Trial index, used to select trial-specific scripts.
    pub trial: Option<u32>,
}

impl Default for PipelineSettings {
    fn default() -> Self {
        Self {
            ablation: Ablation::default(),
            max_rounds: DEFAULT_MAX_ROUNDS,
            max_steps: DEFAULT_MAX_STEPS,
            retrieval_k: DEFAULT_K,
            parallelism: Parallelism::from_threads(DEFAULT_FANOUT),
            trial: None,
        }
    }
}

pub struct Pipeline {
    backends: Arc<dyn BackendProvider>,
    ndc: Arc<NdcDirectory>,
    rates: Arc<PrescriptionRates>,
    labels: Arc<LabelSource>,
    store: Arc<RagStore>,
    pub settings: PipelineSettings,
}

impl Pipeline {
    pub fn new(
        backends: Arc<dyn BackendProvider>,
        ndc: NdcDirectory,
        rates: PrescriptionRates,
        labels: LabelSource,
        store: Arc<RagStore>,
    ) -> Self {
        Self {
            backends,
            ndc: Arc::new(ndc),
            rates: Arc::new(rates),
            labels: Arc::new(labels),
            store,
            settings: PipelineSettings::default(),
        }
    }

    pub fn with_settings(mut self, settings: PipelineSettings) -> Self {
        self.settings = settings;
        self
    }

    pub fn store(&self) -> &Arc<RagStore> {
        &self.store
    }

    pub fn labels(&self) -> &LabelSource {
        &self.labels
    }

    fn key(&self, role: &str, subject: &str) -> ConversationKey {
        let key = ConversationKey::new(role, subject);
        match self.settings.trial {
            Some(t) => key.with_trial(t),
            None => key,
        }
    }

    /// A task whose backend is selected by `key` with the role set to `name`.
    fn task(&self, name: &str, prompt: &str, key: &ConversationKey) -> Task {
        let mut key = key.clone();
        key.role = name.to_string();
        let agent = Agent::new(name, prompt, self.backends.backend_for(&key));
        Task::new(name, agent).with_max_steps(self.settings.max_steps)
    }

    /// Builds the critic for `primary` (unless critics are ablated) and wires
    /// up `final_answer`.
    fn pair_with_critic(
        &self,
        primary: &TaskHandle,
        critic_name: &str,
        critic_prompt: &str,
        key: &ConversationKey,
    ) -> Result<CritiqueLedger, PipelineError> {
        let ledger = CritiqueLedger::new(self.settings.max_rounds);
        if self.settings.ablation.critics {
            let critic = TaskHandle::new(self.task(critic_name, critic_prompt, key));
            attach_critic(primary, Some(&critic), &ledger)?;
        } else {
            attach_critic(primary, None, &ledger)?;
        }
        Ok(ledger)
    }
}

/// A task that ended for any reason other than a DONE reply has no usable
/// result.
fn require_done(stage: &str, end: Option<EndReason>) -> Result<(), PipelineError> {
    match end {
        Some(EndReason::Done) => Ok(()),
        other => Err(PipelineError::Incomplete {
            stage: stage.to_string(),
            reason: other.map_or("not run".to_string(), |r| r.as_str().to_string()),
        }),
    }
}

/// Conversation identifier used for transcript names.
pub fn conversation_id(role: &str, parts: &[&str], trial: Option<u32>) -> String {
    let mut id = name_slug(role);
    for p in parts {
        id.push_str("__");
        id.push_str(&name_slug(p));
    }
    if let Some(t) = trial {
        id.push_str(&format!("__t{t}"));
    }
    id
}
