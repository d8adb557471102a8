//! Step 3: category-level verdict from the per-drug reports.

use std::sync::Arc;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::agent::ToolSpec;
use crate::critic::{not_yet_accepted_message, CritiqueState};
use crate::effect::{CategoryEffect, Label};
use crate::message::{EntityKind, Message, DONE};
use crate::task::{TaskError, TaskHandle};
use crate::tool::{FieldKind, ToolField, ToolSchema};
use crate::transcript::Transcript;

use super::{
    prompts, require_done, DrugReport, Group, Pipeline, PipelineError, CATEGORY_AGENT, CATEGORY_AGENT_CRITIC,
    REPAIR_ROUNDS,
};

pub const CATEGORY_EFFECT_TOOL: &str = "category_effect_tool";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryVerdict {
    pub effect: CategoryEffect,
    pub critique: CritiqueState,
    /// The label was forced to no-effect because no drug report found
    /// label evidence.
    pub coerced: bool,
}

fn category_effect_schema() -> ToolSchema {
    ToolSchema::new(
        CATEGORY_EFFECT_TOOL,
        "submit the structured verdict once the critic has accepted your answer",
        vec![
            ToolField::required("label", FieldKind::Text, "increase, decrease or no-effect"),
            ToolField::required(
                "confidence",
                FieldKind::Number,
                "confidence in the label, between 0 and 1",
            ),
            ToolField::required(
                "probability",
                FieldKind::Number,
                "probability of the outcome, between 0 and 1",
            ),
            ToolField::required("frequency", FieldKind::Text, "none, rare or common"),
            ToolField::required("evidence", FieldKind::Text, "none, weak or strong"),
            ToolField::required("justification", FieldKind::Text, "short reasoning for the verdict"),
        ],
    )
}

/// Prompt handed to CategoryAgent: the numbered drug reports followed by
/// the category question.
pub fn render_passages(reports: &[DrugReport], category: &str, outcome: &str) -> String {
    let mut out = String::from("Passages:\n");
    for (i, r) in reports.iter().enumerate() {
        out.push_str(&format!(
            "{}. Drug {}: {}\n",
            i + 1,
            r.drug.to_uppercase(),
            r.text.trim()
        ));
    }
    out.push_str("---------\n");
    out.push_str(&prompts::category_question(category, outcome));
    out
}

/// Combines subcategory verdicts: the highest-risk label wins, then the
/// higher confidence; on a full tie the first listed is kept.
pub fn merge_subcategories(effects: &[CategoryEffect]) -> Option<CategoryEffect> {
    let mut best: Option<&CategoryEffect> = None;
    for e in effects {
        let better = match best {
            None => true,
            Some(b) => (e.label.risk_rank(), e.confidence) > (b.label.risk_rank(), b.confidence),
        };
        if better {
            best = Some(e);
        }
    }
    best.cloned()
}

#[derive(Default)]
struct Verdict {
    effect: Option<CategoryEffect>,
    failure: Option<String>,
    repairs: u32,
}

impl Pipeline {
    /// Runs the CategoryAgent/critic pair over the drug reports of `group`.
    pub fn categorize(
        &self,
        group: &Group,
        outcome: &str,
        reports: &[DrugReport],
        transcript: Option<&Transcript>,
    ) -> Result<CategoryVerdict, PipelineError> {
        let key = self.key(CATEGORY_AGENT, &group.name).with_outcome(outcome);
        let prompt = prompts::category_agent(&group.name, outcome);
        let primary = TaskHandle::new(self.task(CATEGORY_AGENT, &prompt, &key));
        let ledger = self.pair_with_critic(&primary, CATEGORY_AGENT_CRITIC, prompts::CATEGORY_AGENT_CRITIC, &key)?;

        let state = Arc::new(Mutex::new(Verdict::default()));
        let (slot, accepted) = (state.clone(), ledger.clone());
        primary
            .lock()
            .agent_mut()
            .register_tool(ToolSpec::new(category_effect_schema(), move |call| {
                if !accepted.is_accepted() {
                    return Ok(Some(Message::new(
                        EntityKind::Agent,
                        not_yet_accepted_message(CATEGORY_EFFECT_TOOL),
                    )));
                }
                let mut s = slot.lock();
                match CategoryEffect::from_arguments(&Value::Object(call.arguments.clone())) {
                    Ok(effect) => {
                        s.effect = Some(effect);
                        Ok(Some(Message::new(EntityKind::Agent, format!("{{{DONE}}}"))))
                    }
                    Err(e) if s.repairs < REPAIR_ROUNDS => {
                        s.repairs += 1;
                        Ok(Some(Message::new(
                            EntityKind::Agent,
                            format!("Your submission is invalid: {e}. Fix it and call `{CATEGORY_EFFECT_TOOL}` again."),
                        )))
                    }
                    Err(e) => {
                        s.failure = Some(e.to_string());
                        Ok(Some(Message::new(
                            EntityKind::Agent,
                            format!("{{{DONE}}} Submission rejected: {e}"),
                        )))
                    }
                }
            }))
            .map_err(|source| TaskError::Agent {
                task: CATEGORY_AGENT.to_string(),
                source,
            })?;
        if let Some(t) = transcript {
            primary.set_transcript(t);
        }
        primary.run(&render_passages(reports, &group.name, outcome))?;
        let mut s = state.lock();
        if let Some(message) = s.failure.take() {
            return Err(PipelineError::Validation {
                stage: CATEGORY_AGENT.to_string(),
                message,
            });
        }
        let Some(mut effect) = s.effect.take() else {
            require_done(CATEGORY_AGENT, primary.lock().end_reason())?;
            return Err(PipelineError::Incomplete {
                stage: CATEGORY_AGENT.to_string(),
                reason: format!("no `{CATEGORY_EFFECT_TOOL}` call"),
            });
        };
        let coerced = !reports.is_empty() && reports.iter().all(|r| r.no_answer) && effect.label != Label::NoEffect;
        if coerced {
            log::info!(
                "{} / {outcome}: no label evidence for any drug, overriding `{}` with no-effect",
                group.name,
                effect.label
            );
            effect.label = Label::NoEffect;
        }
        Ok(CategoryVerdict {
            effect,
            critique: ledger.snapshot(),
            coerced,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::effect::{Evidence, Frequency};

    fn eff(label: Label, confidence: f64) -> CategoryEffect {
        CategoryEffect {
            label,
            confidence,
            probability: 0.1,
            frequency: Frequency::Rare,
            evidence: Evidence::Weak,
            justification: format!("{label} {confidence}"),
        }
    }

    #[test]
    fn merge_prefers_risk_then_confidence() {
        assert_eq!(merge_subcategories(&[]), None);
        let merged = merge_subcategories(&[
            eff(Label::NoEffect, 0.9),
            eff(Label::Increase, 0.4),
            eff(Label::Increase, 0.7),
            eff(Label::Decrease, 1.0),
        ])
        .unwrap();
        assert_eq!((merged.label, merged.confidence), (Label::Increase, 0.7));
        let tie = merge_subcategories(&[eff(Label::Increase, 0.5), eff(Label::Increase, 0.5)]).unwrap();
        assert_eq!(tie.justification, "increase 0.5");
    }

    #[test]
    fn passages_are_numbered() {
        let report = |drug: &str, text: &str| DrugReport {
            drug: drug.into(),
            outcome: "angioedema".into(),
            text: text.into(),
            no_answer: false,
            critique: crate::critic::CritiqueLedger::new(5).snapshot(),
        };
        let p = render_passages(
            &[report("Lisinopril", "increases risk"), report("captopril", "NO_ANSWER")],
            "ACE inhibitor",
            "angioedema",
        );
        assert!(
            p.starts_with("Passages:\n1. Drug LISINOPRIL: increases risk\n2. Drug CAPTOPRIL: NO_ANSWER\n---------\n")
        );
        assert!(p.ends_with("Does the ACE inhibitor category of drugs increase the risk of angioedema, decrease it, or is there no clear effect?"));
    }
}
