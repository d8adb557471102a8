//! Step 1: pick representative drugs for a category.

use std::sync::Arc;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use crate::agent::ToolSpec;
use crate::critic::{not_yet_accepted_message, CritiqueState};
use crate::drugdata::{normalize_name, NdcDrugRecord, PrescriptionRate};
use crate::message::{EntityKind, Message, DONE};
use crate::task::TaskHandle;
use crate::tool::{FieldKind, ToolField, ToolSchema};
use crate::transcript::Transcript;

use super::{prompts, require_done, Group, Pipeline, PipelineError, DRUG_FINDER, DRUG_FINDER_CRITIC, REPAIR_ROUNDS};

pub const SUBMIT_ANSWER: &str = "submit_answer";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Representatives {
    pub group: Group,
    pub names: Vec<String>,
    pub candidates: Vec<String>,
    pub rates: Vec<PrescriptionRate>,
    pub critique: CritiqueState,
}

fn submit_schema() -> ToolSchema {
    ToolSchema::new(
        SUBMIT_ANSWER,
        "submit the representative drugs once the critic has accepted your answer",
        vec![ToolField::required(
            "drugs",
            FieldKind::TextList,
            "the selected drug names, each exactly as in the provided list",
        )],
    )
}

/// User message listing the candidates and their prescription counts.
pub fn render_candidates(group: &Group, rates: &[PrescriptionRate]) -> String {
    let mut out = format!("Drugs in category {} found in the NDC directory:\n", group.name);
    for r in rates {
        out.push_str(&format!("- {}\n", r.name));
    }
    out.push_str("\nPrescription counts from the prescriptions table (drug: count, rate):\n");
    for r in rates {
        out.push_str(&format!("{}: {} ({:.6})\n", normalize_name(&r.name), r.count, r.rate));
    }
    out.push_str(&format!(
        "\nFind {} representative drugs in category {}.",
        group.representatives, group.name
    ));
    out
}

/// Maps the submitted names onto candidate names, enforcing membership,
/// distinctness and the size bound.
fn validate_selection(selected: &[String], candidates: &[NdcDrugRecord], n: usize) -> Result<Vec<String>, String> {
    if selected.is_empty() {
        return Err("select at least one drug".into());
    }
    if selected.len() > n {
        return Err(format!("select at most {n} drugs, got {}", selected.len()));
    }
    let mut names: Vec<String> = Vec::new();
    for s in selected {
        let key = normalize_name(s);
        let Some(c) = candidates.iter().find(|c| normalize_name(&c.name) == key) else {
            return Err(format!("`{s}` is not one of the provided drugs"));
        };
        if names.iter().any(|n| normalize_name(n) == key) {
            return Err(format!("`{s}` is listed more than once"));
        }
        names.push(c.name.clone());
    }
    Ok(names)
}

#[derive(Default)]
struct Submission {
    names: Option<Vec<String>>,
    failure: Option<String>,
    repairs: u32,
}

impl Pipeline {
    /// Runs the DrugFinder/critic pair on the NDC candidates of `group`.
    pub fn find_representatives(
        &self,
        group: &Group,
        transcript: Option<&Transcript>,
    ) -> Result<Representatives, PipelineError> {
        let candidates = self.ndc.find_category_drugs(&group.search_terms)?;
        if candidates.is_empty() {
            return Err(PipelineError::EmptyCategory(group.name.clone()));
        }
        let names: Vec<String> = candidates.iter().map(|c| c.name.clone()).collect();
        let rates = self.rates.rates(&names);
        let key = self.key(DRUG_FINDER, &group.name);
        let n = group.representatives.max(1);
        let primary = TaskHandle::new(self.task(DRUG_FINDER, &prompts::drug_finder(&group.name, n), &key));
        let ledger = self.pair_with_critic(
            &primary,
            DRUG_FINDER_CRITIC,
            &prompts::drug_finder_critic(&group.name),
            &key,
        )?;

        let state = Arc::new(Mutex::new(Submission::default()));
        let (slot, accepted) = (state.clone(), ledger.clone());
        let pool = candidates.clone();
        primary
            .lock()
            .agent_mut()
            .register_tool(ToolSpec::new(submit_schema(), move |call| {
                if !accepted.is_accepted() {
                    return Ok(Some(Message::new(EntityKind::Agent, not_yet_accepted_message(SUBMIT_ANSWER))));
                }
                let selected: Vec<String> = call
                    .arguments
                    .get("drugs")
                    .and_then(|v| v.as_array())
                    .map(|a| a.iter().filter_map(|s| s.as_str().map(str::to_string)).collect())
                    .unwrap_or_default();
                let mut s = slot.lock();
                match validate_selection(&selected, &pool, n) {
                    Ok(names) => {
                        let text = format!("{{{DONE}}} {}", names.join(", "));
                        s.names = Some(names);
                        Ok(Some(Message::new(EntityKind::Agent, text)))
                    }
                    Err(reason) if s.repairs < REPAIR_ROUNDS => {
                        s.repairs += 1;
                        Ok(Some(Message::new(
                            EntityKind::Agent,
                            format!(
                                "Your submission is invalid: {reason}. The names must EXACTLY match drugs from the provided list, without duplicates and at most {n} of them. Submit again with `{SUBMIT_ANSWER}`."
                            ),
                        )))
                    }
                    Err(reason) => {
                        let text = format!("{{{DONE}}} Submission rejected: {reason}");
                        s.failure = Some(reason);
                        Ok(Some(Message::new(EntityKind::Agent, text)))
                    }
                }
            }))
            .map_err(|source| crate::task::TaskError::Agent {
                task: DRUG_FINDER.to_string(),
                source,
            })?;
        if let Some(t) = transcript {
            primary.set_transcript(t);
        }
        primary.run(&render_candidates(group, &rates))?;
        let mut s = state.lock();
        if let Some(message) = s.failure.take() {
            return Err(PipelineError::Validation {
                stage: DRUG_FINDER.to_string(),
                message,
            });
        }
        let Some(names) = s.names.take() else {
            require_done(DRUG_FINDER, primary.lock().end_reason())?;
            return Err(PipelineError::Incomplete {
                stage: DRUG_FINDER.to_string(),
                reason: format!("no `{SUBMIT_ANSWER}` call"),
            });
        };
        Ok(Representatives {
            group: group.clone(),
            names,
            candidates: candidates.into_iter().map(|c| c.name).collect(),
            rates,
            critique: ledger.snapshot(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cands(names: &[&str]) -> Vec<NdcDrugRecord> {
        names
            .iter()
            .map(|n| NdcDrugRecord {
                name: n.to_string(),
                pharm_classes: vec![],
                product_ids: vec![],
            })
            .collect()
    }

    #[test]
    fn selection_rules() {
        let c = cands(&["Lisinopril", "Captopril", "Enalapril Maleate", "Zestril"]);
        let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
        assert_eq!(
            validate_selection(&s(&["lisinopril", "Captopril"]), &c, 3).unwrap(),
            vec!["Lisinopril", "Captopril"]
        );
        assert!(validate_selection(&s(&["Ramipril"]), &c, 3)
            .unwrap_err()
            .contains("Ramipril"));
        assert!(validate_selection(&s(&["Lisinopril", "LISINOPRIL"]), &c, 3).is_err());
        assert!(validate_selection(&s(&["Lisinopril", "Captopril", "Zestril", "Enalapril Maleate"]), &c, 3).is_err());
        assert!(validate_selection(&[], &c, 3).is_err());
    }
}
