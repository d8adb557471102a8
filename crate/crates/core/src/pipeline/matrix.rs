//! Category × outcome matrix: the three steps fanned out over all cells.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::critic::CritiqueLedger;
use crate::drugdata::{normalize_name, DrugDataError};
use crate::effect::CategoryEffect;
use crate::transcript::{Record, Transcript};

use super::{
    conversation_id, merge_subcategories, CategorySpec, CategoryVerdict, DrugReport, Group, Pipeline, Representatives,
    CATEGORY_AGENT, DRUG_AGENT, DRUG_FINDER,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupResult {
    pub group: Group,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub representatives: Option<Representatives>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub conversation: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub category: String,
    pub outcome: String,
    pub status: CellStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub effect: Option<CategoryEffect>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Representatives per group, in group order.
    pub representatives: BTreeMap<String, Vec<String>>,
    /// Verdict of each group before merging.
    pub group_effects: BTreeMap<String, CategoryEffect>,
    pub coerced: bool,
    /// CategoryAgent critic rounds, summed over groups.
    pub feedback_rounds: u32,
    pub conversations: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MatrixResult {
    pub cells: Vec<CellResult>,
    pub groups: Vec<GroupResult>,
    pub reports: Vec<DrugReport>,
    /// Failed drug reports keyed by `drug|outcome`.
    pub report_errors: BTreeMap<String, String>,
    pub transcripts: BTreeMap<String, Vec<Record>>,
}

impl MatrixResult {
    pub fn failed_cells(&self) -> impl Iterator<Item = &CellResult> {
        self.cells.iter().filter(|c| c.status == CellStatus::Failed)
    }
}

fn report_key(drug: &str, outcome: &str) -> (String, String) {
    (normalize_name(drug), outcome.to_string())
}

impl Pipeline {
    /// Runs all three steps for every category × outcome cell.
    ///
    /// With `fixed_representatives`, groups named in the map skip Step 1 and
    /// use the given drugs. Failures are recorded per cell; they do not stop
    /// the other cells.
    pub fn run_matrix(
        &self,
        categories: &[CategorySpec],
        outcomes: &[String],
        fixed_representatives: Option<&BTreeMap<String, Vec<String>>>,
    ) -> MatrixResult {
        let trial = self.settings.trial;
        let par = self.settings.parallelism;
        let mut transcripts = BTreeMap::new();

        let groups: Vec<Group> = categories.iter().flat_map(CategorySpec::groups).collect();
        let step1 = par.map(&groups, |g| {
            let id = conversation_id(DRUG_FINDER, &[&g.name], trial);
            let t = Transcript::new(&id);
            let fixed = fixed_representatives.and_then(|m| m.get(&g.name));
            let result = match fixed {
                Some(names) => Ok(Representatives {
                    group: g.clone(),
                    names: names.clone(),
                    candidates: names.clone(),
                    rates: Vec::new(),
                    critique: CritiqueLedger::new(self.settings.max_rounds).snapshot(),
                }),
                None => self.find_representatives(g, Some(&t)),
            };
            (id, t, result)
        });
        let mut group_results = Vec::with_capacity(groups.len());
        for (g, (id, t, result)) in groups.iter().zip(step1) {
            if !t.is_empty() {
                transcripts.insert(id.clone(), t.records());
            }
            let (representatives, error) = match result {
                Ok(r) => (Some(r), None),
                Err(e) => {
                    log::warn!("{}: representative selection failed: {e}", g.name);
                    (None, Some(e.to_string()))
                }
            };
            group_results.push(GroupResult {
                group: g.clone(),
                representatives,
                error,
                conversation: id,
            });
        }

        let mut drugs: BTreeMap<String, String> = BTreeMap::new();
        for r in group_results.iter().filter_map(|g| g.representatives.as_ref()) {
            for name in &r.names {
                drugs.entry(normalize_name(name)).or_insert_with(|| name.clone());
            }
        }
        if self.settings.ablation.rag {
            self.preload_labels(drugs.values());
        }

        let pairs: Vec<(String, String)> = drugs
            .values()
            .flat_map(|d| outcomes.iter().map(move |o| (d.clone(), o.clone())))
            .collect();
        let step2 = par.map(&pairs, |(drug, outcome)| {
            let id = conversation_id(DRUG_AGENT, &[drug, outcome], trial);
            let t = Transcript::new(&id);
            let result = self.drug_effect_report(drug, outcome, Some(&t));
            (id, t, result)
        });
        let mut reports: BTreeMap<(String, String), DrugReport> = BTreeMap::new();
        let mut report_errors = BTreeMap::new();
        let mut report_ids = BTreeMap::new();
        for ((drug, outcome), (id, t, result)) in pairs.iter().zip(step2) {
            transcripts.insert(id.clone(), t.records());
            report_ids.insert(report_key(drug, outcome), id);
            match result {
                Ok(r) => {
                    reports.insert(report_key(drug, outcome), r);
                }
                Err(e) => {
                    log::warn!("{drug} / {outcome}: drug report failed: {e}");
                    report_errors.insert(format!("{drug}|{outcome}"), e.to_string());
                }
            }
        }

        let units: Vec<(usize, String)> = (0..group_results.len())
            .flat_map(|i| outcomes.iter().map(move |o| (i, o.clone())))
            .collect();
        let step3 = par.map(&units, |(i, outcome)| {
            let g = &group_results[*i];
            let id = conversation_id(CATEGORY_AGENT, &[&g.group.name, outcome], trial);
            let Some(reps) = &g.representatives else {
                return (id, None, Err(g.error.clone().unwrap_or_default()));
            };
            if reps.names.is_empty() {
                return (id, None, Err(format!("{}: no representative drugs", g.group.name)));
            }
            let mut inputs = Vec::with_capacity(reps.names.len());
            for name in &reps.names {
                match reports.get(&report_key(name, outcome)) {
                    Some(r) => inputs.push(r.clone()),
                    None => {
                        let why = report_errors
                            .get(&format!("{name}|{outcome}"))
                            .cloned()
                            .unwrap_or_else(|| "no report".into());
                        return (id, None, Err(format!("{name}: {why}")));
                    }
                }
            }
            let t = Transcript::new(&id);
            let result = self
                .categorize(&g.group, outcome, &inputs, Some(&t))
                .map_err(|e| e.to_string());
            (id, Some(t), result)
        });
        let mut verdicts: Verdicts = BTreeMap::new();
        for ((i, outcome), (id, t, result)) in units.into_iter().zip(step3) {
            if let Some(t) = t {
                transcripts.insert(id.clone(), t.records());
            }
            verdicts.insert((i, outcome), (id, result));
        }

        let mut cells = Vec::new();
        for spec in categories {
            let members: Vec<usize> = (0..group_results.len())
                .filter(|&i| group_results[i].group.category == spec.name)
                .collect();
            for outcome in outcomes {
                cells.push(assemble_cell(
                    spec,
                    outcome,
                    &members,
                    &group_results,
                    &verdicts,
                    &report_ids,
                ));
            }
        }
        MatrixResult {
            cells,
            groups: group_results,
            reports: reports.into_values().collect(),
            report_errors,
            transcripts,
        }
    }

    /// Fetches and indexes labels not yet in the store, in a fixed order, so
    /// that chunk ordinals do not depend on thread scheduling.
    fn preload_labels<'a>(&self, drugs: impl Iterator<Item = &'a String>) {
        for drug in drugs {
            if self.store.contains_drug(drug) {
                continue;
            }
            match self.labels.fetch_label(drug) {
                Ok(label) => {
                    if let Err(e) = self.store.ingest(drug, &label.sections) {
                        log::warn!("cannot index label of {drug}: {e}");
                    }
                }
                Err(DrugDataError::NotFound(_)) => log::info!("no label found for {drug}"),
                Err(e) => log::warn!("cannot fetch label of {drug}: {e}"),
            }
        }
    }
}

/// Category verdicts keyed by (group index, outcome), with the conversation id.
type Verdicts = BTreeMap<(usize, String), (String, Result<CategoryVerdict, String>)>;

fn assemble_cell(
    spec: &CategorySpec,
    outcome: &str,
    members: &[usize],
    groups: &[GroupResult],
    verdicts: &Verdicts,
    report_ids: &BTreeMap<(String, String), String>,
) -> CellResult {
    let mut cell = CellResult {
        category: spec.name.clone(),
        outcome: outcome.to_string(),
        status: CellStatus::Ok,
        effect: None,
        error: None,
        representatives: BTreeMap::new(),
        group_effects: BTreeMap::new(),
        coerced: false,
        feedback_rounds: 0,
        conversations: Vec::new(),
    };
    let mut conversations = BTreeSet::new();
    let mut effects = Vec::new();
    let mut errors = Vec::new();
    for &i in members {
        let g = &groups[i];
        conversations.insert(g.conversation.clone());
        if let Some(r) = &g.representatives {
            cell.representatives.insert(g.group.name.clone(), r.names.clone());
            for name in &r.names {
                if let Some(id) = report_ids.get(&report_key(name, outcome)) {
                    conversations.insert(id.clone());
                }
            }
        }
        match verdicts.get(&(i, outcome.to_string())) {
            Some((id, Ok(v))) => {
                conversations.insert(id.clone());
                cell.coerced |= v.coerced;
                cell.feedback_rounds += v.critique.rounds;
                cell.group_effects.insert(g.group.name.clone(), v.effect.clone());
                effects.push(v.effect.clone());
            }
            Some((id, Err(e))) => {
                conversations.insert(id.clone());
                errors.push(format!("{}: {e}", g.group.name));
            }
            None => errors.push(format!("{}: not evaluated", g.group.name)),
        }
    }
    if members.is_empty() {
        errors.push("no groups".into());
    }
    cell.conversations = conversations.into_iter().collect();
    if errors.is_empty() {
        cell.effect = merge_subcategories(&effects);
    } else {
        cell.status = CellStatus::Failed;
        cell.error = Some(errors.join("; "));
    }
    cell
}
