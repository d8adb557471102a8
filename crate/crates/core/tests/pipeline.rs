use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use malade_core::drugdata::{LabelSource, NdcDirectory, PrescriptionRates};
use malade_core::effect::{Evidence, Frequency, Label};
use malade_core::llm::{Script, ScriptBook, ScriptEntry};
use malade_core::par::Parallelism;
use malade_core::pipeline::{
    Ablation, CategorySpec, CellStatus, Pipeline, PipelineError, PipelineSettings, SubcategorySpec,
};
use malade_core::rag::{HashEmbedder, RagStore};
use malade_core::transcript::{verify, RecordKind, Transcript};

const ACE: &str = "angiotensin converting enzyme inhibitor";
const GI: &str = "gastrointestinal ulcer hospitalization";

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn book() -> ScriptBook {
    ScriptBook::load(&fixtures().join("omop3x3/scripts.json")).unwrap()
}

fn pipeline_with(book: ScriptBook, settings: PipelineSettings) -> Pipeline {
    let data = fixtures().join("data");
    Pipeline::new(
        Arc::new(book),
        NdcDirectory::from_file(&data.join("ndc.json")).unwrap(),
        PrescriptionRates::load(&data.join("prescriptions.csv"), "drug").unwrap(),
        LabelSource::fixture(data.join("labels")),
        Arc::new(RagStore::new(Arc::new(HashEmbedder::default()))),
    )
    .with_settings(settings)
}

fn pipeline() -> Pipeline {
    pipeline_with(book(), PipelineSettings::default())
}

fn categories() -> Vec<CategorySpec> {
    vec![
        CategorySpec::new(ACE, &[ACE]),
        CategorySpec::new("alendronate", &["alendronate"]),
        CategorySpec::new("benzodiazepine", &["benzodiazepine"]),
    ]
}

fn outcomes() -> Vec<String> {
    ["angioedema", GI, "hip fracture"]
        .iter()
        .map(|s| s.to_string())
        .collect()
}

fn group(spec: &CategorySpec) -> malade_core::pipeline::Group {
    spec.groups().remove(0)
}

#[test]
fn drug_finder_picks_scripted_representatives() {
    let p = pipeline();
    let reps = p
        .find_representatives(&group(&CategorySpec::new(ACE, &[ACE])), None)
        .unwrap();
    assert_eq!(reps.names, ["Lisinopril", "Captopril", "Enalapril Maleate"]);
    assert!(reps.names.iter().all(|n| reps.candidates.contains(n)));
    assert_eq!(reps.candidates.len(), 4);
    assert!(reps.critique.accepted);
    assert_eq!(reps.critique.rounds, 1);
    let lis = reps.rates.iter().find(|r| r.name == "Lisinopril").unwrap();
    assert_eq!(lis.count, 40);
}

#[test]
fn drug_finder_repairs_one_invalid_submission() {
    let mut b = book();
    let finder = |drugs: &[&str]| {
        format!(
            "FUNC: {}",
            serde_json::json!({"name": "submit_answer", "arguments": {"drugs": drugs}})
        )
    };
    let final_answer =
        r#"FUNC: {"name": "final_answer", "arguments": {"question": "q", "steps": ["s"], "answer": "a"}}"#;
    b.insert(
        &format!("DrugFinder|{ACE}|*"),
        Script::sequence([
            final_answer.to_string(),
            finder(&["Lisinopril", "Zestril"]),
            finder(&["Lisinopril", "Captopril"]),
        ]),
    );
    let p = pipeline_with(b.clone(), PipelineSettings::default());
    let reps = p
        .find_representatives(&group(&CategorySpec::new(ACE, &[ACE])), None)
        .unwrap();
    assert_eq!(reps.names, ["Lisinopril", "Captopril"]);

    b.insert(
        &format!("DrugFinder|{ACE}|*"),
        Script::sequence([
            final_answer.to_string(),
            finder(&["Lisinopril", "lisinopril"]),
            finder(&["Zestril"]),
        ]),
    );
    let p = pipeline_with(b, PipelineSettings::default());
    let err = p
        .find_representatives(&group(&CategorySpec::new(ACE, &[ACE])), None)
        .unwrap_err();
    assert!(
        matches!(err, PipelineError::Validation { ref message, .. } if message.contains("Zestril")),
        "{err}"
    );
}

#[test]
fn submit_before_acceptance_is_refused() {
    let mut b = book();
    b.insert(
        &format!("DrugFinder|{ACE}|*"),
        Script::sequence([
            r#"FUNC: {"name": "submit_answer", "arguments": {"drugs": ["Lisinopril"]}}"#,
            r#"FUNC: {"name": "final_answer", "arguments": {"question": "q", "steps": ["s"], "answer": "Lisinopril"}}"#,
            r#"FUNC: {"name": "submit_answer", "arguments": {"drugs": ["Lisinopril"]}}"#,
        ]),
    );
    let p = pipeline_with(b, PipelineSettings::default());
    let t = Transcript::new("finder");
    let reps = p
        .find_representatives(&group(&CategorySpec::new(ACE, &[ACE])), Some(&t))
        .unwrap();
    assert_eq!(reps.names, ["Lisinopril"]);
    let refused = t
        .records()
        .into_iter()
        .filter_map(|r| r.message)
        .any(|m| m.content.contains("Do not use `submit_answer` yet"));
    assert!(refused);
}

#[test]
fn empty_category_is_an_error() {
    let p = pipeline();
    let err = p
        .find_representatives(&group(&CategorySpec::new("nonexistent class", &[])), None)
        .unwrap_err();
    assert!(matches!(err, PipelineError::EmptyCategory(_)));
}

#[test]
fn fda_answer_cites_the_label_with_a_truncated_extract() {
    let p = pipeline();
    let reply = p
        .fda_answer(
            "Does LISINOPRIL increase the risk of angioedema?",
            Some("Lisinopril"),
            Some("angioedema"),
            None,
        )
        .unwrap();
    assert!(reply.content.contains("SOURCE: LISINOPRIL label"), "{}", reply.content);
    assert!(reply
        .content
        .ends_with("EXTRACT_START_END: Angioedema of the ... converting enzyme inhibitors"));
    assert!(p.store().contains_drug("lisinopril"));
    assert!(!reply.control.done);
}

#[test]
fn fda_answer_without_label_evidence_says_no_answer() {
    let p = pipeline();
    let reply = p
        .fda_answer(
            "Does LORAZEPAM increase the risk of hip fracture?",
            Some("Lorazepam"),
            Some("hip fracture"),
            None,
        )
        .unwrap();
    assert!(reply.control.no_answer);
}

fn echo_handler(book: &mut ScriptBook, call: &str) {
    book.insert(
        "FDAHandler|*|*",
        Script::new(vec![ScriptEntry::at(0, call), ScriptEntry::at(1, "{DONE} ${incoming}")]),
    );
}

#[test]
fn relevant_extracts_fetches_missing_labels() {
    let mut b = book();
    echo_handler(
        &mut b,
        r#"FUNC: {"name": "relevant_extracts", "arguments": {"query": "angioedema larynx", "filter_drugs": ["Captopril"]}}"#,
    );
    let p = pipeline_with(b, PipelineSettings::default());
    assert!(p.store().is_empty());
    let reply = p.fda_answer("angioedema?", None, None, None).unwrap();
    assert!(p.store().contains_drug("captopril"));
    assert!(reply.content.starts_with("PASSAGES:"), "{}", reply.content);
    assert!(reply.content.contains("CAPTOPRIL: warnings_and_cautions"));
}

#[test]
fn relevant_extracts_retries_without_filter_then_gives_up() {
    let mut b = book();
    // Ramipril has no label fixture, so the filtered search finds nothing.
    echo_handler(
        &mut b,
        r#"FUNC: {"name": "relevant_extracts", "arguments": {"query": "angioedema", "filter_drugs": ["Ramipril"]}}"#,
    );
    let p = pipeline_with(b.clone(), PipelineSettings::default());
    let reply = p.fda_answer("q", None, None, None).unwrap();
    assert!(reply.control.no_answer, "{}", reply.content);

    let p = pipeline_with(b, PipelineSettings::default());
    let label = p.labels().fetch_label("Lisinopril").unwrap();
    p.store().ingest("Lisinopril", &label.sections).unwrap();
    let reply = p.fda_answer("q", None, None, None).unwrap();
    assert!(
        reply.content.contains("LISINOPRIL: warnings_and_cautions"),
        "{}",
        reply.content
    );
}

#[test]
fn relevant_search_extracts_handles_unknown_drugs() {
    let mut b = book();
    echo_handler(
        &mut b,
        r#"FUNC: {"name": "relevant_search_extracts", "arguments": {"query": "ulcers", "drug": "Ramipril"}}"#,
    );
    let p = pipeline_with(b, PipelineSettings::default());
    assert!(p.fda_answer("q", None, None, None).unwrap().control.no_answer);
}

#[test]
fn lisinopril_angioedema_report() {
    let p = pipeline();
    let t = Transcript::new("lisinopril");
    let report = p.drug_effect_report("Lisinopril", "angioedema", Some(&t)).unwrap();
    assert!(!report.no_answer);
    assert!(report.text.contains("increases the risk of angioedema"));
    assert!(report.text.contains("Black patients"));
    assert!(report.text.contains("fatal"));
    assert!(report.critique.accepted);
    let records = t.records();
    assert!(verify(&records).is_empty(), "{:?}", verify(&records));
    let tasks: std::collections::BTreeSet<_> = records.iter().map(|r| r.task.as_str()).collect();
    assert_eq!(
        tasks.into_iter().collect::<Vec<_>>(),
        ["DrugAgent", "DrugAgentCritic", "FDAHandler"]
    );
}

#[test]
fn lorazepam_hip_fracture_report_has_no_answer() {
    let report = pipeline()
        .drug_effect_report("Lorazepam", "hip fracture", None)
        .unwrap();
    assert!(report.no_answer);
    assert!(report.text.contains("NO_ANSWER"));
}

#[test]
fn alendronate_report_keeps_the_clinical_trials_sentence() {
    let report = pipeline().drug_effect_report("Alendronate Sodium", GI, None).unwrap();
    assert!(!report.no_answer);
    assert!(report
        .text
        .contains("no increased risk was observed in controlled clinical trials"));
}

#[test]
fn recipient_other_than_fda_handler_is_corrected() {
    let mut b = book();
    b.insert(
        "DrugAgent|*|*",
        Script::sequence([
            r#"FUNC: {"name": "recipient_message", "arguments": {"intended_recipient": "Wikipedia", "content": "q"}}"#,
            r#"FUNC: {"name": "recipient_message", "arguments": {"intended_recipient": "FDAHandler", "content": "Does DIAZEPAM increase or decrease the risk of angioedema?"}}"#,
            r#"FUNC: {"name": "final_answer", "arguments": {"question": "q", "steps": ["s"], "answer": "NO_ANSWER"}}"#,
            "{DONE} {NO_ANSWER}",
        ]),
    );
    let p = pipeline_with(b, PipelineSettings::default());
    let t = Transcript::new("diazepam");
    let report = p.drug_effect_report("Diazepam", "angioedema", Some(&t)).unwrap();
    assert!(report.no_answer);
    let corrected = t
        .records()
        .into_iter()
        .filter_map(|r| r.message)
        .any(|m| m.content.contains("must be `FDAHandler`"));
    assert!(corrected);
}

fn report(p: &Pipeline, drug: &str, outcome: &str) -> malade_core::pipeline::DrugReport {
    p.drug_effect_report(drug, outcome, None).unwrap()
}

#[test]
fn benzodiazepine_hip_fracture_takes_three_rounds() {
    let p = pipeline();
    let reports: Vec<_> = ["Lorazepam", "Diazepam", "Clonazepam"]
        .iter()
        .map(|d| report(&p, d, "hip fracture"))
        .collect();
    let t = Transcript::new("benzo");
    let verdict = p
        .categorize(
            &group(&CategorySpec::new("benzodiazepine", &[])),
            "hip fracture",
            &reports,
            Some(&t),
        )
        .unwrap();
    let e = &verdict.effect;
    assert_eq!(e.label, Label::Increase);
    assert_eq!(e.confidence, 0.6);
    assert_eq!(e.probability, 0.1);
    assert_eq!(e.frequency, Frequency::Rare);
    assert_eq!(e.evidence, Evidence::Weak);
    assert_eq!(verdict.critique.rounds, 3);
    assert!(verdict.critique.accepted && !verdict.critique.forced);
    let accepted: Vec<bool> = verdict.critique.verdicts.iter().map(|v| v.accepted).collect();
    assert_eq!(accepted, [false, false, true]);
    assert!(!verdict.coerced);
    assert!(verify(&t.records()).is_empty());
}

#[test]
fn ace_angioedema_verdict() {
    let p = pipeline();
    let reports: Vec<_> = ["Lisinopril", "Captopril", "Enalapril Maleate"]
        .iter()
        .map(|d| report(&p, d, "angioedema"))
        .collect();
    let v = p
        .categorize(&group(&CategorySpec::new(ACE, &[])), "angioedema", &reports, None)
        .unwrap();
    assert_eq!(
        (
            v.effect.label,
            v.effect.confidence,
            v.effect.probability,
            v.effect.frequency,
            v.effect.evidence
        ),
        (Label::Increase, 1.0, 0.001, Frequency::Rare, Evidence::Strong)
    );
}

#[test]
fn never_accepting_critic_is_forced_after_max_rounds() {
    let mut b = book();
    let fa = r#"FUNC: {"name": "final_answer", "arguments": {"question": "q", "steps": ["s"], "answer": "increase"}}"#;
    let mut primary: Vec<String> = vec![fa.to_string(); 5];
    primary.push(
        r#"FUNC: {"name": "category_effect_tool", "arguments": {"label": "increase", "confidence": 0.5, "probability": 0.2, "frequency": "common", "evidence": "strong", "justification": "j"}}"#
            .to_string(),
    );
    b.insert("CategoryAgent|benzodiazepine|angioedema", Script::sequence(primary));
    b.insert(
        "CategoryAgentCritic|benzodiazepine|angioedema",
        Script::new(vec![ScriptEntry::containing(
            "Final answer",
            r#"FUNC: {"name": "feedback", "arguments": {"critique": "Not convinced."}}"#,
        )]),
    );
    let p = pipeline_with(b, PipelineSettings::default());
    let reports = vec![report(&p, "Clonazepam", "hip fracture")];
    let v = p
        .categorize(
            &group(&CategorySpec::new("benzodiazepine", &[])),
            "angioedema",
            &reports,
            None,
        )
        .unwrap();
    assert_eq!(v.critique.rounds, 5);
    assert!(v.critique.forced);
    assert_eq!(v.critique.verdicts.iter().filter(|v| v.accepted).count(), 1);
    assert_eq!(v.effect.label, Label::Increase);
}

#[test]
fn invalid_category_effect_gets_one_repair() {
    let mut b = book();
    let fa = r#"FUNC: {"name": "final_answer", "arguments": {"question": "q", "steps": ["s"], "answer": "a"}}"#;
    let bad = r#"FUNC: {"name": "category_effect_tool", "arguments": {"label": "maybe", "confidence": 0.5, "probability": 0.2, "frequency": "rare", "evidence": "weak", "justification": "j"}}"#;
    let good = r#"FUNC: {"name": "category_effect_tool", "arguments": {"label": "decrease", "confidence": 0.5, "probability": 0.2, "frequency": "rare", "evidence": "moderate", "justification": "j"}}"#;
    b.insert(
        "CategoryAgent|alendronate|hip fracture",
        Script::sequence([fa, bad, good]),
    );
    let p = pipeline_with(b.clone(), PipelineSettings::default());
    let reports = vec![report(&p, "Alendronate Sodium", GI)];
    let g = group(&CategorySpec::new("alendronate", &[]));
    let err = p.categorize(&g, "hip fracture", &reports, None).unwrap_err();
    assert!(
        matches!(err, PipelineError::Validation { ref message, .. } if message.contains("evidence")),
        "{err}"
    );

    let fixed = good.replace("moderate", "weak");
    b.insert(
        "CategoryAgent|alendronate|hip fracture",
        Script::sequence([fa, bad, fixed.as_str()]),
    );
    let p = pipeline_with(b, PipelineSettings::default());
    let v = p.categorize(&g, "hip fracture", &reports, None).unwrap();
    assert_eq!(v.effect.label, Label::Decrease);
}

#[test]
fn all_no_answer_reports_force_no_effect() {
    let mut b = book();
    b.insert(
        "CategoryAgent|benzodiazepine|angioedema",
        Script::sequence([
            r#"FUNC: {"name": "final_answer", "arguments": {"question": "q", "steps": ["s"], "answer": "increase"}}"#,
            r#"FUNC: {"name": "category_effect_tool", "arguments": {"label": "increase", "confidence": 0.9, "probability": 0.3, "frequency": "common", "evidence": "strong", "justification": "j"}}"#,
        ]),
    );
    let p = pipeline_with(b, PipelineSettings::default());
    let result = p.run_matrix(&categories()[2..], &["angioedema".to_string()], None);
    let cell = &result.cells[0];
    assert_eq!(cell.status, CellStatus::Ok);
    assert!(cell.coerced);
    assert_eq!(cell.effect.as_ref().unwrap().label, Label::NoEffect);
    assert_eq!(cell.effect.as_ref().unwrap().confidence, 0.9);
    assert!(result.reports.iter().all(|r| r.no_answer));
}

#[test]
fn matrix_runs_all_cells() {
    let p = pipeline();
    let result = p.run_matrix(&categories(), &outcomes(), None);
    assert_eq!(result.cells.len(), 9);
    assert_eq!(
        result.failed_cells().count(),
        0,
        "{:?}",
        result.failed_cells().collect::<Vec<_>>()
    );
    let cell = |c: &str, o: &str| {
        result
            .cells
            .iter()
            .find(|x| x.category == c && x.outcome == o)
            .and_then(|x| x.effect.clone())
            .unwrap()
    };
    let ace = cell(ACE, "angioedema");
    assert_eq!((ace.label, ace.confidence), (Label::Increase, 1.0));
    let aln = cell("alendronate", GI);
    assert_eq!(
        (aln.label, aln.confidence, aln.probability),
        (Label::NoEffect, 0.8, 0.05)
    );
    let bzd = cell("benzodiazepine", "hip fracture");
    assert_eq!(
        (bzd.label, bzd.confidence, bzd.probability),
        (Label::Increase, 0.6, 0.1)
    );
    assert_eq!(cell(ACE, "hip fracture").label, Label::NoEffect);
    // 8 distinct representatives × 3 outcomes.
    assert_eq!(result.reports.len(), 24);
    for (id, records) in &result.transcripts {
        assert!(verify(records).is_empty(), "{id}: {:?}", verify(records));
    }
    let benzo = result
        .cells
        .iter()
        .find(|x| x.category == "benzodiazepine" && x.outcome == "hip fracture")
        .unwrap();
    assert_eq!(benzo.feedback_rounds, 3);
    assert!(benzo
        .conversations
        .contains(&"categoryagent__benzodiazepine__hip_fracture".to_string()));
}

#[test]
fn matrix_is_identical_across_fanout_settings() {
    let run = |par: Parallelism| {
        let settings = PipelineSettings {
            parallelism: par,
            ..Default::default()
        };
        let r = pipeline_with(book(), settings).run_matrix(&categories(), &outcomes(), None);
        serde_json::to_string(&r).unwrap()
    };
    let sequential = run(Parallelism::Sequential);
    assert_eq!(sequential, run(Parallelism::Threads(4)));
    assert_eq!(sequential, run(Parallelism::Threads(8)));
}

#[test]
fn single_cell_matrix_equals_manual_composition() {
    let p = pipeline();
    let spec = CategorySpec::new(ACE, &[ACE]);
    let result = p.run_matrix(std::slice::from_ref(&spec), &["angioedema".to_string()], None);
    let q = pipeline();
    let reps = q.find_representatives(&group(&spec), None).unwrap();
    let reports: Vec<_> = reps.names.iter().map(|d| report(&q, d, "angioedema")).collect();
    let manual = q.categorize(&group(&spec), "angioedema", &reports, None).unwrap();
    assert_eq!(result.cells.len(), 1);
    assert_eq!(result.cells[0].effect.as_ref(), Some(&manual.effect));
}

#[test]
fn critics_ablation_has_no_feedback_rounds() {
    let settings = PipelineSettings {
        ablation: Ablation {
            critics: false,
            rag: true,
        },
        ..Default::default()
    };
    let result = pipeline_with(book(), settings).run_matrix(&categories(), &outcomes(), None);
    assert_eq!(result.failed_cells().count(), 0);
    assert!(result.cells.iter().all(|c| c.feedback_rounds == 0));
    assert!(result.reports.iter().all(|r| r.critique.rounds == 0));
    let critic_records = result
        .transcripts
        .values()
        .flatten()
        .filter(|r| r.task.ends_with("Critic"))
        .count();
    assert_eq!(critic_records, 0);
    let fb = result
        .transcripts
        .values()
        .flatten()
        .filter_map(|r| r.message.as_ref())
        .filter(|m| m.tool_call.as_deref().is_some_and(|t| t.contains("\"feedback\"")))
        .count();
    assert_eq!(fb, 0);
}

#[test]
fn rag_ablation_uses_a_bare_answerer() {
    let settings = PipelineSettings {
        ablation: Ablation {
            critics: true,
            rag: false,
        },
        ..Default::default()
    };
    let p = pipeline_with(book(), settings);
    let result = p.run_matrix(&categories()[..1], &["angioedema".to_string()], None);
    assert_eq!(result.failed_cells().count(), 0);
    assert!(p.store().is_empty());
    let corrected = result
        .transcripts
        .values()
        .flatten()
        .filter(|r| r.task == "FDAHandler")
        .filter_map(|r| r.message.as_ref())
        .any(|m| m.content.contains("relevant_extracts"));
    assert!(corrected);
}

#[test]
fn failed_cells_do_not_stop_the_others() {
    let mut cats = categories();
    cats.push(CategorySpec::new("nonexistent class", &[]));
    let result = pipeline().run_matrix(&cats, &["angioedema".to_string()], None);
    assert_eq!(result.cells.len(), 4);
    let failed: Vec<_> = result.failed_cells().collect();
    assert_eq!(failed.len(), 1);
    assert_eq!(failed[0].category, "nonexistent class");
    assert!(failed[0].error.as_deref().unwrap().contains("no NDC drugs"));
    assert!(failed[0].effect.is_none());
}

#[test]
fn zero_representatives_fail_the_cell() {
    let mut fixed = BTreeMap::new();
    fixed.insert("benzodiazepine".to_string(), Vec::new());
    let result = pipeline().run_matrix(&categories()[2..], &["hip fracture".to_string()], Some(&fixed));
    assert_eq!(result.cells[0].status, CellStatus::Failed);
    assert!(result.cells[0]
        .error
        .as_deref()
        .unwrap()
        .contains("no representative drugs"));
}

#[test]
fn fixed_representatives_skip_step_one() {
    let mut fixed = BTreeMap::new();
    fixed.insert(ACE.to_string(), vec!["Lisinopril".to_string()]);
    let result = pipeline().run_matrix(&categories()[..1], &["angioedema".to_string()], Some(&fixed));
    assert!(!result.transcripts.keys().any(|k| k.starts_with("drugfinder")));
    assert_eq!(result.cells[0].representatives[ACE], ["Lisinopril"]);
    assert_eq!(result.reports.len(), 1);
}

#[test]
fn subcategories_merge_to_the_highest_risk() {
    let mixed = CategorySpec {
        name: "mixed".into(),
        search_terms: vec![],
        subcategories: vec![
            SubcategorySpec {
                name: "benzodiazepine".into(),
                search_terms: vec![],
            },
            SubcategorySpec {
                name: ACE.into(),
                search_terms: vec![],
            },
        ],
        representatives: 3,
    };
    let result = pipeline().run_matrix(&[mixed], &["angioedema".to_string()], None);
    let cell = &result.cells[0];
    assert_eq!(cell.status, CellStatus::Ok);
    assert_eq!(cell.group_effects.len(), 2);
    assert_eq!(cell.group_effects["benzodiazepine"].label, Label::NoEffect);
    let e = cell.effect.as_ref().unwrap();
    assert_eq!((e.label, e.confidence), (Label::Increase, 1.0));
}

#[test]
fn trial_scripts_override_the_default() {
    let settings = PipelineSettings {
        trial: Some(5),
        ..Default::default()
    };
    let result = pipeline_with(book(), settings).run_matrix(&categories()[2..], &["hip fracture".to_string()], None);
    let e = result.cells[0].effect.as_ref().unwrap();
    assert_eq!((e.confidence, e.probability), (0.5, 0.08));
    assert!(result.transcripts.keys().all(|k| k.ends_with("__t5")));
    let starts = result
        .transcripts
        .values()
        .flatten()
        .filter(|r| r.kind == RecordKind::Start)
        .count();
    assert!(starts > 0);
}
