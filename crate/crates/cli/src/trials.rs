//! `trials`: repeated runs of the same matrix and per-cell score spread.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;

use malade_core::effect::Label;
use malade_core::pipeline::{conversation_id, CategorySpec, CellStatus, Pipeline, DRUG_FINDER};
use malade_core::scoring::{score, trials_summary, Mode, Scoring, TrialsSummary, DEFAULT_BINS};
use malade_core::transcript::{write_jsonl, Transcript};

use crate::config::RunConfig;
use crate::run::{build_pipeline, write_jsonl_lines, write_matrix, RunFlags};

pub const TRIALS_DIR: &str = "trials";

#[derive(Debug, Clone, Default)]
pub struct TrialsOptions {
    pub n: u32,
    /// Run Step 1 once and reuse its representatives in every trial.
    pub fix_representatives: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrialScore {
    pub trial: u32,
    pub category: String,
    pub outcome: String,
    pub label: Label,
    pub confidence: f64,
    pub probability: f64,
    /// Keyed by `<mode>/<scoring>`.
    pub scores: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricSummary {
    pub mode: Mode,
    pub scoring: Scoring,
    pub summary: TrialsSummary,
    pub std_undefined: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CellSummary {
    pub category: String,
    pub outcome: String,
    pub samples: usize,
    pub failed_trials: usize,
    pub metrics: Vec<MetricSummary>,
}

#[derive(Debug)]
pub struct TrialsOutcome {
    pub dir: PathBuf,
    pub scores: Vec<TrialScore>,
    pub cells: Vec<CellSummary>,
    pub failed: usize,
}

impl TrialsOutcome {
    pub fn success(&self) -> bool {
        self.failed == 0
    }
}

fn metric_key(mode: Mode, scoring: Scoring) -> String {
    format!("{}/{}", mode.as_str(), scoring.as_str())
}

/// Histogram range of a score: modified probabilities reach 2.
fn score_range(scoring: Scoring) -> (f64, f64) {
    match scoring {
        Scoring::ProbabilityModified => (0.0, 2.0),
        _ => (0.0, 1.0),
    }
}

fn fixed_representatives(
    pipeline: &Pipeline,
    categories: &[CategorySpec],
    dir: &Path,
) -> Result<BTreeMap<String, Vec<String>>> {
    let mut fixed = BTreeMap::new();
    for group in categories.iter().flat_map(CategorySpec::groups) {
        let id = conversation_id(DRUG_FINDER, &[&group.name], None);
        let t = Transcript::new(&id);
        let reps = pipeline.find_representatives(&group, Some(&t));
        let path = dir.join("transcripts").join(format!("{id}.jsonl"));
        std::fs::create_dir_all(path.parent().unwrap_or(dir))?;
        write_jsonl(std::fs::File::create(&path)?, &t.records())?;
        let reps = reps.with_context(|| format!("representative selection failed for {}", group.name))?;
        fixed.insert(group.name.clone(), reps.names);
    }
    Ok(fixed)
}

pub fn cmd_trials(cfg: &RunConfig, flags: &RunFlags, opts: &TrialsOptions) -> Result<TrialsOutcome> {
    if opts.n == 0 {
        bail!("the number of trials must be positive");
    }
    let dir = cfg.output_dir.join(TRIALS_DIR);
    let mut pipeline = build_pipeline(cfg, flags)?;
    let fixed = if opts.fix_representatives {
        Some(fixed_representatives(&pipeline, &cfg.categories, &dir.join("step1"))?)
    } else {
        None
    };
    if let Some(f) = &fixed {
        std::fs::write(
            dir.join("step1").join("representatives.json"),
            serde_json::to_string_pretty(f)?,
        )?;
    }

    let mut scores = Vec::new();
    let mut failures: BTreeMap<(String, String), usize> = BTreeMap::new();
    let mut failed = 0;
    for trial in 1..=opts.n {
        pipeline.settings.trial = Some(trial);
        let result = pipeline.run_matrix(&cfg.categories, &cfg.outcomes, fixed.as_ref());
        write_matrix(&dir.join(format!("trial_{trial:02}")), &result)?;
        for cell in &result.cells {
            let (CellStatus::Ok, Some(effect)) = (cell.status, &cell.effect) else {
                log::error!("trial {trial}: {} / {} failed", cell.category, cell.outcome);
                *failures
                    .entry((cell.category.clone(), cell.outcome.clone()))
                    .or_default() += 1;
                failed += 1;
                continue;
            };
            let mut by_metric = BTreeMap::new();
            for mode in Mode::ALL {
                for scoring in Scoring::ALL {
                    by_metric.insert(metric_key(mode, scoring), score(effect, mode, scoring));
                }
            }
            scores.push(TrialScore {
                trial,
                category: cell.category.clone(),
                outcome: cell.outcome.clone(),
                label: effect.label,
                confidence: effect.confidence,
                probability: effect.probability,
                scores: by_metric,
            });
        }
    }

    let mut cells = Vec::new();
    for spec in &cfg.categories {
        for outcome in &cfg.outcomes {
            let samples: Vec<&TrialScore> = scores
                .iter()
                .filter(|s| s.category == spec.name && &s.outcome == outcome)
                .collect();
            let mut metrics = Vec::new();
            if !samples.is_empty() {
                for mode in Mode::ALL {
                    for scoring in Scoring::ALL {
                        let key = metric_key(mode, scoring);
                        let values: Vec<f64> = samples.iter().map(|s| s.scores[&key]).collect();
                        let summary = trials_summary(&values, score_range(scoring), DEFAULT_BINS)?;
                        metrics.push(MetricSummary {
                            mode,
                            scoring,
                            std_undefined: summary.std.is_none(),
                            summary,
                        });
                    }
                }
            }
            cells.push(CellSummary {
                category: spec.name.clone(),
                outcome: outcome.clone(),
                samples: samples.len(),
                failed_trials: failures
                    .get(&(spec.name.clone(), outcome.clone()))
                    .copied()
                    .unwrap_or(0),
                metrics,
            });
        }
    }
    if opts.n == 1 {
        log::warn!("a single trial leaves the standard deviation undefined");
    }

    write_jsonl_lines(&dir.join("scores.jsonl"), &scores)?;
    std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&cells)?)?;
    let histograms: Vec<serde_json::Value> = cells
        .iter()
        .flat_map(|c| {
            c.metrics.iter().map(move |m| {
                serde_json::json!({
                    "category": c.category,
                    "outcome": c.outcome,
                    "mode": m.mode,
                    "scoring": m.scoring,
                    "range": m.summary.range,
                    "samples": m.summary.n,
                    "counts": m.summary.histogram,
                })
            })
        })
        .collect();
    std::fs::write(dir.join("histograms.json"), serde_json::to_string_pretty(&histograms)?)?;
    Ok(TrialsOutcome {
        dir,
        scores,
        cells,
        failed,
    })
}
