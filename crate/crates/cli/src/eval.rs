//! `eval`: metrics of a predictions file against a ground-truth grid.

use std::fmt::Write as _;
use std::io::BufRead;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;

use malade_core::pipeline::CellStatus;
use malade_core::scoring::{
    evaluate, CellPrediction, Confusion, EvalReport, GroundTruthGrid, Mode, Scoring, ScoringError,
};

use crate::run::PredictionRecord;

pub const REPORTS_DIR: &str = "reports";
pub const SUMMARY_FILE: &str = "summary.json";

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRecord>> {
    let file = std::fs::File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let mut records = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).with_context(|| format!("{}, line {}", path.display(), i + 1))?;
        records.push(record);
    }
    Ok(records)
}

/// Default report directory: `reports/` next to the `predictions/` directory
/// holding the file, or next to the file itself.
pub fn default_out_dir(predictions: &Path) -> PathBuf {
    let parent = predictions.parent().unwrap_or(Path::new("."));
    match parent.file_name() {
        Some(name) if name == crate::run::PREDICTIONS_DIR => {
            parent.parent().unwrap_or(Path::new(".")).join(REPORTS_DIR)
        }
        _ => parent.join(REPORTS_DIR),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SummaryRow {
    pub mode: Mode,
    pub scoring: Scoring,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub auc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f1_unprocessed: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub confusion: Option<Confusion>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug)]
pub struct EvalOutcome {
    pub reports: Vec<EvalReport>,
    pub summary: Vec<SummaryRow>,
    /// Cells that failed in the run and were left out.
    pub failed_cells: usize,
    pub out_dir: PathBuf,
}

impl EvalOutcome {
    pub fn success(&self) -> bool {
        self.failed_cells == 0 && self.summary.iter().all(|r| r.error.is_none())
    }
}

fn stem(mode: Mode, scoring: Scoring) -> String {
    format!("{}.{}", mode.as_str(), scoring.as_str())
}

fn write_points(report: &EvalReport, dir: &Path) -> Result<()> {
    let s = stem(report.mode, report.scoring);
    let mut roc = String::from("fpr,tpr\n");
    for p in &report.roc_points {
        writeln!(roc, "{},{}", p.fpr, p.tpr)?;
    }
    std::fs::write(dir.join(format!("{s}.roc.csv")), roc)?;
    let mut ss = String::from("threshold,sensitivity,specificity\n");
    for p in &report.sens_spec_points {
        writeln!(ss, "{},{},{}", p.threshold, p.sensitivity, p.specificity)?;
    }
    std::fs::write(dir.join(format!("{s}.sens_spec.csv")), ss)?;
    Ok(())
}

/// Evaluates every (mode, scoring) pair. Missing certain cells are an error;
/// a metric that cannot be computed (one class only) is recorded in the
/// summary and makes the outcome unsuccessful.
pub fn cmd_eval(
    predictions: &Path,
    truth: &Path,
    modes: &[Mode],
    scorings: &[Scoring],
    out_dir: &Path,
) -> Result<EvalOutcome> {
    let records = read_predictions(predictions)?;
    let truth = GroundTruthGrid::load(truth)?;
    let failed_cells = records.iter().filter(|r| r.status == CellStatus::Failed).count();
    let cells: Vec<CellPrediction> = records
        .into_iter()
        .filter(|r| r.status == CellStatus::Ok)
        .filter_map(|r| {
            Some(CellPrediction {
                effect: r.effect?,
                category: r.category,
                outcome: r.outcome,
            })
        })
        .collect();
    std::fs::create_dir_all(out_dir).with_context(|| format!("cannot create {}", out_dir.display()))?;
    let mut reports = Vec::new();
    let mut summary = Vec::new();
    for &mode in modes {
        for &scoring in scorings {
            match evaluate(&cells, &truth, mode, scoring) {
                Ok(report) => {
                    let path = out_dir.join(format!("{}.json", stem(mode, scoring)));
                    std::fs::write(&path, serde_json::to_string_pretty(&report)?)?;
                    write_points(&report, out_dir)?;
                    summary.push(SummaryRow {
                        mode,
                        scoring,
                        auc: Some(report.auc),
                        f1: Some(report.f1),
                        f1_unprocessed: Some(report.f1_unprocessed),
                        confusion: Some(report.confusion),
                        error: None,
                    });
                    reports.push(report);
                }
                Err(e @ ScoringError::MissingCells(_)) => bail!(e),
                Err(e) => {
                    log::error!("{} / {}: {e}", mode.as_str(), scoring.as_str());
                    summary.push(SummaryRow {
                        mode,
                        scoring,
                        auc: None,
                        f1: None,
                        f1_unprocessed: None,
                        confusion: None,
                        error: Some(e.to_string()),
                    });
                }
            }
        }
    }
    std::fs::write(out_dir.join(SUMMARY_FILE), serde_json::to_string_pretty(&summary)?)?;
    Ok(EvalOutcome {
        reports,
        summary,
        failed_cells,
        out_dir: out_dir.to_path_buf(),
    })
}
