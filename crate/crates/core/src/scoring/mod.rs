//! Scores, postprocessing and metrics against a reference grid.

mod eval;
mod metrics;
mod transform;
mod trials;
mod truth;

use thiserror::Error;

pub use eval::{evaluate, CellPrediction, EvalReport, ScoredPrediction};
pub use metrics::{auc, roc_points, sens_spec_points, Confusion, RocPoint, SensSpecPoint};
pub use transform::{
    ade_score_confidence, ade_score_probability, binarize, effect_score_confidence, effect_score_probability,
    is_unreliable, modified_probability_score, postprocess_label, score, Mode, Scoring,
};
pub use trials::{trials_summary, TrialsSummary, DEFAULT_BINS};
pub use truth::{GroundTruthGrid, TruthCell};

#[derive(Debug, Error)]
pub enum ScoringError {
    #[error("AUC needs both classes (positives {positives}, negatives {negatives})")]
    DegenerateClasses { positives: usize, negatives: usize },
    #[error("non-finite score {0}")]
    NonFiniteScore(f64),
    #[error("predictions missing for {} certain cell(s): {}", .0.len(), format_cells(.0))]
    MissingCells(Vec<(String, String)>),
    #[error("duplicate prediction for ({0}, {1})")]
    DuplicateCell(String, String),
    #[error("no samples")]
    EmptySamples,
    #[error("{file}, line {line}: {message}")]
    Truth { file: String, line: u64, message: String },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

fn format_cells(cells: &[(String, String)]) -> String {
    cells
        .iter()
        .map(|(c, o)| format!("({c}, {o})"))
        .collect::<Vec<_>>()
        .join(", ")
}
