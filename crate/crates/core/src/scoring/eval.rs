use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::effect::{CategoryEffect, Label};

use super::metrics::{auc, roc_points, sens_spec_points, Confusion, RocPoint, SensSpecPoint};
use super::transform::{binarize, postprocess_label, score, Mode, Scoring};
use super::truth::{cell_key, GroundTruthGrid};
use super::ScoringError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellPrediction {
    pub category: String,
    pub outcome: String,
    pub effect: CategoryEffect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPrediction {
    pub category: String,
    pub outcome: String,
    pub truth: Label,
    pub effect: CategoryEffect,
    pub ade_score: f64,
    pub effect_score: f64,
    pub postprocessed_label: Label,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: Mode,
    pub scoring: Scoring,
    pub auc: f64,
    pub f1: f64,
    pub confusion: Confusion,
    /// F1 and confusion from the labels as predicted, before postprocessing.
    pub f1_unprocessed: f64,
    pub confusion_unprocessed: Confusion,
    pub roc_points: Vec<RocPoint>,
    pub sens_spec_points: Vec<SensSpecPoint>,
    pub cells: Vec<ScoredPrediction>,
}

/// Scores every certain truth cell. Predictions for cells absent from the
/// truth grid or marked uncertain are ignored.
pub fn evaluate(
    predictions: &[CellPrediction],
    truth: &GroundTruthGrid,
    mode: Mode,
    scoring: Scoring,
) -> Result<EvalReport, ScoringError> {
    let mut by_cell: BTreeMap<(String, String), &CellPrediction> = BTreeMap::new();
    for p in predictions {
        if by_cell.insert(cell_key(&p.category, &p.outcome), p).is_some() {
            return Err(ScoringError::DuplicateCell(p.category.clone(), p.outcome.clone()));
        }
    }
    let mut missing = Vec::new();
    let mut cells = Vec::new();
    for (category, outcome, label) in truth.certain_cells() {
        let Some(p) = by_cell.get(&cell_key(&category, &outcome)) else {
            missing.push((category, outcome));
            continue;
        };
        cells.push(ScoredPrediction {
            truth: label,
            ade_score: score(&p.effect, Mode::AdeBased, scoring),
            effect_score: score(&p.effect, Mode::EffectBased, scoring),
            postprocessed_label: postprocess_label(&p.effect),
            effect: p.effect.clone(),
            category,
            outcome,
        });
    }
    if !missing.is_empty() {
        return Err(ScoringError::MissingCells(missing));
    }
    cells.sort_by_key(|c| cell_key(&c.category, &c.outcome));
    let samples: Vec<(f64, bool)> = cells
        .iter()
        .map(|c| {
            let s = match mode {
                Mode::AdeBased => c.ade_score,
                Mode::EffectBased => c.effect_score,
            };
            (s, binarize(c.truth, mode))
        })
        .collect();
    let confusion = Confusion::from_pairs(
        cells
            .iter()
            .map(|c| (binarize(c.postprocessed_label, mode), binarize(c.truth, mode))),
    );
    let confusion_unprocessed = Confusion::from_pairs(
        cells
            .iter()
            .map(|c| (binarize(c.effect.label, mode), binarize(c.truth, mode))),
    );
    Ok(EvalReport {
        mode,
        scoring,
        auc: auc(&samples)?,
        f1: confusion.f1(),
        confusion,
        f1_unprocessed: confusion_unprocessed.f1(),
        confusion_unprocessed,
        roc_points: roc_points(&samples)?,
        sens_spec_points: sens_spec_points(&samples)?,
        cells,
    })
}
