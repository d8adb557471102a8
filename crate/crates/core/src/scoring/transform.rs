//! Tripartite outputs to scalar scores, plus label postprocessing.

use serde::{Deserialize, Serialize};

use crate::effect::{CategoryEffect, Evidence, Frequency, Label};

/// Which labels count as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// increase and decrease are positive.
    EffectBased,
    /// only increase is positive.
    AdeBased,
}

impl Mode {
    pub const ALL: [Mode; 2] = [Mode::EffectBased, Mode::AdeBased];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::EffectBased => "effect-based",
            Mode::AdeBased => "ade-based",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scoring {
    Confidence,
    Probability,
    ProbabilityModified,
}

impl Scoring {
    pub const ALL: [Scoring; 3] = [Scoring::Confidence, Scoring::Probability, Scoring::ProbabilityModified];

    pub fn as_str(self) -> &'static str {
        match self {
            Scoring::Confidence => "confidence",
            Scoring::Probability => "probability",
            Scoring::ProbabilityModified => "probability-modified",
        }
    }
}

pub fn ade_score_confidence(label: Label, c: f64) -> f64 {
    match label {
        Label::Decrease => (1.0 - c) / 3.0,
        Label::NoEffect => (2.0 - c) / 3.0,
        Label::Increase => (2.0 + c) / 3.0,
    }
}

pub fn effect_score_confidence(label: Label, c: f64) -> f64 {
    match label {
        Label::Increase | Label::Decrease => (1.0 + c) / 2.0,
        Label::NoEffect => (1.0 - c) / 2.0,
    }
}

pub fn ade_score_probability(label: Label, p: f64) -> f64 {
    match label {
        Label::Decrease => (1.0 - p) / 2.0,
        Label::NoEffect | Label::Increase => (1.0 + p) / 2.0,
    }
}

pub fn effect_score_probability(_label: Label, p: f64) -> f64 {
    p
}

/// Probability shifted by one for the labels that are positive in `mode`.
/// A `decrease` in ADE mode keeps the descending `ade_score_probability`
/// base.
pub fn modified_probability_score(label: Label, p: f64, mode: Mode) -> f64 {
    match (mode, label) {
        (Mode::AdeBased, Label::Increase) => 1.0 + p,
        (Mode::AdeBased, Label::NoEffect) => p,
        (Mode::AdeBased, Label::Decrease) => ade_score_probability(label, p),
        (Mode::EffectBased, Label::Increase | Label::Decrease) => 1.0 + p,
        (Mode::EffectBased, Label::NoEffect) => p,
    }
}

pub fn score(effect: &CategoryEffect, mode: Mode, scoring: Scoring) -> f64 {
    let (label, c, p) = (effect.label, effect.confidence, effect.probability);
    match (scoring, mode) {
        (Scoring::Confidence, Mode::AdeBased) => ade_score_confidence(label, c),
        (Scoring::Confidence, Mode::EffectBased) => effect_score_confidence(label, c),
        (Scoring::Probability, Mode::AdeBased) => ade_score_probability(label, p),
        (Scoring::Probability, Mode::EffectBased) => effect_score_probability(label, p),
        (Scoring::ProbabilityModified, _) => modified_probability_score(label, p, mode),
    }
}

const ROUND_PROBABILITIES: [f64; 2] = [0.1, 0.01];
const ROUND_TOLERANCE: f64 = 1e-12;

/// Weak-and-rare outputs, or outputs with a round-number probability.
pub fn is_unreliable(effect: &CategoryEffect) -> bool {
    (effect.evidence == Evidence::Weak && effect.frequency == Frequency::Rare)
        || ROUND_PROBABILITIES
            .iter()
            .any(|r| (effect.probability - r).abs() <= ROUND_TOLERANCE)
}

pub fn postprocess_label(effect: &CategoryEffect) -> Label {
    if is_unreliable(effect) {
        Label::NoEffect
    } else {
        effect.label
    }
}

pub fn binarize(label: Label, mode: Mode) -> bool {
    match mode {
        Mode::EffectBased => label != Label::NoEffect,
        Mode::AdeBased => label == Label::Increase,
    }
}
