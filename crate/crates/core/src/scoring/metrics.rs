//! Binary-classification metrics over (score, truth) pairs.

use serde::{Deserialize, Serialize};

use super::ScoringError;

/// Area under the ROC curve as the Mann-Whitney statistic: the fraction of
/// (positive, negative) pairs ranked correctly, ties counting one half.
pub fn auc(samples: &[(f64, bool)]) -> Result<f64, ScoringError> {
    if let Some((s, _)) = samples.iter().find(|(s, _)| !s.is_finite()) {
        return Err(ScoringError::NonFiniteScore(*s));
    }
    let positives = samples.iter().filter(|(_, t)| *t).count();
    let negatives = samples.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(ScoringError::DegenerateClasses { positives, negatives });
    }
    let mut sorted: Vec<(f64, bool)> = samples.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Sum of 1-based midranks of the positives.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j < sorted.len() && sorted[j].0 == sorted[i].0 {
            j += 1;
        }
        let midrank = (i + 1 + j) as f64 / 2.0;
        let pos_in_group = sorted[i..j].iter().filter(|(_, t)| *t).count();
        rank_sum += midrank * pos_in_group as f64;
        i = j;
    }
    let p = positives as f64;
    let n = negatives as f64;
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    /// From (predicted, actual) pairs.
    pub fn from_pairs<I: IntoIterator<Item = (bool, bool)>>(pairs: I) -> Self {
        let mut c = Confusion::default();
        for (pred, actual) in pairs {
            match (pred, actual) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// F1 of the positive class; 0 when there are no positive predictions
    /// and no positive truths.
    pub fn f1(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            0.0
        } else {
            2.0 * self.tp as f64 / denom as f64
        }
    }

    pub fn sensitivity(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn specificity(&self) -> Option<f64> {
        ratio(self.tn, self.tn + self.fp)
    }
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensSpecPoint {
    pub threshold: f64,
    pub sensitivity: f64,
    pub specificity: f64,
}

/// Distinct thresholds, highest first; a sample is predicted positive when
/// its score is at least the threshold.
fn thresholds(samples: &[(f64, bool)]) -> Vec<f64> {
    let mut t: Vec<f64> = samples.iter().map(|(s, _)| *s).collect();
    t.sort_by(|a, b| b.total_cmp(a));
    t.dedup();
    t
}

fn confusion_at(samples: &[(f64, bool)], threshold: f64) -> Confusion {
    Confusion::from_pairs(samples.iter().map(|&(s, t)| (s >= threshold, t)))
}

/// ROC polyline from (0, 0) to (1, 1).
pub fn roc_points(samples: &[(f64, bool)]) -> Result<Vec<RocPoint>, ScoringError> {
    auc(samples)?;
    let mut points = vec![RocPoint { fpr: 0.0, tpr: 0.0 }];
    for t in thresholds(samples) {
        let c = confusion_at(samples, t);
        points.push(RocPoint {
            fpr: 1.0 - c.specificity().unwrap_or(1.0),
            tpr: c.sensitivity().unwrap_or(0.0),
        });
    }
    Ok(points)
}

pub fn sens_spec_points(samples: &[(f64, bool)]) -> Result<Vec<SensSpecPoint>, ScoringError> {
    auc(samples)?;
    Ok(thresholds(samples)
        .into_iter()
        .map(|t| {
            let c = confusion_at(samples, t);
            SensSpecPoint {
                threshold: t,
                sensitivity: c.sensitivity().unwrap_or(0.0),
                specificity: c.specificity().unwrap_or(0.0),
            }
        })
        .collect())
}
