//! Summaries of repeated runs of the same cell.

use serde::{Deserialize, Serialize};

use super::ScoringError;

pub const DEFAULT_BINS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialsSummary {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation; undefined for a single sample.
    pub std: Option<f64>,
    pub range: (f64, f64),
    /// Fixed-width bin counts over `range`; values outside fall in the edge
    /// bins.
    pub histogram: Vec<usize>,
}

pub fn trials_summary(samples: &[f64], range: (f64, f64), bins: usize) -> Result<TrialsSummary, ScoringError> {
    if samples.is_empty() {
        return Err(ScoringError::EmptySamples);
    }
    if let Some(s) = samples.iter().find(|s| !s.is_finite()) {
        return Err(ScoringError::NonFiniteScore(*s));
    }
    let n = samples.len();
    // Summing n copies of x can round away from x.
    let constant = samples.iter().all(|&x| x == samples[0]);
    let mean = if constant {
        samples[0]
    } else {
        samples.iter().sum::<f64>() / n as f64
    };
    let std = (n >= 2).then(|| {
        let ss: f64 = samples.iter().map(|x| (x - mean).powi(2)).sum();
        (ss / (n - 1) as f64).sqrt()
    });
    let bins = bins.max(1);
    let (lo, hi) = range;
    let span = hi - lo;
    let mut histogram = vec![0; bins];
    for &x in samples {
        let idx = if span > 0.0 {
            ((x - lo) * bins as f64 / span).floor()
        } else {
            0.0
        };
        let idx = idx.clamp(0.0, (bins - 1) as f64) as usize;
        histogram[idx] += 1;
    }
    Ok(TrialsSummary {
        n,
        mean,
        std,
        range,
        histogram,
    })
}
