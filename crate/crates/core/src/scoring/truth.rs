//! Reference grid of category/outcome labels.

use std::collections::BTreeMap;
use std::path::Path;

use crate::drugdata::normalize_name;
use crate::effect::Label;

use super::ScoringError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TruthCell {
    pub label: Label,
    /// Uncertain cells are labeled no-effect and excluded from metrics.
    pub certain: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroundTruthGrid {
    pub categories: Vec<String>,
    pub outcomes: Vec<String>,
    cells: BTreeMap<(String, String), TruthCell>,
}

pub(crate) fn cell_key(category: &str, outcome: &str) -> (String, String) {
    (normalize_name(category), normalize_name(outcome))
}

impl GroundTruthGrid {
    pub fn load(path: &Path) -> Result<Self, ScoringError> {
        let text = std::fs::read_to_string(path).map_err(|e| ScoringError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Delimited text: a header of outcomes after a leading label column,
    /// then one row per category with cells in
    /// {increase, decrease, no-effect, uncertain}.
    pub fn parse(text: &str, source: &str) -> Result<Self, ScoringError> {
        let err = |line: u64, message: String| ScoringError::Truth {
            file: source.to_string(),
            line,
            message,
        };
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = reader.headers().map_err(|e| err(1, e.to_string()))?.clone();
        if headers.len() < 2 {
            return Err(err(1, "header needs a label column and at least one outcome".into()));
        }
        let mut grid = GroundTruthGrid {
            outcomes: headers.iter().skip(1).map(str::to_string).collect(),
            ..Default::default()
        };
        for row in reader.records() {
            let row = row.map_err(|e| err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
            let line = row.position().map_or(0, |p| p.line());
            if row.iter().all(str::is_empty) {
                continue;
            }
            let category = row.get(0).unwrap_or_default().to_string();
            if category.is_empty() {
                return Err(err(line, "empty category name".into()));
            }
            for (outcome, token) in grid.outcomes.iter().zip(row.iter().skip(1)) {
                let cell = match token.to_lowercase().as_str() {
                    "uncertain" => TruthCell {
                        label: Label::NoEffect,
                        certain: false,
                    },
                    t => TruthCell {
                        label: t
                            .parse()
                            .map_err(|_| err(line, format!("unknown cell token `{token}`")))?,
                        certain: true,
                    },
                };
                if grid.cells.insert(cell_key(&category, outcome), cell).is_some() {
                    return Err(err(line, format!("duplicate cell ({category}, {outcome})")));
                }
            }
            grid.categories.push(category);
        }
        Ok(grid)
    }

    pub fn insert(&mut self, category: &str, outcome: &str, cell: TruthCell) {
        if !self
            .categories
            .iter()
            .any(|c| normalize_name(c) == normalize_name(category))
        {
            self.categories.push(category.to_string());
        }
        if !self
            .outcomes
            .iter()
            .any(|o| normalize_name(o) == normalize_name(outcome))
        {
            self.outcomes.push(outcome.to_string());
        }
        self.cells.insert(cell_key(category, outcome), cell);
    }

    pub fn get(&self, category: &str, outcome: &str) -> Option<TruthCell> {
        self.cells.get(&cell_key(category, outcome)).copied()
    }

    /// Certain cells as (category, outcome, label) in grid order.
    pub fn certain_cells(&self) -> Vec<(String, String, Label)> {
        let mut out = Vec::new();
        for c in &self.categories {
            for o in &self.outcomes {
                if let Some(cell) = self.get(c, o).filter(|cell| cell.certain) {
                    out.push((c.clone(), o.clone(), cell.label));
                }
            }
        }
        out
    }
}
