use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{normalize_name, DrugDataError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrescriptionRate {
    pub name: String,
    pub count: u64,
    pub rate: f64,
}

/// Prescription counts from a flat file with one row per prescription event.
#[derive(Debug, Clone, Default)]
pub struct PrescriptionRates {
    counts: HashMap<String, u64>,
    total: u64,
}

impl PrescriptionRates {
    /// Reads a CSV file with a header row; `column` names the drug column.
    pub fn load(path: &Path, column: &str) -> Result<Self, DrugDataError> {
        if !path.is_file() {
            return Err(DrugDataError::DatasetMissing(path.display().to_string()));
        }
        let parse_err = |message: String| DrugDataError::Parse {
            path: path.display().to_string(),
            message,
        };
        let mut reader = csv::Reader::from_path(path).map_err(|e| parse_err(e.to_string()))?;
        let headers = reader.headers().map_err(|e| parse_err(e.to_string()))?.clone();
        let idx = headers
            .iter()
            .position(|h| h.trim().eq_ignore_ascii_case(column))
            .ok_or_else(|| parse_err(format!("no `{column}` column")))?;
        let mut names = Vec::new();
        for row in reader.records() {
            let row = row.map_err(|e| parse_err(e.to_string()))?;
            names.push(row.get(idx).unwrap_or_default().to_string());
        }
        Ok(Self::from_names(names))
    }

    pub fn from_names<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut rates = Self::default();
        for n in names {
            *rates.counts.entry(normalize_name(n.as_ref())).or_insert(0) += 1;
            rates.total += 1;
        }
        rates
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Distinct normalized drug names in the dataset, sorted.
    pub fn drugs(&self) -> Vec<String> {
        let mut names: Vec<String> = self.counts.keys().cloned().collect();
        names.sort();
        names
    }

    pub fn rates(&self, names: &[String]) -> Vec<PrescriptionRate> {
        names
            .iter()
            .map(|name| {
                let count = self.counts.get(&normalize_name(name)).copied().unwrap_or(0);
                let rate = if self.total == 0 {
                    0.0
                } else {
                    count as f64 / self.total as f64
                };
                PrescriptionRate {
                    name: name.clone(),
                    count,
                    rate,
                }
            })
            .collect()
    }
}
