use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{normalize_name, DrugDataError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NdcDrugRecord {
    pub name: String,
    #[serde(default)]
    pub pharm_classes: Vec<String>,
    #[serde(default)]
    pub product_ids: Vec<String>,
}

impl NdcDrugRecord {
    fn matches(&self, term: &str) -> bool {
        normalize_name(&self.name).contains(term) || self.pharm_classes.iter().any(|c| normalize_name(c).contains(term))
    }
}

/// NDC directory, either a local record list or the openFDA NDC endpoint.
pub enum NdcDirectory {
    Fixture(Vec<NdcDrugRecord>),
    Live {
        base_url: String,
        http: reqwest::blocking::Client,
    },
}

impl NdcDirectory {
    /// Reads a JSON array of records.
    pub fn from_file(path: &Path) -> Result<Self, DrugDataError> {
        let text = std::fs::read_to_string(path)?;
        let records = serde_json::from_str(&text).map_err(|e| DrugDataError::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Ok(NdcDirectory::Fixture(records))
    }

    pub fn live(base_url: &str) -> Result<Self, DrugDataError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(60))
            .build()
            .map_err(|e| DrugDataError::Upstream {
                status: None,
                message: e.to_string(),
            })?;
        Ok(NdcDirectory::Live {
            base_url: base_url.trim_end_matches('/').to_string(),
            http,
        })
    }

    fn live_records(
        base_url: &str,
        http: &reqwest::blocking::Client,
        term: &str,
    ) -> Result<Vec<NdcDrugRecord>, DrugDataError> {
        let search = format!("pharm_class:\"{term}\"+generic_name:\"{term}\"");
        let url = format!("{base_url}/drug/ndc.json");
        let resp = http
            .get(&url)
            .query(&[("search", search.as_str()), ("limit", "1000")])
            .send()
            .map_err(|e| DrugDataError::Upstream {
                status: None,
                message: e.to_string(),
            })?;
        let status = resp.status().as_u16();
        if status == 404 {
            return Ok(Vec::new());
        }
        if !(200..300).contains(&status) {
            return Err(DrugDataError::Upstream {
                status: Some(status),
                message: resp.text().unwrap_or_default(),
            });
        }
        let body: Value = resp.json().map_err(|e| DrugDataError::Upstream {
            status: Some(status),
            message: e.to_string(),
        })?;
        let strings = |v: Option<&Value>| -> Vec<String> {
            match v {
                Some(Value::Array(items)) => items.iter().filter_map(|s| s.as_str().map(str::to_string)).collect(),
                Some(Value::String(s)) => vec![s.clone()],
                _ => Vec::new(),
            }
        };
        let results = body
            .get("results")
            .and_then(Value::as_array)
            .cloned()
            .unwrap_or_default();
        Ok(results
            .iter()
            .filter_map(|r| {
                let name = r.get("generic_name").and_then(Value::as_str)?.to_string();
                Some(NdcDrugRecord {
                    name,
                    pharm_classes: strings(r.get("pharm_class")),
                    product_ids: strings(r.get("product_id")),
                })
            })
            .collect())
    }

    /// Records whose name or any pharmacologic class contains one of the
    /// terms (case-insensitive), merged by normalized name and sorted.
    pub fn find_category_drugs(&self, terms: &[String]) -> Result<Vec<NdcDrugRecord>, DrugDataError> {
        let terms: BTreeSet<String> = terms.iter().map(|t| normalize_name(t)).collect();
        if terms.is_empty() || terms.iter().any(String::is_empty) {
            return Err(DrugDataError::InvalidInput("search terms must be non-empty".into()));
        }
        let mut found: Vec<NdcDrugRecord> = Vec::new();
        for term in &terms {
            match self {
                NdcDirectory::Fixture(records) => {
                    found.extend(records.iter().filter(|r| r.matches(term)).cloned());
                }
                NdcDirectory::Live { base_url, http } => {
                    found.extend(Self::live_records(base_url, http, term)?);
                }
            }
        }
        let mut merged: BTreeMap<String, NdcDrugRecord> = BTreeMap::new();
        for r in found {
            let key = normalize_name(&r.name);
            let entry = merged.entry(key).or_insert_with(|| NdcDrugRecord {
                name: r.name.clone(),
                pharm_classes: Vec::new(),
                product_ids: Vec::new(),
            });
            if r.name < entry.name {
                entry.name = r.name.clone();
            }
            entry.pharm_classes.extend(r.pharm_classes);
            entry.product_ids.extend(r.product_ids);
        }
        Ok(merged
            .into_values()
            .map(|mut r| {
                r.pharm_classes.sort();
                r.pharm_classes.dedup();
                r.product_ids.sort();
                r.product_ids.dedup();
                r
            })
            .collect())
    }
}
