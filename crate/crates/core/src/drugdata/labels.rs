use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{name_slug, normalize_name, DrugDataError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrugLabel {
    pub drug: String,
    pub sections: BTreeMap<String, String>,
    pub source_id: String,
    /// RFC 3339; absent for labels read from a fixture directory.
    #[serde(default)]
    pub fetched_at: Option<String>,
}

/// Fields of a label document that are not free-text sections.
const METADATA_FIELDS: &[&str] = &["id", "set_id", "version", "effective_time", "openfda"];

enum Origin {
    Fixture(PathBuf),
    Live {
        base_url: String,
        http: reqwest::blocking::Client,
    },
}

/// Label documents from a fixture directory or the openFDA label endpoint,
/// optionally cached on disk under `<cache>/labels/<slug>.json`.
///
/// Fixture files are named `<slug>.json` and hold an openFDA-style
/// `{"results": [...]}` document.
pub struct LabelSource {
    origin: Origin,
    cache_dir: Option<PathBuf>,
    refresh: bool,
}

impl LabelSource {
    pub fn fixture(dir: impl Into<PathBuf>) -> Self {
        LabelSource {
            origin: Origin::Fixture(dir.into()),
            cache_dir: None,
            refresh: false,
        }
    }

    pub fn live(base_url: &str) -> Result<Self, DrugDataError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(60))
            .build()
            .map_err(|e| DrugDataError::Upstream {
                status: None,
                message: e.to_string(),
            })?;
        Ok(LabelSource {
            origin: Origin::Live {
                base_url: base_url.trim_end_matches('/').to_string(),
                http,
            },
            cache_dir: None,
            refresh: false,
        })
    }

    pub fn with_cache(mut self, dir: impl Into<PathBuf>) -> Self {
        self.cache_dir = Some(dir.into());
        self
    }

    /// Ignore cached entries; fresh results still overwrite the cache.
    pub fn with_refresh(mut self, refresh: bool) -> Self {
        self.refresh = refresh;
        self
    }

    pub fn is_live(&self) -> bool {
        matches!(self.origin, Origin::Live { .. })
    }

    fn cache_path(&self, drug: &str) -> Option<PathBuf> {
        self.cache_dir
            .as_ref()
            .map(|d| d.join("labels").join(format!("{}.json", name_slug(drug))))
    }

    pub fn fetch_label(&self, drug: &str) -> Result<DrugLabel, DrugDataError> {
        let key = normalize_name(drug);
        if key.is_empty() {
            return Err(DrugDataError::InvalidInput("empty drug name".into()));
        }
        let cache_path = self.cache_path(&key);
        if let Some(path) = &cache_path {
            if !self.refresh && path.is_file() {
                let text = std::fs::read_to_string(path)?;
                match serde_json::from_str::<DrugLabel>(&text) {
                    Ok(label) => {
                        log::debug!("label cache hit for {key}");
                        return Ok(label);
                    }
                    Err(e) => log::warn!("ignoring unreadable cache entry {}: {e}", path.display()),
                }
            }
        }
        let label = match &self.origin {
            Origin::Fixture(dir) => {
                let path = dir.join(format!("{}.json", name_slug(&key)));
                if !path.is_file() {
                    return Err(DrugDataError::NotFound(drug.to_string()));
                }
                let text = std::fs::read_to_string(&path)?;
                let doc: Value = serde_json::from_str(&text).map_err(|e| DrugDataError::Parse {
                    path: path.display().to_string(),
                    message: e.to_string(),
                })?;
                label_from_results(drug, &doc, None)?
            }
            Origin::Live { base_url, http } => {
                let doc = live_search(base_url, http, &key)?;
                let now = chrono::Utc::now().to_rfc3339();
                label_from_results(drug, &doc, Some(now))?
            }
        };
        if let Some(path) = &cache_path {
            write_atomic(path, &label)?;
        }
        Ok(label)
    }
}

fn write_atomic(path: &Path, label: &DrugLabel) -> Result<(), DrugDataError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    let body = serde_json::to_vec_pretty(label).map_err(|e| DrugDataError::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    tmp.write_all(&body)?;
    tmp.persist(path).map_err(|e| DrugDataError::Io(e.error))?;
    Ok(())
}

fn live_search(base_url: &str, http: &reqwest::blocking::Client, key: &str) -> Result<Value, DrugDataError> {
    let url = format!("{base_url}/drug/label.json");
    for field in ["openfda.generic_name", "openfda.brand_name"] {
        let search = format!("{field}:\"{key}\"");
        let resp = http
            .get(&url)
            .query(&[("search", search.as_str()), ("limit", "10")])
            .send()
            .map_err(|e| DrugDataError::Upstream {
                status: None,
                message: e.to_string(),
            })?;
        let status = resp.status().as_u16();
        if status == 404 {
            continue;
        }
        if !(200..300).contains(&status) {
            return Err(DrugDataError::Upstream {
                status: Some(status),
                message: resp.text().unwrap_or_default(),
            });
        }
        let doc: Value = resp.json().map_err(|e| DrugDataError::Upstream {
            status: Some(status),
            message: e.to_string(),
        })?;
        if doc
            .get("results")
            .and_then(Value::as_array)
            .is_some_and(|r| !r.is_empty())
        {
            return Ok(doc);
        }
    }
    Err(DrugDataError::NotFound(key.to_string()))
}

fn openfda_names(doc: &Value) -> Vec<String> {
    let mut names = Vec::new();
    for field in ["generic_name", "brand_name"] {
        if let Some(items) = doc.pointer(&format!("/openfda/{field}")).and_then(Value::as_array) {
            names.extend(items.iter().filter_map(Value::as_str).map(normalize_name));
        }
    }
    names
}

/// Picks the best document among `results`: exact name matches first, then
/// the most recent `effective_time`, then list order.
fn label_from_results(drug: &str, doc: &Value, fetched_at: Option<String>) -> Result<DrugLabel, DrugDataError> {
    let results = doc
        .get("results")
        .and_then(Value::as_array)
        .filter(|r| !r.is_empty())
        .ok_or_else(|| DrugDataError::NotFound(drug.to_string()))?;
    let key = normalize_name(drug);
    let rank = |r: &Value| {
        let exact = openfda_names(r).contains(&key);
        let time = r
            .get("effective_time")
            .and_then(Value::as_str)
            .unwrap_or("")
            .to_string();
        (exact, time)
    };
    let mut best = 0;
    for i in 1..results.len() {
        if rank(&results[i]) > rank(&results[best]) {
            best = i;
        }
    }
    if results.len() > 1 {
        log::info!(
            "{} label documents match {drug}; using the most recent exact match ({})",
            results.len(),
            results[best].get("id").and_then(Value::as_str).unwrap_or("?")
        );
    }
    let chosen = &results[best];
    let mut sections = BTreeMap::new();
    if let Some(obj) = chosen.as_object() {
        for (field, value) in obj {
            if METADATA_FIELDS.contains(&field.as_str()) || field.ends_with("_table") {
                continue;
            }
            let text = match value {
                Value::Array(items) => items.iter().filter_map(Value::as_str).collect::<Vec<_>>().join("\n"),
                Value::String(s) => s.clone(),
                _ => continue,
            };
            if !text.trim().is_empty() {
                sections.insert(field.clone(), text);
            }
        }
    }
    if sections.is_empty() {
        return Err(DrugDataError::NotFound(drug.to_string()));
    }
    Ok(DrugLabel {
        drug: drug.trim().to_uppercase(),
        sections,
        source_id: chosen.get("id").and_then(Value::as_str).unwrap_or_default().to_string(),
        fetched_at,
    })
}
