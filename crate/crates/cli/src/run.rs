//! `run`: the full matrix, written as prediction records plus transcripts.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use malade_core::drugdata::{LabelSource, NdcDirectory, PrescriptionRates};
use malade_core::effect::CategoryEffect;
use malade_core::llm::{BackendProvider, ChatCompletionsClient, ClientConfig, ScriptBook, SharedBackend};
use malade_core::pipeline::{CellStatus, MatrixResult, Pipeline};
use malade_core::rag::{HashEmbedder, RagStore};
use malade_core::transcript::write_jsonl;

use crate::config::{BackendKind, DataMode, RunConfig};

pub const PREDICTIONS_DIR: &str = "predictions";
pub const PREDICTIONS_FILE: &str = "predictions.jsonl";
pub const DRUG_REPORTS_FILE: &str = "drug_reports.jsonl";
pub const TRANSCRIPTS_DIR: &str = "transcripts";

/// One line of the predictions file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub category: String,
    pub outcome: String,
    pub status: CellStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub effect: Option<CategoryEffect>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default)]
    pub representatives: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub coerced: bool,
    #[serde(default)]
    pub feedback_rounds: u32,
    /// Transcript files, relative to the output directory.
    #[serde(default)]
    pub transcripts: Vec<String>,
}

#[derive(Debug, Clone, Default)]
pub struct RunFlags {
    /// Re-index labels instead of loading the persisted index.
    pub rebuild_index: bool,
    /// Ignore cached labels.
    pub refresh: bool,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub predictions: PathBuf,
    pub records: Vec<PredictionRecord>,
    pub failed: usize,
}

impl RunOutcome {
    pub fn success(&self) -> bool {
        self.failed == 0
    }
}

fn backends(cfg: &RunConfig) -> Result<Arc<dyn BackendProvider>> {
    match cfg.backend.kind {
        BackendKind::Scripted => {
            let path = cfg
                .backend
                .script
                .as_deref()
                .context("scripted backend without script")?;
            let book = ScriptBook::load(path).with_context(|| format!("cannot load script {}", path.display()))?;
            Ok(Arc::new(book))
        }
        BackendKind::Live => {
            let mut client = ClientConfig::from_env();
            if let Some(m) = &cfg.backend.model {
                client.model = m.clone();
            }
            if let Some(u) = &cfg.backend.base_url {
                client.base_url = u.clone();
            }
            if let Some(n) = cfg.backend.max_concurrency {
                client.max_concurrency = n;
            }
            if client.api_key.is_none() {
                log::warn!("no API key in MALADE_API_KEY or OPENAI_API_KEY");
            }
            Ok(Arc::new(SharedBackend(Arc::new(ChatCompletionsClient::new(client)?))))
        }
    }
}

/// The label store, loaded from the configured index unless rebuilding.
fn store(cfg: &RunConfig, flags: &RunFlags) -> Result<Arc<RagStore>> {
    let embedder = Arc::new(HashEmbedder::default());
    if let Some(index) = &cfg.rag.index {
        if index.is_file() && !flags.rebuild_index {
            let store =
                RagStore::load(index, embedder).with_context(|| format!("cannot load index {}", index.display()))?;
            log::info!("loaded {} chunks from {}", store.len(), index.display());
            return Ok(Arc::new(store));
        }
    }
    Ok(Arc::new(RagStore::new(embedder)))
}

pub fn build_pipeline(cfg: &RunConfig, flags: &RunFlags) -> Result<Pipeline> {
    let rx_path = cfg.data.prescriptions.as_deref().context("no prescriptions dataset")?;
    let rates = PrescriptionRates::load(rx_path, &cfg.data.prescriptions_column)?;
    let (ndc, labels) = match cfg.data.mode {
        DataMode::Fixture => {
            let ndc = cfg.data.ndc.as_deref().context("fixture mode without data.ndc")?;
            let labels = cfg.data.labels.as_deref().context("fixture mode without data.labels")?;
            (NdcDirectory::from_file(ndc)?, LabelSource::fixture(labels))
        }
        DataMode::Live => {
            let ndc = match &cfg.data.ndc {
                Some(path) => NdcDirectory::from_file(path)?,
                None => NdcDirectory::live(&cfg.data.openfda_base_url)?,
            };
            (ndc, LabelSource::live(&cfg.data.openfda_base_url)?)
        }
    };
    let mut labels = labels.with_refresh(flags.refresh);
    if let Some(dir) = &cfg.data.cache_dir {
        labels = labels.with_cache(dir);
    }
    Ok(Pipeline::new(backends(cfg)?, ndc, rates, labels, store(cfg, flags)?).with_settings(cfg.settings()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("cannot create {}", path.display()))?,
    ))
}

pub fn write_jsonl_lines<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut out = create(path)?;
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Writes predictions, drug reports and transcripts under `root` and returns
/// the prediction records.
pub fn write_matrix(root: &Path, result: &MatrixResult) -> Result<Vec<PredictionRecord>> {
    for (id, records) in &result.transcripts {
        let path = root.join(TRANSCRIPTS_DIR).join(format!("{id}.jsonl"));
        write_jsonl(create(&path)?, records).with_context(|| format!("cannot write {}", path.display()))?;
    }
    let records: Vec<PredictionRecord> = result
        .cells
        .iter()
        .map(|c| PredictionRecord {
            category: c.category.clone(),
            outcome: c.outcome.clone(),
            status: c.status,
            effect: c.effect.clone(),
            error: c.error.clone(),
            representatives: c.representatives.clone(),
            coerced: c.coerced,
            feedback_rounds: c.feedback_rounds,
            transcripts: c
                .conversations
                .iter()
                .filter(|id| result.transcripts.contains_key(*id))
                .map(|id| format!("{TRANSCRIPTS_DIR}/{id}.jsonl"))
                .collect(),
        })
        .collect();
    let dir = root.join(PREDICTIONS_DIR);
    write_jsonl_lines(&dir.join(PREDICTIONS_FILE), &records)?;
    write_jsonl_lines(&dir.join(DRUG_REPORTS_FILE), &result.reports)?;
    Ok(records)
}

pub fn cmd_run(cfg: &RunConfig, flags: &RunFlags) -> Result<RunOutcome> {
    let pipeline = build_pipeline(cfg, flags)?;
    log::info!(
        "running {} categories x {} outcomes",
        cfg.categories.len(),
        cfg.outcomes.len()
    );
    let result = pipeline.run_matrix(&cfg.categories, &cfg.outcomes, None);
    let records = write_matrix(&cfg.output_dir, &result)?;
    if let Some(index) = &cfg.rag.index {
        pipeline
            .store()
            .save(index)
            .with_context(|| format!("cannot save index {}", index.display()))?;
    }
    for c in result.failed_cells() {
        log::error!(
            "{} / {} failed: {}",
            c.category,
            c.outcome,
            c.error.as_deref().unwrap_or("?")
        );
    }
    Ok(RunOutcome {
        predictions: cfg.output_dir.join(PREDICTIONS_DIR).join(PREDICTIONS_FILE),
        failed: result.failed_cells().count(),
        records,
    })
}
