//! Run configuration: one TOML file, paths relative to the file itself.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use malade_core::par::Parallelism;
use malade_core::pipeline::{Ablation, CategorySpec, PipelineSettings};

pub const DEFAULT_OPENFDA: &str = "https://api.fda.gov";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Scripted,
    Live,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    /// Script book for the scripted backend.
    pub script: Option<PathBuf>,
    /// Live backend overrides; the API key only comes from the environment.
    pub model: Option<String>,
    pub base_url: Option<String>,
    pub max_concurrency: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataMode {
    Fixture,
    Live,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub mode: DataMode,
    pub ndc: Option<PathBuf>,
    pub prescriptions: Option<PathBuf>,
    #[serde(default = "default_column")]
    pub prescriptions_column: String,
    pub labels: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
    #[serde(default = "default_openfda")]
    pub openfda_base_url: String,
}

fn default_column() -> String {
    "drug".into()
}

fn default_openfda() -> String {
    DEFAULT_OPENFDA.into()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RagConfig {
    #[serde(default = "default_k")]
    pub k: usize,
    /// Persisted index; loaded when present, written after a run.
    pub index: Option<PathBuf>,
}

fn default_k() -> usize {
    PipelineSettings::default().retrieval_k
}

impl Default for RagConfig {
    fn default() -> Self {
        Self {
            k: default_k(),
            index: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Caps {
    pub max_steps: u32,
    pub max_critic_rounds: u32,
    /// Worker threads; 1 runs sequentially.
    pub parallelism: usize,
}

impl Default for Caps {
    fn default() -> Self {
        let d = PipelineSettings::default();
        Self {
            max_steps: d.max_steps,
            max_critic_rounds: d.max_rounds,
            parallelism: d.parallelism.threads(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblationConfig {
    pub critics: bool,
    pub rag: bool,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            critics: true,
            rag: true,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    pub backend: BackendConfig,
    pub data: DataConfig,
    #[serde(default)]
    pub rag: RagConfig,
    #[serde(default)]
    pub caps: Caps,
    #[serde(default)]
    pub ablation: AblationConfig,
    pub outcomes: Vec<String>,
    pub categories: Vec<CategorySpec>,
}

fn default_output() -> PathBuf {
    PathBuf::from("malade-out")
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub output_dir: Option<PathBuf>,
    pub script: Option<PathBuf>,
    pub no_critics: bool,
    pub no_rag: bool,
    pub max_steps: Option<u32>,
    pub max_critic_rounds: Option<u32>,
    pub parallelism: Option<usize>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base).with_context(|| format!("invalid config {}", path.display()))
    }

    /// Parses `text`, resolving relative paths against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text)?;
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut cfg.output_dir);
        for p in [
            &mut cfg.backend.script,
            &mut cfg.data.ndc,
            &mut cfg.data.prescriptions,
            &mut cfg.data.labels,
            &mut cfg.data.cache_dir,
            &mut cfg.rag.index,
        ]
        .into_iter()
        .flatten()
        {
            resolve(p);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(d) = &o.output_dir {
            self.output_dir = d.clone();
        }
        if let Some(s) = &o.script {
            self.backend.script = Some(s.clone());
        }
        if o.no_critics {
            self.ablation.critics = false;
        }
        if o.no_rag {
            self.ablation.rag = false;
        }
        if let Some(n) = o.max_steps {
            self.caps.max_steps = n;
        }
        if let Some(n) = o.max_critic_rounds {
            self.caps.max_critic_rounds = n;
        }
        if let Some(n) = o.parallelism {
            self.caps.parallelism = n;
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        if self.backend.kind == BackendKind::Scripted && self.backend.script.is_none() {
            bail!("backend.kind = \"scripted\" requires backend.script");
        }
        if self.data.mode == DataMode::Fixture {
            for (name, p) in [("ndc", &self.data.ndc), ("labels", &self.data.labels)] {
                if p.is_none() {
                    bail!("data.mode = \"fixture\" requires data.{name}");
                }
            }
        }
        if self.data.prescriptions.is_none() {
            bail!("data.prescriptions is required");
        }
        if self.outcomes.is_empty() {
            bail!("no outcomes configured");
        }
        if self.categories.is_empty() {
            bail!("no categories configured");
        }
        if self.caps.max_steps == 0 || self.caps.max_critic_rounds == 0 {
            bail!("caps.max_steps and caps.max_critic_rounds must be positive");
        }
        if self.rag.k == 0 {
            bail!("rag.k must be positive");
        }
        Ok(())
    }

    pub fn settings(&self) -> PipelineSettings {
        PipelineSettings {
            ablation: Ablation {
                critics: self.ablation.critics,
                rag: self.ablation.rag,
            },
            max_rounds: self.caps.max_critic_rounds,
            max_steps: self.caps.max_steps,
            retrieval_k: self.rag.k,
            parallelism: Parallelism::from_threads(self.caps.parallelism),
            trial: None,
        }
    }
}
