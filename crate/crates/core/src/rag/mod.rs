//! Document store with hybrid (embedding + BM25) retrieval and prompt
//! augmentation.

mod chunk;
mod embed;
mod lexical;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use chunk::{ChunkPolicy, Span, DEFAULT_CHUNK_CHARS, DEFAULT_OVERLAP_CHARS};
pub use embed::{cosine, Embedder, EmbeddingError, HashEmbedder, RemoteEmbedder, HASH_DIMENSION};
pub use lexical::{term_frequencies, tokenize, Bm25Stats, BM25_B, BM25_K1};

use crate::par::Parallelism;

pub const RRF_K: f64 = 60.0;
pub const DEFAULT_K: usize = 4;
pub const INDEX_FORMAT: &str = "malade-rag-index";
pub const INDEX_VERSION: u32 = 1;
pub const NO_PASSAGES_MARKER: &str = "(no relevant passages found)";

#[derive(Debug, Error)]
pub enum RagError {
    #[error("no sections given for {0}")]
    EmptySections(String),
    #[error("embedding chunk {chunk}: {source}")]
    Embedding {
        chunk: String,
        #[source]
        source: EmbeddingError,
    },
    #[error("index I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("index format: {0}")]
    Format(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chunk {
    pub id: String,
    pub drug: String,
    pub section: String,
    pub text: String,
    pub embedding: Vec<f64>,
    pub ordinal: u64,
    /// Term frequencies used by the lexical scorer.
    pub terms: BTreeMap<String, u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalQuery {
    pub text: String,
    pub k: usize,
    pub filter_drugs: Option<Vec<String>>,
}

impl RetrievalQuery {
    pub fn new(text: &str) -> Self {
        Self {
            text: text.to_string(),
            k: DEFAULT_K,
            filter_drugs: None,
        }
    }

    pub fn k(mut self, k: usize) -> Self {
        self.k = k.max(1);
        self
    }

    pub fn filter<I, S>(mut self, drugs: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        self.filter_drugs = Some(drugs.into_iter().map(|d| drug_tag(d.as_ref())).collect());
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hit {
    pub chunk: Chunk,
    /// Reciprocal-rank-fusion score.
    pub score: f64,
    pub cosine: f64,
    pub bm25: f64,
    pub semantic_rank: usize,
    pub lexical_rank: usize,
}

/// Drug tags are upper-cased with collapsed whitespace.
pub fn drug_tag(name: &str) -> String {
    name.split_whitespace().collect::<Vec<_>>().join(" ").to_uppercase()
}

#[derive(Debug, Default)]
struct StoreData {
    chunks: Vec<Chunk>,
    next_ordinal: u64,
    /// Corpus statistics over every chunk, rebuilt on each write.
    stats: Bm25Stats,
}

impl StoreData {
    fn reindex(&mut self) {
        self.stats = Bm25Stats::build(self.chunks.iter().map(|c| &c.terms));
    }
}

#[derive(Serialize, Deserialize)]
struct IndexFile {
    format: String,
    version: u32,
    embedder: String,
    dimension: usize,
    next_ordinal: u64,
    chunks: Vec<Chunk>,
}

/// 1-based ranks of `scores` (descending), ties broken by ordinal ascending.
fn ranks(scores: &[f64], ordinals: &[u64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(ordinals[a].cmp(&ordinals[b])));
    let mut rank = vec![0; scores.len()];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r + 1;
    }
    rank
}

pub struct RagStore {
    embedder: Arc<dyn Embedder>,
    policy: ChunkPolicy,
    data: RwLock<StoreData>,
}

impl RagStore {
    pub fn new(embedder: Arc<dyn Embedder>) -> Self {
        Self {
            embedder,
            policy: ChunkPolicy::default(),
            data: RwLock::new(StoreData::default()),
        }
    }

    pub fn with_policy(mut self, policy: ChunkPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn dimension(&self) -> usize {
        self.embedder.dimension()
    }

    pub fn len(&self) -> usize {
        self.data.read().chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn chunks(&self) -> Vec<Chunk> {
        self.data.read().chunks.clone()
    }

    pub fn contains_drug(&self, drug: &str) -> bool {
        let tag = drug_tag(drug);
        self.data.read().chunks.iter().any(|c| c.drug == tag)
    }

    /// Splits, embeds and indexes each section. Chunks previously ingested
    /// for the same (drug, section) are replaced.
    pub fn ingest(&self, drug: &str, sections: &BTreeMap<String, String>) -> Result<Vec<String>, RagError> {
        let tag = drug_tag(drug);
        if sections.is_empty() {
            return Err(RagError::EmptySections(tag));
        }
        let mut pending: Vec<(String, String, String)> = Vec::new();
        for (section, text) in sections {
            for (i, piece) in self.policy.split(text).into_iter().enumerate() {
                pending.push((format!("{tag}/{section}/{i}"), section.clone(), piece));
            }
        }
        let texts: Vec<String> = pending.iter().map(|(_, _, t)| t.clone()).collect();
        let embeddings = self.embedder.embed(&texts).map_err(|source| RagError::Embedding {
            chunk: pending.first().map(|p| p.0.clone()).unwrap_or_default(),
            source,
        })?;
        let dim = self.embedder.dimension();
        if let Some(pos) = embeddings.iter().position(|e| e.len() != dim) {
            return Err(RagError::Embedding {
                chunk: pending[pos].0.clone(),
                source: EmbeddingError(format!("dimension {} != {dim}", embeddings[pos].len())),
            });
        }
        let mut data = self.data.write();
        data.chunks
            .retain(|c| !(c.drug == tag && sections.contains_key(&c.section)));
        let mut ids = Vec::with_capacity(pending.len());
        for ((id, section, text), embedding) in pending.into_iter().zip(embeddings) {
            let ordinal = data.next_ordinal;
            data.next_ordinal += 1;
            ids.push(id.clone());
            let terms = term_frequencies(&text);
            data.chunks.push(Chunk {
                id,
                drug: tag.clone(),
                section,
                text,
                embedding,
                ordinal,
                terms,
            });
        }
        data.reindex();
        Ok(ids)
    }

    fn embed_query(&self, text: &str) -> Result<Vec<f64>, EmbeddingError> {
        let mut v = self.embedder.embed(&[text.to_string()])?;
        v.pop().ok_or_else(|| EmbeddingError("no embedding returned".into()))
    }

    /// Top-k chunks by reciprocal-rank fusion of cosine and BM25 rankings
    /// within the filtered candidates. Empty when nothing passes the filter.
    pub fn retrieve(&self, q: &RetrievalQuery) -> Result<Vec<Hit>, EmbeddingError> {
        let vector = self.embed_query(&q.text)?;
        Ok(self.retrieve_with_vector(q, &vector))
    }

    pub fn retrieve_with_vector(&self, q: &RetrievalQuery, vector: &[f64]) -> Vec<Hit> {
        let data = self.data.read();
        let stats = &data.stats;
        let wanted: Option<Vec<String>> = q.filter_drugs.as_ref().map(|f| f.iter().map(|d| drug_tag(d)).collect());
        let candidates: Vec<&Chunk> = data
            .chunks
            .iter()
            .filter(|c| wanted.as_ref().is_none_or(|w| w.contains(&c.drug)))
            .collect();
        if candidates.is_empty() {
            return Vec::new();
        }
        let terms = tokenize(&q.text);
        let ordinals: Vec<u64> = candidates.iter().map(|c| c.ordinal).collect();
        let cos: Vec<f64> = candidates.iter().map(|c| cosine(vector, &c.embedding)).collect();
        let lex: Vec<f64> = candidates.iter().map(|c| stats.score(&terms, &c.terms)).collect();
        let sem_rank = ranks(&cos, &ordinals);
        let lex_rank = ranks(&lex, &ordinals);
        let fused: Vec<f64> = (0..candidates.len())
            .map(|i| 1.0 / (RRF_K + sem_rank[i] as f64) + 1.0 / (RRF_K + lex_rank[i] as f64))
            .collect();
        let mut order: Vec<usize> = (0..candidates.len()).collect();
        order.sort_by(|&a, &b| fused[b].total_cmp(&fused[a]).then(ordinals[a].cmp(&ordinals[b])));
        order.truncate(q.k.max(1));
        order
            .into_iter()
            .map(|i| Hit {
                chunk: candidates[i].clone(),
                score: fused[i],
                cosine: cos[i],
                bm25: lex[i],
                semantic_rank: sem_rank[i],
                lexical_rank: lex_rank[i],
            })
            .collect()
    }

    /// Runs independent queries, returning results in query order.
    pub fn retrieve_batch(
        &self,
        queries: &[RetrievalQuery],
        par: Parallelism,
    ) -> Vec<Result<Vec<Hit>, EmbeddingError>> {
        par.map(queries, |q| self.retrieve(q))
    }

    pub fn save(&self, path: &Path) -> Result<(), RagError> {
        let data = self.data.read();
        let file = IndexFile {
            format: INDEX_FORMAT.into(),
            version: INDEX_VERSION,
            embedder: self.embedder.id(),
            dimension: self.embedder.dimension(),
            next_ordinal: data.next_ordinal,
            chunks: data.chunks.clone(),
        };
        let dir = path
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or(Path::new("."));
        std::fs::create_dir_all(dir)?;
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        serde_json::to_writer(&mut tmp, &file).map_err(std::io::Error::from)?;
        tmp.flush()?;
        tmp.persist(path).map_err(|e| RagError::Io(e.error))?;
        Ok(())
    }

    /// Loads a saved index. The embedder must match the one that built it.
    pub fn load(path: &Path, embedder: Arc<dyn Embedder>) -> Result<Self, RagError> {
        let text = std::fs::read_to_string(path)?;
        let file: IndexFile = serde_json::from_str(&text).map_err(|e| RagError::Format(e.to_string()))?;
        if file.format != INDEX_FORMAT || file.version != INDEX_VERSION {
            return Err(RagError::Format(format!(
                "unsupported index {} v{}",
                file.format, file.version
            )));
        }
        if file.embedder != embedder.id() || file.dimension != embedder.dimension() {
            return Err(RagError::Format(format!(
                "index built with {} (dimension {}), current embedder is {}",
                file.embedder,
                file.dimension,
                embedder.id()
            )));
        }
        let store = Self::new(embedder);
        let mut data = StoreData {
            chunks: file.chunks,
            next_ordinal: file.next_ordinal,
            stats: Bm25Stats::default(),
        };
        data.reindex();
        *store.data.write() = data;
        Ok(store)
    }
}

/// Prompt asking the model to answer from the given passages only.
pub fn augment_prompt(question: &str, passages: &[Chunk]) -> String {
    let mut out = String::from("PASSAGES:\n");
    if passages.is_empty() {
        out.push_str(NO_PASSAGES_MARKER);
        out.push('\n');
    }
    for (i, c) in passages.iter().enumerate() {
        out.push_str(&format!("[{}] {}: {}: {}\n", i + 1, c.drug, c.section, c.text.trim()));
    }
    out.push_str(&format!(
        "\nQUESTION: {question}\n\nAnswer the question using only the passages above, and cite the numbers of the passages that support your answer."
    ));
    out
}
