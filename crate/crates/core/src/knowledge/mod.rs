//! Reference-document index that supplies the executor with guidance.

mod store;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::prompts::{render_prompt, vars, PromptKind};

pub use store::{load_index, save_index};

pub const DEFAULT_CHUNK_SIZE: usize = 800;
pub const DEFAULT_OVERLAP: usize = 200;
pub const HASHED_TF_DIMENSION: usize = 512;

#[derive(Debug, Error)]
pub enum KnowledgeError {
    #[error("knowledge base is empty; ingest documents first (penheal ingest)")]
    EmptyIndex,
    #[error("k must be at least 1")]
    ZeroK,
    #[error("chunk_size ({chunk_size}) must exceed overlap ({overlap})")]
    BadWindow { chunk_size: usize, overlap: usize },
    #[error("embedder {got} does not match index embedder {expected}")]
    EmbedderMismatch { expected: String, got: String },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

pub trait Embedder: Send + Sync {
    fn id(&self) -> &str;
    fn dimension(&self) -> usize;
    fn embed(&self, text: &str) -> Vec<f32>;
}

/// Lowercase alphanumeric/underscore word tokens.
pub fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !(c.is_alphanumeric() || c == '_'))
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// L2-normalised term-frequency vector with tokens hashed into a fixed
/// number of buckets. Deterministic and order-insensitive.
#[derive(Debug, Clone)]
pub struct HashedTfEmbedder {
    dimension: usize,
}

impl Default for HashedTfEmbedder {
    fn default() -> Self {
        HashedTfEmbedder {
            dimension: HASHED_TF_DIMENSION,
        }
    }
}

impl Embedder for HashedTfEmbedder {
    fn id(&self) -> &str {
        "hashed-tf-fnv1a-512"
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Vec<f32> {
        let mut counts = vec![0f64; self.dimension];
        for t in tokens(text) {
            counts[(fnv1a(t.as_bytes()) % self.dimension as u64) as usize] += 1.0;
        }
        let norm = counts.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return vec![0.0; self.dimension];
        }
        counts.iter().map(|x| (x / norm) as f32).collect()
    }
}

pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let (mut dot, mut na, mut nb) = (0f64, 0f64, 0f64);
    for (x, y) in a.iter().zip(b) {
        let (x, y) = (*x as f64, *y as f64);
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na.sqrt() * nb.sqrt())
    }
}

/// Similarity on a 1e-12 grid for ranking. Embeddings are f32, so
/// mathematically equal cosines (proportional term counts, say) can differ
/// in the last bits; those must tie and fall back to `(doc_id, seq)`.
fn tie_key(similarity: f64) -> i64 {
    (similarity * 1e12).round() as i64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chunk {
    pub doc_id: String,
    pub seq: usize,
    pub text: String,
    #[serde(skip)]
    pub vector: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Excerpt {
    pub chunk: Chunk,
    pub similarity: f64,
}

/// Character windows of `chunk_size` starting every `chunk_size - overlap`
/// characters, for as long as a window start lies inside the text.
pub fn split_windows(text: &str, chunk_size: usize, overlap: usize) -> Result<Vec<String>, KnowledgeError> {
    if chunk_size <= overlap {
        return Err(KnowledgeError::BadWindow { chunk_size, overlap });
    }
    let chars: Vec<char> = text.chars().collect();
    let step = chunk_size - overlap;
    Ok((0..chars.len())
        .step_by(step)
        .map(|start| chars[start..(start + chunk_size).min(chars.len())].iter().collect())
        .collect())
}

pub struct KnowledgeBase {
    embedder: Box<dyn Embedder>,
    chunks: Vec<Chunk>,
}

impl Default for KnowledgeBase {
    fn default() -> Self {
        KnowledgeBase::new(Box::new(HashedTfEmbedder::default()))
    }
}

impl KnowledgeBase {
    pub fn new(embedder: Box<dyn Embedder>) -> Self {
        KnowledgeBase {
            embedder,
            chunks: Vec::new(),
        }
    }

    pub fn embedder(&self) -> &dyn Embedder {
        self.embedder.as_ref()
    }

    pub fn chunks(&self) -> &[Chunk] {
        &self.chunks
    }

    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    pub fn embed(&self, text: &str) -> Vec<f32> {
        self.embedder.embed(text)
    }

    /// Splits, embeds and indexes `text` under `doc_id`, replacing any
    /// chunks previously stored for that id. Returns the chunk count.
    pub fn ingest(
        &mut self,
        text: &str,
        doc_id: &str,
        chunk_size: usize,
        overlap: usize,
    ) -> Result<usize, KnowledgeError> {
        let windows = split_windows(text, chunk_size, overlap)?;
        self.chunks.retain(|c| c.doc_id != doc_id);
        if windows.is_empty() {
            tracing::warn!(doc_id, "ingested an empty document");
            return Ok(0);
        }
        let n = windows.len();
        for (seq, w) in windows.into_iter().enumerate() {
            let vector = self.embedder.embed(&w);
            self.chunks.push(Chunk {
                doc_id: doc_id.to_string(),
                seq,
                text: w,
                vector,
            });
        }
        Ok(n)
    }

    pub(crate) fn push_chunk(&mut self, chunk: Chunk) {
        self.chunks.push(chunk);
    }

    /// The `k` chunks most similar to `query`, highest similarity first,
    /// ties broken by `(doc_id, seq)`.
    pub fn retrieve(&self, query: &str, k: usize) -> Result<Vec<Excerpt>, KnowledgeError> {
        if k == 0 {
            return Err(KnowledgeError::ZeroK);
        }
        if self.chunks.is_empty() {
            return Err(KnowledgeError::EmptyIndex);
        }
        let q = self.embedder.embed(query);
        let mut scored: Vec<Excerpt> = self
            .chunks
            .iter()
            .map(|c| Excerpt {
                similarity: cosine(&q, &c.vector),
                chunk: c.clone(),
            })
            .collect();
        scored.sort_by(|a, b| {
            tie_key(b.similarity)
                .cmp(&tie_key(a.similarity))
                .then_with(|| a.chunk.doc_id.cmp(&b.chunk.doc_id))
                .then_with(|| a.chunk.seq.cmp(&b.chunk.seq))
        });
        scored.truncate(k);
        Ok(scored)
    }
}

/// Guidance prompt: the task, then the excerpts numbered in rank order.
pub fn build_instructor_prompt(task: &str, excerpts: &[Excerpt]) -> String {
    let list = excerpts
        .iter()
        .enumerate()
        .map(|(i, e)| format!("{}. {}", i + 1, e.chunk.text.trim()))
        .collect::<Vec<_>>()
        .join("\n");
    render_prompt(
        PromptKind::Instructor,
        &vars([("task", task.trim().trim_end_matches('.').to_string()), ("excerpts", list)]),
    )
    .expect("instructor template placeholders are supplied")
}

/// Sample reference notes shipped with the crate, as `(doc_id, text)`.
pub fn bundled_corpus() -> Vec<(&'static str, &'static str)> {
    vec![
        ("metasploit-basics", include_str!("../../data/kb/metasploit-basics.md")),
        ("service-exploits", include_str!("../../data/kb/service-exploits.md")),
        ("credential-attacks", include_str!("../../data/kb/credential-attacks.md")),
        ("web-attacks", include_str!("../../data/kb/web-attacks.md")),
        ("recon-and-scanning", include_str!("../../data/kb/recon-and-scanning.md")),
    ]
}

/// Index over [`bundled_corpus`] with default windowing.
pub fn bundled_index() -> KnowledgeBase {
    let mut kb = KnowledgeBase::default();
    for (id, text) in bundled_corpus() {
        kb.ingest(text, id, DEFAULT_CHUNK_SIZE, DEFAULT_OVERLAP)
            .expect("default window is valid");
    }
    kb
}

/// Per-document chunk counts, handy for CLI output.
pub fn doc_counts(kb: &KnowledgeBase) -> BTreeMap<String, usize> {
    let mut m = BTreeMap::new();
    for c in kb.chunks() {
        *m.entry(c.doc_id.clone()).or_insert(0) += 1;
    }
    m
}
