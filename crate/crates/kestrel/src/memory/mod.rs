//! Three-tier memory: a bounded short-term conversation buffer with
//! summarization triggers, a long-term episodic store scored by recency,
//! frequency, importance, and similarity, and an exact-cosine vector store.
//!
//! Embeddings are pluggable through [`Embedder`]; the default
//! [`HashEmbedder`] hashes word tokens into a fixed-dimension vector so the
//! whole tier works deterministically without a neural model.

mod long_term;
mod short_term;
mod vector;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use long_term::{LongTermMemory, LtFilters};
pub use short_term::{ShortTermConfig, ShortTermMemory, SummarizationTrigger};
pub use vector::{cosine, VectorMemory};

use crate::util::{fnv1a64, lower_tokens};

/// Default recency-decay constant: `1 / (7 days in seconds)`, so the recency
/// component reaches `1/e` after exactly seven days.
pub const DEFAULT_DECAY_LAMBDA: f64 = 1.0 / (7.0 * 24.0 * 3600.0);

/// Default importance keywords. The set is configurable; these are the
/// conventional defaults.
pub fn default_keywords() -> Vec<String> {
    ["important", "critical", "error", "deadline", "remember"]
        .into_iter()
        .map(str::to_string)
        .collect()
}

#[derive(Debug, Error)]
pub enum MemoryError {
    #[error("embedding dimension mismatch: store is {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("scoring weights must sum to 1.0 within 0.01 and lambda must be positive")]
    BadWeights,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt store: {0}")]
    Corrupt(String),
}

/// Message roles in the short-term conversation buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Role {
    System,
    User,
    Assistant,
    Tool,
}

/// Importance levels in ascending order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ImportanceLevel {
    Low,
    Medium,
    High,
    Critical,
}

impl ImportanceLevel {
    /// Manual-importance component of the composite score.
    pub fn manual_weight(self) -> f64 {
        match self {
            ImportanceLevel::Critical => 1.0,
            ImportanceLevel::High => 0.75,
            ImportanceLevel::Medium => 0.5,
            ImportanceLevel::Low => 0.25,
        }
    }
}

/// Long-term entry types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EntryType {
    Conversation,
    Fact,
    Observation,
    Task,
    ToolResult,
    Reflection,
}

impl EntryType {
    /// Type component of the composite importance score.
    pub fn type_weight(self) -> f64 {
        match self {
            EntryType::Fact => 0.9,
            EntryType::Reflection => 0.7,
            EntryType::Task => 0.6,
            EntryType::Observation => 0.5,
            EntryType::ToolResult => 0.4,
            EntryType::Conversation => 0.3,
        }
    }
}

/// One message in short-term memory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
    pub timestamp: f64,
    pub est_tokens: usize,
    /// Optional manual importance hint, used when the message is considered
    /// for consolidation. Unhinted messages count as LOW.
    #[serde(default)]
    pub importance: Option<ImportanceLevel>,
    /// Set once the message has been promoted to long-term storage so
    /// consolidation never processes it twice.
    #[serde(default)]
    pub consolidated: bool,
}

impl Message {
    pub fn new(role: Role, content: impl Into<String>, timestamp: f64) -> Self {
        let content = content.into();
        let est_tokens = estimate_tokens(&content);
        Self { role, content, timestamp, est_tokens, importance: None, consolidated: false }
    }

    pub fn with_importance(mut self, level: ImportanceLevel) -> Self {
        self.importance = Some(level);
        self
    }
}

/// One long-term memory entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryEntry {
    pub id: String,
    pub content: String,
    pub entry_type: EntryType,
    pub importance_level: ImportanceLevel,
    pub timestamp: f64,
    #[serde(default)]
    pub session_id: Option<String>,
    #[serde(default)]
    pub access_count: u64,
    #[serde(default)]
    pub last_accessed: Option<f64>,
    #[serde(default)]
    pub tags: Vec<String>,
    #[serde(default)]
    pub embedding: Option<Vec<f32>>,
}

impl MemoryEntry {
    pub fn new(
        content: impl Into<String>,
        entry_type: EntryType,
        importance_level: ImportanceLevel,
        timestamp: f64,
    ) -> Self {
        Self {
            id: String::new(),
            content: content.into(),
            entry_type,
            importance_level,
            timestamp,
            session_id: None,
            access_count: 0,
            last_accessed: None,
            tags: Vec::new(),
            embedding: None,
        }
    }
}

/// Weights for the four-term retrieval score plus the recency decay rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoringWeights {
    pub recency: f64,
    pub frequency: f64,
    pub importance: f64,
    pub similarity: f64,
    pub decay_lambda: f64,
}

impl Default for ScoringWeights {
    fn default() -> Self {
        Self {
            recency: 0.3,
            frequency: 0.2,
            importance: 0.3,
            similarity: 0.2,
            decay_lambda: DEFAULT_DECAY_LAMBDA,
        }
    }
}

impl ScoringWeights {
    pub fn validate(&self) -> Result<(), MemoryError> {
        let sum = self.recency + self.frequency + self.importance + self.similarity;
        if (sum - 1.0).abs() > 0.01 || self.decay_lambda <= 0.0 {
            return Err(MemoryError::BadWeights);
        }
        Ok(())
    }
}

/// Fast token estimate: `chars/4 + words*1.3`, rounded half up. Empty text
/// estimates to zero.
pub fn estimate_tokens(content: &str) -> usize {
    if content.is_empty() {
        return 0;
    }
    let chars = content.chars().count() as f64;
    let words = content.split_whitespace().count() as f64;
    (chars / 4.0 + words * 1.3).round() as usize
}

/// Composite importance in `[0, 1]`: manual level (0.4), type (0.3), length
/// (0.15), and keyword hits (0.15).
pub fn importance(entry: &MemoryEntry, keywords: &[String]) -> f64 {
    let manual = entry.importance_level.manual_weight();
    let type_score = entry.entry_type.type_weight();
    let words = entry.content.split_whitespace().count() as f64;
    let length = (words / 100.0).min(1.0);
    let tokens = lower_tokens(&entry.content);
    let hits = keywords.iter().filter(|k| tokens.iter().any(|t| t == *k)).count();
    let keyword_score = if keywords.is_empty() { 0.0 } else { hits as f64 / keywords.len() as f64 };
    0.4 * manual + 0.3 * type_score + 0.15 * length + 0.15 * keyword_score
}

/// Exponential recency decay `exp(-lambda * dt)`, clamped so future
/// timestamps score 1.0.
pub fn recency(entry_timestamp: f64, now: f64, lambda: f64) -> f64 {
    let dt = (now - entry_timestamp).max(0.0);
    (-lambda * dt).exp()
}

/// Four-term retrieval score: recency, normalized access frequency,
/// composite importance, and cosine similarity (0 when either embedding is
/// missing).
pub fn retrieval_score(
    entry: &MemoryEntry,
    query_embedding: Option<&[f32]>,
    now: f64,
    weights: &ScoringWeights,
    max_access: u64,
    keywords: &[String],
) -> f64 {
    let r = recency(entry.timestamp, now, weights.decay_lambda);
    let f = if max_access == 0 {
        0.0
    } else {
        ((1 + entry.access_count) as f64).ln() / ((1 + max_access) as f64).ln()
    };
    let i = importance(entry, keywords);
    let s = match (query_embedding, entry.embedding.as_deref()) {
        (Some(q), Some(e)) => cosine(q, e) as f64,
        _ => 0.0,
    };
    weights.recency * r + weights.frequency * f + weights.importance * i + weights.similarity * s
}

/// Consolidation keep-rule: long enough, not a tool message, and important
/// enough once typed.
pub fn keep_for_consolidation(msg: &Message, keywords: &[String]) -> bool {
    if msg.est_tokens <= 50 || msg.role == Role::Tool {
        return false;
    }
    let candidate = candidate_entry(msg);
    importance(&candidate, keywords) > 0.3
}

/// Infer the long-term entry type for a short-term message. Precedence runs
/// FACT > TASK > REFLECTION > OBSERVATION when several keyword sets match.
pub fn infer_entry_type(msg: &Message) -> EntryType {
    let tokens = lower_tokens(&msg.content);
    let has = |words: &[&str]| tokens.iter().any(|t| words.contains(&t.as_str()));
    if has(&["is", "are", "equals"]) {
        EntryType::Fact
    } else if msg.role == Role::User && has(&["do", "create", "find"]) {
        EntryType::Task
    } else if has(&["learned", "realized", "understood"]) {
        EntryType::Reflection
    } else {
        EntryType::Observation
    }
}

fn candidate_entry(msg: &Message) -> MemoryEntry {
    MemoryEntry::new(
        msg.content.clone(),
        infer_entry_type(msg),
        msg.importance.unwrap_or(ImportanceLevel::Low),
        msg.timestamp,
    )
}

/// Convert qualifying unconsolidated messages into long-term entries and
/// mark them so they are never promoted twice. Embeddings are left for the
/// caller (usually [`MemorySystem::consolidate`]) to fill in.
pub fn consolidate(messages: &mut [Message], keywords: &[String]) -> Vec<MemoryEntry> {
    let mut out = Vec::new();
    for msg in messages.iter_mut() {
        if msg.consolidated {
            continue;
        }
        if keep_for_consolidation(msg, keywords) {
            out.push(candidate_entry(msg));
            msg.consolidated = true;
        }
    }
    out
}

/// Text embedding source.
pub trait Embedder: Send + Sync {
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Vec<f32>;
}

/// Deterministic test embedder: hashes word tokens into signed buckets of a
/// fixed-dimension vector, then L2-normalizes.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dim: usize,
}

impl HashEmbedder {
    pub fn new(dim: usize) -> Self {
        Self { dim: dim.max(1) }
    }
}

impl Default for HashEmbedder {
    fn default() -> Self {
        Self::new(64)
    }
}

impl Embedder for HashEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Vec<f32> {
        let mut v = vec![0.0f32; self.dim];
        for token in lower_tokens(text) {
            let h = fnv1a64(token.as_bytes());
            let bucket = (h % self.dim as u64) as usize;
            let sign = if (h >> 32) & 1 == 0 { 1.0 } else { -1.0 };
            v[bucket] += sign;
        }
        let norm: f32 = v.iter().map(|x| x * x).sum::<f32>().sqrt();
        if norm > 0.0 {
            for x in &mut v {
                *x /= norm;
            }
        }
        v
    }
}

/// The three tiers plus an embedder, wired together.
pub struct MemorySystem {
    pub short_term: ShortTermMemory,
    pub long_term: LongTermMemory,
    pub vector: VectorMemory,
    pub embedder: Arc<dyn Embedder>,
}

impl MemorySystem {
    pub fn new(config: ShortTermConfig) -> Self {
        let embedder: Arc<dyn Embedder> = Arc::new(HashEmbedder::default());
        Self {
            short_term: ShortTermMemory::new(config),
            long_term: LongTermMemory::new(ScoringWeights::default(), default_keywords()),
            vector: VectorMemory::new(embedder.dim()),
            embedder,
        }
    }

    pub fn with_embedder(mut self, embedder: Arc<dyn Embedder>) -> Self {
        self.vector = VectorMemory::new(embedder.dim());
        self.embedder = embedder;
        self
    }

    /// Append a message to short-term memory, returning a summarization
    /// trigger when the buffer crosses its threshold.
    pub fn observe(&mut self, role: Role, content: &str, now: f64) -> Option<SummarizationTrigger> {
        self.short_term.append(Message::new(role, content, now))
    }

    /// Promote qualifying short-term messages into the long-term and vector
    /// stores. Returns how many entries were created.
    pub fn consolidate(&mut self) -> usize {
        let keywords = self.long_term.keywords().to_vec();
        let entries = self.short_term.consolidate_with(&keywords);
        let count = entries.len();
        for mut entry in entries {
            entry.embedding = Some(self.embedder.embed(&entry.content));
            let id = self.long_term.insert(entry);
            let embedding = self.long_term.get(&id).and_then(|e| e.embedding.clone());
            if let Some(v) = embedding {
                let _ = self.vector.insert(id, v);
            }
        }
        count
    }

    /// Retrieve the `k` best long-term entries for a query using the
    /// four-term retrieval score.
    pub fn recall(&mut self, query: &str, k: usize, now: f64) -> Vec<MemoryEntry> {
        let embedding = self.embedder.embed(query);
        self.long_term.search(&LtFilters::default(), Some(&embedding), k, now)
    }
}
