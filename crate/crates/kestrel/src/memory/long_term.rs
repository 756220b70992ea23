//! Long-term episodic store with filtered, scored retrieval and
//! line-delimited JSON persistence.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{retrieval_score, EntryType, ImportanceLevel, MemoryEntry, MemoryError, ScoringWeights};

/// Retrieval filters; all optional, combined with AND.
#[derive(Debug, Clone, Default)]
pub struct LtFilters {
    pub session: Option<String>,
    pub entry_type: Option<EntryType>,
    pub min_importance: Option<ImportanceLevel>,
    pub time_range: Option<(f64, f64)>,
}

#[derive(Debug, Serialize, Deserialize)]
struct IndexFile {
    version: u32,
    count: usize,
    ids: Vec<String>,
}

/// In-memory long-term store; persistence is explicit via
/// [`LongTermMemory::save_jsonl`] / [`LongTermMemory::load_jsonl`].
#[derive(Debug, Clone)]
pub struct LongTermMemory {
    entries: Vec<MemoryEntry>,
    weights: ScoringWeights,
    keywords: Vec<String>,
    next_id: u64,
}

impl LongTermMemory {
    pub fn new(weights: ScoringWeights, keywords: Vec<String>) -> Self {
        Self { entries: Vec::new(), weights, keywords, next_id: 1 }
    }

    pub fn keywords(&self) -> &[String] {
        &self.keywords
    }

    pub fn weights(&self) -> &ScoringWeights {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = &MemoryEntry> {
        self.entries.iter()
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    /// Insert an entry, assigning an id when it has none. Returns the id.
    pub fn insert(&mut self, mut entry: MemoryEntry) -> String {
        if entry.id.is_empty() {
            entry.id = format!("mem-{:06}", self.next_id);
            self.next_id += 1;
        }
        let id = entry.id.clone();
        self.entries.push(entry);
        id
    }

    pub fn get(&self, id: &str) -> Option<&MemoryEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    fn passes(&self, entry: &MemoryEntry, filters: &LtFilters) -> bool {
        if let Some(session) = &filters.session {
            if entry.session_id.as_deref() != Some(session.as_str()) {
                return false;
            }
        }
        if let Some(t) = filters.entry_type {
            if entry.entry_type != t {
                return false;
            }
        }
        if let Some(min) = filters.min_importance {
            if entry.importance_level < min {
                return false;
            }
        }
        if let Some((lo, hi)) = filters.time_range {
            if entry.timestamp < lo || entry.timestamp > hi {
                return false;
            }
        }
        true
    }

    /// Entries passing the filters ranked by retrieval score (ties keep
    /// insertion order). Returned entries get their access count bumped and
    /// `last_accessed` set to `now`.
    pub fn search(
        &mut self,
        filters: &LtFilters,
        query_embedding: Option<&[f32]>,
        k: usize,
        now: f64,
    ) -> Vec<MemoryEntry> {
        let max_access = self.entries.iter().map(|e| e.access_count).max().unwrap_or(0);
        let mut scored: Vec<(usize, f64)> = self
            .entries
            .iter()
            .enumerate()
            .filter(|(_, e)| self.passes(e, filters))
            .map(|(i, e)| {
                (i, retrieval_score(e, query_embedding, now, &self.weights, max_access, &self.keywords))
            })
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1));
        let picked: Vec<usize> = scored.into_iter().take(k).map(|(i, _)| i).collect();
        let mut out = Vec::with_capacity(picked.len());
        for i in picked {
            let entry = &mut self.entries[i];
            entry.access_count += 1;
            entry.last_accessed = Some(now);
            out.push(entry.clone());
        }
        out
    }

    /// Persist as line-delimited JSON plus a versioned index file at
    /// `<path>.index.json`.
    pub fn save_jsonl(&self, path: &Path) -> Result<(), MemoryError> {
        let mut file = std::fs::File::create(path)?;
        for entry in &self.entries {
            let line = serde_json::to_string(entry).map_err(|e| MemoryError::Corrupt(e.to_string()))?;
            writeln!(file, "{line}")?;
        }
        let index = IndexFile {
            version: 1,
            count: self.entries.len(),
            ids: self.entries.iter().map(|e| e.id.clone()).collect(),
        };
        let index_path = index_path_for(path);
        std::fs::write(
            index_path,
            serde_json::to_string_pretty(&index).map_err(|e| MemoryError::Corrupt(e.to_string()))?,
        )?;
        Ok(())
    }

    /// Load a store saved with [`LongTermMemory::save_jsonl`], verifying the
    /// index when present.
    pub fn load_jsonl(
        path: &Path,
        weights: ScoringWeights,
        keywords: Vec<String>,
    ) -> Result<Self, MemoryError> {
        let file = std::fs::File::open(path)?;
        let mut entries = Vec::new();
        for line in BufReader::new(file).lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: MemoryEntry =
                serde_json::from_str(&line).map_err(|e| MemoryError::Corrupt(e.to_string()))?;
            entries.push(entry);
        }
        let index_path = index_path_for(path);
        if index_path.exists() {
            let raw = std::fs::read_to_string(&index_path)?;
            let index: IndexFile =
                serde_json::from_str(&raw).map_err(|e| MemoryError::Corrupt(e.to_string()))?;
            if index.count != entries.len() {
                return Err(MemoryError::Corrupt(format!(
                    "index records {} entries, file holds {}",
                    index.count,
                    entries.len()
                )));
            }
        }
        let next_id = entries
            .iter()
            .filter_map(|e| e.id.strip_prefix("mem-").and_then(|n| n.parse::<u64>().ok()))
            .max()
            .unwrap_or(0)
            + 1;
        Ok(Self { entries, weights, keywords, next_id })
    }

    /// Export every entry as one JSON document (for the CLI and interchange).
    pub fn export_json(&self) -> String {
        serde_json::to_string_pretty(&self.entries).unwrap_or_else(|_| "[]".to_string())
    }

    /// Import entries from a JSON array, appending to the store.
    pub fn import_json(&mut self, json: &str) -> Result<usize, MemoryError> {
        let entries: Vec<MemoryEntry> =
            serde_json::from_str(json).map_err(|e| MemoryError::Corrupt(e.to_string()))?;
        let count = entries.len();
        for entry in entries {
            self.insert(entry);
        }
        Ok(count)
    }
}

fn index_path_for(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(".index.json");
    std::path::PathBuf::from(s)
}
