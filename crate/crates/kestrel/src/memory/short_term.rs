//! Bounded short-term conversation buffer with summarization triggers.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{consolidate, Message, MemoryEntry, Role};

/// Short-term buffer limits. The trigger fires when the estimated token sum
/// crosses `summarization_threshold * context_window`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShortTermConfig {
    pub max_messages: usize,
    pub max_tokens: usize,
    pub summarization_threshold: f64,
    pub keep_recent: usize,
    pub context_window: usize,
}

impl Default for ShortTermConfig {
    fn default() -> Self {
        Self {
            max_messages: 100,
            max_tokens: 4096,
            summarization_threshold: 0.85,
            keep_recent: 10,
            context_window: 4096,
        }
    }
}

/// Which messages should be summarized. Indices refer to buffer positions
/// at the moment the trigger was produced; the buffer is single-writer, so
/// apply the summary before appending anything else.
#[derive(Debug, Clone)]
pub struct SummarizationTrigger {
    pub indices: Vec<usize>,
    pub messages: Vec<Message>,
}

/// The short-term tier. Oldest messages are evicted past `max_messages`.
#[derive(Debug, Clone)]
pub struct ShortTermMemory {
    config: ShortTermConfig,
    messages: VecDeque<Message>,
}

impl ShortTermMemory {
    pub fn new(config: ShortTermConfig) -> Self {
        Self { config, messages: VecDeque::new() }
    }

    pub fn config(&self) -> &ShortTermConfig {
        &self.config
    }

    pub fn messages(&self) -> impl Iterator<Item = &Message> {
        self.messages.iter()
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    pub fn token_sum(&self) -> usize {
        self.messages.iter().map(|m| m.est_tokens).sum()
    }

    pub fn clear(&mut self) {
        self.messages.clear();
    }

    /// Append a message, evicting the oldest once over `max_messages`.
    /// Returns a trigger when the token sum crosses the threshold: all but
    /// the newest `keep_recent` messages, minus SYSTEM messages, should be
    /// summarized.
    pub fn append(&mut self, msg: Message) -> Option<SummarizationTrigger> {
        self.messages.push_back(msg);
        while self.messages.len() > self.config.max_messages {
            self.messages.pop_front();
        }
        let threshold = self.config.summarization_threshold * self.config.context_window as f64;
        if (self.token_sum() as f64) < threshold {
            return None;
        }
        let cutoff = self.messages.len().saturating_sub(self.config.keep_recent);
        let mut indices = Vec::new();
        let mut selected = Vec::new();
        for (i, m) in self.messages.iter().enumerate().take(cutoff) {
            if m.role != Role::System {
                indices.push(i);
                selected.push(m.clone());
            }
        }
        if selected.is_empty() {
            None
        } else {
            Some(SummarizationTrigger { indices, messages: selected })
        }
    }

    /// Replace the triggered messages with a single summary message. The
    /// summary takes SYSTEM role so later summarization passes leave it
    /// in place.
    pub fn apply_summary(&mut self, trigger: &SummarizationTrigger, summary: &str, now: f64) {
        for &i in trigger.indices.iter().rev() {
            if i < self.messages.len() {
                self.messages.remove(i);
            }
        }
        let position = trigger.indices.first().copied().unwrap_or(0).min(self.messages.len());
        self.messages.insert(position, Message::new(Role::System, summary, now));
    }

    /// Run the consolidation keep-rule over the buffer, marking promoted
    /// messages so they are not promoted again.
    pub fn consolidate_with(&mut self, keywords: &[String]) -> Vec<MemoryEntry> {
        let contiguous = self.messages.make_contiguous();
        consolidate(contiguous, keywords)
    }
}
