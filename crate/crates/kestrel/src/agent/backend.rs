//! The pluggable completion interface: a deterministic scripted backend for
//! tests and examples, and a generic OpenAI-compatible HTTP backend for
//! real deployments.

use std::collections::VecDeque;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde_json::{json, Value};
use thiserror::Error;

use crate::protocols::httpc;

#[derive(Debug, Error, Clone)]
pub enum BackendError {
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    #[error("scripted backend got an unexpected prompt (expected {expected}): {prompt_head}")]
    UnexpectedPrompt { expected: String, prompt_head: String },
    #[error("scripted backend ran out of responses")]
    ScriptExhausted,
    #[error("http error: {0}")]
    Http(String),
    #[error("malformed completion response: {0}")]
    Malformed(String),
}

/// Generation parameters forwarded to the model.
#[derive(Debug, Clone)]
pub struct GenerationParams {
    pub temperature: f64,
    pub max_tokens: u32,
    pub stop: Vec<String>,
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self { temperature: 0.0, max_tokens: 4096, stop: Vec::new() }
    }
}

/// All model inference goes through this interface.
pub trait CompletionBackend: Send + Sync {
    fn generate(&self, prompt: &str, params: &GenerationParams) -> Result<String, BackendError>;
    fn context_window(&self) -> usize;
    fn name(&self) -> &str;
}

/// How a scripted entry decides whether the incoming prompt is the one it
/// expected.
#[derive(Debug, Clone)]
pub enum PromptMatcher {
    Any,
    Contains(String),
    StartsWith(String),
}

impl PromptMatcher {
    fn matches(&self, prompt: &str) -> bool {
        match self {
            PromptMatcher::Any => true,
            PromptMatcher::Contains(needle) => prompt.contains(needle),
            PromptMatcher::StartsWith(prefix) => prompt.starts_with(prefix),
        }
    }

    fn describe(&self) -> String {
        match self {
            PromptMatcher::Any => "<any>".to_string(),
            PromptMatcher::Contains(n) => format!("contains {n:?}"),
            PromptMatcher::StartsWith(p) => format!("starts with {p:?}"),
        }
    }
}

/// Deterministic test double: a script of (prompt predicate, canned
/// response) entries. Each call consumes the first entry whose predicate
/// matches the prompt, so concurrent fan-out stays deterministic; a prompt
/// matching no remaining entry is an error. Every served prompt is recorded
/// for call-order assertions.
pub struct ScriptedBackend {
    name: String,
    context_window: usize,
    script: Mutex<VecDeque<(PromptMatcher, String)>>,
    calls: Mutex<Vec<String>>,
}

impl ScriptedBackend {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            context_window: 8192,
            script: Mutex::new(VecDeque::new()),
            calls: Mutex::new(Vec::new()),
        }
    }

    pub fn with_context_window(mut self, window: usize) -> Self {
        self.context_window = window;
        self
    }

    /// Append a script entry.
    pub fn expect(self, matcher: PromptMatcher, response: impl Into<String>) -> Self {
        self.script.lock().unwrap().push_back((matcher, response.into()));
        self
    }

    /// Shorthand for a `Contains` expectation.
    pub fn expect_contains(self, needle: &str, response: impl Into<String>) -> Self {
        self.expect(PromptMatcher::Contains(needle.to_string()), response)
    }

    /// Every prompt served so far, in order.
    pub fn calls(&self) -> Vec<String> {
        self.calls.lock().unwrap().clone()
    }

    pub fn remaining(&self) -> usize {
        self.script.lock().unwrap().len()
    }
}

impl CompletionBackend for ScriptedBackend {
    fn generate(&self, prompt: &str, _params: &GenerationParams) -> Result<String, BackendError> {
        self.calls.lock().unwrap().push(prompt.to_string());
        let mut script = self.script.lock().unwrap();
        if script.is_empty() {
            return Err(BackendError::ScriptExhausted);
        }
        let position = script.iter().position(|(m, _)| m.matches(prompt));
        match position {
            Some(i) => Ok(script.remove(i).unwrap().1),
            None => Err(BackendError::UnexpectedPrompt {
                expected: script
                    .iter()
                    .map(|(m, _)| m.describe())
                    .collect::<Vec<_>>()
                    .join(" | "),
                prompt_head: prompt.chars().take(120).collect(),
            }),
        }
    }

    fn context_window(&self) -> usize {
        self.context_window
    }

    fn name(&self) -> &str {
        &self.name
    }
}

/// Chat-completions-style HTTP backend: one POST per generation against a
/// configurable endpoint, bearer auth from config, response text read from
/// the first choice.
pub struct HttpBackend {
    pub host: String,
    pub port: u16,
    pub path: String,
    pub model: String,
    pub api_key: Option<String>,
    pub context_window: usize,
    pub timeout: Duration,
}

impl HttpBackend {
    /// Build from a base URL like `http://127.0.0.1:8000`.
    pub fn from_base_url(
        base: &str,
        model: impl Into<String>,
        api_key: Option<String>,
    ) -> Result<Self, BackendError> {
        let stripped = base
            .strip_prefix("http://")
            .ok_or_else(|| BackendError::Unavailable(format!("only http:// endpoints are supported, got {base}")))?;
        let (hostport, base_path) = match stripped.split_once('/') {
            Some((hp, rest)) => (hp, format!("/{rest}")),
            None => (stripped, String::new()),
        };
        let (host, port) = match hostport.split_once(':') {
            Some((h, p)) => (
                h.to_string(),
                p.parse::<u16>()
                    .map_err(|_| BackendError::Unavailable(format!("bad port in {base}")))?,
            ),
            None => (hostport.to_string(), 80),
        };
        let trimmed = base_path.trim_end_matches('/');
        let path = if trimmed.ends_with("/v1") {
            format!("{trimmed}/chat/completions")
        } else {
            format!("{trimmed}/v1/chat/completions")
        };
        Ok(Self {
            host,
            port,
            path,
            model: model.into(),
            api_key,
            context_window: 4096,
            timeout: Duration::from_secs(120),
        })
    }

    pub fn with_context_window(mut self, window: usize) -> Self {
        self.context_window = window;
        self
    }
}

impl CompletionBackend for HttpBackend {
    fn generate(&self, prompt: &str, params: &GenerationParams) -> Result<String, BackendError> {
        let body = json!({
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
            "stop": params.stop,
        });
        let mut headers = Vec::new();
        if let Some(key) = &self.api_key {
            if !key.is_empty() {
                headers.push(("Authorization".to_string(), format!("Bearer {key}")));
            }
        }
        let response = httpc::post(
            &self.host,
            self.port,
            &self.path,
            "application/json",
            &body.to_string(),
            &headers,
            self.timeout,
        )
        .map_err(|e| BackendError::Http(e.to_string()))?;
        if !(200..300).contains(&response.status) {
            return Err(BackendError::Http(format!("status {}", response.status)));
        }
        let value: Value = serde_json::from_str(&response.body)
            .map_err(|e| BackendError::Malformed(e.to_string()))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| BackendError::Malformed("no choices[0].message.content".to_string()))
    }

    fn context_window(&self) -> usize {
        self.context_window
    }

    fn name(&self) -> &str {
        &self.model
    }
}

/// Wrap a backend so it can be shared.
pub fn shared(backend: impl CompletionBackend + 'static) -> Arc<dyn CompletionBackend> {
    Arc::new(backend)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scripted_backend_consumes_in_order() {
        let backend = ScriptedBackend::new("test")
            .expect_contains("first", "one")
            .expect(PromptMatcher::Any, "two");
        let params = GenerationParams::default();
        assert_eq!(backend.generate("the first prompt", &params).unwrap(), "one");
        assert_eq!(backend.generate("anything", &params).unwrap(), "two");
        assert!(matches!(
            backend.generate("extra", &params),
            Err(BackendError::ScriptExhausted)
        ));
        assert_eq!(backend.calls().len(), 3);
    }

    #[test]
    fn scripted_backend_rejects_unexpected() {
        let backend = ScriptedBackend::new("test").expect_contains("expected text", "x");
        let err = backend.generate("something else", &GenerationParams::default()).unwrap_err();
        assert!(matches!(err, BackendError::UnexpectedPrompt { .. }));
    }

    #[test]
    fn base_url_parsing() {
        let b = HttpBackend::from_base_url("http://127.0.0.1:8000", "m", None).unwrap();
        assert_eq!(b.host, "127.0.0.1");
        assert_eq!(b.port, 8000);
        assert_eq!(b.path, "/v1/chat/completions");
        let b = HttpBackend::from_base_url("http://api.example.com/v1", "m", None).unwrap();
        assert_eq!(b.port, 80);
        assert_eq!(b.path, "/v1/chat/completions");
        assert!(HttpBackend::from_base_url("https://secure", "m", None).is_err());
    }
}
