//! ACP: agent manifests, capability tokens, request types, task tracking,
//! and severity-classified errors.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::util::parse_rfc3339;

#[derive(Debug, Error)]
pub enum AcpError {
    #[error("duplicate capability name `{0}` in manifest")]
    DuplicateCapability(String),
    #[error("unparseable expiry timestamp `{0}`")]
    BadExpiry(String),
}

/// One declared capability with its schemas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcpCapability {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub version: String,
    #[serde(rename = "inputSchema", default, skip_serializing_if = "Option::is_none")]
    pub input_schema: Option<Value>,
    #[serde(rename = "outputSchema", default, skip_serializing_if = "Option::is_none")]
    pub output_schema: Option<Value>,
}

/// An agent manifest advertising capabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcpManifest {
    #[serde(rename = "agentId")]
    pub agent_id: String,
    pub name: String,
    pub version: String,
    #[serde(default)]
    pub description: String,
    pub capabilities: Vec<AcpCapability>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, Value>,
    pub created: String,
    pub updated: String,
}

impl AcpManifest {
    /// Capability names must be unique within a manifest.
    pub fn validate(&self) -> Result<(), AcpError> {
        let mut seen = std::collections::BTreeSet::new();
        for cap in &self.capabilities {
            if !seen.insert(cap.name.clone()) {
                return Err(AcpError::DuplicateCapability(cap.name.clone()));
            }
        }
        Ok(())
    }
}

/// Capability token granting access to a subset of an agent's capabilities
/// until an expiry instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcpToken {
    #[serde(rename = "tokenId")]
    pub token_id: String,
    #[serde(rename = "agentId")]
    pub agent_id: String,
    pub capabilities: Vec<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub permissions: BTreeMap<String, Vec<String>>,
    pub expires: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, Value>,
}

/// Token validity: the capability is granted and the current instant is
/// strictly before expiry. Unparseable expiry timestamps are invalid.
pub fn acp_token_valid(token: &AcpToken, capability: &str, now: f64) -> bool {
    let granted = token.capabilities.iter().any(|c| c == capability);
    let unexpired = parse_rfc3339(&token.expires).map(|exp| now < exp).unwrap_or(false);
    granted && unexpired
}

/// Request execution modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RequestType {
    Synchronous,
    Asynchronous,
    Streaming,
}

/// A capability invocation request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcpRequest {
    #[serde(rename = "requestId")]
    pub request_id: String,
    #[serde(rename = "agentId")]
    pub agent_id: String,
    pub capability: String,
    pub input: Value,
    #[serde(rename = "requestType")]
    pub request_type: RequestType,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub context: BTreeMap<String, Value>,
    pub timestamp: String,
}

/// Progress record for an asynchronous request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcpTaskInfo {
    #[serde(rename = "taskId")]
    pub task_id: String,
    #[serde(rename = "requestId")]
    pub request_id: String,
    pub status: String,
    pub progress: f64,
    pub created: String,
    pub updated: String,
}

/// Error severity levels with their retry semantics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Info,
    Warning,
    Error,
    Critical,
}

/// Whether an error of a given severity should be retried.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Retryability {
    Yes,
    No,
    Maybe,
    NotApplicable,
}

impl Severity {
    /// Warning-level errors retry with backoff; critical ones never do;
    /// plain errors are judgment calls; info is not an error at all.
    pub fn retryability(self) -> Retryability {
        match self {
            Severity::Info => Retryability::NotApplicable,
            Severity::Warning => Retryability::Yes,
            Severity::Error => Retryability::Maybe,
            Severity::Critical => Retryability::No,
        }
    }
}

/// Structured ACP error body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcpErrorBody {
    pub code: String,
    pub message: String,
    pub severity: Severity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub details: Option<Value>,
    pub timestamp: String,
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn token() -> AcpToken {
        AcpToken {
            token_id: "tok_mno345".into(),
            agent_id: "agent_research_001".into(),
            capabilities: vec!["literature_search".into(), "citation_analysis".into()],
            permissions: BTreeMap::from([
                ("literature_search".to_string(), vec!["read".to_string(), "execute".to_string()]),
                ("citation_analysis".to_string(), vec!["read".to_string()]),
            ]),
            expires: "2025-02-25T00:00:00Z".into(),
            metadata: BTreeMap::new(),
        }
    }

    #[test]
    fn token_validity_truth_table() {
        let tok = token();
        let before = parse_rfc3339("2025-01-26T00:00:00Z").unwrap();
        let after = parse_rfc3339("2025-03-01T00:00:00Z").unwrap();
        // granted x unexpired
        assert!(acp_token_valid(&tok, "literature_search", before));
        // granted x expired
        assert!(!acp_token_valid(&tok, "literature_search", after));
        // not granted x unexpired
        assert!(!acp_token_valid(&tok, "database_write", before));
        // not granted x expired
        assert!(!acp_token_valid(&tok, "database_write", after));
    }

    #[test]
    fn token_expiry_is_strict() {
        let tok = token();
        let exactly = parse_rfc3339("2025-02-25T00:00:00Z").unwrap();
        assert!(!acp_token_valid(&tok, "literature_search", exactly));
        assert!(acp_token_valid(&tok, "literature_search", exactly - 1.0));
    }

    #[test]
    fn manifest_rejects_duplicate_capabilities() {
        let cap = AcpCapability {
            name: "search".into(),
            description: String::new(),
            version: "1.0.0".into(),
            input_schema: None,
            output_schema: None,
        };
        let manifest = AcpManifest {
            agent_id: "a".into(),
            name: "n".into(),
            version: "1.0".into(),
            description: String::new(),
            capabilities: vec![cap.clone(), cap],
            metadata: BTreeMap::new(),
            created: "2025-01-15T00:00:00Z".into(),
            updated: "2025-01-15T00:00:00Z".into(),
        };
        assert!(matches!(manifest.validate(), Err(AcpError::DuplicateCapability(_))));
    }

    #[test]
    fn wire_field_names_match_reference() {
        let request = AcpRequest {
            request_id: "req_ghi789".into(),
            agent_id: "agent_research_001".into(),
            capability: "literature_search".into(),
            input: json!({"query": "attention mechanisms transformers"}),
            request_type: RequestType::Asynchronous,
            context: BTreeMap::from([("user_id".to_string(), json!("researcher_42"))]),
            timestamp: "2025-01-25T11:00:00Z".into(),
        };
        let value = serde_json::to_value(&request).unwrap();
        assert_eq!(value["requestId"], "req_ghi789");
        assert_eq!(value["agentId"], "agent_research_001");
        assert_eq!(value["requestType"], "asynchronous");
        let back: AcpRequest = serde_json::from_value(value).unwrap();
        assert_eq!(back, request);
    }

    #[test]
    fn severity_retryability_table() {
        assert_eq!(Severity::Info.retryability(), Retryability::NotApplicable);
        assert_eq!(Severity::Warning.retryability(), Retryability::Yes);
        assert_eq!(Severity::Error.retryability(), Retryability::Maybe);
        assert_eq!(Severity::Critical.retryability(), Retryability::No);
    }

    #[test]
    fn task_info_round_trip() {
        let info = AcpTaskInfo {
            task_id: "task_jkl012".into(),
            request_id: "req_ghi789".into(),
            status: "running".into(),
            progress: 0.73,
            created: "2025-01-25T11:00:00Z".into(),
            updated: "2025-01-25T11:02:15Z".into(),
        };
        let value = serde_json::to_value(&info).unwrap();
        assert_eq!(value["taskId"], "task_jkl012");
        assert_eq!(value["progress"], 0.73);
        let back: AcpTaskInfo = serde_json::from_value(value).unwrap();
        assert_eq!(back, info);
    }
}
