//! Canonical tool representation and the bidirectional mappings into the
//! protocol-specific descriptors. Registering a tool once makes it callable
//! through MCP, A2A, and ACP.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::acp::AcpCapability;

#[derive(Debug, Error)]
pub enum BridgeError {
    #[error("descriptor missing required field `{0}`")]
    MissingField(&'static str),
    #[error("tool name `{0}` is not a valid identifier")]
    BadName(String),
    #[error("input schema must be a JSON object")]
    BadSchema,
}

/// Protocol-neutral tool description: name, description, and input/output
/// schemas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanonicalTool {
    pub name: String,
    pub description: String,
    pub input_schema: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_schema: Option<Value>,
}

fn valid_name(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

impl CanonicalTool {
    pub fn new(
        name: impl Into<String>,
        description: impl Into<String>,
        input_schema: Value,
    ) -> Result<Self, BridgeError> {
        let tool = Self {
            name: name.into(),
            description: description.into(),
            input_schema,
            output_schema: None,
        };
        tool.validate()?;
        Ok(tool)
    }

    pub fn with_output_schema(mut self, schema: Value) -> Self {
        self.output_schema = Some(schema);
        self
    }

    pub fn validate(&self) -> Result<(), BridgeError> {
        if !valid_name(&self.name) {
            return Err(BridgeError::BadName(self.name.clone()));
        }
        if !self.input_schema.is_object() {
            return Err(BridgeError::BadSchema);
        }
        Ok(())
    }
}

/// MCP tool descriptor (`inputSchema` / `returnSchema` field names).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McpToolDescriptor {
    pub name: String,
    pub description: String,
    #[serde(rename = "inputSchema")]
    pub input_schema: Value,
    #[serde(rename = "returnSchema", default, skip_serializing_if = "Option::is_none")]
    pub return_schema: Option<Value>,
}

/// A2A skill descriptor used on agent cards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct A2aSkill {
    pub name: String,
    pub description: String,
    #[serde(rename = "inputSchema")]
    pub input_schema: Value,
    #[serde(rename = "outputSchema", default, skip_serializing_if = "Option::is_none")]
    pub output_schema: Option<Value>,
}

/// Canonical -> MCP.
pub fn to_mcp(tool: &CanonicalTool) -> McpToolDescriptor {
    McpToolDescriptor {
        name: tool.name.clone(),
        description: tool.description.clone(),
        input_schema: tool.input_schema.clone(),
        return_schema: tool.output_schema.clone(),
    }
}

/// MCP -> canonical.
pub fn from_mcp(descriptor: &McpToolDescriptor) -> Result<CanonicalTool, BridgeError> {
    if descriptor.name.is_empty() {
        return Err(BridgeError::MissingField("name"));
    }
    let mut tool = CanonicalTool::new(
        descriptor.name.clone(),
        descriptor.description.clone(),
        descriptor.input_schema.clone(),
    )?;
    tool.output_schema = descriptor.return_schema.clone();
    Ok(tool)
}

/// Canonical -> A2A skill.
pub fn to_a2a(tool: &CanonicalTool) -> A2aSkill {
    A2aSkill {
        name: tool.name.clone(),
        description: tool.description.clone(),
        input_schema: tool.input_schema.clone(),
        output_schema: tool.output_schema.clone(),
    }
}

/// A2A skill -> canonical.
pub fn from_a2a(skill: &A2aSkill) -> Result<CanonicalTool, BridgeError> {
    if skill.name.is_empty() {
        return Err(BridgeError::MissingField("name"));
    }
    let mut tool =
        CanonicalTool::new(skill.name.clone(), skill.description.clone(), skill.input_schema.clone())?;
    tool.output_schema = skill.output_schema.clone();
    Ok(tool)
}

/// Canonical -> ACP capability. Capabilities carry a version; new bridges
/// start at 1.0.0.
pub fn to_acp(tool: &CanonicalTool) -> AcpCapability {
    AcpCapability {
        name: tool.name.clone(),
        description: tool.description.clone(),
        version: "1.0.0".to_string(),
        input_schema: Some(tool.input_schema.clone()),
        output_schema: tool.output_schema.clone(),
    }
}

/// ACP capability -> canonical.
pub fn from_acp(capability: &AcpCapability) -> Result<CanonicalTool, BridgeError> {
    if capability.name.is_empty() {
        return Err(BridgeError::MissingField("name"));
    }
    let input_schema = capability
        .input_schema
        .clone()
        .ok_or(BridgeError::MissingField("inputSchema"))?;
    let mut tool =
        CanonicalTool::new(capability.name.clone(), capability.description.clone(), input_schema)?;
    tool.output_schema = capability.output_schema.clone();
    Ok(tool)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn calculator() -> CanonicalTool {
        CanonicalTool::new(
            "calculator",
            "Evaluate mathematical expressions",
            json!({
                "type": "object",
                "properties": {"expression": {"type": "string"}},
                "required": ["expression"]
            }),
        )
        .unwrap()
        .with_output_schema(json!({
            "type": "object",
            "properties": {"result": {"type": "number"}}
        }))
    }

    #[test]
    fn mcp_descriptor_uses_input_schema_field() {
        let descriptor = to_mcp(&calculator());
        let value = serde_json::to_value(&descriptor).unwrap();
        assert!(value.get("inputSchema").is_some());
        assert_eq!(value["inputSchema"]["required"][0], "expression");
    }

    #[test]
    fn round_trips_through_all_three_protocols() {
        let tool = calculator();
        assert_eq!(from_mcp(&to_mcp(&tool)).unwrap(), tool);
        assert_eq!(from_a2a(&to_a2a(&tool)).unwrap(), tool);
        assert_eq!(from_acp(&to_acp(&tool)).unwrap(), tool);
    }

    #[test]
    fn acp_without_input_schema_fails_conversion() {
        let capability = AcpCapability {
            name: "search".into(),
            description: "d".into(),
            version: "1.0.0".into(),
            input_schema: None,
            output_schema: None,
        };
        assert!(matches!(from_acp(&capability), Err(BridgeError::MissingField("inputSchema"))));
    }

    #[test]
    fn bad_names_rejected() {
        assert!(CanonicalTool::new("9lives", "d", json!({})).is_err());
        assert!(CanonicalTool::new("", "d", json!({})).is_err());
        assert!(CanonicalTool::new("ok_name-2", "d", json!({})).is_ok());
    }

    #[test]
    fn schemas_preserved_exactly() {
        let tool = calculator();
        let via_acp = from_acp(&to_acp(&tool)).unwrap();
        assert_eq!(via_acp.input_schema, tool.input_schema);
        assert_eq!(via_acp.output_schema, tool.output_schema);
    }
}
