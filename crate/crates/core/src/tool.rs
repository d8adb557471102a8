//! Tool schemas: prompt rendering, JSON-schema export and argument validation.

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::message::{ToolCall, TOOL_PREFIX};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    Text,
    TextList,
    Number,
    Object,
}

impl FieldKind {
    fn label(self) -> &'static str {
        match self {
            FieldKind::Text => "string",
            FieldKind::TextList => "list of strings",
            FieldKind::Number => "number",
            FieldKind::Object => "object",
        }
    }

    fn accepts(self, value: &Value) -> bool {
        match self {
            FieldKind::Text => value.is_string(),
            FieldKind::TextList => value.as_array().is_some_and(|items| items.iter().all(Value::is_string)),
            FieldKind::Number => value.is_number(),
            FieldKind::Object => value.is_object(),
        }
    }

    fn json_schema(self) -> Value {
        match self {
            FieldKind::Text => json!({"type": "string"}),
            FieldKind::TextList => json!({"type": "array", "items": {"type": "string"}}),
            FieldKind::Number => json!({"type": "number"}),
            FieldKind::Object => json!({"type": "object"}),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolField {
    pub name: String,
    pub kind: FieldKind,
    pub required: bool,
    pub description: String,
}

impl ToolField {
    pub fn required(name: &str, kind: FieldKind, description: &str) -> Self {
        Self {
            name: name.to_string(),
            kind,
            required: true,
            description: description.to_string(),
        }
    }

    pub fn optional(name: &str, kind: FieldKind, description: &str) -> Self {
        Self {
            required: false,
            ..Self::required(name, kind, description)
        }
    }
}

/// Name, usage condition and argument fields of a tool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolSchema {
    pub name: String,
    /// When the model should use this tool.
    pub description: String,
    pub fields: Vec<ToolField>,
}

impl ToolSchema {
    pub fn new(name: &str, description: &str, fields: Vec<ToolField>) -> Self {
        Self {
            name: name.to_string(),
            description: description.to_string(),
            fields,
        }
    }

    /// Checks presence and type of declared fields. Undeclared extra fields
    /// are tolerated.
    pub fn validate(&self, call: &ToolCall) -> Result<(), String> {
        for field in &self.fields {
            match call.arguments.get(&field.name) {
                None | Some(Value::Null) if field.required => {
                    return Err(format!(
                        "tool `{}` is missing required field `{}`",
                        self.name, field.name
                    ));
                }
                None | Some(Value::Null) => {}
                Some(v) if !field.kind.accepts(v) => {
                    return Err(format!(
                        "field `{}` of tool `{}` must be a {}",
                        field.name,
                        self.name,
                        field.kind.label()
                    ));
                }
                Some(_) => {}
            }
        }
        Ok(())
    }

    /// Function definition in the chat-completions `tools` format.
    pub fn to_function_json(&self) -> Value {
        let mut props = Map::new();
        let mut required = Vec::new();
        for field in &self.fields {
            let mut schema = field.kind.json_schema();
            schema["description"] = Value::String(field.description.clone());
            props.insert(field.name.clone(), schema);
            if field.required {
                required.push(Value::String(field.name.clone()));
            }
        }
        json!({
            "type": "function",
            "function": {
                "name": self.name,
                "description": self.description,
                "parameters": {
                    "type": "object",
                    "properties": props,
                    "required": required,
                }
            }
        })
    }
}

/// Deterministic tool-description block appended to a system prompt.
pub fn render_tool_section(tools: &[ToolSchema]) -> String {
    if tools.is_empty() {
        return String::new();
    }
    let mut out = String::from("TOOLS:\n");
    out.push_str(&format!(
        "To use a tool, reply with a single block of the form\n{TOOL_PREFIX} {{\"name\": \"<tool name>\", \"to\": \"\", \"arguments\": {{...}}}}\n"
    ));
    for tool in tools {
        out.push_str(&format!("\n- `{}`: {}\n", tool.name, tool.description));
        if tool.fields.is_empty() {
            out.push_str("    (no arguments)\n");
        }
        for field in &tool.fields {
            let req = if field.required { "required" } else { "optional" };
            out.push_str(&format!(
                "    {} ({}, {}): {}\n",
                field.name,
                field.kind.label(),
                req,
                field.description
            ));
        }
    }
    out
}
