// SPDX-License-Identifier: Apache-2.0

//! JSON-RPC 2.0 tool surface of a stage service: `initialize`, `tools/list`
//! and `tools/call`.

use serde_json::{json, Map, Value};

use crate::catalog::{Catalog, Domain, ParamSpec};
use crate::services::StageServices;
use crate::stage::Stage;

pub const PROTOCOL_VERSION: &str = "2024-11-05";

pub const PARSE_ERROR: i64 = -32700;
pub const INVALID_REQUEST: i64 = -32600;
pub const METHOD_NOT_FOUND: i64 = -32601;
pub const INVALID_PARAMS: i64 = -32602;

pub fn tool_name(stage: Stage) -> String {
    format!("run_{}", stage.long_name())
}

fn param_schema(spec: &ParamSpec) -> Value {
    let mut s = match &spec.domain {
        Domain::Enum { options } => json!({"type": "string", "enum": options}),
        Domain::Real { min, max, min_exclusive, max_exclusive } => {
            let mut m = json!({"type": "number"});
            m[if *min_exclusive { "exclusiveMinimum" } else { "minimum" }] = json!(min);
            m[if *max_exclusive { "exclusiveMaximum" } else { "maximum" }] = json!(max);
            m
        }
        Domain::Int { min, max } => json!({"type": "integer", "minimum": min, "maximum": max}),
        Domain::Ident => json!({"type": "string", "pattern": "^[A-Za-z0-9_.-]+$"}),
        Domain::Path => json!({"type": "string", "minLength": 1}),
    };
    if !spec.description.is_empty() {
        s["description"] = json!(spec.description);
    }
    if let Some(d) = &spec.default {
        s["default"] = d.clone();
    }
    s
}

fn properties<'a>(specs: impl Iterator<Item = &'a ParamSpec>) -> Map<String, Value> {
    specs.map(|p| (p.key().to_string(), param_schema(p))).collect()
}

/// JSON Schema of a stage's request body.
pub fn input_schema(catalog: &Catalog, stage: Stage) -> Value {
    let mut props = properties(catalog.shared.iter());
    let label = json!({"type": "string", "pattern": "^[A-Za-z0-9_.-]+$"});
    let index = json!({"type": "integer", "minimum": 0});
    let required: Vec<&str> = match stage {
        Stage::Synthesis => {
            props.extend(properties(catalog.stage_only(stage).iter()));
            props.insert("syn_version".into(), label);
            vec!["design"]
        }
        Stage::Placement => {
            props.insert("syn_ver".into(), label);
            props.insert("g_idx".into(), index.clone());
            props.insert("p_idx".into(), index);
            props.insert(
                "stage_params".into(),
                json!({"type": "object", "additionalProperties": false,
                       "properties": properties(catalog.stage_only(stage).iter())}),
            );
            vec!["design", "syn_ver"]
        }
        Stage::Cts => {
            props.extend(properties(catalog.stage_only(stage).iter()));
            props.insert("impl_ver".into(), label);
            vec!["design", "impl_ver"]
        }
        Stage::Route => {
            props.insert("impl_ver".into(), label);
            props.insert(
                "route_params".into(),
                json!({"type": "object", "additionalProperties": false,
                       "properties": properties(catalog.stage_only(stage).iter())}),
            );
            props.insert("collect_artifacts".into(), json!({"type": "boolean", "default": false}));
            vec!["design", "impl_ver"]
        }
    };
    json!({"type": "object", "properties": props, "required": required, "additionalProperties": false})
}

pub fn tool_descriptor(catalog: &Catalog, stage: Stage) -> Value {
    let description = match stage {
        Stage::Synthesis => "Render and run the logic synthesis script for a design version.",
        Stage::Placement => "Run floorplan, power plan and placement on a synthesis version.",
        Stage::Cts => "Build the clock tree on a placed implementation version.",
        Stage::Route => "Route an implementation version and collect signoff reports.",
    };
    json!({"name": tool_name(stage), "description": description, "inputSchema": input_schema(catalog, stage)})
}

fn error(id: Value, code: i64, message: impl Into<String>) -> Value {
    json!({"jsonrpc": "2.0", "id": id, "error": {"code": code, "message": message.into()}})
}

fn ok(id: Value, result: Value) -> Value {
    json!({"jsonrpc": "2.0", "id": id, "result": result})
}

/// Handles one JSON-RPC message addressed to `stage`'s server. Notifications
/// yield `None`.
pub fn handle(services: &StageServices, stage: Stage, message: &Value) -> Option<Value> {
    let Some(obj) = message.as_object() else {
        return Some(error(Value::Null, INVALID_REQUEST, "request must be an object"));
    };
    let id = obj.get("id").cloned();
    let Some(method) = obj.get("method").and_then(Value::as_str) else {
        return Some(error(id.unwrap_or(Value::Null), INVALID_REQUEST, "missing method"));
    };
    if obj.get("jsonrpc").and_then(Value::as_str) != Some("2.0") {
        return Some(error(id.unwrap_or(Value::Null), INVALID_REQUEST, "jsonrpc must be \"2.0\""));
    }
    let id = id?;
    let params = obj.get("params").cloned().unwrap_or(Value::Null);
    Some(match method {
        "initialize" => ok(
            id,
            json!({
                "protocolVersion": PROTOCOL_VERSION,
                "capabilities": {"tools": {}},
                "serverInfo": {"name": format!("edaflow-{}", stage.long_name()), "version": env!("CARGO_PKG_VERSION")},
            }),
        ),
        "ping" => ok(id, json!({})),
        "tools/list" => ok(id, json!({"tools": [tool_descriptor(services.catalog(), stage)]})),
        "tools/call" => {
            let name = params.get("name").and_then(Value::as_str);
            if name != Some(tool_name(stage).as_str()) {
                return Some(error(id, INVALID_PARAMS, format!("unknown tool {name:?}")));
            }
            let args = params.get("arguments").cloned().unwrap_or_else(|| json!({}));
            let (body, is_error) = match services.run_json(stage, args) {
                Ok(resp) => {
                    let failed = resp.status != crate::services::Status::Success;
                    (serde_json::to_value(&resp).unwrap_or(Value::Null), failed)
                }
                Err(e) => (json!({"error": e.code(), "message": e.to_string()}), true),
            };
            ok(
                id,
                json!({"content": [{"type": "text", "text": body.to_string()}], "structuredContent": body, "isError": is_error}),
            )
        }
        other => error(id, METHOD_NOT_FOUND, format!("method `{other}` not found")),
    })
}

/// Parses a raw body and handles it, including batches.
pub fn handle_text(services: &StageServices, stage: Stage, text: &str) -> Option<Value> {
    match serde_json::from_str::<Value>(text) {
        Err(e) => Some(error(Value::Null, PARSE_ERROR, e.to_string())),
        Ok(Value::Array(batch)) if batch.is_empty() => Some(error(Value::Null, INVALID_REQUEST, "empty batch")),
        Ok(Value::Array(batch)) => {
            let out: Vec<Value> = batch.iter().filter_map(|m| handle(services, stage, m)).collect();
            (!out.is_empty()).then_some(Value::Array(out))
        }
        Ok(message) => handle(services, stage, &message),
    }
}
