// SPDX-License-Identifier: Apache-2.0

//! Parameter catalog shared by the stage services, the agent's rule engine,
//! and the benchmark schema.
//!
//! Each entry ties together the user-facing parameter name, the request
//! field it populates, the template placeholder it fills, its value domain,
//! its default, and the phrases that name it in prose.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::stage::Stage;

const BUILTIN: &str = include_str!("../data/catalog.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Domain {
    Enum {
        options: Vec<String>,
    },
    Real {
        min: f64,
        max: f64,
        #[serde(default)]
        min_exclusive: bool,
        #[serde(default)]
        max_exclusive: bool,
    },
    Int {
        min: i64,
        max: i64,
    },
    /// Identifier usable as a directory component.
    Ident,
    Path,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Unit {
    Ns,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    /// Request field; defaults to `name`.
    #[serde(default)]
    pub key: Option<String>,
    /// Template placeholder filled by this parameter.
    #[serde(default)]
    pub var: Option<String>,
    pub domain: Domain,
    #[serde(default)]
    pub default: Option<Value>,
    /// Exported to the tool environment as `env(<key>)`.
    #[serde(default)]
    pub env: bool,
    #[serde(default)]
    pub unit: Option<Unit>,
    #[serde(default)]
    pub aliases: Vec<String>,
    #[serde(default)]
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CatalogError {
    #[error("catalog parse error: {0}")]
    Parse(String),
    #[error("catalog entry `{0}`: {1}")]
    Entry(String, String),
}

impl ParamSpec {
    pub fn key(&self) -> &str {
        self.key.as_deref().unwrap_or(&self.name)
    }

    /// Checks `value` against the domain and returns its canonical form.
    pub fn validate(&self, value: &Value) -> Result<Value, String> {
        match &self.domain {
            Domain::Enum { options } => {
                let text = match value {
                    Value::String(s) => s.clone(),
                    Value::Bool(b) => b.to_string(),
                    other => return Err(format!("expected one of {options:?}, got {other}")),
                };
                options
                    .iter()
                    .find(|o| o.eq_ignore_ascii_case(&text))
                    .map(|o| Value::String(o.clone()))
                    .ok_or_else(|| format!("`{text}` is not one of {options:?}"))
            }
            Domain::Real { min, max, min_exclusive, max_exclusive } => {
                let x = value.as_f64().ok_or_else(|| format!("expected a number, got {value}"))?;
                let low_ok = if *min_exclusive { x > *min } else { x >= *min };
                let high_ok = if *max_exclusive { x < *max } else { x <= *max };
                if !(x.is_finite() && low_ok && high_ok) {
                    let lb = if *min_exclusive { '(' } else { '[' };
                    let rb = if *max_exclusive { ')' } else { ']' };
                    return Err(format!("{x} outside {lb}{min}, {max}{rb}"));
                }
                Ok(value.clone())
            }
            Domain::Int { min, max } => {
                let n = match value {
                    Value::Number(n) if n.is_i64() || n.is_u64() => n.as_i64(),
                    Value::Number(n) => n.as_f64().filter(|f| f.fract() == 0.0 && f.abs() < 1e15).map(|f| f as i64),
                    _ => None,
                }
                .ok_or_else(|| format!("expected an integer, got {value}"))?;
                if n < *min || n > *max {
                    return Err(format!("{n} outside [{min}, {max}]"));
                }
                Ok(Value::from(n))
            }
            Domain::Ident => {
                let s = value.as_str().ok_or_else(|| format!("expected a name, got {value}"))?;
                let legal = !s.is_empty()
                    && s != "."
                    && s != ".."
                    && s.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'));
                if !legal {
                    return Err(format!("`{s}` is not a legal name"));
                }
                Ok(value.clone())
            }
            Domain::Path => match value.as_str() {
                Some(s) if !s.trim().is_empty() => Ok(value.clone()),
                _ => Err(format!("expected a nonempty path, got {value}")),
            },
        }
    }
}

/// Text form of a parameter value as it appears in TCL.
pub fn format_value(value: &Value) -> String {
    match value {
        Value::String(s) => s.clone(),
        Value::Number(n) => n.to_string(),
        Value::Bool(b) => b.to_string(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    pub version: String,
    /// Parameters accepted by every stage.
    pub shared: Vec<ParamSpec>,
    pub stages: BTreeMap<Stage, Vec<ParamSpec>>,
}

impl Catalog {
    pub fn from_json(text: &str) -> Result<Self, CatalogError> {
        let cat: Catalog = serde_json::from_str(text).map_err(|e| CatalogError::Parse(e.to_string()))?;
        cat.check()?;
        Ok(cat)
    }

    pub fn builtin() -> &'static Catalog {
        static CAT: OnceLock<Catalog> = OnceLock::new();
        CAT.get_or_init(|| Catalog::from_json(BUILTIN).expect("bundled catalog is valid"))
    }

    fn check(&self) -> Result<(), CatalogError> {
        for stage in Stage::ALL {
            let mut seen = std::collections::BTreeSet::new();
            for spec in self.params(stage) {
                let err = |m: &str| CatalogError::Entry(spec.name.clone(), m.to_string());
                if !seen.insert(spec.key()) {
                    return Err(err("duplicate key within stage"));
                }
                match &spec.domain {
                    Domain::Enum { options } if options.len() < 2 => return Err(err("enum needs two options")),
                    Domain::Real { min, max, .. } if min >= max => return Err(err("empty real range")),
                    Domain::Int { min, max } if min >= max => return Err(err("empty int range")),
                    _ => {}
                }
                if let Some(d) = &spec.default {
                    spec.validate(d).map_err(|m| err(&format!("default: {m}")))?;
                }
            }
        }
        Ok(())
    }

    /// Shared parameters followed by the stage's own.
    pub fn params(&self, stage: Stage) -> impl Iterator<Item = &ParamSpec> {
        self.shared.iter().chain(self.stages.get(&stage).into_iter().flatten())
    }

    pub fn stage_only(&self, stage: Stage) -> &[ParamSpec] {
        self.stages.get(&stage).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn by_name(&self, stage: Stage, name: &str) -> Option<&ParamSpec> {
        self.params(stage).find(|p| p.name == name)
    }

    pub fn by_key(&self, stage: Stage, key: &str) -> Option<&ParamSpec> {
        self.params(stage).find(|p| p.key() == key)
    }

    pub fn is_shared(&self, name: &str) -> bool {
        self.shared.iter().any(|p| p.name == name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn builtin_loads() {
        let cat = Catalog::builtin();
        assert_eq!(cat.stage_only(Stage::Route).len(), 16);
        // design, tech node and at least 15 more placement names
        assert!(cat.params(Stage::Placement).count() >= 15);
        for stage in Stage::ALL {
            assert!(cat.by_name(stage, "design").is_some());
        }
        let fanout = cat.by_name(Stage::Synthesis, "fanout_limit").unwrap();
        assert_eq!(fanout.key(), "drc_max_fanout");
        assert_eq!(fanout.var.as_deref(), Some("MAX_FANOUT"));
    }

    #[test]
    fn placement_efforts_present() {
        let cat = Catalog::builtin();
        for key in ["place_global_timing_effort", "place_global_cong_effort", "place_detail_wire_length_opt_effort"] {
            let spec = cat.by_key(Stage::Placement, key).unwrap();
            assert!(matches!(spec.domain, Domain::Enum { .. }));
        }
        assert_eq!(cat.by_key(Stage::Placement, "place_global_cong_effort").unwrap().default, Some(json!("low")));
    }

    #[test]
    fn domain_checks() {
        let cat = Catalog::builtin();
        let density = cat.by_key(Stage::Cts, "cts_cell_density").unwrap();
        assert!(density.validate(&json!(0.7)).is_ok());
        assert!(density.validate(&json!(1.0)).is_ok());
        assert!(density.validate(&json!(0.0)).is_err());
        assert!(density.validate(&json!(1.5)).is_err());
        assert!(density.validate(&json!("0.7")).is_err());
        let effort = cat.by_key(Stage::Synthesis, "map_effort").unwrap();
        assert_eq!(effort.validate(&json!("HIGH")).unwrap(), json!("high"));
        assert!(effort.validate(&json!("extreme")).is_err());
        let layer = cat.by_key(Stage::Route, "route_top_routing_layer").unwrap();
        assert_eq!(layer.validate(&json!(7.0)).unwrap(), json!(7));
        assert!(layer.validate(&json!(7.5)).is_err());
        let design = cat.by_name(Stage::Route, "design").unwrap();
        assert!(design.validate(&json!("b14")).is_ok());
        assert!(design.validate(&json!("../etc")).is_err());
        assert!(design.validate(&json!("")).is_err());
    }

    #[test]
    fn rejects_bad_catalog() {
        let bad = r#"{"version":"1","shared":[],"stages":{"cts":[{"name":"x","domain":{"kind":"real","min":1,"max":0}}]}}"#;
        assert!(Catalog::from_json(bad).is_err());
        let bad_default = r#"{"version":"1","shared":[],"stages":{"cts":[{"name":"x","domain":{"kind":"int","min":0,"max":3},"default":9}]}}"#;
        assert!(Catalog::from_json(bad_default).is_err());
    }

    #[test]
    fn value_text() {
        assert_eq!(format_value(&json!(4.74)), "4.74");
        assert_eq!(format_value(&json!(4)), "4");
        assert_eq!(format_value(&json!("high")), "high");
    }
}
