// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{Number, Value};

/// Synthesis run. Omitted optional fields take the template defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthRequest {
    pub design: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tech_node: Option<String>,
    /// Defaults to `<root>/<design>/rtl`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rtl_dir: Option<String>,
    /// Defaults to the design name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clk_period: Option<Number>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drc_max_fanout: Option<Number>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub map_effort: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power_effort: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub area_effort: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_transition: Option<Number>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clock_uncertainty: Option<Number>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_delay: Option<Number>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_delay: Option<Number>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_area: Option<Number>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clock_port: Option<String>,
    /// Allocated as the next free `v<n>` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub syn_version: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlacementRequest {
    pub design: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tech_node: Option<String>,
    pub syn_ver: String,
    /// Keyed by catalog key or parameter name.
    #[serde(default)]
    pub stage_params: BTreeMap<String, Value>,
    #[serde(default)]
    pub g_idx: i64,
    #[serde(default)]
    pub p_idx: i64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CtsRequest {
    pub design: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tech_node: Option<String>,
    pub impl_ver: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cts_cell_density: Option<Number>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub postcts_opt_max_density: Option<Number>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_transition: Option<Number>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_skew: Option<Number>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cts_max_fanout: Option<Number>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cts_opt_effort: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub update_io_latency: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub use_inverters: Option<Value>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RouteRequest {
    pub design: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tech_node: Option<String>,
    pub impl_ver: String,
    #[serde(default)]
    pub route_params: BTreeMap<String, Value>,
    #[serde(default)]
    pub collect_artifacts: bool,
}

/// Flat field map of a request, without nulls and without `skip` fields.
pub(crate) fn flat_fields<T: Serialize>(req: &T, skip: &[&str]) -> BTreeMap<String, Value> {
    match serde_json::to_value(req) {
        Ok(Value::Object(map)) => map
            .into_iter()
            .filter(|(k, v)| !v.is_null() && !skip.contains(&k.as_str()))
            .collect(),
        _ => BTreeMap::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn unknown_fields_rejected() {
        assert!(serde_json::from_value::<SynthRequest>(json!({"design": "b14", "fanout": 4})).is_err());
        assert!(serde_json::from_value::<RouteRequest>(json!({"design": "b14", "impl_ver": "v", "x": 1})).is_err());
    }

    #[test]
    fn numbers_keep_their_text() {
        let r: SynthRequest = serde_json::from_value(json!({"design": "b14", "drc_max_fanout": 4.74, "clk_period": 5})).unwrap();
        let f = flat_fields(&r, &[]);
        assert_eq!(f["drc_max_fanout"].to_string(), "4.74");
        assert_eq!(f["clk_period"].to_string(), "5");
        assert!(!f.contains_key("map_effort"));
    }
}
