// SPDX-License-Identifier: Apache-2.0

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// One step of the RTL-to-GDSII flow.
///
/// Serialized with the short tool names used on the wire (`synth`,
/// `placement`, `cts`, `route`); the long form `synthesis` is accepted on
/// input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    #[serde(rename = "synth", alias = "synthesis")]
    Synthesis,
    #[serde(alias = "place")]
    Placement,
    Cts,
    #[serde(alias = "routing")]
    Route,
}

impl Stage {
    /// Canonical flow order.
    pub const ALL: [Stage; 4] = [Stage::Synthesis, Stage::Placement, Stage::Cts, Stage::Route];

    pub fn tool_name(self) -> &'static str {
        match self {
            Stage::Synthesis => "synth",
            Stage::Placement => "placement",
            Stage::Cts => "cts",
            Stage::Route => "route",
        }
    }

    pub fn long_name(self) -> &'static str {
        match self {
            Stage::Synthesis => "synthesis",
            Stage::Placement => "placement",
            Stage::Cts => "cts",
            Stage::Route => "route",
        }
    }

    /// Position in the canonical order.
    pub fn ordinal(self) -> usize {
        self as usize
    }

    /// The stage this one consumes results from.
    pub fn upstream(self) -> Option<Stage> {
        match self {
            Stage::Synthesis => None,
            Stage::Placement => Some(Stage::Synthesis),
            Stage::Cts => Some(Stage::Placement),
            Stage::Route => Some(Stage::Cts),
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tool_name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown stage `{0}`")]
pub struct UnknownStage(pub String);

impl FromStr for Stage {
    type Err = UnknownStage;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "synth" | "synthesis" | "syn" => Ok(Stage::Synthesis),
            "placement" | "place" | "pla" => Ok(Stage::Placement),
            "cts" | "clock_tree" => Ok(Stage::Cts),
            "route" | "routing" | "rou" => Ok(Stage::Route),
            other => Err(UnknownStage(other.to_string())),
        }
    }
}
