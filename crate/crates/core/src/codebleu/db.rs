// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;
use std::sync::OnceLock;

use num_traits::Float;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::tokenize::{tokenize_lenient, TokenKind};
use crate::stage::Stage;

const BUILTIN: &str = include_str!("../../data/eda_commands.json");

/// Minimum share of command hits needed to name a stage.
pub const DETECTION_THRESHOLD: f64 = 0.4;

/// Stage assumed when a script carries no evidence.
pub const FALLBACK_STAGE: Stage = Stage::Synthesis;

/// TCL keywords weighted like tool commands.
pub const CORE_KEYWORDS: [&str; 5] = ["set", "proc", "if", "foreach", "while"];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CommandDbError {
    #[error("command database parse error: {0}")]
    Parse(String),
    #[error("command database has no {0} commands")]
    MissingCategory(Stage),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct DbFile {
    version: String,
    commands: BTreeMap<String, Stage>,
}

/// Tool command names by flow stage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdaCommandDb {
    pub version: String,
    entries: BTreeMap<String, Stage>,
}

impl EdaCommandDb {
    pub fn from_json(text: &str) -> Result<Self, CommandDbError> {
        let file: DbFile = serde_json::from_str(text).map_err(|e| CommandDbError::Parse(e.to_string()))?;
        Self::new(file.version, file.commands)
    }

    pub fn new(version: impl Into<String>, entries: BTreeMap<String, Stage>) -> Result<Self, CommandDbError> {
        for stage in Stage::ALL {
            if !entries.values().any(|s| *s == stage) {
                return Err(CommandDbError::MissingCategory(stage));
            }
        }
        Ok(Self { version: version.into(), entries })
    }

    pub fn builtin() -> &'static EdaCommandDb {
        static DB: OnceLock<EdaCommandDb> = OnceLock::new();
        DB.get_or_init(|| EdaCommandDb::from_json(BUILTIN).expect("bundled command database is valid"))
    }

    /// Adds or recategorizes entries from another database file.
    pub fn extend_from_json(&mut self, text: &str) -> Result<(), CommandDbError> {
        let file: DbFile = serde_json::from_str(text).map_err(|e| CommandDbError::Parse(e.to_string()))?;
        self.entries.extend(file.commands);
        Ok(())
    }

    pub fn category(&self, command: &str) -> Option<Stage> {
        self.entries.get(command).copied()
    }

    pub fn contains(&self, command: &str) -> bool {
        self.entries.contains_key(command)
    }

    pub fn total_count(&self) -> usize {
        self.entries.len()
    }

    pub fn count(&self, stage: Stage) -> usize {
        self.entries.values().filter(|s| **s == stage).count()
    }

    pub fn entries(&self) -> &BTreeMap<String, Stage> {
        &self.entries
    }

    /// Weighted n-gram keyword test.
    pub fn is_keyword(&self, token: &str) -> bool {
        self.contains(token) || CORE_KEYWORDS.contains(&token)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageDetection<T> {
    pub stage: Stage,
    pub confidence: T,
}

/// Command-word hits per stage, in canonical order.
pub fn stage_hits(script: &str, db: &EdaCommandDb) -> [usize; 4] {
    let mut hits = [0usize; 4];
    for t in tokenize_lenient(script).tokens.iter().filter(|t| t.kind == TokenKind::CommandWord) {
        if let Some(stage) = db.category(&t.text) {
            hits[stage.ordinal()] += 1;
        }
    }
    hits
}

/// Classifies a script by the stage its tool commands belong to.
pub fn detect_stage<T: Float>(script: &str, db: &EdaCommandDb) -> StageDetection<T> {
    let hits = stage_hits(script, db);
    let total: usize = hits.iter().sum();
    let fallback = StageDetection { stage: FALLBACK_STAGE, confidence: T::zero() };
    if total == 0 {
        return fallback;
    }
    // ties go to the earlier stage
    let (best, &top) = hits.iter().enumerate().rev().max_by_key(|(_, h)| **h).expect("four stages");
    let confidence = T::from(top).unwrap() / T::from(total).unwrap();
    if confidence >= T::from(DETECTION_THRESHOLD).unwrap() {
        StageDetection { stage: Stage::ALL[best], confidence }
    } else {
        fallback
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_has_named_commands() {
        let db = EdaCommandDb::builtin();
        for cmd in ["analyze", "elaborate", "compile"] {
            assert_eq!(db.category(cmd), Some(Stage::Synthesis));
        }
        for cmd in ["floorPlan", "editPin", "placeDesign"] {
            assert_eq!(db.category(cmd), Some(Stage::Placement));
        }
        for cmd in ["ccopt_design", "create_clock_tree_spec"] {
            assert_eq!(db.category(cmd), Some(Stage::Cts));
        }
        for cmd in ["routeDesign", "checkRoute", "saveDesign"] {
            assert_eq!(db.category(cmd), Some(Stage::Route));
        }
        assert_eq!(db.total_count(), db.entries().len());
        assert!(Stage::ALL.iter().all(|s| db.count(*s) > 0));
    }

    #[test]
    fn detection_examples() {
        let db = EdaCommandDb::builtin();
        let d: StageDetection<f64> = detect_stage("create_clock_tree_spec -file x\nccopt_design\n", db);
        assert_eq!((d.stage, d.confidence), (Stage::Cts, 1.0));
        let d: StageDetection<f64> = detect_stage("analyze -format verilog a.v\nelaborate top\ncompile\n", db);
        assert_eq!((d.stage, d.confidence), (Stage::Synthesis, 1.0));
        let d: StageDetection<f64> = detect_stage("puts hello\nset x 1\n", db);
        assert_eq!((d.stage, d.confidence), (FALLBACK_STAGE, 0.0));
        let d: StageDetection<f64> = detect_stage("", db);
        assert_eq!((d.stage, d.confidence), (FALLBACK_STAGE, 0.0));
    }

    #[test]
    fn below_threshold_falls_back() {
        let db = EdaCommandDb::builtin();
        // one hit in each of three stages: 1/3 < 0.4
        let d: StageDetection<f64> = detect_stage("compile\nplaceDesign\nccopt_design\n", db);
        assert_eq!((d.stage, d.confidence), (FALLBACK_STAGE, 0.0));
        let d: StageDetection<f64> = detect_stage("placeDesign\nrouteDesign\n", db);
        assert_eq!((d.stage, d.confidence), (Stage::Placement, 0.5));
    }

    #[test]
    fn missing_category_rejected() {
        let text = r#"{"version":"1","commands":{"compile":"synthesis"}}"#;
        assert!(matches!(EdaCommandDb::from_json(text), Err(CommandDbError::MissingCategory(_))));
    }
}
