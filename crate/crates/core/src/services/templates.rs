// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::stage::Stage;
use crate::template::{TclTemplate, TemplateError};

const BUILTIN: [(Stage, &str); 4] = [
    (Stage::Synthesis, include_str!("../../data/templates/synthesis.tcl")),
    (Stage::Placement, include_str!("../../data/templates/placement.tcl")),
    (Stage::Cts, include_str!("../../data/templates/cts.tcl")),
    (Stage::Route, include_str!("../../data/templates/route.tcl")),
];

/// One template per stage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    templates: BTreeMap<Stage, TclTemplate>,
}

#[derive(Debug, thiserror::Error)]
pub enum TemplateSetError {
    #[error("{file}: {source}")]
    Parse { file: String, source: TemplateError },
    #[error("{file}: declares stage {found}, expected {expected}")]
    WrongStage { file: String, expected: Stage, found: Stage },
    #[error("{0}: {1}")]
    Io(String, std::io::Error),
}

impl TemplateSet {
    pub fn builtin() -> Self {
        let templates = BUILTIN
            .iter()
            .map(|(stage, text)| (*stage, TclTemplate::parse(text).expect("bundled template is valid")))
            .collect();
        Self { templates }
    }

    /// Loads `<dir>/<stage>.tcl` for each stage, falling back to the bundled
    /// template when a file is absent.
    pub fn load_dir(dir: &Path) -> Result<Self, TemplateSetError> {
        let mut set = Self::builtin();
        for stage in Stage::ALL {
            let path = dir.join(format!("{}.tcl", stage.long_name()));
            if !path.is_file() {
                continue;
            }
            let file = path.display().to_string();
            let text = fs::read_to_string(&path).map_err(|e| TemplateSetError::Io(file.clone(), e))?;
            let t = TclTemplate::parse(&text).map_err(|source| TemplateSetError::Parse { file: file.clone(), source })?;
            if t.stage() != stage {
                return Err(TemplateSetError::WrongStage { file, expected: stage, found: t.stage() });
            }
            set.templates.insert(stage, t);
        }
        Ok(set)
    }

    pub fn get(&self, stage: Stage) -> &TclTemplate {
        &self.templates[&stage]
    }

    /// Templates in canonical stage order.
    pub fn all(&self) -> impl Iterator<Item = &TclTemplate> {
        self.templates.values()
    }
}
