// SPDX-License-Identifier: Apache-2.0

//! Stage script templates and their instantiation.
//!
//! A template is TCL text carrying `${UPPER_SNAKE}` placeholders. Rendering
//! substitutes every placeholder from a [`ParamBinding`] (falling back to the
//! template's declared defaults), expanding placeholders that occur inside
//! substituted values until nothing is left or [`MAX_EXPANSION_DEPTH`] is hit.
//! A backslash escapes the next character, so `\${NAME}` is kept verbatim.
//!
//! Environment exports are emitted as `set env(NAME) "value"` lines in place
//! of the single [`ENV_MARKER`] line of the template.
//!
//! Template files may start with a metadata block:
//!
//! ```text
//! #@ stage: placement
//! #@ required: DESIGN, NETLIST
//! #@ optional: PLACE_GLOBAL_CONG_EFFORT = low
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stage::Stage;

/// Nesting bound for placeholders inside substituted values.
pub const MAX_EXPANSION_DEPTH: usize = 8;

/// Line replaced by the environment export statements.
pub const ENV_MARKER: &str = "# @ENV_EXPORTS";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TemplateError {
    #[error("invalid placeholder name `{0}`")]
    InvalidName(String),
    #[error("placeholder `{0}` is declared both required and optional")]
    DeclaredTwice(String),
    #[error("placeholders used but not declared: {0:?}")]
    Undeclared(BTreeSet<String>),
    #[error("template declares {0} `{ENV_MARKER}` lines, at most one is allowed")]
    MultipleMarkers(usize),
    #[error("metadata line {line}: {reason}")]
    Metadata { line: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RenderError {
    #[error("missing required placeholders: {0:?}")]
    MissingRequiredPlaceholder(BTreeSet<String>),
    #[error("unresolved placeholders: {0:?}")]
    UnresolvedPlaceholder(BTreeSet<String>),
    #[error("placeholder expansion exceeded depth {MAX_EXPANSION_DEPTH} via {0:?}")]
    DepthExceeded(Vec<String>),
    #[error("invalid environment variable name `{0}`")]
    InvalidEnvName(String),
    #[error("template has no `{ENV_MARKER}` line but {0} exports were supplied")]
    NoInjectionPoint(usize),
}

/// Placeholder-bearing stage script.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TclTemplate {
    stage: Stage,
    body: String,
    required: BTreeSet<String>,
    optional: BTreeMap<String, String>,
}

/// Values for a template plus environment exports.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamBinding {
    pub values: BTreeMap<String, String>,
    pub env_exports: Vec<(String, String)>,
}

impl ParamBinding {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, name: impl Into<String>, value: impl Into<String>) -> &mut Self {
        self.values.insert(name.into(), value.into());
        self
    }

    pub fn export(&mut self, name: impl Into<String>, value: impl Into<String>) -> &mut Self {
        self.env_exports.push((name.into(), value.into()));
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    UserSupplied,
    Default,
}

/// Fully substituted script.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedScript {
    pub stage: Stage,
    pub text: String,
    /// Origin of every placeholder that occurred in the template body.
    pub provenance: BTreeMap<String, Origin>,
    /// Expanded value of every placeholder that occurred in the template body.
    pub values: BTreeMap<String, String>,
    pub env_exports: Vec<(String, String)>,
}

impl RenderedScript {
    pub fn value(&self, name: &str) -> Option<&str> {
        self.values.get(name).map(String::as_str)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Segment<'a> {
    Literal(&'a str),
    Placeholder(&'a str),
}

fn is_name(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_uppercase() || c == '_')
        && chars.all(|c| c.is_ascii_uppercase() || c.is_ascii_digit() || c == '_')
}

/// Splits text into literal runs and unescaped `${NAME}` occurrences.
fn segments(text: &str) -> Vec<Segment<'_>> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut lit_start = 0;
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            // escape: skip the next character whatever it is
            b'\\' => i += 2,
            b'$' if bytes.get(i + 1) == Some(&b'{') => {
                let rest = &text[i + 2..];
                match rest.find('}') {
                    Some(end) if is_name(&rest[..end]) => {
                        if lit_start < i {
                            out.push(Segment::Literal(&text[lit_start..i]));
                        }
                        out.push(Segment::Placeholder(&rest[..end]));
                        i += 2 + end + 1;
                        lit_start = i;
                    }
                    _ => i += 1,
                }
            }
            _ => i += 1,
        }
    }
    if lit_start < text.len() {
        out.push(Segment::Literal(&text[lit_start..]));
    }
    out
}

/// Names of all unescaped `${NAME}` occurrences in `text`.
pub fn placeholders_in(text: &str) -> BTreeSet<String> {
    segments(text)
        .into_iter()
        .filter_map(|s| match s {
            Segment::Placeholder(n) => Some(n.to_string()),
            Segment::Literal(_) => None,
        })
        .collect()
}

fn is_marker(line: &str) -> bool {
    line.trim() == ENV_MARKER
}

impl TclTemplate {
    pub fn new(
        stage: Stage,
        body: impl Into<String>,
        required: impl IntoIterator<Item = String>,
        optional: impl IntoIterator<Item = (String, String)>,
    ) -> Result<Self, TemplateError> {
        let body = body.into();
        let required: BTreeSet<String> = required.into_iter().collect();
        let optional: BTreeMap<String, String> = optional.into_iter().collect();
        for name in required.iter().chain(optional.keys()) {
            if !is_name(name) {
                return Err(TemplateError::InvalidName(name.clone()));
            }
        }
        if let Some(dup) = required.iter().find(|n| optional.contains_key(*n)) {
            return Err(TemplateError::DeclaredTwice(dup.clone()));
        }
        let undeclared: BTreeSet<String> = placeholders_in(&body)
            .into_iter()
            .filter(|n| !required.contains(n) && !optional.contains_key(n))
            .collect();
        if !undeclared.is_empty() {
            return Err(TemplateError::Undeclared(undeclared));
        }
        let markers = body.lines().filter(|l| is_marker(l)).count();
        if markers > 1 {
            return Err(TemplateError::MultipleMarkers(markers));
        }
        Ok(Self { stage, body, required, optional })
    }

    /// Parses a template file with its leading `#@ key: value` block.
    pub fn parse(text: &str) -> Result<Self, TemplateError> {
        let mut stage = None;
        let mut required = Vec::new();
        let mut optional = Vec::new();
        let mut body_start = 0;
        for (lineno, line) in text.split_inclusive('\n').enumerate() {
            let Some(meta) = line.strip_prefix("#@") else { break };
            body_start += line.len();
            let err = |reason: &str| TemplateError::Metadata { line: lineno + 1, reason: reason.into() };
            let (key, value) = meta.split_once(':').ok_or_else(|| err("expected `key: value`"))?;
            let value = value.trim();
            match key.trim() {
                "stage" => stage = Some(value.parse::<Stage>().map_err(|e| err(&e.to_string()))?),
                "required" => required.extend(
                    value.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from),
                ),
                "optional" => {
                    let (name, default) = value.split_once('=').ok_or_else(|| err("expected `NAME = default`"))?;
                    optional.push((name.trim().to_string(), default.trim().to_string()));
                }
                "description" => {}
                other => return Err(err(&format!("unknown key `{other}`"))),
            }
        }
        let stage = stage.ok_or(TemplateError::Metadata { line: 1, reason: "missing `stage`".into() })?;
        Self::new(stage, &text[body_start..], required, optional)
    }

    pub fn stage(&self) -> Stage {
        self.stage
    }

    pub fn body(&self) -> &str {
        &self.body
    }

    pub fn required(&self) -> &BTreeSet<String> {
        &self.required
    }

    pub fn optional(&self) -> &BTreeMap<String, String> {
        &self.optional
    }

    pub fn has_injection_point(&self) -> bool {
        self.body.lines().any(is_marker)
    }

    /// Every distinct placeholder occurring in the body.
    pub fn list_placeholders(&self) -> BTreeSet<String> {
        placeholders_in(&self.body)
    }

    /// Serializes back to the file format accepted by [`TclTemplate::parse`].
    pub fn to_file_text(&self) -> String {
        let mut out = format!("#@ stage: {}\n", self.stage.long_name());
        if !self.required.is_empty() {
            let names: Vec<&str> = self.required.iter().map(String::as_str).collect();
            let _ = writeln!(out, "#@ required: {}", names.join(", "));
        }
        for (name, default) in &self.optional {
            let _ = writeln!(out, "#@ optional: {name} = {default}");
        }
        out.push_str(&self.body);
        out
    }
}

struct Expander<'a> {
    template: &'a TclTemplate,
    binding: &'a ParamBinding,
    cache: BTreeMap<String, String>,
    unresolved: BTreeSet<String>,
}

impl Expander<'_> {
    fn lookup(&self, name: &str) -> Option<&str> {
        self.binding
            .values
            .get(name)
            .or_else(|| self.template.optional.get(name))
            .map(String::as_str)
    }

    fn expand_name(&mut self, name: &str, chain: &mut Vec<String>) -> Result<String, RenderError> {
        if let Some(done) = self.cache.get(name) {
            return Ok(done.clone());
        }
        let Some(raw) = self.lookup(name) else {
            self.unresolved.insert(name.to_string());
            return Ok(format!("${{{name}}}"));
        };
        chain.push(name.to_string());
        if chain.len() > MAX_EXPANSION_DEPTH {
            return Err(RenderError::DepthExceeded(chain.clone()));
        }
        let raw = raw.to_string();
        let expanded = self.expand_text(&raw, chain)?;
        chain.pop();
        self.cache.insert(name.to_string(), expanded.clone());
        Ok(expanded)
    }

    fn expand_text(&mut self, text: &str, chain: &mut Vec<String>) -> Result<String, RenderError> {
        let mut out = String::with_capacity(text.len());
        for seg in segments(text) {
            match seg {
                Segment::Literal(s) => out.push_str(s),
                Segment::Placeholder(n) => out.push_str(&self.expand_name(n, chain)?),
            }
        }
        Ok(out)
    }
}

fn tcl_quote(value: &str) -> String {
    let mut out = String::with_capacity(value.len() + 2);
    out.push('"');
    for c in value.chars() {
        if matches!(c, '"' | '\\' | '$' | '[') {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('"');
    out
}

fn valid_env_name(name: &str) -> bool {
    !name.is_empty() && !name.chars().any(char::is_whitespace)
}

/// Instantiates `template` with `binding`.
pub fn render(template: &TclTemplate, binding: &ParamBinding) -> Result<RenderedScript, RenderError> {
    let missing: BTreeSet<String> = template
        .required
        .iter()
        .filter(|n| !binding.values.contains_key(*n))
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(RenderError::MissingRequiredPlaceholder(missing));
    }
    if let Some((bad, _)) = binding.env_exports.iter().find(|(n, _)| !valid_env_name(n)) {
        return Err(RenderError::InvalidEnvName(bad.clone()));
    }
    let has_marker = template.has_injection_point();
    if !binding.env_exports.is_empty() && !has_marker {
        return Err(RenderError::NoInjectionPoint(binding.env_exports.len()));
    }

    let mut expander = Expander { template, binding, cache: BTreeMap::new(), unresolved: BTreeSet::new() };
    let substituted = expander.expand_text(&template.body, &mut Vec::new())?;
    if !expander.unresolved.is_empty() {
        return Err(RenderError::UnresolvedPlaceholder(expander.unresolved));
    }

    let text = if has_marker {
        let mut out = String::with_capacity(substituted.len());
        for line in substituted.split_inclusive('\n') {
            if is_marker(line) {
                for (name, value) in &binding.env_exports {
                    let _ = writeln!(out, "set env({name}) {}", tcl_quote(value));
                }
            } else {
                out.push_str(line);
            }
        }
        out
    } else {
        substituted
    };

    let mut provenance = BTreeMap::new();
    let mut values = BTreeMap::new();
    for name in template.list_placeholders() {
        let origin = if binding.values.contains_key(&name) { Origin::UserSupplied } else { Origin::Default };
        provenance.insert(name.clone(), origin);
        if let Some(v) = expander.cache.get(&name) {
            values.insert(name, v.clone());
        }
    }

    Ok(RenderedScript {
        stage: template.stage,
        text,
        provenance,
        values,
        env_exports: binding.env_exports.clone(),
    })
}

/// True when `text` still contains an unescaped `${NAME}`.
pub fn has_placeholders(text: &str) -> bool {
    segments(text).iter().any(|s| matches!(s, Segment::Placeholder(_)))
}
