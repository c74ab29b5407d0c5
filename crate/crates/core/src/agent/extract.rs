// SPDX-License-Identifier: Apache-2.0

//! Parameter extraction from natural-language requests.
//!
//! [`RuleEngine`] matches catalog aliases against the prompt and reads each
//! parameter's value from the words around the alias. [`ModelClient`] asks a
//! chat-completions endpoint for the same structured output.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{Number, Value};

use super::AgentError;
use crate::catalog::{Catalog, Domain, ParamSpec, Unit};
use crate::llm::{self, ModelClientConfig};
use crate::stage::Stage;

/// One value the prompt assigns to a parameter. `stage` is `None` for
/// parameters shared by every stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub stage: Option<Stage>,
    pub param: String,
    pub value: Value,
    /// Prompt text the assignment was read from.
    pub phrase: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Unresolved {
    pub parameter: String,
    pub reason: String,
}

impl Unresolved {
    pub fn new(parameter: impl Into<String>, reason: impl Into<String>) -> Self {
        Self { parameter: parameter.into(), reason: reason.into() }
    }
}

/// Upstream versions named in the prompt.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VersionRefs {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub syn_ver: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub impl_ver: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Extraction {
    pub assignments: Vec<Assignment>,
    /// Stages named by a verb or noun, in order of first mention.
    pub stage_mentions: Vec<Stage>,
    pub unresolved: Vec<Unresolved>,
    #[serde(default)]
    pub versions: VersionRefs,
    #[serde(default)]
    pub collect_artifacts: bool,
}

pub trait ParameterExtractor: Send + Sync {
    fn extract(&self, prompt: &str) -> Result<Extraction, AgentError>;
    fn name(&self) -> &'static str;
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    Number { raw: String, unit: Option<String> },
    Quoted(String),
    Path(String),
    Punct(char),
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    start: usize,
    end: usize,
}

fn lex(prompt: &str) -> Vec<Token> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| {
        Regex::new(
            r#"(?x)
            "(?P<q>[^"]*)"
            | (?P<n>-?\d+(?:\.\d+)?(?:[eE][-+]?\d+)?)(?P<u>%|[A-Za-z]+)?
            | (?P<p>(?:\.{1,2}/|/|~/)[A-Za-z0-9_./~-]*[A-Za-z0-9_/~-]|[A-Za-z_][A-Za-z0-9_]*(?:/[A-Za-z0-9_.-]+)+)
            | (?P<w>[A-Za-z_][A-Za-z0-9_']*(?:\.[A-Za-z0-9_]+)*)
            | (?P<c>[=:%,;.!?()])
            "#,
        )
        .expect("static pattern")
    });
    re.captures_iter(prompt)
        .map(|c| {
            let m = c.get(0).expect("whole match");
            let tok = if let Some(q) = c.name("q") {
                Tok::Quoted(q.as_str().to_string())
            } else if let Some(n) = c.name("n") {
                Tok::Number { raw: n.as_str().to_string(), unit: c.name("u").map(|u| u.as_str().to_ascii_lowercase()) }
            } else if let Some(p) = c.name("p") {
                Tok::Path(p.as_str().to_string())
            } else if let Some(w) = c.name("w") {
                Tok::Word(w.as_str().to_ascii_lowercase())
            } else {
                Tok::Punct(m.as_str().chars().next().expect("nonempty"))
            };
            Token { tok, start: m.start(), end: m.end() }
        })
        .collect()
}

fn is_boundary(t: &Tok) -> bool {
    matches!(t, Tok::Punct('.' | ';' | '!' | '?'))
}

fn word(t: &Tok) -> Option<&str> {
    match t {
        Tok::Word(w) => Some(w),
        _ => None,
    }
}

const FILLERS: &[&str] = &[
    "of", "to", "is", "at", "as", "set", "equal", "equals", "around", "about", "should", "be", "limited", "limit", "value",
    "a", "an", "the", "level", "effort", "with", "=", ":",
];

const NEGATORS: &[&str] = &["disable", "disabled", "without", "no", "not", "don't", "dont", "avoid", "never", "skip", "off"];

const STOPWORDS: &[&str] = &[
    "with", "on", "using", "and", "then", "to", "for", "at", "in", "the", "a", "an", "of", "by", "use", "from", "is", "named",
    "called", "run", "it", "that", "this",
];

fn effort_level(w: &str) -> Option<&'static str> {
    match w {
        "low" | "lowest" | "minimal" | "minimum" | "light" => Some("low"),
        "medium" | "moderate" | "normal" | "standard" | "mid" | "average" | "balanced" => Some("medium"),
        "high" | "highest" | "maximum" | "aggressive" | "heavy" | "extreme" | "strong" => Some("high"),
        _ => None,
    }
}

fn bool_word(w: &str) -> Option<bool> {
    match w {
        "true" | "yes" | "on" | "enabled" | "enable" => Some(true),
        "false" | "no" | "off" | "disabled" | "disable" => Some(false),
        _ => None,
    }
}

fn is_bool_domain(spec: &ParamSpec) -> bool {
    matches!(&spec.domain, Domain::Enum { options } if options.iter().any(|o| o == "true"))
}

fn is_effort_domain(spec: &ParamSpec) -> bool {
    matches!(&spec.domain, Domain::Enum { options } if options.iter().any(|o| o == "medium"))
}

/// Phrase in the lexicon with the parameters it may name.
#[derive(Debug, Clone)]
struct Entry {
    words: Vec<String>,
    targets: Vec<(Option<Stage>, String)>,
}

/// Stage nouns and verbs, longest first so `clock tree synthesis` wins over
/// `synthesis`.
const STAGE_WORDS: &[(&[&str], &[Stage])] = &[
    (&["rtl", "to", "gdsii"], &Stage::ALL),
    (&["rtl", "to", "gds"], &Stage::ALL),
    (&["full", "flow"], &Stage::ALL),
    (&["complete", "flow"], &Stage::ALL),
    (&["entire", "flow"], &Stage::ALL),
    (&["clock", "tree", "synthesis"], &[Stage::Cts]),
    (&["clock", "tree"], &[Stage::Cts]),
    (&["logic", "synthesis"], &[Stage::Synthesis]),
    (&["synthesize"], &[Stage::Synthesis]),
    (&["synthesise"], &[Stage::Synthesis]),
    (&["synthesized"], &[Stage::Synthesis]),
    (&["synthesizing"], &[Stage::Synthesis]),
    (&["synthesis"], &[Stage::Synthesis]),
    (&["synth"], &[Stage::Synthesis]),
    (&["place"], &[Stage::Placement]),
    (&["placement"], &[Stage::Placement]),
    (&["placing"], &[Stage::Placement]),
    (&["placed"], &[Stage::Placement]),
    (&["placer"], &[Stage::Placement]),
    (&["floorplan"], &[Stage::Placement]),
    (&["floorplanning"], &[Stage::Placement]),
    (&["cts"], &[Stage::Cts]),
    (&["ccopt"], &[Stage::Cts]),
    (&["route"], &[Stage::Route]),
    (&["routing"], &[Stage::Route]),
    (&["routed"], &[Stage::Route]),
    (&["router"], &[Stage::Route]),
];

const VERSION_WORDS: &[(&[&str], bool)] = &[
    (&["syn_ver"], true),
    (&["syn_version"], true),
    (&["synthesis", "version"], true),
    (&["syn", "version"], true),
    (&["netlist", "version"], true),
    (&["impl_ver"], false),
    (&["implementation", "version"], false),
    (&["impl", "version"], false),
];

const ARTIFACT_WORDS: &[&str] = &["artifacts", "artifact", "tarball", "archive", "deliverables"];

/// Deterministic extractor driven by the parameter catalog's aliases.
#[derive(Debug, Clone)]
pub struct RuleEngine {
    catalog: &'static Catalog,
    entries: Vec<Entry>,
}

impl Default for RuleEngine {
    fn default() -> Self {
        Self::new(Catalog::builtin())
    }
}

struct Scan<'a> {
    engine: &'a RuleEngine,
    prompt: &'a str,
    toks: Vec<Token>,
    claimed: Vec<bool>,
    out: Extraction,
}

#[derive(Debug, Clone)]
struct Mention {
    first: usize,
    last: usize,
    targets: Vec<(Option<Stage>, String)>,
}

impl RuleEngine {
    pub fn new(catalog: &'static Catalog) -> Self {
        let mut entries: Vec<Entry> = Vec::new();
        let mut add = |phrase: &str, stage: Option<Stage>, name: &str| {
            let words: Vec<String> = phrase.to_ascii_lowercase().split_whitespace().map(str::to_string).collect();
            if words.is_empty() {
                return;
            }
            let target = (stage, name.to_string());
            match entries.iter_mut().find(|e| e.words == words) {
                Some(e) if !e.targets.contains(&target) => e.targets.push(target),
                Some(_) => {}
                None => entries.push(Entry { words, targets: vec![target] }),
            }
        };
        let mut specs: Vec<(Option<Stage>, &ParamSpec)> = catalog.shared.iter().map(|p| (None, p)).collect();
        for stage in Stage::ALL {
            specs.extend(catalog.stage_only(stage).iter().map(|p| (Some(stage), p)));
        }
        for (stage, spec) in specs {
            if spec.name == "tech_node" {
                continue;
            }
            for alias in &spec.aliases {
                add(alias, stage, &spec.name);
            }
            add(&spec.name, stage, &spec.name);
            add(spec.key(), stage, &spec.name);
        }
        entries.sort_by(|a, b| b.words.len().cmp(&a.words.len()).then_with(|| a.words.cmp(&b.words)));
        Self { catalog, entries }
    }

    fn spec(&self, stage: Option<Stage>, name: &str) -> Option<&ParamSpec> {
        match stage {
            None => self.catalog.shared.iter().find(|p| p.name == name),
            Some(s) => self.catalog.stage_only(s).iter().find(|p| p.name == name),
        }
    }

    pub fn extract_prompt(&self, prompt: &str) -> Result<Extraction, AgentError> {
        if prompt.trim().is_empty() {
            return Err(AgentError::EmptyPrompt);
        }
        let toks: Vec<Token> = lex(prompt).into_iter().filter(|t| t.tok != Tok::Punct('-')).collect();
        let claimed = vec![false; toks.len()];
        let mut scan = Scan { engine: self, prompt, toks, claimed, out: Extraction::default() };
        scan.run();
        Ok(scan.out)
    }
}

impl ParameterExtractor for RuleEngine {
    fn extract(&self, prompt: &str) -> Result<Extraction, AgentError> {
        self.extract_prompt(prompt)
    }

    fn name(&self) -> &'static str {
        "rules"
    }
}

impl Scan<'_> {
    fn words_at(&self, i: usize, phrase: &[impl AsRef<str>]) -> bool {
        phrase.iter().enumerate().all(|(k, w)| {
            self.toks.get(i + k).is_some_and(|t| !self.claimed[i + k] && word(&t.tok) == Some(w.as_ref()))
        })
    }

    fn claim(&mut self, from: usize, to: usize) {
        self.claimed[from..=to].fill(true);
    }

    fn text(&self, from: usize, to: usize) -> String {
        self.prompt[self.toks[from].start..self.toks[to].end].to_string()
    }

    fn sentence_start(&self, i: usize) -> usize {
        (0..i).rev().find(|&k| is_boundary(&self.toks[k].tok)).map_or(0, |k| k + 1)
    }

    fn sentence_end(&self, i: usize) -> usize {
        (i..self.toks.len()).find(|&k| is_boundary(&self.toks[k].tok)).unwrap_or(self.toks.len())
    }

    fn run(&mut self) {
        self.versions();
        let mentions = self.alias_mentions();
        let verbs = self.stage_words();
        self.tech_nodes();
        self.resolve(mentions, verbs);
        self.artifacts();
        self.leftovers();
    }

    fn versions(&mut self) {
        for i in 0..self.toks.len() {
            for (phrase, synth) in VERSION_WORDS {
                if !self.words_at(i, phrase) {
                    continue;
                }
                let v = i + phrase.len();
                let mut j = v;
                while self.toks.get(j).is_some_and(|t| matches!(word(&t.tok), Some("is" | "of")) || t.tok == Tok::Punct('=') || t.tok == Tok::Punct(':')) {
                    j += 1;
                }
                let label = match self.toks.get(j).map(|t| &t.tok) {
                    Some(Tok::Word(w)) if !STOPWORDS.contains(&w.as_str()) => Some(self.prompt[self.toks[j].start..self.toks[j].end].to_string()),
                    Some(Tok::Quoted(q)) => Some(q.clone()),
                    _ => None,
                };
                match label {
                    Some(label) => {
                        let slot = if *synth { &mut self.out.versions.syn_ver } else { &mut self.out.versions.impl_ver };
                        *slot = Some(label);
                        self.claim(i, j);
                    }
                    None => {
                        let what = if *synth { "syn_ver" } else { "impl_ver" };
                        self.out.unresolved.push(Unresolved::new(what, "version mentioned without a label"));
                        self.claim(i, v - 1);
                    }
                }
                break;
            }
        }
    }

    fn alias_mentions(&mut self) -> Vec<Mention> {
        let mut found = Vec::new();
        let entries = self.engine.entries.clone();
        for entry in &entries {
            for i in 0..self.toks.len() {
                if self.words_at(i, &entry.words) {
                    let last = i + entry.words.len() - 1;
                    self.claim(i, last);
                    found.push(Mention { first: i, last, targets: entry.targets.clone() });
                }
            }
        }
        found.sort_by_key(|m| m.first);
        found
    }

    fn stage_words(&mut self) -> Vec<(usize, Vec<Stage>)> {
        let mut found = Vec::new();
        for i in 0..self.toks.len() {
            for (phrase, stages) in STAGE_WORDS {
                if self.words_at(i, phrase) {
                    self.claim(i, i + phrase.len() - 1);
                    found.push((i, stages.to_vec()));
                    break;
                }
            }
        }
        found
    }

    fn tech_nodes(&mut self) {
        let Some(spec) = self.engine.catalog.shared.iter().find(|p| p.name == "tech_node") else { return };
        let Domain::Enum { options } = &spec.domain else { return };
        for i in 0..self.toks.len() {
            let Some(w) = word(&self.toks[i].tok) else { continue };
            if let Some(opt) = options.iter().find(|o| o.eq_ignore_ascii_case(w)) {
                self.out.assignments.push(Assignment {
                    stage: None,
                    param: "tech_node".into(),
                    value: Value::String(opt.clone()),
                    phrase: self.text(i, i),
                });
                self.claim(i, i);
                // a preceding "technology node" phrase is part of the same mention
                let mut k = i;
                while k > 0 && matches!(word(&self.toks[k - 1].tok), Some("technology" | "tech" | "node" | "on" | "the" | "in")) {
                    k -= 1;
                    self.claimed[k] = true;
                }
            }
        }
    }

    fn resolve(&mut self, mentions: Vec<Mention>, verbs: Vec<(usize, Vec<Stage>)>) {
        let mentioned: BTreeSet<Stage> = verbs
            .iter()
            .flat_map(|(_, s)| s.iter().copied())
            .chain(mentions.iter().filter(|m| m.targets.len() == 1).filter_map(|m| m.targets[0].0))
            .collect();
        for (_, stages) in &verbs {
            for s in stages {
                if !self.out.stage_mentions.contains(s) {
                    self.out.stage_mentions.push(*s);
                }
            }
        }
        // value tokens already taken by an earlier mention
        let mut used = vec![false; self.toks.len()];
        for (idx, m) in mentions.iter().enumerate() {
            let context = verbs
                .iter()
                .map(|(i, s)| (*i, s.clone()))
                .chain(mentions[..idx].iter().filter(|p| p.targets.len() == 1).filter_map(|p| p.targets[0].0.map(|s| (p.first, vec![s]))))
                .filter(|(i, _)| *i < m.first)
                .max_by_key(|(i, _)| *i)
                .map(|(_, s)| s);
            let target = if m.targets.len() == 1 {
                Some(m.targets[0].clone())
            } else {
                let in_context: Vec<_> =
                    m.targets.iter().filter(|(s, _)| s.is_some_and(|s| context.as_ref().is_some_and(|c| c.len() == 1 && c[0] == s))).collect();
                let in_prompt: Vec<_> = m.targets.iter().filter(|(s, _)| s.is_some_and(|s| mentioned.contains(&s))).collect();
                if in_context.len() == 1 {
                    Some(in_context[0].clone())
                } else if in_prompt.len() == 1 {
                    Some(in_prompt[0].clone())
                } else {
                    None
                }
            };
            let phrase = self.text(m.first, m.last);
            let Some((stage, name)) = target else {
                let options: Vec<String> =
                    m.targets.iter().map(|(s, n)| format!("{}.{n}", s.map_or("shared", |s| s.tool_name()))).collect();
                self.out.unresolved.push(Unresolved::new(phrase, format!("ambiguous between {}", options.join(", "))));
                continue;
            };
            let spec = self.engine.spec(stage, &name).expect("lexicon targets exist").clone();
            let prev_end = mentions[..idx].iter().map(|p| p.last + 1).max().unwrap_or(0);
            let next_start = mentions.get(idx + 1).map_or(self.toks.len(), |n| n.first);
            match self.value_for(&spec, m, prev_end.max(self.sentence_start(m.first)), next_start.min(self.sentence_end(m.last)), &mut used) {
                Some((value, from, to)) => {
                    let (a, b) = (from.min(m.first), to.max(m.last));
                    self.out.assignments.push(Assignment { stage, param: name, value, phrase: self.text(a, b) });
                }
                None if spec.name == "design" => {}
                None => self.out.unresolved.push(Unresolved::new(phrase, format!("no value given for {name}"))),
            }
        }
    }

    /// Reads the value of `spec` around mention `m`, looking within
    /// `[lo, hi)`. Returns the value and the token range it spans.
    fn value_for(&mut self, spec: &ParamSpec, m: &Mention, lo: usize, hi: usize, used: &mut [bool]) -> Option<(Value, usize, usize)> {
        let free = |k: usize, used: &[bool]| !used[k];
        // after the alias, skipping filler words
        let mut j = m.last + 1;
        while j < hi && word(&self.toks[j].tok).is_some_and(|w| FILLERS.contains(&w) && effort_level(w).is_none()) {
            self.claimed[j] = true;
            j += 1;
        }
        while j < hi && matches!(self.toks[j].tok, Tok::Punct('=' | ':')) {
            j += 1;
        }
        if j < hi && free(j, used) {
            if let Some(v) = self.parse_at(spec, j) {
                let end = self.unit_end(j);
                self.claim_used(used, m.last + 1..end + 1);
                return Some((v, m.first, end));
            }
        }
        // before the alias, nearest first
        let window_lo = lo.max(m.first.saturating_sub(8));
        for k in (window_lo..m.first).rev() {
            if !free(k, used) {
                break;
            }
            if is_bool_domain(spec) {
                if let Some(w) = word(&self.toks[k].tok) {
                    if NEGATORS.contains(&w) {
                        self.claim_used(used, k..m.first);
                        return Some((Value::String("false".into()), k, m.last));
                    }
                }
                continue;
            }
            let v = match (&self.toks[k].tok, &spec.domain) {
                (Tok::Word(w), Domain::Enum { .. }) if is_effort_domain(spec) => effort_level(w).map(|l| Value::String(l.into())),
                (Tok::Number { .. }, Domain::Real { .. } | Domain::Int { .. }) if m.first - k <= 2 => self.parse_at(spec, k),
                _ => None,
            };
            if let Some(v) = v {
                self.claim_used(used, k..m.first);
                return Some((v, k, m.last));
            }
        }
        if is_bool_domain(spec) {
            return Some((Value::String("true".into()), m.first, m.last));
        }
        None
    }

    fn unit_end(&self, j: usize) -> usize {
        match self.toks.get(j + 1).map(|t| &t.tok) {
            Some(Tok::Word(w)) if matches!(w.as_str(), "ns" | "ps" | "us" | "percent" | "nanoseconds" | "picoseconds") => j + 1,
            Some(Tok::Punct('%')) => j + 1,
            _ => j,
        }
    }

    fn claim_used(&mut self, used: &mut [bool], range: std::ops::Range<usize>) {
        used[range.clone()].fill(true);
        self.claimed[range].fill(true);
    }

    fn parse_at(&self, spec: &ParamSpec, j: usize) -> Option<Value> {
        let tok = &self.toks[j].tok;
        match &spec.domain {
            Domain::Enum { options } => {
                let w = match tok {
                    Tok::Word(w) => w.as_str(),
                    Tok::Quoted(q) => q.as_str(),
                    _ => return None,
                };
                if is_effort_domain(spec) {
                    if let Some(l) = effort_level(w) {
                        return Some(Value::String(l.into()));
                    }
                }
                if is_bool_domain(spec) {
                    return bool_word(w).map(|b| Value::String(b.to_string()));
                }
                options.iter().find(|o| o.eq_ignore_ascii_case(w)).map(|o| Value::String(o.clone()))
            }
            Domain::Real { .. } | Domain::Int { .. } => {
                let Tok::Number { raw, unit } = tok else { return None };
                let unit = unit.clone().or_else(|| match self.toks.get(j + 1).map(|t| &t.tok) {
                    Some(Tok::Word(w)) => Some(w.clone()),
                    Some(Tok::Punct('%')) => Some("%".into()),
                    _ => None,
                });
                Some(number_value(spec, raw, unit.as_deref()))
            }
            Domain::Ident => match tok {
                Tok::Quoted(q) => Some(Value::String(q.clone())),
                Tok::Word(_) => {
                    let w = word(tok).expect("word");
                    if STOPWORDS.contains(&w) || FILLERS.contains(&w) {
                        None
                    } else {
                        Some(Value::String(self.prompt[self.toks[j].start..self.toks[j].end].to_string()))
                    }
                }
                _ => None,
            },
            Domain::Path => match tok {
                Tok::Quoted(q) | Tok::Path(q) => Some(Value::String(q.clone())),
                _ => None,
            },
        }
    }

    fn artifacts(&mut self) {
        for i in 0..self.toks.len() {
            if word(&self.toks[i].tok).is_some_and(|w| ARTIFACT_WORDS.contains(&w)) && !self.claimed[i] {
                self.out.collect_artifacts = true;
                self.claimed[i] = true;
            }
        }
    }

    /// Numbers and effort phrases that no parameter claimed.
    fn leftovers(&mut self) {
        for i in 0..self.toks.len() {
            if self.claimed[i] {
                continue;
            }
            let flagged = match &self.toks[i].tok {
                Tok::Number { .. } => true,
                Tok::Word(w) => w == "effort" || w == "constraint" || w == "constraints",
                _ => false,
            };
            if !flagged {
                continue;
            }
            let mut lo = i;
            while lo > 0 && i - lo < 3 && !self.claimed[lo - 1] && !is_boundary(&self.toks[lo - 1].tok) {
                lo -= 1;
            }
            while lo < i && word(&self.toks[lo].tok).is_some_and(|w| STOPWORDS.contains(&w)) {
                lo += 1;
            }
            let mut hi = self.unit_end(i);
            if hi == i && self.toks.get(i + 1).is_some_and(|t| !self.claimed[i + 1] && word(&t.tok).is_some_and(|w| !STOPWORDS.contains(&w))) {
                hi = i + 1;
            }
            for c in lo..=hi {
                self.claimed[c] = true;
            }
            self.out.unresolved.push(Unresolved::new(self.text(lo, hi), "unrecognized constraint"));
        }
    }
}

fn round9(x: f64) -> f64 {
    (x * 1e9).round() / 1e9
}

fn number_value(spec: &ParamSpec, raw: &str, unit: Option<&str>) -> Value {
    let x: f64 = raw.parse().unwrap_or(f64::NAN);
    let scaled = match (unit, spec.unit) {
        (Some("ps" | "picoseconds"), Some(Unit::Ns)) => Some(x / 1000.0),
        (Some("us"), Some(Unit::Ns)) => Some(x * 1000.0),
        (Some("%" | "percent"), _) => match spec.domain {
            Domain::Real { max, .. } if max <= 1.0 => Some(x / 100.0),
            _ => None,
        },
        _ => None,
    };
    if let Some(v) = scaled {
        return Number::from_f64(round9(v)).map_or(Value::Null, Value::Number);
    }
    match serde_json::from_str::<Number>(raw) {
        Ok(n) => match spec.domain {
            Domain::Int { .. } if n.is_f64() && x.fract() == 0.0 && x.abs() < 1e15 => Value::from(x as i64),
            _ => Value::Number(n),
        },
        Err(_) => Value::Null,
    }
}

#[derive(Debug, Deserialize)]
struct ModelAssignment {
    stage: Option<Stage>,
    param: String,
    value: Value,
}

#[derive(Debug, Deserialize)]
struct ModelOutput {
    #[serde(default)]
    assignments: Vec<ModelAssignment>,
    #[serde(default)]
    stages: Vec<Stage>,
    #[serde(default)]
    unresolved: Vec<Unresolved>,
    #[serde(default)]
    syn_ver: Option<String>,
    #[serde(default)]
    impl_ver: Option<String>,
    #[serde(default)]
    collect_artifacts: bool,
}

/// Extractor backed by a hosted language model.
#[derive(Debug, Clone)]
pub struct ModelClient {
    config: ModelClientConfig,
    catalog: &'static Catalog,
}

impl ModelClient {
    pub fn new(config: ModelClientConfig) -> Self {
        Self { config, catalog: Catalog::builtin() }
    }

    fn instructions(&self) -> String {
        let mut lines = vec![
            "Extract physical-design flow parameters from the user's request.".to_string(),
            "Reply with one JSON object: {\"assignments\": [{\"stage\": <synth|placement|cts|route|null>, \"param\": <name>, \"value\": <value>}], \"stages\": [<stage>...], \"unresolved\": [{\"parameter\": <text>, \"reason\": <text>}], \"syn_ver\": <label|null>, \"impl_ver\": <label|null>, \"collect_artifacts\": <bool>}.".to_string(),
            "Use stage null for shared parameters. Put any constraint you cannot map to a listed parameter in unresolved; never guess.".to_string(),
            "Parameters:".to_string(),
        ];
        for p in &self.catalog.shared {
            lines.push(format!("- shared {}: {}", p.name, p.description));
        }
        for stage in Stage::ALL {
            for p in self.catalog.stage_only(stage) {
                lines.push(format!("- {} {}: {:?}", stage.tool_name(), p.name, p.domain));
            }
        }
        lines.join("\n")
    }

    /// Converts the model's reply into an extraction, moving unknown
    /// parameters to `unresolved`.
    pub fn parse_reply(&self, content: &str) -> Result<Extraction, AgentError> {
        let out: ModelOutput =
            serde_json::from_str(content).map_err(|e| AgentError::ModelClientUnavailable(format!("malformed reply: {e}")))?;
        let mut ex = Extraction {
            stage_mentions: out.stages,
            unresolved: out.unresolved,
            versions: VersionRefs { syn_ver: out.syn_ver, impl_ver: out.impl_ver },
            collect_artifacts: out.collect_artifacts,
            ..Default::default()
        };
        for a in out.assignments {
            let known = match a.stage {
                None => self.catalog.is_shared(&a.param),
                Some(s) => self.catalog.stage_only(s).iter().any(|p| p.name == a.param),
            };
            if known {
                let phrase = format!("{}={}", a.param, a.value);
                ex.assignments.push(Assignment { stage: a.stage, param: a.param, value: a.value, phrase });
            } else {
                ex.unresolved.push(Unresolved::new(a.param, "not a catalog parameter"));
            }
        }
        Ok(ex)
    }
}

impl ParameterExtractor for ModelClient {
    fn extract(&self, prompt: &str) -> Result<Extraction, AgentError> {
        if prompt.trim().is_empty() {
            return Err(AgentError::EmptyPrompt);
        }
        let settings = serde_json::json!({"temperature": 0, "response_format": {"type": "json_object"}});
        let content = llm::chat(&self.config, &self.instructions(), prompt, settings).map_err(AgentError::ModelClientUnavailable)?;
        self.parse_reply(&content)
    }

    fn name(&self) -> &'static str {
        "model"
    }
}

/// Tries the model first and falls back to the rule engine when the model
/// cannot be reached.
pub struct FallbackExtractor {
    pub primary: ModelClient,
    pub fallback: RuleEngine,
}

impl ParameterExtractor for FallbackExtractor {
    fn extract(&self, prompt: &str) -> Result<Extraction, AgentError> {
        match self.primary.extract(prompt) {
            Err(AgentError::ModelClientUnavailable(reason)) => {
                log::warn!("model client unavailable ({reason}); using rule engine");
                self.fallback.extract(prompt)
            }
            other => other,
        }
    }

    fn name(&self) -> &'static str {
        "model+rules"
    }
}

/// Extractor chosen from the environment: the model when configured,
/// otherwise the rule engine.
pub fn extractor_from_env() -> Box<dyn ParameterExtractor> {
    extractor_for(ModelClientConfig::from_env())
}

/// Model client with rule-engine fallback when `config` is set, otherwise
/// the rule engine alone.
pub fn extractor_for(config: Option<ModelClientConfig>) -> Box<dyn ParameterExtractor> {
    match config {
        Some(cfg) => Box::new(FallbackExtractor { primary: ModelClient::new(cfg), fallback: RuleEngine::default() }),
        None => Box::new(RuleEngine::default()),
    }
}
