// SPDX-License-Identifier: Apache-2.0

//! Benchmark generation: seeded parameter sampling into ground-truth
//! records, then natural-language prompts in one of four tones.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{self, BufRead, Write};
use std::path::Path;
use std::sync::OnceLock;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Number, Value};
use thiserror::Error;

use crate::catalog::{Catalog, Unit};
use crate::llm::{self, ModelClientConfig};
use crate::stage::Stage;

const BUILTIN: &str = include_str!("../data/bench_schema.json");

/// Parameters per case, mandatory ones included.
pub const MIN_PARAMS: usize = 6;
pub const MAX_PARAMS: usize = 10;

/// Sampling settings sent with every model prompt request.
pub const MODEL_TEMPERATURE: f64 = 0.7;
pub const MODEL_FREQUENCY_PENALTY: f64 = 0.7;
pub const MODEL_PRESENCE_PENALTY: f64 = 0.6;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("schema offers {available} parameters for {stages}, at least {needed} are needed")]
    SchemaTooSmall { stages: String, available: usize, needed: usize },
    #[error("model client unavailable: {0}")]
    ModelClientUnavailable(String),
    #[error("dataset size must be at least 1")]
    EmptyDataset,
    #[error("dataset line {line}: {reason}")]
    Dataset { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Descriptor {
    Continuous {
        low: f64,
        high: f64,
        /// Decimal places kept after sampling.
        #[serde(default)]
        decimals: u32,
        #[serde(default)]
        integer: bool,
    },
    Categorical {
        options: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaEntry {
    pub name: String,
    /// `None` for parameters shared by every stage.
    pub stage: Option<Stage>,
    #[serde(flatten)]
    pub descriptor: Descriptor,
    #[serde(default)]
    pub mandatory: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignShare {
    pub name: String,
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSchema {
    pub version: String,
    pub designs: Vec<DesignShare>,
    pub entries: Vec<SchemaEntry>,
}

impl ParamSchema {
    pub fn from_json(text: &str) -> Result<Self, BenchError> {
        let schema: ParamSchema = serde_json::from_str(text).map_err(|e| BenchError::Schema(e.to_string()))?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn builtin() -> &'static ParamSchema {
        static SCHEMA: OnceLock<ParamSchema> = OnceLock::new();
        SCHEMA.get_or_init(|| ParamSchema::from_json(BUILTIN).expect("bundled schema is valid"))
    }

    pub fn load(path: &Path) -> Result<Self, BenchError> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: String| Err(BenchError::Schema(m));
        let mut seen = BTreeSet::new();
        for e in &self.entries {
            if !seen.insert((e.stage, e.name.as_str())) {
                return bad(format!("duplicate entry {}", e.name));
            }
            match &e.descriptor {
                Descriptor::Continuous { low, high, .. } if !(low.is_finite() && high.is_finite() && low < high) => return bad(format!("{}: low must be below high", e.name)),
                Descriptor::Categorical { options } if options.len() < 2 => {
                    return bad(format!("{}: needs at least two options", e.name))
                }
                _ => {}
            }
        }
        for required in ["design", "tech_node"] {
            if !self.entries.iter().any(|e| e.name == required && e.stage.is_none() && e.mandatory) {
                return bad(format!("{required} must be a mandatory shared entry"));
            }
        }
        if self.designs.is_empty() {
            return bad("no designs".into());
        }
        let total: f64 = self.designs.iter().map(|d| d.share).sum();
        if self.designs.iter().any(|d| d.share < 0.0) || (total - 1.0).abs() > 1e-9 {
            return bad(format!("design shares sum to {total}"));
        }
        Ok(())
    }

    fn stage_entries(&self, stage: Stage) -> impl Iterator<Item = &SchemaEntry> {
        self.entries.iter().filter(move |e| e.stage == Some(stage))
    }

    fn entry(&self, stage: Option<Stage>, name: &str) -> Option<&SchemaEntry> {
        self.entries.iter().find(|e| e.stage == stage && e.name == name)
    }

    /// Design names in schema order.
    pub fn design_names(&self) -> Vec<&str> {
        self.designs.iter().map(|d| d.name.as_str()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tone {
    Direct,
    Conversational,
    Polite,
    Brief,
}

impl Tone {
    pub const ALL: [Tone; 4] = [Tone::Direct, Tone::Conversational, Tone::Polite, Tone::Brief];

    fn style(self) -> &'static str {
        match self {
            Tone::Direct => "a direct, simple command",
            Tone::Conversational => "a conversational request",
            Tone::Polite => "a polite request",
            Tone::Brief => "a brief, task-focused instruction",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Tool name, or names joined with `+` for multi-stage cases.
    pub tool: String,
    pub stages: Vec<Stage>,
    /// Parameter values by name, mandatory ones included.
    pub params: BTreeMap<String, Value>,
}

impl GroundTruth {
    /// Stage owning `param`, `None` for shared parameters.
    pub fn owner(&self, schema: &ParamSchema, param: &str) -> Option<Stage> {
        self.stages.iter().copied().find(|s| schema.entry(Some(*s), param).is_some())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkCase {
    pub case_id: String,
    pub design: String,
    pub tone: Tone,
    pub ground_truth: GroundTruth,
    pub prompt: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SampleOptions {
    /// Allows contiguous multi-stage cases besides single-stage ones.
    pub multi_stage: bool,
}

/// Stage combinations a case may cover: single stages, or contiguous runs
/// when multi-stage cases are enabled.
fn combinations(multi_stage: bool) -> Vec<Vec<Stage>> {
    let mut out = Vec::new();
    for len in 1..=if multi_stage { 4 } else { 1 } {
        for start in 0..=4 - len {
            out.push(Stage::ALL[start..start + len].to_vec());
        }
    }
    out
}

fn round_to(x: f64, decimals: u32) -> f64 {
    let f = 10f64.powi(decimals as i32);
    (x * f).round() / f
}

fn sample_value(descriptor: &Descriptor, rng: &mut ChaCha8Rng) -> Value {
    match descriptor {
        Descriptor::Continuous { low, high, integer: true, .. } => {
            Value::from(rng.random_range(low.ceil() as i64..=high.floor() as i64))
        }
        Descriptor::Continuous { low, high, decimals, .. } => {
            let x = round_to(rng.random_range(*low..*high), *decimals).clamp(*low, *high);
            if *decimals == 0 {
                Value::from(x as i64)
            } else {
                Number::from_f64(x).map_or(Value::Null, Value::Number)
            }
        }
        Descriptor::Categorical { options } => Value::String(options[rng.random_range(0..options.len())].clone()),
    }
}

fn case_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draws one ground-truth record for `design`, or a random design when
/// `None`. The prompt is left empty.
pub fn sample_case(
    schema: &ParamSchema,
    seed: u64,
    design: Option<&str>,
    options: SampleOptions,
) -> Result<BenchmarkCase, BenchError> {
    let mut rng = case_rng(seed, 0);
    let stages = combinations(options.multi_stage).choose(&mut rng).expect("nonempty").clone();
    let mandatory: Vec<&SchemaEntry> = schema.entries.iter().filter(|e| e.mandatory).collect();
    let mut pool: Vec<&SchemaEntry> = Vec::new();
    for s in &stages {
        for e in schema.stage_entries(*s) {
            if !pool.iter().any(|p| p.name == e.name) && !e.mandatory {
                pool.push(e);
            }
        }
    }
    let min_extra = MIN_PARAMS.saturating_sub(mandatory.len()).max(stages.len());
    let max_extra = MAX_PARAMS.saturating_sub(mandatory.len());
    if pool.len() < min_extra || min_extra > max_extra {
        return Err(BenchError::SchemaTooSmall {
            stages: stages.iter().map(|s| s.tool_name()).collect::<Vec<_>>().join("+"),
            available: pool.len() + mandatory.len(),
            needed: MIN_PARAMS.max(mandatory.len() + stages.len()),
        });
    }
    let count = rng.random_range(min_extra..=max_extra.min(pool.len()));
    // one parameter from each stage first, so every stage in the case is used
    let mut chosen: Vec<&SchemaEntry> = Vec::new();
    for s in &stages {
        let own: Vec<&SchemaEntry> = pool.iter().copied().filter(|e| e.stage == Some(*s) && !chosen.contains(e)).collect();
        if let Some(e) = own.choose(&mut rng) {
            chosen.push(e);
        }
    }
    let mut rest: Vec<&SchemaEntry> = pool.iter().copied().filter(|e| !chosen.contains(e)).collect();
    rest.shuffle(&mut rng);
    chosen.extend(rest.into_iter().take(count.saturating_sub(chosen.len())));

    let mut params = BTreeMap::new();
    for e in mandatory {
        let value = match (e.name.as_str(), design) {
            ("design", Some(d)) => Value::String(d.to_string()),
            _ => sample_value(&e.descriptor, &mut rng),
        };
        params.insert(e.name.clone(), value);
    }
    for e in &chosen {
        params.insert(e.name.clone(), sample_value(&e.descriptor, &mut rng));
    }
    let tone = Tone::ALL[rng.random_range(0..Tone::ALL.len())];
    let design = params.get("design").and_then(Value::as_str).unwrap_or_default().to_string();
    Ok(BenchmarkCase {
        case_id: format!("case-{seed}"),
        design,
        tone,
        ground_truth: GroundTruth {
            tool: stages.iter().map(|s| s.tool_name()).collect::<Vec<_>>().join("+"),
            stages,
            params,
        },
        prompt: String::new(),
    })
}

/// Single-stage ground truth with a randomly chosen design.
pub fn sample_ground_truth(schema: &ParamSchema, seed: u64) -> Result<BenchmarkCase, BenchError> {
    sample_case(schema, seed, None, SampleOptions::default())
}

#[derive(Debug, Clone)]
pub enum PromptEngine {
    /// Deterministic template verbalization.
    Hermetic,
    Model(ModelClientConfig),
}

fn phrase(catalog: &Catalog, stage: Stage, name: &str) -> String {
    catalog
        .stage_only(stage)
        .iter()
        .find(|p| p.name == name)
        .and_then(|p| p.aliases.first().cloned())
        .unwrap_or_else(|| name.replace('_', " "))
}

fn verbalize_value(catalog: &Catalog, stage: Stage, name: &str, value: &Value) -> String {
    let unit = catalog.stage_only(stage).iter().find(|p| p.name == name).and_then(|p| p.unit);
    match value {
        Value::String(s) if s == "true" => "on".into(),
        Value::String(s) if s == "false" => "off".into(),
        Value::String(s) => s.clone(),
        Value::Number(n) => match unit {
            Some(Unit::Ns) => format!("{n} ns"),
            None => n.to_string(),
        },
        other => other.to_string(),
    }
}

fn stage_verb(stage: Stage) -> &'static str {
    match stage {
        Stage::Synthesis => "synthesize",
        Stage::Placement => "place",
        Stage::Cts => "run clock tree synthesis on",
        Stage::Route => "route",
    }
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    c.next().map_or_else(String::new, |f| f.to_uppercase().collect::<String>() + c.as_str())
}

fn join_list(items: &[String]) -> String {
    match items {
        [] => String::new(),
        [one] => one.clone(),
        [init @ .., last] => format!("{} and {last}", init.join(", ")),
    }
}

/// Deterministic prompt naming every ground-truth value.
pub fn render_hermetic(case: &BenchmarkCase, tone: Tone, schema: &ParamSchema) -> String {
    let catalog = Catalog::builtin();
    let gt = &case.ground_truth;
    let design = &case.design;
    let tech = gt.params.get("tech_node").and_then(Value::as_str).unwrap_or("FreePDK45");
    let mut clauses: Vec<(Stage, Vec<String>)> = Vec::new();
    for s in &gt.stages {
        let items: Vec<String> = gt
            .params
            .iter()
            .filter(|(name, _)| gt.owner(schema, name) == Some(*s))
            .map(|(name, v)| format!("{} {}", phrase(catalog, *s, name), verbalize_value(catalog, *s, name, v)))
            .collect();
        clauses.push((*s, items));
    }
    let mut out = String::new();
    for (i, (stage, items)) in clauses.iter().enumerate() {
        let verb = stage_verb(*stage);
        let list = join_list(items);
        let sentence = match (tone, i) {
            (Tone::Direct, 0) => format!("{} design {design} on {tech} with {list}.", capitalize(verb)),
            (Tone::Direct, _) => format!(" Then {verb} it with {list}."),
            (Tone::Conversational, 0) => {
                format!("Hey, I'm working on design {design} in {tech} and I'd like to {verb} it. Let's go with {list}.")
            }
            (Tone::Conversational, _) => format!(" After that, I want to {verb} it too, with {list}."),
            (Tone::Polite, 0) => format!("Could you please {verb} design {design} on {tech}? I would appreciate {list}."),
            (Tone::Polite, _) => format!(" Then, if possible, please {verb} it with {list}."),
            (Tone::Brief, 0) => format!("{} design {design}, {tech}: {list}.", capitalize(verb)),
            (Tone::Brief, _) => format!(" Then {verb}: {list}."),
        };
        out.push_str(&sentence);
    }
    out
}

/// Renders the case's prompt with the chosen engine.
pub fn render_prompt(case: &BenchmarkCase, tone: Tone, engine: &PromptEngine, schema: &ParamSchema) -> Result<String, BenchError> {
    match engine {
        PromptEngine::Hermetic => Ok(render_hermetic(case, tone, schema)),
        PromptEngine::Model(cfg) => {
            let system = format!(
                "You write requests that an engineer would type to a physical-design assistant. Write {} asking for the {} step(s) \
                 on the design below, mentioning every parameter value exactly. Reply with the request text only.",
                tone.style(),
                case.ground_truth.tool
            );
            let user = json!({"tool": case.ground_truth.tool, "params": case.ground_truth.params}).to_string();
            let settings = json!({
                "temperature": MODEL_TEMPERATURE,
                "frequency_penalty": MODEL_FREQUENCY_PENALTY,
                "presence_penalty": MODEL_PRESENCE_PENALTY,
            });
            let text = llm::chat(cfg, &system, &user, settings).map_err(BenchError::ModelClientUnavailable)?;
            Ok(text.trim().to_string())
        }
    }
}

/// Case counts per design by largest-remainder apportionment; ties go to
/// the design listed first.
pub fn design_quota(schema: &ParamSchema, n: usize) -> Vec<(String, usize)> {
    let exact: Vec<f64> = schema.designs.iter().map(|d| d.share * n as f64).collect();
    // shares like 0.33 * 100 land just below an integer in floating point
    let floors: Vec<usize> = exact.iter().map(|x| (x + 1e-9).floor() as usize).collect();
    let mut counts = floors.clone();
    let mut left = n.saturating_sub(floors.iter().sum());
    let mut order: Vec<usize> = (0..exact.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (exact[a] - floors[a] as f64, exact[b] - floors[b] as f64);
        rb.partial_cmp(&ra).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    for i in order {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    schema.designs.iter().map(|d| d.name.clone()).zip(counts).collect()
}

/// `n` cases with designs apportioned by share, each rendered in its tone.
pub fn generate_dataset(
    n: usize,
    schema: &ParamSchema,
    seed: u64,
    engine: &PromptEngine,
    options: SampleOptions,
) -> Result<Vec<BenchmarkCase>, BenchError> {
    if n == 0 {
        return Err(BenchError::EmptyDataset);
    }
    let mut designs: Vec<String> =
        design_quota(schema, n).into_iter().flat_map(|(d, c)| std::iter::repeat_n(d, c)).collect();
    designs.shuffle(&mut case_rng(seed, u64::MAX));
    let width = n.to_string().len().max(3);
    let mut out = Vec::with_capacity(n);
    for (i, design) in designs.iter().enumerate() {
        let case_seed = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(i as u64);
        let mut case = sample_case(schema, case_seed, Some(design), options)?;
        case.case_id = format!("case-{:0width$}", i + 1);
        case.prompt = render_prompt(&case, case.tone, engine, schema)?;
        out.push(case);
    }
    Ok(out)
}

pub fn write_dataset(cases: &[BenchmarkCase], mut out: impl Write) -> Result<(), BenchError> {
    for c in cases {
        serde_json::to_writer(&mut out, c).map_err(io::Error::other)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_dataset(input: impl BufRead) -> Result<Vec<BenchmarkCase>, BenchError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| BenchError::Dataset { line: i + 1, reason: e.to_string() })?);
    }
    Ok(out)
}
