// SPDX-License-Identifier: Apache-2.0

//! Acceptance criteria, one PASS/FAIL line each. Exits nonzero when any
//! criterion fails.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use edaflow::agent::{AgentResponse, Orchestrator};
use edaflow::benchgen::{self, ParamSchema, PromptEngine, SampleOptions};
use edaflow::codebleu::{self, dataflow_match, detect_stage, extract_dfg, syntax_match, tokenize, tokenize_lenient};
use edaflow::codebleu::{EdaCommandDb, Relation, StageDetection, FALLBACK_STAGE};
use edaflow::executor::ROUTE_REPORTS;
use edaflow::services::{make_impl_ver, ServiceConfig, StageServices, Status};
use edaflow::template::Origin;
use edaflow::{CodeBleuReport, CodeBleuWeights, Stage};
use serde_json::{json, Value};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed < limit, || format!("took {elapsed:?}, limit {limit:?}"))
}

fn self_match() -> Outcome {
    let scripts = common::all_fixture_scripts();
    let start = Instant::now();
    let mut evaluations = 0;
    for (name, s) in &scripts {
        let stages: Vec<Option<Stage>> = Stage::ALL.iter().copied().map(Some).chain([None]).collect();
        for stage in stages {
            let r: CodeBleuReport = codebleu::evaluate(s, s, stage);
            evaluations += 1;
            ensure((r.total - 100.0).abs() <= 1e-9, || format!("{name} {stage:?}: total {}", r.total))?;
        }
    }
    within(start.elapsed(), Duration::from_secs(1))?;
    Ok(format!("{} scripts, {evaluations} evaluations in {:?}", scripts.len(), start.elapsed()))
}

fn weight_conformance() -> Outcome {
    let table = [
        (Stage::Synthesis, [0.20, 0.30, 0.25, 0.25]),
        (Stage::Placement, [0.15, 0.25, 0.30, 0.30]),
        (Stage::Cts, [0.20, 0.25, 0.30, 0.25]),
        (Stage::Route, [0.20, 0.25, 0.25, 0.30]),
    ];
    for (stage, expect) in table {
        let w = CodeBleuWeights::for_stage(stage);
        ensure(w.as_array() == expect, || format!("{stage}: {:?}", w.as_array()))?;
        ensure((w.sum() - 1.0).abs() <= 1e-12, || format!("{stage}: sum {}", w.sum()))?;
    }
    Ok("four stage vectors exact, sums within 1e-12".into())
}

fn recombination() -> Outcome {
    let t = CodeBleuWeights::for_stage(Stage::Synthesis).combine([24.81, 89.04, 96.79, 97.30]);
    ensure((t - 80.19).abs() <= 0.05, || format!("total {t}"))?;
    Ok(format!("total {t:.4}"))
}

fn formula_oracles() -> Outcome {
    let start = Instant::now();
    let corpus = common::oracle_corpus(60, 2024);
    ensure(corpus.len() >= 50, || "corpus too small".into())?;
    let db = EdaCommandDb::builtin();
    for (i, (r, c)) in corpus.iter().enumerate() {
        ensure(r.lines().count() <= 15 && c.lines().count() <= 15, || format!("pair {i} too long"))?;
        let syn = syntax_match::<f64>(r, c);
        let (m, t) = common::oracle_syntax_counts(r, c);
        ensure(syn.score == common::oracle_score(m, t, 0.0), || format!("pair {i}: syntax {} vs {m}/{t}", syn.score))?;
        let rg = extract_dfg(&tokenize_lenient(r), db);
        let cg = extract_dfg(&tokenize_lenient(c), db);
        let df = dataflow_match::<f64>(&rg, &cg);
        let want = common::oracle_dataflow_score(&rg, &cg);
        ensure(df.score == want, || format!("pair {i}: dataflow {} vs {want}", df.score))?;
    }
    within(start.elapsed(), Duration::from_secs(10))?;
    Ok(format!("{} pairs exact in {:?}", corpus.len(), start.elapsed()))
}

fn dfg_extraction() -> Outcome {
    let all = common::annotations();
    ensure(all.len() >= 30, || format!("only {} annotations", all.len()))?;
    let db = EdaCommandDb::builtin();
    let (mut computed, mut commands) = (0, 0);
    for a in &all {
        let stream = tokenize(&a.script).map_err(|e| format!("{}: {e}", a.name))?;
        let g = extract_dfg(&stream, db);
        ensure(g.nodes.len() == a.nodes.len(), || format!("{}: {} nodes, want {}", a.name, g.nodes.len(), a.nodes.len()))?;
        for (n, (name, idx, rel, sources, source_idx)) in g.nodes.iter().zip(&a.nodes) {
            let relation = if rel == "comesFrom" { Relation::ComesFrom } else { Relation::ComputedFrom };
            let same = n.name == *name && n.idx == *idx && n.relation == relation && n.sources == *sources && n.source_indices == *source_idx;
            ensure(same, || format!("{}: got {n:?}, want ({name}, {idx}, {rel}, {sources:?}, {source_idx:?})", a.name))?;
            if relation == Relation::ComesFrom {
                ensure(sources.is_empty() && source_idx.is_empty(), || format!("{}: command node with sources", a.name))?;
                commands += 1;
            } else {
                computed += 1;
            }
        }
    }
    Ok(format!("{} snippets, {computed} computedFrom and {commands} comesFrom tuples", all.len()))
}

const FIXTURE_PROMPT: &str = "Synthesize design \"b14\" on FreePDK45 with fanout limit \n4.74. Then run placement with high level of effort for \ntiming driven global placer and medium wire length \noptimization effort level.";

fn end_to_end() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let start = Instant::now();
    let o = Orchestrator::new(StageServices::new(ServiceConfig::mock(dir.path())));
    let r = o.run(FIXTURE_PROMPT, None).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    ensure(r.status == Status::Success, || format!("status {:?}", r.status))?;
    ensure(r.tools_used == [Stage::Synthesis, Stage::Placement], || format!("tools_used {:?}", r.tools_used))?;
    let tools = serde_json::to_value(&r.tools_used).unwrap();
    ensure(tools == json!(["synth", "placement"]), || format!("tools_used json {tools}"))?;
    let synth = &r.results[0].tcl_script;
    let place = &r.results[1];
    for needle in ["set MAX_FANOUT 4.74", "set TOP_NAME \"b14\""] {
        ensure(synth.contains(needle), || format!("synthesis script lacks `{needle}`"))?;
    }
    for needle in ["set PLACE_GLOBAL_TIMING_EFFORT \"high\"", "set PLACE_GLOBAL_CONG_EFFORT \"low\""] {
        ensure(place.tcl_script.contains(needle), || format!("placement script lacks `{needle}`"))?;
    }
    let cong = place.provenance.get("PLACE_GLOBAL_CONG_EFFORT");
    ensure(cong == Some(&Origin::Default), || format!("cong effort provenance {cong:?}"))?;
    within(elapsed, Duration::from_secs(5))?;
    Ok(format!("success, tools_used [synth, placement] in {elapsed:?}"))
}

fn seed_upstream(services: &StageServices, upto: Stage) -> Result<(), String> {
    let run = |stage: Stage, body: Value| services.run_json(stage, body).map_err(|e| format!("seeding {stage}: {e}"));
    run(Stage::Synthesis, json!({"design": "b14"}))?;
    if upto >= Stage::Placement {
        run(Stage::Placement, json!({"design": "b14", "syn_ver": "v1"}))?;
    }
    if upto >= Stage::Cts {
        run(Stage::Cts, json!({"design": "b14", "impl_ver": "v1__g0__p0"}))?;
    }
    Ok(())
}

fn check_threading(r: &AgentResponse, stages: &[Stage]) -> Result<(), String> {
    let mut syn_ver = "v1".to_string();
    let mut impl_ver = "v1__g0__p0".to_string();
    for (res, stage) in r.results.iter().zip(stages) {
        let v = res.version.clone().ok_or("missing version")?;
        match stage {
            Stage::Synthesis => syn_ver = v,
            Stage::Placement => {
                ensure(v.starts_with(&format!("{syn_ver}__g")), || format!("placement {v} does not consume {syn_ver}"))?;
                impl_ver = v;
            }
            _ => ensure(v == impl_ver, || format!("{stage} ran on {v}, expected {impl_ver}"))?,
        }
    }
    Ok(())
}

fn task_combinations() -> Outcome {
    let combos: [(&str, &[Stage], &str); 10] = [
        ("S", &[Stage::Synthesis], "Synthesize design b14 with fanout limit 8"),
        ("P", &[Stage::Placement], "Place design b14 from synthesis version v1 with core utilization 0.6"),
        ("C", &[Stage::Cts], "Run clock tree synthesis on design b14 for implementation version v1__g0__p0 with target skew 0.05"),
        ("R", &[Stage::Route], "Route design b14 on implementation version v1__g0__p0"),
        ("S+P", &[Stage::Synthesis, Stage::Placement], "Synthesize design b14 with clock period 5 and then place it"),
        ("P+C", &[Stage::Placement, Stage::Cts], "Place design b14 using synthesis version v1, then run clock tree synthesis"),
        ("C+R", &[Stage::Cts, Stage::Route], "Run cts on design b14 for implementation version v1__g0__p0 and route it"),
        ("S+P+C", &[Stage::Synthesis, Stage::Placement, Stage::Cts], "Synthesize, place and run clock tree synthesis on design b14"),
        ("P+C+R", &[Stage::Placement, Stage::Cts, Stage::Route], "Place design b14 from synthesis version v1, then run cts and route"),
        ("S+P+C+R", &Stage::ALL, "Run the full flow on design b14 with fanout limit 6"),
    ];
    for (label, stages, prompt) in combos {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let services = StageServices::new(ServiceConfig::mock(dir.path()));
        if let Some(upstream) = stages[0].upstream() {
            seed_upstream(&services, upstream)?;
        }
        let o = Orchestrator::new(services);
        let plan = o.plan(prompt, None).map_err(|e| format!("{label}: {e}"))?;
        ensure(plan.stages == stages, || format!("{label}: planned {:?}", plan.stages))?;
        ensure(plan.combination() == label, || format!("{label}: combination {}", plan.combination()))?;
        let r = o.run(prompt, None).map_err(|e| format!("{label}: {e}"))?;
        ensure(r.status == Status::Success && r.tools_used == stages, || format!("{label}: {:?} {:?}", r.status, r.tools_used))?;
        check_threading(&r, stages).map_err(|e| format!("{label}: {e}"))?;
    }
    Ok("10 combinations planned, executed and threaded".into())
}

fn versioning() -> Outcome {
    let labels: Vec<String> = (0..10).map(|s| format!("v{s}")).collect();
    let mut seen = BTreeSet::new();
    let mut first = Vec::new();
    for s in &labels {
        for g in 0..10 {
            for p in 0..10 {
                let v = make_impl_ver(s, g, p).map_err(|e| e.to_string())?;
                first.push(v.clone());
                seen.insert(v);
            }
        }
    }
    ensure(seen.len() == 1000, || format!("{} distinct labels", seen.len()))?;
    let second: Vec<String> =
        labels.iter().flat_map(|s| (0..10).flat_map(move |g| (0..10).map(move |p| make_impl_ver(s, g, p).unwrap()))).collect();
    ensure(first == second, || "labels differ between runs".into())?;
    ensure(make_impl_ver("v1", 0, 2).as_deref() == Ok("v1__g0__p2"), || "format".into())?;
    Ok("1000 distinct labels, stable across runs".into())
}

fn benchmark_generation() -> Outcome {
    let schema = ParamSchema::builtin();
    let cases = benchgen::generate_dataset(100, schema, 42, &PromptEngine::Hermetic, SampleOptions::default())
        .map_err(|e| e.to_string())?;
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for c in &cases {
        *counts.entry(c.design.as_str()).or_default() += 1;
    }
    let want = BTreeMap::from([("des", 33), ("b14", 33), ("leon2", 34)]);
    ensure(counts == want, || format!("design counts {counts:?}"))?;
    let engine = edaflow::agent::RuleEngine::default();
    let mut recovered = 0;
    for c in &cases {
        let p = &c.ground_truth.params;
        ensure((6..=10).contains(&p.len()), || format!("{}: {} params", c.case_id, p.len()))?;
        ensure(p.contains_key("design") && p.contains_key("tech_node"), || format!("{}: mandatory missing", c.case_id))?;
        let ex = edaflow::agent::ParameterExtractor::extract(&engine, &c.prompt).map_err(|e| e.to_string())?;
        let got: BTreeMap<&str, &Value> = ex.assignments.iter().map(|a| (a.param.as_str(), &a.value)).collect();
        let all_match = got.len() == p.len()
            && ex.unresolved.is_empty()
            && p.iter().all(|(k, v)| got.get(k.as_str()).is_some_and(|g| *g == v || (g.as_f64().is_some() && g.as_f64() == v.as_f64())));
        if all_match {
            recovered += 1;
        }
    }
    ensure(recovered == 100, || format!("closed loop {recovered}/100"))?;
    Ok(format!("counts {counts:?}, closed loop 100/100"))
}

fn stage_detection() -> Outcome {
    let db = EdaCommandDb::builtin();
    let golden = common::golden_scripts();
    let mut lowest = f64::INFINITY;
    for (name, stage, text) in &golden {
        let d: StageDetection<f64> = detect_stage(text, db);
        ensure(d.stage == *stage && d.confidence >= 0.8, || format!("{name}: {} at {:.3}", d.stage, d.confidence))?;
        lowest = lowest.min(d.confidence);
    }
    let empty: StageDetection<f64> = detect_stage("", db);
    ensure(empty.stage == FALLBACK_STAGE && empty.confidence == 0.0, || format!("empty script: {} {}", empty.stage, empty.confidence))?;
    Ok(format!("{} golden scripts, lowest confidence {lowest:.3}", golden.len()))
}

fn snapshot(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut out = BTreeMap::new();
    for entry in walk(dir)? {
        let rel = entry.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
        let is_report = rel.contains("/reports/");
        let is_archive = rel.ends_with(".tar") || rel.ends_with(".tar.gz");
        if is_report || is_archive {
            let bytes = fs::read(&entry).map_err(|e| e.to_string())?;
            let bytes = if is_report {
                let text = String::from_utf8_lossy(&bytes);
                text.lines().filter(|l| !l.starts_with("# timestamp ")).collect::<Vec<_>>().join("\n").into_bytes()
            } else {
                bytes
            };
            out.insert(rel, bytes);
        }
    }
    Ok(out)
}

fn walk(dir: &Path) -> Result<Vec<std::path::PathBuf>, String> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).map_err(|e| e.to_string())? {
            let p = e.map_err(|e| e.to_string())?.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p);
            }
        }
    }
    out.sort();
    Ok(out)
}

fn full_flow(services: &StageServices) -> Result<Vec<String>, String> {
    let run = |stage: Stage, body: Value| services.run_json(stage, body).map_err(|e| format!("{stage}: {e}"));
    run(Stage::Synthesis, json!({"design": "b14", "drc_max_fanout": 4.74}))?;
    run(Stage::Placement, json!({"design": "b14", "syn_ver": "v1"}))?;
    run(Stage::Cts, json!({"design": "b14", "impl_ver": "v1__g0__p0"}))?;
    let route = run(Stage::Route, json!({"design": "b14", "impl_ver": "v1__g0__p0", "collect_artifacts": true}))?;
    ensure(route.artifacts.is_some(), || "route produced no archive".into())?;
    Ok(route.report_paths.iter().map(|p| Path::new(p).file_name().unwrap().to_string_lossy().into_owned()).collect())
}

fn executor_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let services = StageServices::new(ServiceConfig::mock(dir.path()));
    let route_reports = full_flow(&services)?;
    let first = snapshot(dir.path())?;
    fs::remove_dir_all(dir.path().join("b14")).map_err(|e| e.to_string())?;
    std::thread::sleep(Duration::from_millis(5));
    full_flow(&services)?;
    let second = snapshot(dir.path())?;
    ensure(!first.is_empty() && first.keys().any(|k| k.ends_with(".tar") || k.ends_with(".tar.gz")), || "no archive".into())?;
    ensure(first == second, || {
        let diff: Vec<&String> = first.keys().filter(|k| first.get(*k) != second.get(*k)).collect();
        format!("differs: {diff:?}")
    })?;
    let want: Vec<String> = ROUTE_REPORTS.iter().map(|s| s.to_string()).collect();
    ensure(route_reports == want, || format!("route reports {route_reports:?}"))?;
    Ok(format!("{} files byte-identical across runs, route reports {want:?}", first.len()))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("self-match", self_match),
        ("weight conformance", weight_conformance),
        ("component recombination", recombination),
        ("formula oracles", formula_oracles),
        ("dfg extraction", dfg_extraction),
        ("end-to-end fixture", end_to_end),
        ("task-combination coverage", task_combinations),
        ("versioning", versioning),
        ("benchmark generation", benchmark_generation),
        ("stage detection", stage_detection),
        ("executor determinism", executor_determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
