// SPDX-License-Identifier: Apache-2.0

#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use edaflow::codebleu::{DataFlowGraph, Relation};
use edaflow::Stage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join("fixtures")
}

/// Golden stage scripts with the stage named by their file name.
pub fn golden_scripts() -> Vec<(String, Stage, String)> {
    let mut out = Vec::new();
    let mut paths: Vec<PathBuf> = fs::read_dir(fixtures().join("golden"))
        .expect("golden fixtures")
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "tcl"))
        .collect();
    paths.sort();
    for p in paths {
        let stem = p.file_stem().unwrap().to_string_lossy().into_owned();
        let stage: Stage = stem.trim_start_matches("rendered_").parse().expect("stage-named fixture");
        out.push((stem, stage, fs::read_to_string(&p).unwrap()));
    }
    out
}

pub fn pair_script(name: &str) -> String {
    fs::read_to_string(fixtures().join("pairs").join(name)).unwrap()
}

/// (name, idx, relation, sources, source indices)
pub type Tuple = (String, usize, String, Vec<String>, Vec<usize>);

#[derive(Debug, Deserialize)]
pub struct Annotation {
    pub name: String,
    pub script: String,
    pub nodes: Vec<Tuple>,
}

pub fn annotations() -> Vec<Annotation> {
    let text = fs::read_to_string(fixtures().join("dfg_annotations.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

/// Every fixture script: golden, pair and annotation scripts.
pub fn all_fixture_scripts() -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = golden_scripts().into_iter().map(|(n, _, s)| (n, s)).collect();
    for name in ["route_reference.tcl", "route_candidate.tcl", "synth_reference.tcl", "synth_candidate.tcl"] {
        out.push((name.to_string(), pair_script(name)));
    }
    out.extend(annotations().into_iter().map(|a| (a.name, a.script)));
    out
}

/// Comment-free, trimmed, nonblank lines, scanned character by character.
pub fn oracle_lines(script: &str) -> Vec<String> {
    let mut out = Vec::new();
    for raw in script.split('\n') {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let chars: Vec<char> = line.chars().collect();
        let (mut depth, mut quoted, mut cut, mut k) = (0i32, false, chars.len(), 0);
        while k < chars.len() {
            let c = chars[k];
            if c == '\\' {
                k += 2;
                continue;
            }
            if c == '"' && depth == 0 {
                quoted = !quoted;
            } else if !quoted && c == '{' {
                depth += 1;
            } else if !quoted && c == '}' {
                depth -= 1;
            } else if !quoted && depth <= 0 && c == ';' {
                let rest: String = chars[k + 1..].iter().collect();
                if rest.trim_start().starts_with('#') {
                    cut = k;
                    break;
                }
            }
            k += 1;
        }
        let kept: String = chars[..cut].iter().collect();
        let kept = kept.trim_end();
        if !kept.is_empty() {
            out.push(kept.to_string());
        }
    }
    out
}

/// (matched, total) for line matching by exhaustive search.
pub fn oracle_syntax_counts(reference: &str, candidate: &str) -> (usize, usize) {
    let r = oracle_lines(reference);
    let c = oracle_lines(candidate);
    let mut used = vec![false; r.len()];
    let mut matched = 0;
    for line in &c {
        if let Some(j) = (0..r.len()).find(|&j| !used[j] && r[j] == *line) {
            used[j] = true;
            matched += 1;
        }
    }
    (matched, r.len())
}

pub fn oracle_score(matched: usize, total: usize, empty: f64) -> f64 {
    if total == 0 {
        empty
    } else {
        100.0 * matched as f64 / total as f64
    }
}

fn edge_key(g: &DataFlowGraph, i: usize) -> (String, Relation, Vec<String>) {
    let n = &g.nodes[i];
    let mut s = n.sources.clone();
    s.sort();
    (n.name.clone(), n.relation, s)
}

/// (matched, total) for dataflow edges by exhaustive search.
pub fn oracle_dataflow_counts(reference: &DataFlowGraph, candidate: &DataFlowGraph) -> (usize, usize) {
    let mut used = vec![false; candidate.nodes.len()];
    let mut matched = 0;
    for i in 0..reference.nodes.len() {
        let key = edge_key(reference, i);
        if let Some(j) = (0..candidate.nodes.len()).find(|&j| !used[j] && edge_key(candidate, j) == key) {
            used[j] = true;
            matched += 1;
        }
    }
    (matched, reference.nodes.len())
}

pub fn oracle_dataflow_score(reference: &DataFlowGraph, candidate: &DataFlowGraph) -> f64 {
    let (m, t) = oracle_dataflow_counts(reference, candidate);
    oracle_score(m, t, if candidate.nodes.is_empty() { 100.0 } else { 0.0 })
}

const MAX_PAIR_LINES: usize = 15;

fn mutate(lines: &mut Vec<String>, rng: &mut ChaCha8Rng) {
    if lines.is_empty() {
        lines.push("set x 1".into());
        return;
    }
    let i = rng.random_range(0..lines.len());
    match rng.random_range(0..9) {
        0 => {
            lines.remove(i);
        }
        1 => {
            let l = lines[i].clone();
            lines.insert(i, l);
        }
        2 if lines.len() > 1 => {
            let j = (i + 1) % lines.len();
            lines.swap(i, j);
        }
        3 => {
            let digits: Vec<usize> = lines[i].char_indices().filter(|(_, c)| c.is_ascii_digit()).map(|(k, _)| k).collect();
            if let Some(&k) = digits.get(rng.random_range(0..digits.len().max(1))) {
                let d = rng.random_range(0..10u8);
                lines[i].replace_range(k..k + 1, &d.to_string());
            }
        }
        4 => {
            let words: Vec<String> = lines[i]
                .split(|c: char| !c.is_alphanumeric() && c != '_')
                .filter(|w| w.len() > 1)
                .map(str::to_string)
                .collect();
            if !words.is_empty() {
                let w = &words[rng.random_range(0..words.len())];
                let renamed = format!("{w}_2");
                for l in lines.iter_mut() {
                    *l = l.replace(&format!("${w}"), &format!("${renamed}")).replace(&format!("set {w} "), &format!("set {renamed} "));
                }
            }
        }
        5 => lines.insert(i, "# generated".into()),
        6 => lines.insert(i, String::new()),
        7 => lines[i].push_str(" ;# note"),
        _ => lines[i] = format!("    {}", lines[i]),
    }
}

/// Seeded reference/candidate pairs of at most fifteen lines, built by
/// mutating fixture snippets.
pub fn oracle_corpus(n: usize, seed: u64) -> Vec<(String, String)> {
    let mut bases: Vec<String> = annotations().into_iter().map(|a| a.script).filter(|s| s.lines().count() >= 2).collect();
    for (_, _, text) in golden_scripts() {
        let lines: Vec<&str> = text.lines().collect();
        for chunk in lines.chunks(12) {
            bases.push(chunk.join("\n"));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let reference = bases[k % bases.len()].clone();
        let mut lines: Vec<String> = reference.lines().map(str::to_string).collect();
        for _ in 0..rng.random_range(0..4) {
            mutate(&mut lines, &mut rng);
        }
        lines.truncate(MAX_PAIR_LINES);
        let mut reference_lines: Vec<&str> = reference.lines().collect();
        reference_lines.truncate(MAX_PAIR_LINES);
        out.push((reference_lines.join("\n"), lines.join("\n")));
    }
    out
}
