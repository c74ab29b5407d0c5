// SPDX-License-Identifier: Apache-2.0

//! Dataflow graphs of TCL scripts.
//!
//! Assignments (`set`, `append`, `lappend`, `incr`, `foreach` loop
//! variables) become `computedFrom` nodes listing the variables their value
//! reads; tool commands found in the command database become `comesFrom`
//! nodes. Command substitutions are visited before the command that contains
//! them, and `proc` bodies get a scope of their own.

use std::collections::HashMap;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use super::db::EdaCommandDb;
use super::tokenize::{Command, Expansion, Part, Script, TclTokenStream, Word};
use super::Component;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "computedFrom")]
    ComputedFrom,
    #[serde(rename = "comesFrom")]
    ComesFrom,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DfgNode {
    pub name: String,
    pub idx: usize,
    pub relation: Relation,
    pub sources: Vec<String>,
    /// Defining node of each source that has one, in source order.
    pub source_indices: Vec<usize>,
}

impl DfgNode {
    pub fn computed(name: &str, idx: usize, sources: &[&str], source_indices: &[usize]) -> Self {
        Self {
            name: name.into(),
            idx,
            relation: Relation::ComputedFrom,
            sources: sources.iter().map(|s| s.to_string()).collect(),
            source_indices: source_indices.to_vec(),
        }
    }

    pub fn command(name: &str, idx: usize) -> Self {
        Self { name: name.into(), idx, relation: Relation::ComesFrom, sources: vec![], source_indices: vec![] }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataFlowGraph {
    pub nodes: Vec<DfgNode>,
    /// Constructs that could not be analyzed.
    pub skipped: usize,
}

pub type Edge = (String, Relation, Vec<String>);

impl DataFlowGraph {
    /// Index-free edges with sorted source names.
    pub fn edges(&self) -> Vec<Edge> {
        self.nodes
            .iter()
            .map(|n| {
                let mut s = n.sources.clone();
                s.sort();
                (n.name.clone(), n.relation, s)
            })
            .collect()
    }
}

struct Walker<'a> {
    stream: &'a TclTokenStream,
    db: &'a EdaCommandDb,
    nodes: Vec<DfgNode>,
    scopes: Vec<HashMap<String, usize>>,
    skipped: usize,
}

fn var_base(name: &str) -> &str {
    name.split('(').next().unwrap_or(name)
}

impl Walker<'_> {
    fn bare_literal(&self, word: &Word) -> Option<String> {
        match word {
            Word::Bare { .. } | Word::Quoted { .. } => self.stream.literal(word).map(str::to_string),
            Word::Braced { inner: None, .. } => self.stream.literal(word).map(str::to_string),
            Word::Braced { .. } => None,
        }
    }

    fn script(&mut self, script: &Script) {
        for cmd in &script.commands {
            self.command(cmd);
        }
    }

    /// Visits command substitutions inside `word`.
    fn substitutions(&mut self, word: &Word) {
        for part in word.parts() {
            if let Part::Cmd { script, .. } = part {
                self.script(script);
            }
        }
        if let Word::Braced { inner: Some(exp), .. } = word {
            match exp {
                Expansion::Script(s) => self.script(s),
                Expansion::Expr(s) => self.expression(s),
            }
        }
    }

    fn expression(&mut self, script: &Script) {
        for cmd in &script.commands {
            for w in &cmd.words {
                self.substitutions(w);
            }
        }
    }

    fn refs_into(&self, word: &Word, out: &mut Vec<String>) {
        let push = |name: &str, out: &mut Vec<String>| {
            if !out.iter().any(|n| n == name) {
                out.push(name.to_string());
            }
        };
        for part in word.parts() {
            match part {
                Part::Var { name, .. } => push(name, out),
                Part::Cmd { script, .. } => self.script_refs_into(script, out),
                Part::Text(_) => {}
            }
        }
        if let Word::Braced { inner: Some(Expansion::Script(s) | Expansion::Expr(s)), .. } = word {
            self.script_refs_into(s, out);
        }
    }

    fn script_refs_into(&self, script: &Script, out: &mut Vec<String>) {
        for cmd in &script.commands {
            for w in &cmd.words {
                self.refs_into(w, out);
            }
        }
    }

    fn define(&mut self, name: &str, sources: Vec<String>) {
        let scope = self.scopes.last_mut().expect("scope stack is never empty");
        let source_indices = sources.iter().filter_map(|s| scope.get(s).copied()).collect();
        let idx = self.nodes.len();
        scope.insert(name.to_string(), idx);
        self.nodes.push(DfgNode { name: name.to_string(), idx, relation: Relation::ComputedFrom, sources, source_indices });
    }

    fn assignment(&mut self, words: &[Word], self_reference: bool) {
        for w in &words[2..] {
            self.substitutions(w);
        }
        let Some(target) = self.bare_literal(&words[1]) else {
            self.substitutions(&words[1]);
            self.skipped += 1;
            return;
        };
        let target = var_base(&target).to_string();
        let mut sources = Vec::new();
        if self_reference {
            sources.push(target.clone());
        }
        for w in &words[2..] {
            self.refs_into(w, &mut sources);
        }
        self.define(&target, sources);
    }

    fn command(&mut self, cmd: &Command) {
        let words = &cmd.words;
        let name = match &words[0] {
            w @ Word::Bare { .. } => self.stream.literal(w).map(str::to_string),
            _ => None,
        };
        let n = words.len();
        match name.as_deref() {
            Some("set") if n == 3 => self.assignment(words, false),
            Some("set") if n == 2 => self.substitutions(&words[1]),
            Some("append" | "lappend") if n >= 2 => self.assignment(words, true),
            Some("incr") if n == 2 || n == 3 => self.assignment(words, true),
            Some("proc") if n == 4 => {
                self.scopes.push(HashMap::new());
                self.substitutions(&words[3]);
                self.scopes.pop();
            }
            Some("foreach") if n >= 4 && n.is_multiple_of(2) => {
                let pairs: Vec<(&Word, &Word)> = (1..n - 1).step_by(2).map(|i| (&words[i], &words[i + 1])).collect();
                for (_, list) in &pairs {
                    self.substitutions(list);
                }
                for (vars, list) in &pairs {
                    let mut sources = Vec::new();
                    self.refs_into(list, &mut sources);
                    match self.bare_literal(vars) {
                        Some(names) => {
                            for v in names.split_whitespace() {
                                self.define(var_base(v), sources.clone());
                            }
                        }
                        None => self.skipped += 1,
                    }
                }
                self.substitutions(&words[n - 1]);
            }
            Some("set" | "append" | "lappend" | "incr" | "proc" | "foreach") => {
                self.skipped += 1;
                for w in words {
                    self.substitutions(w);
                }
            }
            _ => {
                for w in words {
                    self.substitutions(w);
                }
                if let Some(cmd) = name.filter(|c| self.db.contains(c)) {
                    let idx = self.nodes.len();
                    self.nodes.push(DfgNode::command(&cmd, idx));
                }
            }
        }
    }
}

pub fn extract_dfg(stream: &TclTokenStream, db: &EdaCommandDb) -> DataFlowGraph {
    let mut w = Walker { stream, db, nodes: Vec::new(), scopes: vec![HashMap::new()], skipped: 0 };
    w.script(&stream.script);
    DataFlowGraph { nodes: w.nodes, skipped: w.skipped + stream.diagnostics.len() }
}

/// Share of reference edges present in the candidate, multiplicity clipped.
pub fn dataflow_match<T: Float>(reference: &DataFlowGraph, candidate: &DataFlowGraph) -> Component<T> {
    let mut available: HashMap<Edge, usize> = HashMap::new();
    for e in candidate.edges() {
        *available.entry(e).or_insert(0) += 1;
    }
    let ref_edges = reference.edges();
    let mut matched = 0;
    for e in &ref_edges {
        if let Some(n) = available.get_mut(e) {
            if *n > 0 {
                *n -= 1;
                matched += 1;
            }
        }
    }
    let empty_score = if candidate.nodes.is_empty() { T::from(100.0).unwrap() } else { T::zero() };
    Component::ratio(matched, ref_edges.len(), empty_score)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebleu::tokenize::tokenize;

    fn dfg(src: &str) -> DataFlowGraph {
        extract_dfg(&tokenize(src).unwrap(), EdaCommandDb::builtin())
    }

    #[test]
    fn single_set() {
        assert_eq!(dfg("set x 5").nodes, [DfgNode::computed("x", 0, &[], &[])]);
    }

    #[test]
    fn set_chain() {
        assert_eq!(dfg("set x 5\nset y $x").nodes[1], DfgNode::computed("y", 1, &["x"], &[0]));
    }

    #[test]
    fn tool_command() {
        assert_eq!(dfg("placeDesign").nodes, [DfgNode::command("placeDesign", 0)]);
    }

    #[test]
    fn undefined_source_has_no_index() {
        assert_eq!(dfg("set y \"$a/$b\"\n").nodes, [DfgNode::computed("y", 0, &["a", "b"], &[])]);
    }

    #[test]
    fn substitution_precedes_assignment() {
        let g = dfg("set d top\nset pins [dbGet $d.terms.name]");
        assert_eq!(
            g.nodes,
            [DfgNode::computed("d", 0, &[], &[]), DfgNode::command("dbGet", 1), DfgNode::computed("pins", 2, &["d"], &[0])]
        );
    }

    #[test]
    fn proc_scope_is_fresh() {
        let g = dfg("set a 1\nproc f {x} {\n  set b $a\n}\nset c $a");
        assert_eq!(
            g.nodes,
            [
                DfgNode::computed("a", 0, &[], &[]),
                DfgNode::computed("b", 1, &["a"], &[]),
                DfgNode::computed("c", 2, &["a"], &[0]),
            ]
        );
    }

    #[test]
    fn dataflow_examples() {
        let r = dfg("set a 1\nset b $a\ncompile\nset c $b\nplaceDesign");
        assert_eq!(dataflow_match::<f64>(&r, &r).score, 100.0);
        let c = dfg("set a 1\nset b $a\ncompile\nplaceDesign");
        assert_eq!(dataflow_match::<f64>(&r, &c).score, 80.0);
        let renamed = dfg("set a 1\nset q $a\ncompile\nset c $q\nplaceDesign");
        assert!(dataflow_match::<f64>(&r, &renamed).score < 100.0);
        let empty = DataFlowGraph::default();
        assert_eq!(dataflow_match::<f64>(&empty, &empty).score, 100.0);
        let m = dataflow_match::<f64>(&empty, &r);
        assert!(m.empty_reference);
        assert_eq!(m.score, 0.0);
    }

    #[test]
    fn indices_increase() {
        let g = dfg("foreach f $l {\n set g [analyze $f]\n if {$g} { compile } else { set h 2 }\n}\nincr n");
        for (i, n) in g.nodes.iter().enumerate() {
            assert_eq!(n.idx, i);
            assert!(n.source_indices.iter().all(|s| *s < i));
        }
    }
}
