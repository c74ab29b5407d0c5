// SPDX-License-Identifier: Apache-2.0

mod common;

use edaflow::codebleu::{dataflow_match, extract_dfg, syntax_match, tokenize_lenient, EdaCommandDb};
use proptest::prelude::*;

fn check_pair(reference: &str, candidate: &str) -> Result<(), String> {
    let syn = syntax_match::<f64>(reference, candidate);
    let (m, t) = common::oracle_syntax_counts(reference, candidate);
    if (syn.matched, syn.total) != (m, t) || syn.score != common::oracle_score(m, t, 0.0) {
        return Err(format!("syntax {:?} vs oracle {m}/{t}", syn));
    }
    let db = EdaCommandDb::builtin();
    let rg = extract_dfg(&tokenize_lenient(reference), db);
    let cg = extract_dfg(&tokenize_lenient(candidate), db);
    let df = dataflow_match::<f64>(&rg, &cg);
    let (m, t) = common::oracle_dataflow_counts(&rg, &cg);
    if (df.matched, df.total) != (m, t) || df.score != common::oracle_dataflow_score(&rg, &cg) {
        return Err(format!("dataflow {:?} vs oracle {m}/{t}", df));
    }
    Ok(())
}

#[test]
fn corpus_matches_oracles() {
    let corpus = common::oracle_corpus(120, 7);
    assert!(corpus.iter().all(|(r, c)| r.lines().count() <= 15 && c.lines().count() <= 15));
    let distinct = corpus.iter().filter(|(r, c)| r != c).count();
    assert!(distinct >= 50, "{distinct}");
    for (i, (r, c)) in corpus.iter().enumerate() {
        check_pair(r, c).unwrap_or_else(|e| panic!("pair {i}: {e}\n--- reference\n{r}\n--- candidate\n{c}"));
    }
}

#[test]
fn fixture_pairs_match_oracles() {
    for stem in ["route", "synth"] {
        let r = common::pair_script(&format!("{stem}_reference.tcl"));
        let c = common::pair_script(&format!("{stem}_candidate.tcl"));
        check_pair(&r, &c).unwrap();
        check_pair(&c, &r).unwrap();
    }
}

fn line() -> impl Strategy<Value = String> {
    prop_oneof![
        "[a-c]".prop_map(|v| format!("set {v} 1")),
        ("[a-c]", "[a-c]").prop_map(|(v, w)| format!("set {v} ${w}")),
        ("[a-c]", "[a-c]").prop_map(|(v, w)| format!("append {v} ${w}")),
        Just("compile".to_string()),
        Just("placeDesign".to_string()),
        Just("# comment".to_string()),
        Just(String::new()),
        "[a-c]".prop_map(|v| format!("  incr {v} ;# step")),
        "[a-c]".prop_map(|v| format!("set {v} [dbGet top.name]")),
    ]
}

proptest! {
    #[test]
    fn random_scripts_match_oracles(r in prop::collection::vec(line(), 0..15), c in prop::collection::vec(line(), 0..15)) {
        let (r, c) = (r.join("\n"), c.join("\n"));
        prop_assert!(check_pair(&r, &c).is_ok(), "{:?}", check_pair(&r, &c));
    }
}

#[test]
fn stored_synthesis_report_agrees_with_oracles() {
    let r = common::pair_script("synth_reference.tcl");
    let c = common::pair_script("synth_candidate.tcl");
    let stored: serde_json::Value = serde_json::from_str(&common::pair_script("synth_report.json")).unwrap();
    let (m, t) = common::oracle_syntax_counts(&r, &c);
    assert_eq!(stored["syntax"].as_f64().unwrap(), common::oracle_score(m, t, 0.0));
    let db = EdaCommandDb::builtin();
    let rg = extract_dfg(&tokenize_lenient(&r), db);
    let cg = extract_dfg(&tokenize_lenient(&c), db);
    assert_eq!(stored["dataflow"].as_f64().unwrap(), common::oracle_dataflow_score(&rg, &cg));
    let report: edaflow::CodeBleuReport = edaflow::codebleu::evaluate(&r, &c, None);
    assert_eq!(serde_json::to_value(&report).unwrap(), stored);
}
