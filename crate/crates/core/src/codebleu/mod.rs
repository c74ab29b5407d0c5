// SPDX-License-Identifier: Apache-2.0

//! CodeBLEU for TCL scripts.
//!
//! Four components on a 0 to 100 scale (plain n-gram, keyword-weighted
//! n-gram, line syntax match, dataflow match) are combined with
//! stage-specific weights. The stage comes from the caller or is detected
//! from the reference script's tool commands.

pub mod db;
pub mod dfg;
pub mod ngram;
pub mod syntax;
pub mod tokenize;

use num_traits::Float;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stage::Stage;

pub use db::{detect_stage, EdaCommandDb, StageDetection, DETECTION_THRESHOLD, FALLBACK_STAGE};
pub use dfg::{dataflow_match, extract_dfg, DataFlowGraph, DfgNode, Relation};
pub use ngram::{ngram_match, weighted_ngram_match, DEFAULT_KEYWORD_WEIGHT, DEFAULT_MAX_N};
pub use syntax::syntax_match;
pub use tokenize::{tokenize, tokenize_lenient, TclTokenStream, TokenKind, TokenizeError};

/// One similarity component with its raw counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Component<T> {
    pub score: T,
    pub matched: usize,
    pub total: usize,
    pub empty_reference: bool,
}

impl<T: Float> Component<T> {
    /// `100 * matched / total`, or `empty_score` when there is nothing to match.
    pub fn ratio(matched: usize, total: usize, empty_score: T) -> Self {
        if total == 0 {
            return Self { score: empty_score, matched, total, empty_reference: true };
        }
        let score = T::from(100.0).unwrap() * T::from(matched).unwrap() / T::from(total).unwrap();
        Self { score, matched, total, empty_reference: false }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WeightsError {
    #[error("weight {0} is negative or not finite")]
    Invalid(&'static str),
    #[error("weights sum to {0}, expected 1")]
    Sum(f64),
}

/// Component weights in the order ngram, weighted ngram, syntax, dataflow.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights<T> {
    pub ngram: T,
    pub weighted_ngram: T,
    pub syntax: T,
    pub dataflow: T,
}

impl<T: Float> Weights<T> {
    pub fn new(ngram: T, weighted_ngram: T, syntax: T, dataflow: T) -> Result<Self, WeightsError> {
        let w = Self { ngram, weighted_ngram, syntax, dataflow };
        w.validate()?;
        Ok(w)
    }

    fn from_f64(v: [f64; 4]) -> Self {
        let c = |x: f64| T::from(x).unwrap();
        Self { ngram: c(v[0]), weighted_ngram: c(v[1]), syntax: c(v[2]), dataflow: c(v[3]) }
    }

    /// Weights used for scripts of `stage`.
    pub fn for_stage(stage: Stage) -> Self {
        let w = Self::from_f64(match stage {
            Stage::Synthesis => [0.20, 0.30, 0.25, 0.25],
            Stage::Placement => [0.15, 0.25, 0.30, 0.30],
            Stage::Cts => [0.20, 0.25, 0.30, 0.25],
            Stage::Route => [0.20, 0.25, 0.25, 0.30],
        });
        w.validate().expect("stage weights sum to one");
        w
    }

    pub fn as_array(&self) -> [T; 4] {
        [self.ngram, self.weighted_ngram, self.syntax, self.dataflow]
    }

    pub fn sum(&self) -> T {
        self.as_array().into_iter().fold(T::zero(), |a, b| a + b)
    }

    pub fn validate(&self) -> Result<(), WeightsError> {
        let names = ["ngram", "weighted_ngram", "syntax", "dataflow"];
        for (v, name) in self.as_array().into_iter().zip(names) {
            if !v.is_finite() || v < T::zero() {
                return Err(WeightsError::Invalid(name));
            }
        }
        let tol = T::from(1e-12).unwrap().max(T::epsilon() * T::from(8.0).unwrap());
        let sum = self.sum();
        if (sum - T::one()).abs() > tol {
            return Err(WeightsError::Sum(sum.to_f64().unwrap_or(f64::NAN)));
        }
        Ok(())
    }

    /// Weighted sum of component scores given in the same order.
    pub fn combine(&self, components: [T; 4]) -> T {
        self.as_array().into_iter().zip(components).fold(T::zero(), |acc, (w, c)| acc + w * c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageSource {
    Argument,
    Detected,
}

/// Conditions worth surfacing next to a score.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportFlags {
    pub syntax_empty_reference: bool,
    pub dataflow_empty_reference: bool,
    pub reference_diagnostics: Vec<String>,
    pub candidate_diagnostics: Vec<String>,
    /// Constructs the dataflow extractor skipped, reference then candidate.
    pub dfg_skipped: [usize; 2],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageInfo<T> {
    pub stage: Stage,
    pub confidence: T,
    pub source: StageSource,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report<T> {
    pub stage_detected: StageInfo<T>,
    pub ngram: T,
    pub weighted_ngram: T,
    pub syntax: T,
    pub dataflow: T,
    pub total: T,
    pub weights: Weights<T>,
    pub flags: ReportFlags,
}

impl<T: Float> Report<T> {
    pub fn components(&self) -> [T; 4] {
        [self.ngram, self.weighted_ngram, self.syntax, self.dataflow]
    }
}

/// Evaluator settings.
#[derive(Debug, Clone)]
pub struct Evaluator<'a> {
    pub db: &'a EdaCommandDb,
    pub max_n: usize,
    pub keyword_weight: f64,
}

impl Default for Evaluator<'static> {
    fn default() -> Self {
        Self { db: EdaCommandDb::builtin(), max_n: DEFAULT_MAX_N, keyword_weight: DEFAULT_KEYWORD_WEIGHT }
    }
}

impl Evaluator<'_> {
    pub fn evaluate<T: Float>(&self, reference: &str, candidate: &str, stage: Option<Stage>) -> Report<T> {
        let stage_detected = match stage {
            Some(stage) => StageInfo { stage, confidence: T::one(), source: StageSource::Argument },
            None => {
                let d: StageDetection<T> = detect_stage(reference, self.db);
                StageInfo { stage: d.stage, confidence: d.confidence, source: StageSource::Detected }
            }
        };
        let rs = tokenize_lenient(reference);
        let cs = tokenize_lenient(candidate);
        let ngram: T = ngram_match(&rs, &cs, self.max_n);
        let lambda = T::from(self.keyword_weight).unwrap();
        let weighted: T = weighted_ngram_match(&rs, &cs, self.db, self.max_n, lambda);
        let syn: Component<T> = syntax_match(reference, candidate);
        let rg = extract_dfg(&rs, self.db);
        let cg = extract_dfg(&cs, self.db);
        let df: Component<T> = dataflow_match(&rg, &cg);
        let weights = Weights::for_stage(stage_detected.stage);
        let total = weights.combine([ngram, weighted, syn.score, df.score]);
        let flags = ReportFlags {
            syntax_empty_reference: syn.empty_reference,
            dataflow_empty_reference: df.empty_reference,
            reference_diagnostics: rs.diagnostics.iter().map(ToString::to_string).collect(),
            candidate_diagnostics: cs.diagnostics.iter().map(ToString::to_string).collect(),
            dfg_skipped: [rg.skipped, cg.skipped],
        };
        Report {
            stage_detected,
            ngram,
            weighted_ngram: weighted,
            syntax: syn.score,
            dataflow: df.score,
            total,
            weights,
            flags,
        }
    }
}

/// Scores `candidate` against `reference` with the bundled command database.
pub fn evaluate<T: Float>(reference: &str, candidate: &str, stage: Option<Stage>) -> Report<T> {
    Evaluator::default().evaluate(reference, candidate, stage)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn stage_weights() {
        let expect = [
            (Stage::Synthesis, [0.20, 0.30, 0.25, 0.25]),
            (Stage::Placement, [0.15, 0.25, 0.30, 0.30]),
            (Stage::Cts, [0.20, 0.25, 0.30, 0.25]),
            (Stage::Route, [0.20, 0.25, 0.25, 0.30]),
        ];
        for (stage, w) in expect {
            let got = Weights::<f64>::for_stage(stage);
            assert_eq!(got.as_array(), w);
            assert!((got.sum() - 1.0).abs() <= 1e-12);
        }
        assert!(Weights::new(0.5, 0.5, 0.5, 0.0).is_err());
        assert!(Weights::new(-0.5, 0.5, 0.5, 0.5).is_err());
    }

    #[test]
    fn synthesis_recombination() {
        let t = Weights::<f64>::for_stage(Stage::Synthesis).combine([24.806, 89.04, 96.79, 97.30]);
        assert!((t - 80.19).abs() <= 0.01, "{t}");
        assert_eq!(Weights::<f64>::for_stage(Stage::Route).combine([0.0; 4]), 0.0);
    }

    #[test]
    fn self_match_is_100() {
        let s = "set DESIGN top\nanalyze -format verilog $DESIGN.v\nelaborate $DESIGN\ncompile -map_effort high\n";
        for stage in Stage::ALL {
            let r: Report<f64> = evaluate(s, s, Some(stage));
            assert_eq!(r.components(), [100.0; 4]);
            assert!((r.total - 100.0).abs() < 1e-9);
        }
        let r: Report<f64> = evaluate(s, s, None);
        assert_eq!(r.stage_detected.stage, Stage::Synthesis);
        assert_eq!(r.stage_detected.source, StageSource::Detected);
    }

    #[test]
    fn stage_detected_from_reference() {
        let reference = "placeDesign\nrefinePlace\n";
        let r: Report<f64> = evaluate(reference, "compile\n", None);
        assert_eq!(r.stage_detected.stage, Stage::Placement);
    }

    #[test]
    fn malformed_candidate_is_flagged() {
        let r: Report<f64> = evaluate("set a 1\n", "set a {1\n", None);
        assert!(!r.flags.candidate_diagnostics.is_empty());
        assert!(r.total < 100.0);
    }

    proptest! {
        #[test]
        fn total_is_dot_product(c in proptest::array::uniform4(0.0f64..=100.0), s in 0usize..4) {
            let w = Weights::<f64>::for_stage(Stage::ALL[s]);
            let t = w.combine(c);
            let dot: f64 = w.as_array().iter().zip(c.iter()).map(|(a, b)| a * b).sum();
            prop_assert!((t - dot).abs() < 1e-9);
            prop_assert!((0.0..=100.0 + 1e-9).contains(&t));
        }
    }
}
