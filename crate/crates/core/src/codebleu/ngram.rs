// SPDX-License-Identifier: Apache-2.0

use std::collections::HashMap;

use num_traits::Float;

use super::db::EdaCommandDb;
use super::tokenize::TclTokenStream;

pub const DEFAULT_MAX_N: usize = 4;
pub const DEFAULT_KEYWORD_WEIGHT: f64 = 4.0;

fn counts<'a>(tokens: &'a [&'a str], n: usize) -> HashMap<&'a [&'a str], usize> {
    let mut m = HashMap::new();
    if tokens.len() >= n {
        for g in tokens.windows(n) {
            *m.entry(g).or_insert(0) += 1;
        }
    }
    m
}

/// Clipped BLEU over token texts with a per-n-gram weight. Orders for which
/// the candidate has no n-grams are left out of the geometric mean.
pub fn weighted_bleu<T, W>(reference: &[&str], candidate: &[&str], max_n: usize, weight: W) -> T
where
    T: Float,
    W: Fn(&[&str]) -> T,
{
    let max_n = max_n.max(1);
    if candidate.is_empty() || reference.is_empty() {
        return T::zero();
    }
    let mut log_sum = T::zero();
    let mut orders = 0usize;
    for n in 1..=max_n {
        let cand = counts(candidate, n);
        if cand.is_empty() {
            continue;
        }
        let refc = counts(reference, n);
        let mut matched = T::zero();
        let mut total = T::zero();
        for (g, c) in &cand {
            let w = weight(g);
            let clip = (*c).min(refc.get(g).copied().unwrap_or(0));
            matched = matched + w * T::from(clip).unwrap();
            total = total + w * T::from(*c).unwrap();
        }
        if matched <= T::zero() {
            return T::zero();
        }
        log_sum = log_sum + (matched / total).ln();
        orders += 1;
    }
    let c = T::from(candidate.len()).unwrap();
    let r = T::from(reference.len()).unwrap();
    let bp = if c > r { T::one() } else { (T::one() - r / c).exp() };
    let hundred = T::from(100.0).unwrap();
    let score = if orders == 0 { T::zero() } else { hundred * bp * (log_sum / T::from(orders).unwrap()).exp() };
    score.min(hundred)
}

pub fn ngram_match<T: Float>(reference: &TclTokenStream, candidate: &TclTokenStream, max_n: usize) -> T {
    weighted_bleu(&reference.texts(), &candidate.texts(), max_n, |_| T::one())
}

/// N-gram match where n-grams containing a keyword count `lambda` times.
pub fn weighted_ngram_match<T: Float>(
    reference: &TclTokenStream,
    candidate: &TclTokenStream,
    db: &EdaCommandDb,
    max_n: usize,
    lambda: T,
) -> T {
    weighted_bleu(&reference.texts(), &candidate.texts(), max_n, |g| {
        if g.iter().any(|t| db.is_keyword(t)) {
            lambda
        } else {
            T::one()
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebleu::tokenize::tokenize;
    use proptest::prelude::*;

    /// Brute-force BLEU: n-grams enumerated by index pairs, counted by
    /// linear search.
    fn oracle(reference: &[&str], candidate: &[&str], max_n: usize, weight: &dyn Fn(&[&str]) -> f64) -> f64 {
        if candidate.is_empty() || reference.is_empty() {
            return 0.0;
        }
        let mut logs = Vec::new();
        for n in 1..=max_n {
            if candidate.len() < n {
                continue;
            }
            let cgrams: Vec<&[&str]> = (0..=candidate.len() - n).map(|i| &candidate[i..i + n]).collect();
            let rgrams: Vec<&[&str]> =
                if reference.len() >= n { (0..=reference.len() - n).map(|i| &reference[i..i + n]).collect() } else { vec![] };
            let mut seen: Vec<&[&str]> = Vec::new();
            let (mut num, mut den) = (0.0, 0.0);
            for g in &cgrams {
                if seen.contains(g) {
                    continue;
                }
                seen.push(g);
                let c = cgrams.iter().filter(|x| *x == g).count();
                let r = rgrams.iter().filter(|x| *x == g).count();
                num += weight(g) * c.min(r) as f64;
                den += weight(g) * c as f64;
            }
            if num == 0.0 {
                return 0.0;
            }
            logs.push((num / den).ln());
        }
        let (c, r) = (candidate.len() as f64, reference.len() as f64);
        let bp = if c > r { 1.0 } else { (1.0 - r / c).exp() };
        100.0 * bp * (logs.iter().sum::<f64>() / logs.len() as f64).exp()
    }

    fn words(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    #[test]
    fn identical_is_100() {
        let s = tokenize("set a 1\ncompile -map_effort high\nreport_area > a.rpt").unwrap();
        assert_eq!(ngram_match::<f64>(&s, &s, 4), 100.0);
        for lambda in [1.0, 4.0, 9.5] {
            assert_eq!(weighted_ngram_match::<f64>(&s, &s, EdaCommandDb::builtin(), 4, lambda), 100.0);
        }
    }

    #[test]
    fn disjoint_is_zero() {
        let a = tokenize("alpha beta gamma").unwrap();
        let b = tokenize("delta epsilon zeta").unwrap();
        assert_eq!(ngram_match::<f64>(&a, &b, 4), 0.0);
        assert_eq!(weighted_ngram_match::<f64>(&a, &b, EdaCommandDb::builtin(), 4, 4.0), 0.0);
    }

    #[test]
    fn one_changed_token_of_twenty() {
        let reference: Vec<String> = (0..20).map(|i| format!("w{i}")).collect();
        let mut candidate = reference.clone();
        candidate[9] = "zz".into();
        let r = tokenize(&reference.join(" ")).unwrap();
        let c = tokenize(&candidate.join(" ")).unwrap();
        let expected = oracle(&r.texts(), &c.texts(), 4, &|_| 1.0);
        // 19/20, 17/19, 15/18, 13/17 under a unit brevity penalty
        let mean_log = ((19.0 / 20.0f64).ln() + (17.0 / 19.0f64).ln() + (15.0 / 18.0f64).ln() + (13.0 / 17.0f64).ln()) / 4.0;
        assert!((expected - 100.0 * mean_log.exp()).abs() < 1e-9);
        assert!((ngram_match::<f64>(&r, &c, 4) - expected).abs() < 1e-9);
    }

    #[test]
    fn keywords_kept_beats_plain() {
        let db = EdaCommandDb::builtin();
        let r = tokenize(
            "analyze -format verilog top.v\nelaborate top\ncompile -map_effort high -area_effort low\nreport_timing -max_paths 10 -nworst 2",
        )
        .unwrap();
        let c = tokenize(
            "analyze -format verilog top.v\nelaborate top\ncompile -map_effort low -area_effort high\nreport_timing -max_paths 2 -nworst 10",
        )
        .unwrap();
        let plain: f64 = ngram_match(&r, &c, 4);
        let weighted: f64 = weighted_ngram_match(&r, &c, db, 4, 4.0);
        let direct = oracle(&r.texts(), &c.texts(), 4, &|g| if g.iter().any(|t| db.is_keyword(t)) { 4.0 } else { 1.0 });
        assert!((weighted - direct).abs() < 1e-9);
        assert!(weighted > plain, "{weighted} vs {plain}");
    }

    #[test]
    fn short_candidate_orders_skipped() {
        let r = tokenize("placeDesign").unwrap();
        assert_eq!(ngram_match::<f64>(&r, &r, 4), 100.0);
        let empty = tokenize("# nothing").unwrap();
        assert_eq!(ngram_match::<f64>(&r, &empty, 4), 0.0);
    }

    #[test]
    fn f32_agrees() {
        let r = tokenize("set a 1\ncompile x y").unwrap();
        let c = tokenize("set a 2\ncompile x y").unwrap();
        let a: f64 = ngram_match(&r, &c, 4);
        let b: f32 = ngram_match(&r, &c, 4);
        assert!((a - b as f64).abs() < 1e-3);
    }

    proptest! {
        #[test]
        fn lambda_one_is_plain(a in proptest::collection::vec("[a-e]|set|compile|placeDesign", 0..25),
                               b in proptest::collection::vec("[a-e]|set|compile|placeDesign", 0..25)) {
            let (ra, rb) = (a.join(" "), b.join(" "));
            let (sa, sb) = (tokenize(&ra).unwrap(), tokenize(&rb).unwrap());
            let plain: f64 = ngram_match(&sa, &sb, 4);
            let weighted: f64 = weighted_ngram_match(&sa, &sb, EdaCommandDb::builtin(), 4, 1.0);
            prop_assert_eq!(plain, weighted);
            let o = oracle(&words(&ra), &words(&rb), 4, &|_| 1.0);
            prop_assert!((plain - o).abs() < 1e-9);
            prop_assert!((0.0..=100.0).contains(&plain));
        }
    }
}
