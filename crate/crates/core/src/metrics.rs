//! SQuAD-style answer scoring: normalization, token F1, exact match and
//! corpus aggregation.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::text::is_punctuation;

static ARTICLES: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b(a|an|the)\b").unwrap());

/// Lowercase, delete punctuation characters, drop the articles
/// "a"/"an"/"the", split on whitespace.
pub fn normalize_answer(text: &str) -> Vec<String> {
    let lower = text.to_lowercase();
    let no_punct: String = lower.chars().filter(|c| !is_punctuation(*c)).collect();
    let no_articles = ARTICLES.replace_all(&no_punct, " ");
    no_articles.split_whitespace().map(str::to_string).collect()
}

fn f1_tokens(pred: &[String], gold: &[String]) -> f64 {
    if pred.is_empty() || gold.is_empty() {
        return if pred.is_empty() && gold.is_empty() { 1.0 } else { 0.0 };
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in gold {
        *counts.entry(t.as_str()).or_default() += 1;
    }
    let mut overlap = 0usize;
    for t in pred {
        if let Some(c) = counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    if overlap == 0 {
        return 0.0;
    }
    let precision = overlap as f64 / pred.len() as f64;
    let recall = overlap as f64 / gold.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

pub fn token_f1(prediction: &str, gold: &str) -> f64 {
    f1_tokens(&normalize_answer(prediction), &normalize_answer(gold))
}

pub fn exact_match(prediction: &str, gold: &str) -> f64 {
    if normalize_answer(prediction) == normalize_answer(gold) {
        1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleScore {
    pub id: String,
    pub f1: f64,
    pub em: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub f1: f64,
    pub exact_match: f64,
    pub n_evaluated: usize,
    pub per_example: Vec<ExampleScore>,
}

impl EvalResult {
    fn from_scores(per_example: Vec<ExampleScore>) -> Self {
        let n = per_example.len();
        let (f1, em) = if n == 0 {
            (0.0, 0.0)
        } else {
            let f1: f64 = per_example.iter().map(|s| s.f1).sum();
            let em: f64 = per_example.iter().map(|s| s.em).sum();
            (f1 / n as f64, em / n as f64)
        };
        EvalResult {
            f1,
            exact_match: em,
            n_evaluated: n,
            per_example,
        }
    }
}

/// Scores `predictions` against every pair of `corpus`. Each example takes
/// the best score over its gold and auxiliary references.
pub fn evaluate<S: AsRef<str>>(predictions: &HashMap<String, S>, corpus: &Corpus) -> Result<EvalResult> {
    let missing: Vec<String> = corpus
        .iter()
        .filter(|p| !predictions.contains_key(&p.id))
        .map(|p| p.id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingPredictions(missing));
    }
    let extra = predictions.len() + missing.len() - corpus.len();
    if extra > 0 {
        log::warn!("ignoring {extra} predictions with no matching pair");
    }

    let scores = corpus
        .iter()
        .map(|pair| {
            let pred = normalize_answer(predictions[&pair.id].as_ref());
            let (mut f1, mut em) = (0.0f64, 0.0f64);
            for reference in pair.references() {
                let gold = normalize_answer(reference);
                f1 = f1.max(f1_tokens(&pred, &gold));
                em = em.max(if pred == gold { 1.0 } else { 0.0 });
            }
            ExampleScore {
                id: pair.id.clone(),
                f1,
                em,
            }
        })
        .collect();
    Ok(EvalResult::from_scores(scores))
}

/// Reads a predictions file: a JSON object mapping id to answer string.
pub fn load_predictions(path: impl AsRef<Path>) -> Result<HashMap<String, String>> {
    let path = path.as_ref();
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&raw).map_err(|e| Error::parse(path, &e))
}

/// Writes predictions in the same shape, keys sorted.
pub fn save_predictions(predictions: &HashMap<String, String>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let sorted: BTreeMap<_, _> = predictions.iter().collect();
    let body = serde_json::to_string_pretty(&sorted)?;
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::QaPair;
    use proptest::prelude::*;

    fn toks(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn normalization_examples() {
        assert_eq!(normalize_answer("The Red Car!"), toks(&["red", "car"]));
        assert_eq!(normalize_answer(""), Vec::<String>::new());
        assert_eq!(normalize_answer("an  apple"), toks(&["apple"]));
        // punctuation is deleted, not replaced by a space
        assert_eq!(normalize_answer("U.S.A."), toks(&["usa"]));
        assert_eq!(normalize_answer("theater"), toks(&["theater"]));
    }

    #[test]
    fn f1_examples() {
        assert_eq!(token_f1("red car", "red car"), 1.0);
        assert_eq!(token_f1("red car", "blue door"), 0.0);
        assert!((token_f1("the red car", "red car door") - 0.8).abs() < 1e-12);
        assert_eq!(token_f1("", ""), 1.0);
        assert_eq!(token_f1("the", "a"), 1.0);
        assert_eq!(token_f1("car", ""), 0.0);
    }

    #[test]
    fn em_examples() {
        assert_eq!(exact_match("The cat", "cat"), 1.0);
        assert_eq!(exact_match("cat", "cats"), 0.0);
        assert_eq!(exact_match("", ""), 1.0);
    }

    fn pair(id: &str, answer: &str, aux: &[&str]) -> QaPair {
        QaPair {
            id: id.into(),
            question: "q?".into(),
            context: format!("x {answer} y"),
            answer_text: answer.into(),
            answer_start: 2,
            domain_tag: "t".into(),
            aux_answers: aux.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn evaluate_means_and_max_over_references() {
        let corpus = Corpus::new(
            "c",
            vec![pair("a", "red car", &[]), pair("b", "red car door", &["the red car door"])],
        )
        .unwrap();
        let mut preds = HashMap::new();
        preds.insert("a".to_string(), "red car".to_string());
        preds.insert("b".to_string(), "red".to_string());
        let r = evaluate(&preds, &corpus).unwrap();
        assert_eq!(r.per_example[0].f1, 1.0);
        assert!((r.per_example[1].f1 - 0.5).abs() < 1e-12);
        assert!((r.f1 - 0.75).abs() < 1e-12);
        assert_eq!(r.exact_match, 0.5);
        assert_eq!(r.n_evaluated, 2);
    }

    #[test]
    fn reference_max_picks_best() {
        let corpus = Corpus::new("c", vec![pair("a", "red car", &["the red car door"])]).unwrap();
        let preds: HashMap<String, &str> = [("a".to_string(), "red car")].into();
        assert_eq!(evaluate(&preds, &corpus).unwrap().f1, 1.0);
    }

    #[test]
    fn missing_ids_listed() {
        let corpus = Corpus::new("c", vec![pair("a", "x", &[]), pair("b", "y", &[]), pair("c", "z", &[])]).unwrap();
        let preds: HashMap<String, &str> = [("b".to_string(), "y"), ("zz".to_string(), "q")].into();
        match evaluate(&preds, &corpus) {
            Err(Error::MissingPredictions(ids)) => assert_eq!(ids, vec!["a", "c"]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn extra_predictions_ignored() {
        let corpus = Corpus::new("c", vec![pair("a", "x", &[])]).unwrap();
        let preds: HashMap<String, &str> = [("a".to_string(), "x"), ("zz".to_string(), "q")].into();
        let r = evaluate(&preds, &corpus).unwrap();
        assert_eq!(r.n_evaluated, 1);
        assert_eq!(r.f1, 1.0);
    }

    #[test]
    fn predictions_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pred.json");
        let preds: HashMap<String, String> = [("a".into(), "x y".into()), ("b".into(), "".into())].into();
        save_predictions(&preds, &path).unwrap();
        assert_eq!(load_predictions(&path).unwrap(), preds);
    }

    proptest! {
        #[test]
        fn f1_bounded_and_symmetric(a in "[a-zA-Z .,!]{0,30}", b in "[a-zA-Z .,!]{0,30}") {
            let f = token_f1(&a, &b);
            prop_assert!((0.0..=1.0).contains(&f));
            prop_assert_eq!(f, token_f1(&b, &a));
            prop_assert_eq!(token_f1(&a, &a), 1.0);
        }

        #[test]
        fn normalization_idempotent(a in "\\PC{0,40}") {
            let once = normalize_answer(&a);
            prop_assert_eq!(normalize_answer(&once.join(" ")), once);
        }

        #[test]
        fn f1_invariant_under_surface_noise(
            a in prop::collection::vec("[a-z]{1,6}", 0..6),
            b in prop::collection::vec("[a-z]{1,6}", 0..6),
        ) {
            let plain = token_f1(&a.join(" "), &b.join(" "));
            let noisy_a = format!("The {}!", a.join(", ").to_uppercase());
            let noisy_b = format!("an {}.", b.join(" ; "));
            prop_assert_eq!(token_f1(&noisy_a, &noisy_b), plain);
        }
    }
}
