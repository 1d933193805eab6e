use serde::{Deserialize, Serialize};

use super::{Alignment, SpanLogits};
use crate::corpus::QaPair;
use crate::error::{Error, Result};
use crate::text::word_spans;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpanPrediction {
    pub start: usize,
    pub end: usize,
    pub score: f64,
    pub answer_text: String,
}

/// Maximizes `start[i] + end[j]` over `first ≤ i ≤ j ≤ last`,
/// `j - i < max_answer_len`. Ties keep the smallest start, then the
/// smallest end.
pub fn predict_span(logits: &SpanLogits, context_span: (usize, usize), max_answer_len: usize) -> Result<SpanPrediction> {
    let (first, last) = context_span;
    if first > last || last >= logits.start.len() || logits.end.len() != logits.start.len() || max_answer_len == 0 {
        return Err(Error::NoValidPosition);
    }
    let mut best: Option<(usize, usize, f64)> = None;
    for i in first..=last {
        let s = logits.start[i];
        if !s.is_finite() {
            continue;
        }
        let j_max = last.min(i + max_answer_len - 1);
        for j in i..=j_max {
            let e = logits.end[j];
            if !e.is_finite() {
                continue;
            }
            let score = s + e;
            if best.is_none_or(|(_, _, b)| score > b) {
                best = Some((i, j, score));
            }
        }
    }
    let (start, end, score) = best.ok_or(Error::NoValidPosition)?;
    Ok(SpanPrediction {
        start,
        end,
        score,
        answer_text: String::new(),
    })
}

/// Original context words covered by `span`, joined by single spaces.
pub fn decode_answer(span: &SpanPrediction, pair: &QaPair, alignment: &Alignment) -> String {
    let words = word_spans(&pair.context);
    (span.start..=span.end)
        .filter_map(|pos| alignment.word_at(pos))
        .filter_map(|w| words.get(w).map(|&(_, _, s)| s))
        .collect::<Vec<_>>()
        .join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn logits(start: &[f64], end: &[f64]) -> SpanLogits {
        SpanLogits {
            start: start.to_vec(),
            end: end.to_vec(),
        }
    }

    const NEG: f64 = f64::NEG_INFINITY;

    #[test]
    fn single_position() {
        let l = logits(&[NEG, 0.3, NEG], &[NEG, -2.0, NEG]);
        let s = predict_span(&l, (1, 1), 30).unwrap();
        assert_eq!((s.start, s.end), (1, 1));
    }

    #[test]
    fn peaks_within_limit() {
        let l = logits(&[0.0, 0.0, 5.0, 0.0, 0.0, 0.0, 0.0], &[0.0, 0.0, 0.0, 0.0, 0.0, 4.0, 0.0]);
        let s = predict_span(&l, (0, 6), 30).unwrap();
        assert_eq!((s.start, s.end), (2, 5));
        assert_eq!(s.score, 9.0);
    }

    #[test]
    fn length_constraint_binds() {
        let l = logits(&[5.0, 0.0, 0.0, 0.0, 1.0], &[0.0, 0.0, 0.0, 0.5, 4.0]);
        // unconstrained best is (0, 4) = 9; with length <= 3 both (0, 0) and
        // (4, 4) score 5 and the smaller start wins
        assert_eq!(predict_span(&l, (0, 4), 30).unwrap().score, 9.0);
        let s = predict_span(&l, (0, 4), 3).unwrap();
        assert_eq!((s.start, s.end, s.score), (0, 0, 5.0));
    }

    #[test]
    fn ties_prefer_smallest_start_then_end() {
        let l = logits(&[1.0, 1.0, 1.0], &[1.0, 1.0, 1.0]);
        let s = predict_span(&l, (0, 2), 30).unwrap();
        assert_eq!((s.start, s.end), (0, 0));
    }

    #[test]
    fn all_masked_errors() {
        let l = logits(&[NEG, NEG], &[NEG, NEG]);
        assert!(matches!(predict_span(&l, (0, 1), 30), Err(Error::NoValidPosition)));
        assert!(matches!(predict_span(&l, (1, 0), 30), Err(Error::NoValidPosition)));
    }

    fn pair(context: &str) -> QaPair {
        QaPair {
            id: "p".into(),
            question: "q".into(),
            context: context.into(),
            answer_text: context.split(' ').next().unwrap().into(),
            answer_start: 0,
            domain_tag: "t".into(),
            aux_answers: vec![],
        }
    }

    #[test]
    fn decode_slices_words() {
        let p = pair("a b  c d e f");
        let al = Alignment {
            first_position: 3,
            word_index: (0..6).collect(),
        };
        let span = |s, e| SpanPrediction {
            start: s,
            end: e,
            score: 0.0,
            answer_text: String::new(),
        };
        assert_eq!(decode_answer(&span(6, 8), &p, &al), "d e f");
        assert_eq!(decode_answer(&span(4, 4), &p, &al), "b");
    }
}
