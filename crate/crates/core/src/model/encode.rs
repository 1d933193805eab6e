use serde::{Deserialize, Serialize};

use super::{ModelConfig, CLS_ID, PAD_ID, SEP_ID, UNK_ID};
use crate::corpus::QaPair;
use crate::text::{normalize_word, word_spans};

/// `CLS q… SEP c… SEP PAD…`, padded to `max_seq_len`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedExample {
    pub ids: Vec<u32>,
    /// Number of leading non-padding positions.
    pub seq_len: usize,
    /// First and last context positions, inclusive.
    pub context_span: (usize, usize),
    /// Gold start/end positions; `None` marks an unusable example whose
    /// answer was truncated away (or could not be aligned).
    pub gold: Option<(usize, usize)>,
    pub alignment: Alignment,
    /// Context positions whose token also occurs in the question.
    pub question_match: Vec<bool>,
    /// Context positions whose left neighbour in the context matches.
    pub after_match: Vec<bool>,
}

impl EncodedExample {
    pub fn usable(&self) -> bool {
        self.gold.is_some()
    }
}

/// Token position to context word index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alignment {
    pub first_position: usize,
    pub word_index: Vec<usize>,
}

impl Alignment {
    pub fn word_at(&self, position: usize) -> Option<usize> {
        position
            .checked_sub(self.first_position)
            .and_then(|rel| self.word_index.get(rel))
            .copied()
    }
}

/// Word indices `(first, last)` covering the answer's char range.
fn gold_words(pair: &QaPair, words: &[(usize, usize, &str)]) -> Option<(usize, usize)> {
    let len = pair.answer_text.chars().count();
    if len == 0 {
        return None;
    }
    let (a0, a1) = (pair.answer_start, pair.answer_start + len);
    let first = words.iter().position(|&(_, e, _)| e > a0)?;
    let last = words.iter().rposition(|&(s, _, _)| s < a1)?;
    (first <= last).then_some((first, last))
}

/// Lays out `pair` for the model. The question is capped so at least one
/// context position remains; the context is truncated from the right.
pub fn encode_example(pair: &QaPair, config: &ModelConfig) -> EncodedExample {
    let vocab = &config.vocab;
    let max = config.max_seq_len;

    let mut question: Vec<u32> = pair
        .question
        .split_whitespace()
        .map(normalize_word)
        .filter(|t| !t.is_empty())
        .map(|t| vocab.id(&t))
        .collect();
    question.truncate(max - 4);

    let words = word_spans(&pair.context);
    let room = max - 3 - question.len();
    let kept = words.len().min(room);

    let mut ids = Vec::with_capacity(max);
    ids.push(CLS_ID);
    ids.extend_from_slice(&question);
    ids.push(SEP_ID);
    let first = ids.len();
    ids.extend(words[..kept].iter().map(|&(_, _, w)| vocab.word_id(w)));
    let last = ids.len() - 1;
    ids.push(SEP_ID);
    let seq_len = ids.len();
    ids.resize(max, PAD_ID);
    let mut question_match = vec![false; max];
    let mut after_match = vec![false; max];
    for t in first..=last {
        question_match[t] = ids[t] != UNK_ID && question.contains(&ids[t]);
        after_match[t] = t > first && question_match[t - 1];
    }

    let gold = gold_words(pair, &words)
        .filter(|&(_, end)| end < kept)
        .map(|(s, e)| (first + s, first + e));

    EncodedExample {
        ids,
        seq_len,
        context_span: (first, last),
        gold,
        alignment: Alignment {
            first_position: first,
            word_index: (0..kept).collect(),
        },
        question_match,
        after_match,
    }
}
