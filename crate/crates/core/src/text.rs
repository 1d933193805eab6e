//! Shared word-level tokenization.
//!
//! One rule is used by the metrics, the corpus statistics and the model:
//! lowercase, split on whitespace, strip leading and trailing punctuation.

use std::sync::LazyLock;

use regex::Regex;

static UNICODE_PUNCT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\p{P}$").unwrap());

/// Unicode general category P*, plus the ASCII punctuation set (which also
/// contains a few symbols such as `$` and `+`).
pub fn is_punctuation(c: char) -> bool {
    if c.is_ascii() {
        return c.is_ascii_punctuation();
    }
    let mut buf = [0u8; 4];
    UNICODE_PUNCT.is_match(c.encode_utf8(&mut buf))
}

/// Normalizes one whitespace-delimited word. May return an empty string
/// when the word is made only of punctuation.
pub fn normalize_word(word: &str) -> String {
    word.trim_matches(is_punctuation).to_lowercase()
}

/// Tokens of `text`, one per whitespace word, dropping words that are
/// empty after stripping.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(normalize_word)
        .filter(|t| !t.is_empty())
        .collect()
}

/// Whitespace words of `text` with their char offsets `[start, end)`.
pub fn word_spans(text: &str) -> Vec<(usize, usize, &str)> {
    let mut spans = Vec::new();
    let mut start: Option<(usize, usize)> = None;
    let mut char_idx = 0;
    for (byte_idx, c) in text.char_indices() {
        if c.is_whitespace() {
            if let Some((cs, bs)) = start.take() {
                spans.push((cs, char_idx, &text[bs..byte_idx]));
            }
        } else if start.is_none() {
            start = Some((char_idx, byte_idx));
        }
        char_idx += 1;
    }
    if let Some((cs, bs)) = start {
        spans.push((cs, char_idx, &text[bs..]));
    }
    spans
}

/// Byte offset of the `char_offset`-th character, or `None` past the end.
pub fn byte_offset(text: &str, char_offset: usize) -> Option<usize> {
    if char_offset == 0 {
        return Some(0);
    }
    let mut chars = text.char_indices();
    match chars.nth(char_offset) {
        Some((b, _)) => Some(b),
        None if text.chars().count() == char_offset => Some(text.len()),
        None => None,
    }
}

/// Slice by char offsets.
pub fn char_slice(text: &str, start: usize, len: usize) -> Option<&str> {
    let b0 = byte_offset(text, start)?;
    let b1 = byte_offset(text, start + len)?;
    Some(&text[b0..b1])
}
