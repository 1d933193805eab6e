//! Two-domain synthetic QA generator.
//!
//! Contexts are built from a closed pseudo-word vocabulary (`tok0000`, ...)
//! mixed with a few stop words. Each question is an initial phrase followed
//! by an anchor word; the answer is the span of words directly after the
//! anchor's unique occurrence in the context.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Corpus, QaPair};
use crate::error::{Error, Result};

pub const STOP_WORDS: [&str; 10] = ["of", "to", "in", "and", "is", "for", "on", "with", "by", "at"];

const CONTENT_PROB: f64 = 0.7;

fn default_sentence_words() -> (usize, usize) {
    (5, 12)
}

fn default_max_sentence_words() -> usize {
    40
}

fn default_max_retries() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthDomainSpec {
    pub name: String,
    pub n_pairs: usize,
    /// (answer length in words, probability)
    pub answer_length_distribution: Vec<(usize, f64)>,
    /// (initial question phrase, probability)
    pub prefix_distribution: Vec<(String, f64)>,
    pub vocabulary_size: usize,
    /// Inclusive range of sentences per context.
    pub context_sentences: (usize, usize),
    /// Inclusive word-count range of filler sentences.
    #[serde(default = "default_sentence_words")]
    pub sentence_words: (usize, usize),
    #[serde(default = "default_max_sentence_words")]
    pub max_sentence_words: usize,
    /// Regeneration budget per pair for collisions.
    #[serde(default = "default_max_retries")]
    pub max_retries: usize,
    pub seed: u64,
}

fn check_distribution<T>(what: &str, dist: &[(T, f64)]) -> Result<()> {
    if dist.is_empty() {
        return Err(Error::Spec(format!("{what} is empty")));
    }
    if dist.iter().any(|(_, p)| !p.is_finite() || *p < 0.0) {
        return Err(Error::Spec(format!("{what} has a negative or non-finite probability")));
    }
    let total: f64 = dist.iter().map(|(_, p)| p).sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Spec(format!("{what} sums to {total}, not 1")));
    }
    Ok(())
}

impl SynthDomainSpec {
    pub fn validate(&self) -> Result<()> {
        check_distribution("answer_length_distribution", &self.answer_length_distribution)?;
        check_distribution("prefix_distribution", &self.prefix_distribution)?;
        if self.n_pairs == 0 {
            return Err(Error::Spec("n_pairs must be at least 1".into()));
        }
        if self.vocabulary_size < 16 || self.vocabulary_size > 10_000 {
            return Err(Error::Spec("vocabulary_size must be in 16..=10000".into()));
        }
        let (smin, smax) = self.context_sentences;
        if smin == 0 || smin > smax {
            return Err(Error::Spec(format!("bad context_sentences range ({smin}, {smax})")));
        }
        let (wmin, wmax) = self.sentence_words;
        if wmin == 0 || wmin > wmax || wmax > self.max_sentence_words {
            return Err(Error::Spec(format!("bad sentence_words range ({wmin}, {wmax})")));
        }
        if self.prefix_distribution.iter().any(|(p, _)| p.split_whitespace().next().is_none()) {
            return Err(Error::Spec("empty question prefix".into()));
        }
        for &(len, p) in &self.answer_length_distribution {
            if len == 0 {
                return Err(Error::Spec("answer length 0".into()));
            }
            // One slot is taken by the anchor word.
            if p > 0.0 && len + 1 > self.max_sentence_words {
                return Err(Error::Spec(format!(
                    "answer length {len} exceeds the longest generatable sentence ({} words)",
                    self.max_sentence_words
                )));
            }
        }
        Ok(())
    }

    /// Short factoid answers and who / what-was style questions.
    pub fn general_like(n_pairs: usize, seed: u64) -> Self {
        SynthDomainSpec {
            name: "general".into(),
            n_pairs,
            answer_length_distribution: short_heavy_lengths(),
            prefix_distribution: phrases(&[
                ("who", 0.15),
                ("what was", 0.15),
                ("what is", 0.20),
                ("how many", 0.10),
                ("how long", 0.05),
                ("when did", 0.10),
                ("where is", 0.10),
                ("which", 0.10),
                ("how do", 0.02),
                ("what should", 0.03),
            ]),
            vocabulary_size: 300,
            context_sentences: (3, 5),
            sentence_words: default_sentence_words(),
            max_sentence_words: default_max_sentence_words(),
            max_retries: default_max_retries(),
            seed,
        }
    }

    /// Long instructional answers and how-do / what-should style questions.
    pub fn manual_like(n_pairs: usize, seed: u64) -> Self {
        SynthDomainSpec {
            name: "manual".into(),
            n_pairs,
            answer_length_distribution: long_heavy_lengths(),
            prefix_distribution: phrases(&[
                ("how do", 0.20),
                ("what should", 0.15),
                ("what happens", 0.10),
                ("how should", 0.10),
                ("what is", 0.20),
                ("where is", 0.10),
                ("can i", 0.10),
                ("why", 0.05),
            ]),
            vocabulary_size: 300,
            context_sentences: (4, 7),
            sentence_words: default_sentence_words(),
            max_sentence_words: default_max_sentence_words(),
            max_retries: default_max_retries(),
            seed,
        }
    }
}

/// 85% of answers have at most 5 words; the rest spread evenly over 6..=30.
fn short_heavy_lengths() -> Vec<(usize, f64)> {
    let mut v = vec![(1, 0.25), (2, 0.22), (3, 0.17), (4, 0.12), (5, 0.09)];
    v.extend((6..=30).map(|l| (l, 0.006)));
    v
}

/// Over half of the answers are longer than 20 words.
fn long_heavy_lengths() -> Vec<(usize, f64)> {
    (2..=30)
        .map(|l| match l {
            2..=10 => (l, 0.01),
            11..=20 => (l, 0.035),
            _ => (l, 0.056),
        })
        .collect()
}

fn phrases(items: &[(&str, f64)]) -> Vec<(String, f64)> {
    items.iter().map(|(s, p)| (s.to_string(), *p)).collect()
}

struct WordSource {
    vocabulary_size: usize,
}

impl WordSource {
    fn content(&self, rng: &mut ChaCha8Rng) -> String {
        format!("tok{:04}", rng.random_range(0..self.vocabulary_size))
    }

    fn any(&self, rng: &mut ChaCha8Rng) -> String {
        if rng.random_bool(CONTENT_PROB) {
            self.content(rng)
        } else {
            STOP_WORDS[rng.random_range(0..STOP_WORDS.len())].to_string()
        }
    }
}

fn contains_words(haystack: &[String], needle: &[String]) -> usize {
    if needle.len() > haystack.len() {
        return 0;
    }
    haystack.windows(needle.len()).filter(|w| *w == needle).count()
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

/// Deterministic corpus from `spec`.
pub fn generate_synthetic(spec: &SynthDomainSpec) -> Result<Corpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let lengths = WeightedIndex::new(spec.answer_length_distribution.iter().map(|(_, p)| *p))
        .map_err(|e| Error::Spec(e.to_string()))?;
    let prefixes = WeightedIndex::new(spec.prefix_distribution.iter().map(|(_, p)| *p))
        .map_err(|e| Error::Spec(e.to_string()))?;
    let words = WordSource {
        vocabulary_size: spec.vocabulary_size,
    };

    let mut pairs = Vec::with_capacity(spec.n_pairs);
    for index in 0..spec.n_pairs {
        let answer_len = spec.answer_length_distribution[lengths.sample(&mut rng)].0;
        let prefix = &spec.prefix_distribution[prefixes.sample(&mut rng)].0;
        let n_sentences = rng.random_range(spec.context_sentences.0..=spec.context_sentences.1);
        let answer_sentence = rng.random_range(0..n_sentences);
        let pair = generate_pair(spec, &words, &mut rng, index, answer_len, prefix, n_sentences, answer_sentence)?;
        pairs.push(pair);
    }
    Corpus::new(spec.name.clone(), pairs)
}

#[allow(clippy::too_many_arguments)]
fn generate_pair(
    spec: &SynthDomainSpec,
    words: &WordSource,
    rng: &mut ChaCha8Rng,
    index: usize,
    answer_len: usize,
    prefix: &str,
    n_sentences: usize,
    answer_sentence: usize,
) -> Result<QaPair> {
    let mut retries = 0;
    let bump = |retries: &mut usize| -> Result<()> {
        *retries += 1;
        if *retries > spec.max_retries {
            Err(Error::Generation { index })
        } else {
            Ok(())
        }
    };

    // Anchor sentence: lead words, anchor, answer span, trailing words.
    let (anchor, answer, sentence, answer_offset) = loop {
        let anchor = words.content(rng);
        let mut answer: Vec<String> = (0..answer_len).map(|_| words.any(rng)).collect();
        answer[0] = words.content(rng);
        answer[answer_len - 1] = words.content(rng);
        let room = spec.max_sentence_words - answer_len - 1;
        let lead = rng.random_range(0..=2usize).min(room);
        let trail = rng.random_range(0..=3usize).min(room - lead);
        let mut sentence: Vec<String> = (0..lead).map(|_| words.any(rng)).collect();
        sentence.push(anchor.clone());
        sentence.extend(answer.iter().cloned());
        sentence.extend((0..trail).map(|_| words.any(rng)));
        let unique_anchor = sentence.iter().filter(|w| **w == anchor).count() == 1;
        if unique_anchor && contains_words(&sentence, &answer) == 1 {
            break (anchor, answer, sentence, lead + 1);
        }
        bump(&mut retries)?;
    };

    let mut sentences: Vec<Vec<String>> = Vec::with_capacity(n_sentences);
    for s in 0..n_sentences {
        if s == answer_sentence {
            sentences.push(sentence.clone());
            continue;
        }
        loop {
            let n = rng.random_range(spec.sentence_words.0..=spec.sentence_words.1);
            let filler: Vec<String> = (0..n).map(|_| words.any(rng)).collect();
            if !filler.contains(&anchor) && contains_words(&filler, &answer) == 0 {
                sentences.push(filler);
                break;
            }
            bump(&mut retries)?;
        }
    }

    let mut context = String::new();
    let mut answer_start = 0;
    for (s, sent) in sentences.iter().enumerate() {
        if s > 0 {
            context.push(' ');
        }
        for (w, word) in sent.iter().enumerate() {
            if w > 0 {
                context.push(' ');
            }
            if s == answer_sentence && w == answer_offset {
                answer_start = context.chars().count();
            }
            context.push_str(word);
        }
        context.push('.');
    }
    let answer_text = answer.join(" ");
    debug_assert_eq!(context.matches(&answer_text).count(), 1);

    Ok(QaPair {
        id: format!("{}-{index:06}", spec.name),
        question: format!("{} {anchor}?", capitalize(prefix)),
        context,
        answer_text,
        answer_start,
        domain_tag: spec.name.clone(),
        aux_answers: Vec::new(),
    })
}
