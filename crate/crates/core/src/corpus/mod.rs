//! Extractive QA records, corpus ingestion and the canonical line-delimited
//! JSON format.

mod squad;
mod synth;

use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text;

pub use squad::load_squad_json;
pub use synth::{generate_synthetic, SynthDomainSpec, STOP_WORDS};

/// One question/context/answer record. `answer_start` is a char offset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaPair {
    pub id: String,
    pub question: String,
    pub context: String,
    pub answer_text: String,
    pub answer_start: usize,
    pub domain_tag: String,
    /// Additional reference answers, used only for max-over-references scoring.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub aux_answers: Vec<String>,
}

impl QaPair {
    /// Checks the answer-offset invariant and non-emptiness.
    pub fn validate(&self) -> Result<()> {
        let invalid = |reason: &str| Error::InvalidPair {
            id: self.id.clone(),
            reason: reason.to_string(),
        };
        if self.question.trim().is_empty() {
            return Err(invalid("empty question"));
        }
        if self.context.trim().is_empty() {
            return Err(invalid("empty context"));
        }
        if self.answer_text.trim().is_empty() {
            return Err(invalid("empty answer"));
        }
        if !self.answer_matches() {
            return Err(Error::AnswerMismatch {
                ids: vec![self.id.clone()],
            });
        }
        Ok(())
    }

    pub fn answer_matches(&self) -> bool {
        let len = self.answer_text.chars().count();
        text::char_slice(&self.context, self.answer_start, len) == Some(self.answer_text.as_str())
    }

    /// Gold answer followed by the auxiliary references.
    pub fn references(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.answer_text.as_str()).chain(self.aux_answers.iter().map(String::as_str))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    pub name: String,
    pairs: Vec<QaPair>,
}

impl Corpus {
    /// Builds a corpus, rejecting duplicate ids.
    pub fn new(name: impl Into<String>, pairs: Vec<QaPair>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(pairs.len());
        for p in &pairs {
            if !seen.insert(p.id.as_str()) {
                return Err(Error::DuplicateId(p.id.clone()));
            }
        }
        Ok(Corpus {
            name: name.into(),
            pairs,
        })
    }

    pub fn pairs(&self) -> &[QaPair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, QaPair> {
        self.pairs.iter()
    }

    /// Pairs at `indices`, in the given order. Panics on out-of-range indices.
    pub fn select(&self, name: impl Into<String>, indices: &[usize]) -> Corpus {
        Corpus {
            name: name.into(),
            pairs: indices.iter().map(|&i| self.pairs[i].clone()).collect(),
        }
    }

    /// Concatenation of several corpora. Ids must stay unique.
    pub fn concat<'a>(name: impl Into<String>, parts: impl IntoIterator<Item = &'a Corpus>) -> Result<Corpus> {
        let pairs = parts.into_iter().flat_map(|c| c.pairs.iter().cloned()).collect();
        Corpus::new(name, pairs)
    }

    pub fn into_pairs(self) -> Vec<QaPair> {
        self.pairs
    }
}

impl<'a> IntoIterator for &'a Corpus {
    type Item = &'a QaPair;
    type IntoIter = std::slice::Iter<'a, QaPair>;

    fn into_iter(self) -> Self::IntoIter {
        self.pairs.iter()
    }
}

fn corpus_name(path: &Path) -> String {
    path.file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("corpus")
        .to_string()
}

const CANONICAL_FIELDS: [&str; 6] = ["id", "question", "context", "answer_text", "answer_start", "domain_tag"];

fn parse_canonical_line(line_no: usize, line: &str, path: &Path) -> Result<QaPair> {
    let value: serde_json::Value = serde_json::from_str(line).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: line_no,
        column: e.column(),
        message: e.to_string(),
    })?;
    let obj = value.as_object().ok_or_else(|| Error::MissingField {
        line: line_no,
        field: CANONICAL_FIELDS[0].to_string(),
    })?;
    let missing = |field: &str| Error::MissingField {
        line: line_no,
        field: field.to_string(),
    };
    let string = |field: &str| -> Result<String> {
        obj.get(field)
            .and_then(|v| v.as_str())
            .map(str::to_string)
            .ok_or_else(|| missing(field))
    };
    let answer_start = obj
        .get("answer_start")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| missing("answer_start"))? as usize;
    let aux_answers = match obj.get("aux_answers") {
        None => Vec::new(),
        Some(v) => v
            .as_array()
            .and_then(|a| a.iter().map(|x| x.as_str().map(str::to_string)).collect::<Option<Vec<_>>>())
            .ok_or_else(|| missing("aux_answers"))?,
    };
    Ok(QaPair {
        id: string("id")?,
        question: string("question")?,
        context: string("context")?,
        answer_text: string("answer_text")?,
        answer_start,
        domain_tag: string("domain_tag")?,
        aux_answers,
    })
}

/// Reads a canonical corpus: one JSON object per line. Blank lines are skipped.
pub fn load_canonical(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut pairs = Vec::new();
    let mut bad = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let pair = parse_canonical_line(i + 1, &line, path)?;
        match pair.validate() {
            Ok(()) => {}
            Err(Error::AnswerMismatch { .. }) => bad.push(pair.id.clone()),
            Err(e) => return Err(e),
        }
        pairs.push(pair);
    }
    if !bad.is_empty() {
        return Err(Error::AnswerMismatch { ids: bad });
    }
    if pairs.is_empty() {
        log::warn!("{}: empty corpus", path.display());
    }
    Corpus::new(corpus_name(path), pairs)
}

pub fn write_canonical<W: Write>(corpus: &Corpus, mut out: W) -> Result<()> {
    for p in corpus {
        serde_json::to_writer(&mut out, p)?;
        out.write_all(b"\n").map_err(|e| Error::io("<output>", e))?;
    }
    Ok(())
}

pub fn save_canonical(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_canonical(corpus, &mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Loads either format: `.json` files are read as SQuAD, anything else as
/// canonical line-delimited JSON.
pub fn load_any(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    if path.extension().is_some_and(|e| e == "json") {
        load_squad_json(path)
    } else {
        load_canonical(path)
    }
}
