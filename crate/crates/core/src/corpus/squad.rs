use std::fs;
use std::path::Path;

use serde::Deserialize;

use super::{corpus_name, Corpus, QaPair};
use crate::error::{Error, Result};

#[derive(Deserialize)]
struct SquadFile {
    data: Vec<Article>,
}

#[derive(Deserialize)]
struct Article {
    #[serde(default)]
    title: Option<String>,
    paragraphs: Vec<Paragraph>,
}

#[derive(Deserialize)]
struct Paragraph {
    context: String,
    qas: Vec<Qa>,
}

#[derive(Deserialize)]
struct Qa {
    id: String,
    question: String,
    answers: Vec<Answer>,
}

#[derive(Deserialize)]
struct Answer {
    text: String,
    answer_start: usize,
}

/// Reads a SQuAD v1.1-shaped file (data → paragraphs → qas). The first
/// reference answer becomes the gold answer, the rest are kept as
/// auxiliary references.
pub fn load_squad_json(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: SquadFile = serde_json::from_str(&raw).map_err(|e| Error::parse(path, &e))?;
    let name = corpus_name(path);

    let mut pairs = Vec::new();
    let mut bad = Vec::new();
    for article in file.data {
        let _ = article.title;
        for para in article.paragraphs {
            for qa in para.qas {
                let mut answers = qa.answers.into_iter();
                let Some(gold) = answers.next() else {
                    bad.push(qa.id);
                    continue;
                };
                let pair = QaPair {
                    id: qa.id,
                    question: qa.question,
                    context: para.context.clone(),
                    answer_text: gold.text,
                    answer_start: gold.answer_start,
                    domain_tag: name.clone(),
                    aux_answers: answers.map(|a| a.text).collect(),
                };
                if pair.validate().is_err() {
                    bad.push(pair.id);
                    continue;
                }
                pairs.push(pair);
            }
        }
    }
    if !bad.is_empty() {
        return Err(Error::AnswerMismatch { ids: bad });
    }
    Corpus::new(name, pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(dir: &tempfile::TempDir, body: &str) -> std::path::PathBuf {
        let path = dir.path().join("dev.json");
        fs::File::create(&path).unwrap().write_all(body.as_bytes()).unwrap();
        path
    }

    const TWO_QUESTIONS: &str = r#"{"version": "1.1", "data": [{"title": "Cars", "paragraphs": [{
        "context": "To stop the car, press the brake pedal. The car was built in 2015.",
        "qas": [
          {"id": "a1", "question": "How do I stop?", "answers": [
             {"text": "press the brake pedal", "answer_start": 17}]},
          {"id": "a2", "question": "When was the car built?", "answers": [
             {"text": "2015", "answer_start": 61},
             {"text": "in 2015", "answer_start": 58},
             {"text": "2015", "answer_start": 61}]}
        ]}]}]}"#;

    #[test]
    fn one_pair_per_question() {
        let dir = tempfile::tempdir().unwrap();
        let c = load_squad_json(write(&dir, TWO_QUESTIONS)).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.name, "dev");
        assert_eq!(c.pairs()[0].answer_text, "press the brake pedal");
        assert!(c.pairs()[0].aux_answers.is_empty());
    }

    #[test]
    fn extra_references_become_auxiliary() {
        let dir = tempfile::tempdir().unwrap();
        let c = load_squad_json(write(&dir, TWO_QUESTIONS)).unwrap();
        let p = &c.pairs()[1];
        assert_eq!(p.answer_text, "2015");
        assert_eq!(p.aux_answers, vec!["in 2015", "2015"]);
    }

    #[test]
    fn wrong_offset_names_id() {
        let dir = tempfile::tempdir().unwrap();
        let body = TWO_QUESTIONS.replace("\"answer_start\": 17", "\"answer_start\": 3");
        match load_squad_json(write(&dir, &body)) {
            Err(Error::AnswerMismatch { ids }) => assert_eq!(ids, vec!["a1"]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_json_has_location() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(&dir, "{\"data\": [\n  {\"paragraphs\": [}\n]}");
        match load_squad_json(&path) {
            Err(Error::Parse { path: p, line, .. }) => {
                assert_eq!(p, path);
                assert_eq!(line, 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
