//! C interface to qadapt.
//!
//! Every fallible function returns a [`QadaptStatus`] and writes its result
//! through an out-pointer. On failure, [`qadapt_last_error`] describes the
//! most recent error on the calling thread. Objects are opaque handles that
//! must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use serde::Deserialize;

use qadapt::corpus::{generate_synthetic, load_any};
use qadapt::harness::ModelSettings;
use qadapt::metrics::{exact_match, token_f1};
use qadapt::model::{load_checkpoint, save_checkpoint, QaModel};
use qadapt::trainer::{finetune, train, TrainConfig};
use qadapt::weighting::{weigh_corpus, weights_for_corpora, WeightReport};
use qadapt::{Corpus, Error, QaPair, SynthDomainSpec};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QadaptStatus {
    Ok = 0,
    NullPointer = 1,
    /// Bad UTF-8, an out-of-range index or a malformed JSON argument.
    InvalidArgument = 2,
    Io = 3,
    /// Input files or values that violate the data model.
    InvalidData = 4,
    /// Training or evaluation failed.
    Runtime = 5,
    Panic = 6,
}

/// A question/answer corpus.
pub struct QadaptCorpus(Corpus);

/// A span-extraction model.
pub struct QadaptModel(QaModel);

/// Answer-length importance weights with the two histograms behind them.
pub struct QadaptWeightTable(WeightReport);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(QadaptStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Io { .. } => QadaptStatus::Io,
            e if e.is_runtime() => QadaptStatus::Runtime,
            _ => QadaptStatus::InvalidData,
        };
        Failure(status, e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(QadaptStatus::InvalidArgument, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> QadaptStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            QadaptStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            QadaptStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(QadaptStatus::NullPointer, format!("`{name}` is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("`{name}` is not valid UTF-8")))
}

unsafe fn opt_str_arg<'a>(p: *const c_char, name: &str) -> Result<Option<&'a str>, Failure> {
    if p.is_null() {
        Ok(None)
    } else {
        str_arg(p, name).map(Some)
    }
}

unsafe fn handle<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure(QadaptStatus::NullPointer, format!("`{name}` is null")))
}

unsafe fn out<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    p.as_mut()
        .ok_or_else(|| Failure(QadaptStatus::NullPointer, format!("`{name}` is null")))
}

fn boxed<T>(value: T) -> *mut T {
    Box::into_raw(Box::new(value))
}

fn parse_json<'a, T: Deserialize<'a>>(raw: &'a str, what: &str) -> Result<T, Failure> {
    serde_json::from_str(raw).map_err(|e| invalid(format!("{what}: {e}")))
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next qadapt call on the same thread.
#[no_mangle]
pub extern "C" fn qadapt_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn qadapt_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn qadapt_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// SQuAD token F1 between two answers.
///
/// # Safety
/// `prediction` and `gold` must be NUL-terminated strings; `out_f1` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qadapt_token_f1(prediction: *const c_char, gold: *const c_char, out_f1: *mut f64) -> QadaptStatus {
    guard(|| {
        let (p, g) = (str_arg(prediction, "prediction")?, str_arg(gold, "gold")?);
        *out(out_f1, "out_f1")? = token_f1(p, g);
        Ok(())
    })
}

/// 1.0 when both answers normalize to the same tokens, else 0.0.
///
/// # Safety
/// As for [`qadapt_token_f1`].
#[no_mangle]
pub unsafe extern "C" fn qadapt_exact_match(prediction: *const c_char, gold: *const c_char, out_em: *mut f64) -> QadaptStatus {
    guard(|| {
        let (p, g) = (str_arg(prediction, "prediction")?, str_arg(gold, "gold")?);
        *out(out_em, "out_em")? = exact_match(p, g);
        Ok(())
    })
}

/// Loads a SQuAD JSON or canonical JSONL corpus.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out_corpus` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qadapt_corpus_load(path: *const c_char, out_corpus: *mut *mut QadaptCorpus) -> QadaptStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let slot = out(out_corpus, "out_corpus")?;
        *slot = boxed(QadaptCorpus(load_any(path)?));
        Ok(())
    })
}

/// Generates a synthetic corpus from a JSON domain spec.
///
/// # Safety
/// `spec_json` must be a NUL-terminated string; `out_corpus` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qadapt_corpus_generate(spec_json: *const c_char, out_corpus: *mut *mut QadaptCorpus) -> QadaptStatus {
    guard(|| {
        let spec: SynthDomainSpec = parse_json(str_arg(spec_json, "spec_json")?, "spec")?;
        let slot = out(out_corpus, "out_corpus")?;
        *slot = boxed(QadaptCorpus(generate_synthetic(&spec)?));
        Ok(())
    })
}

/// Writes the corpus as canonical JSONL.
///
/// # Safety
/// `corpus` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn qadapt_corpus_save(corpus: *const QadaptCorpus, path: *const c_char) -> QadaptStatus {
    guard(|| {
        let c = handle(corpus, "corpus")?;
        qadapt::corpus::save_canonical(&c.0, PathBuf::from(str_arg(path, "path")?))?;
        Ok(())
    })
}

/// Number of pairs, or 0 for a null handle.
///
/// # Safety
/// `corpus` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn qadapt_corpus_len(corpus: *const QadaptCorpus) -> usize {
    corpus.as_ref().map_or(0, |c| c.0.len())
}

/// # Safety
/// `corpus` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qadapt_corpus_free(corpus: *mut QadaptCorpus) {
    if !corpus.is_null() {
        drop(Box::from_raw(corpus));
    }
}

/// Importance weights `min(cap, p_t / p_s)` over answer length.
///
/// # Safety
/// `source` and `target` must be live handles; `out_table` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qadapt_weights_compute(
    source: *const QadaptCorpus,
    target: *const QadaptCorpus,
    cap: f64,
    out_table: *mut *mut QadaptWeightTable,
) -> QadaptStatus {
    guard(|| {
        let (s, t) = (handle(source, "source")?, handle(target, "target")?);
        let slot = out(out_table, "out_table")?;
        *slot = boxed(QadaptWeightTable(weights_for_corpora(&s.0, &t.0, cap)?));
        Ok(())
    })
}

/// Number of bins, or 0 for a null handle.
///
/// # Safety
/// `table` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn qadapt_weights_bins(table: *const QadaptWeightTable) -> usize {
    table.as_ref().map_or(0, |t| t.0.table.weights.len())
}

/// Bin `index`: its edges and weight. Any out-pointer may be null.
///
/// # Safety
/// `table` must be a live handle; non-null out-pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn qadapt_weights_bin(
    table: *const QadaptWeightTable,
    index: usize,
    out_lo: *mut f64,
    out_hi: *mut f64,
    out_weight: *mut f64,
) -> QadaptStatus {
    guard(|| {
        let t = &handle(table, "table")?.0.table;
        if index >= t.weights.len() {
            return Err(invalid(format!("bin {index} out of range ({} bins)", t.weights.len())));
        }
        for (p, v) in [(out_lo, t.bin_edges[index]), (out_hi, t.bin_edges[index + 1]), (out_weight, t.weights[index])] {
            if let Some(slot) = p.as_mut() {
                *slot = v;
            }
        }
        Ok(())
    })
}

/// Weight of an answer of `length` words.
///
/// # Safety
/// `table` must be a live handle; `out_weight` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qadapt_weights_for_length(
    table: *const QadaptWeightTable,
    length: f64,
    out_weight: *mut f64,
) -> QadaptStatus {
    guard(|| {
        let t = handle(table, "table")?;
        *out(out_weight, "out_weight")? = t.0.table.weight_for(length);
        Ok(())
    })
}

/// # Safety
/// `table` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qadapt_weights_free(table: *mut QadaptWeightTable) {
    if !table.is_null() {
        drop(Box::from_raw(table));
    }
}

#[derive(Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct TrainingFile {
    model: ModelSettings,
    train: Option<TrainConfig>,
}

/// Trains a new model on `corpus`. `config_json` holds optional `model` and
/// `train` sections (null for defaults); `weights` may be null.
///
/// # Safety
/// Handles must be live; strings NUL-terminated or null; `out_model` writable.
#[no_mangle]
pub unsafe extern "C" fn qadapt_model_train(
    corpus: *const QadaptCorpus,
    config_json: *const c_char,
    weights: *const QadaptWeightTable,
    out_model: *mut *mut QadaptModel,
) -> QadaptStatus {
    guard(|| {
        let c = &handle(corpus, "corpus")?.0;
        let file: TrainingFile = match opt_str_arg(config_json, "config_json")? {
            Some(raw) => parse_json(raw, "config")?,
            None => TrainingFile::default(),
        };
        let slot = out(out_model, "out_model")?;
        let w = weights.as_ref().map(|t| weigh_corpus(c, &t.0.table));
        let model = QaModel::init(file.model.config_for([c]))?;
        let (model, _) = train(model, c, &file.train.unwrap_or_default(), w.as_deref())?;
        *slot = boxed(QadaptModel(model));
        Ok(())
    })
}

/// Fine-tunes a copy of `base` on `corpus`. `train_json` is a training
/// config (null for two plain epochs).
///
/// # Safety
/// As for [`qadapt_model_train`].
#[no_mangle]
pub unsafe extern "C" fn qadapt_model_finetune(
    base: *const QadaptModel,
    corpus: *const QadaptCorpus,
    train_json: *const c_char,
    out_model: *mut *mut QadaptModel,
) -> QadaptStatus {
    guard(|| {
        let (b, c) = (handle(base, "base")?, handle(corpus, "corpus")?);
        let cfg: TrainConfig = match opt_str_arg(train_json, "train_json")? {
            Some(raw) => parse_json(raw, "train config")?,
            None => TrainConfig::finetune(),
        };
        let slot = out(out_model, "out_model")?;
        *slot = boxed(QadaptModel(finetune(&b.0, &c.0, &cfg)?.0));
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string; `out_model` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qadapt_model_load(path: *const c_char, out_model: *mut *mut QadaptModel) -> QadaptStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let slot = out(out_model, "out_model")?;
        *slot = boxed(QadaptModel(load_checkpoint(path)?));
        Ok(())
    })
}

/// # Safety
/// `model` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn qadapt_model_save(model: *const QadaptModel, path: *const c_char) -> QadaptStatus {
    guard(|| {
        let m = handle(model, "model")?;
        save_checkpoint(&m.0, str_arg(path, "path")?)?;
        Ok(())
    })
}

/// Mean F1 and EM over `corpus`. Either out-pointer may be null.
///
/// # Safety
/// Handles must be live; non-null out-pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn qadapt_model_evaluate(
    model: *const QadaptModel,
    corpus: *const QadaptCorpus,
    out_f1: *mut f64,
    out_em: *mut f64,
) -> QadaptStatus {
    guard(|| {
        let (m, c) = (handle(model, "model")?, handle(corpus, "corpus")?);
        let r = m.0.evaluate(&c.0)?;
        if let Some(f) = out_f1.as_mut() {
            *f = r.f1;
        }
        if let Some(e) = out_em.as_mut() {
            *e = r.exact_match;
        }
        Ok(())
    })
}

/// Extracts an answer span from `context`. The returned string must be
/// released with [`qadapt_string_free`].
///
/// # Safety
/// `model` must be a live handle, the strings NUL-terminated, `out_answer` writable.
#[no_mangle]
pub unsafe extern "C" fn qadapt_model_predict(
    model: *const QadaptModel,
    question: *const c_char,
    context: *const c_char,
    out_answer: *mut *mut c_char,
) -> QadaptStatus {
    guard(|| {
        let m = handle(model, "model")?;
        let pair = QaPair {
            id: "q".into(),
            question: str_arg(question, "question")?.into(),
            context: str_arg(context, "context")?.into(),
            answer_text: String::new(),
            answer_start: 0,
            domain_tag: String::new(),
            aux_answers: Vec::new(),
        };
        let slot = out(out_answer, "out_answer")?;
        let answer = m.0.predict(&pair)?.answer_text;
        *slot = CString::new(answer).map_err(|_| invalid("answer contains NUL"))?.into_raw();
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qadapt_model_free(model: *mut QadaptModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}
