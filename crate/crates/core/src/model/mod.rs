//! Desk-scale extractive QA model: token and learned position embeddings,
//! pre-norm transformer encoder blocks over `CLS question SEP context SEP`,
//! and a start/end projection per position. Gradients are analytic.

mod checkpoint;
mod encode;
mod network;
pub mod ops;
mod span;

use std::collections::HashMap;

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::text::{normalize_word, tokenize};

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use encode::{encode_example, Alignment, EncodedExample};
pub use network::{forward, loss_and_gradients, span_loss, SpanLogits};
pub use span::{decode_answer, predict_span, SpanPrediction};

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const CLS_ID: u32 = 2;
pub const SEP_ID: u32 = 3;

/// Token-to-index map. The first four entries are the special tokens.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(from = "VocabRepr", into = "VocabRepr")]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

#[derive(Serialize, Deserialize)]
struct VocabRepr {
    tokens: Vec<String>,
}

impl From<VocabRepr> for Vocab {
    fn from(r: VocabRepr) -> Self {
        Vocab::from_tokens(r.tokens)
    }
}

impl From<Vocab> for VocabRepr {
    fn from(v: Vocab) -> Self {
        VocabRepr { tokens: v.tokens }
    }
}

impl PartialEq for Vocab {
    fn eq(&self, other: &Self) -> bool {
        self.tokens == other.tokens
    }
}

impl Vocab {
    fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        Vocab { tokens, index }
    }

    /// Special tokens followed by `words` in the given order (duplicates dropped).
    pub fn new<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut tokens: Vec<String> = [PAD, UNK, CLS, SEP].iter().map(|s| s.to_string()).collect();
        let mut seen: std::collections::HashSet<String> = tokens.iter().cloned().collect();
        for w in words {
            let w = w.into();
            if seen.insert(w.clone()) {
                tokens.push(w);
            }
        }
        Vocab::from_tokens(tokens)
    }

    /// Most frequent question and context tokens of `corpora`, at most
    /// `max_size` entries including the specials. Ties break lexicographically.
    pub fn build<'a>(corpora: impl IntoIterator<Item = &'a Corpus>, max_size: usize) -> Self {
        let mut counts: HashMap<String, usize> = HashMap::new();
        for c in corpora {
            for p in c {
                for t in tokenize(&p.question).into_iter().chain(tokenize(&p.context)) {
                    *counts.entry(t).or_default() += 1;
                }
            }
        }
        let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(max_size.saturating_sub(4));
        Vocab::new(ranked.into_iter().map(|(t, _)| t))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    /// Id of a raw word under the shared tokenization.
    pub fn word_id(&self, word: &str) -> u32 {
        let t = normalize_word(word);
        if t.is_empty() {
            UNK_ID
        } else {
            self.id(&t)
        }
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    fn has_specials(&self) -> bool {
        self.tokens.len() >= 4 && self.tokens[..4] == [PAD, UNK, CLS, SEP]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub ffn_dim: usize,
    pub max_seq_len: usize,
    pub max_answer_len: usize,
    pub init_scale: f64,
    #[serde(default)]
    pub position_init: PositionInit,
    pub seed: u64,
    pub vocab: Vocab,
}

/// Starting values of the learned position embeddings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PositionInit {
    /// Uniform in `±init_scale`, like every other weight.
    #[default]
    Uniform,
    /// Unit-amplitude sine/cosine table; relative offsets become linear maps.
    Sinusoidal,
}

fn sinusoid(t: usize, i: usize, d: usize) -> f64 {
    let angle = t as f64 / 10000f64.powf((i / 2 * 2) as f64 / d as f64);
    if i.is_multiple_of(2) {
        angle.sin()
    } else {
        angle.cos()
    }
}

impl ModelConfig {
    /// Desk-scale defaults: d_model 64, 2 layers, 2 heads, ffn 128,
    /// 128 positions, answers up to 30 tokens.
    pub fn new(vocab: Vocab) -> Self {
        ModelConfig {
            d_model: 64,
            n_layers: 2,
            n_heads: 2,
            ffn_dim: 128,
            max_seq_len: 128,
            max_answer_len: 30,
            init_scale: 0.05,
            position_init: PositionInit::Uniform,
            seed: 0,
            vocab,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.n_heads == 0 || !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::Config(format!(
                "d_model {} must be a positive multiple of n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if self.n_layers == 0 || self.ffn_dim == 0 {
            return Err(Error::Config("n_layers and ffn_dim must be positive".into()));
        }
        if self.max_seq_len < 8 {
            return Err(Error::Config("max_seq_len must be at least 8".into()));
        }
        if self.max_answer_len == 0 {
            return Err(Error::Config("max_answer_len must be positive".into()));
        }
        if !(self.init_scale > 0.0 && self.init_scale.is_finite()) {
            return Err(Error::Config("init_scale must be positive".into()));
        }
        if !self.vocab.has_specials() {
            return Err(Error::Config("vocab lacks the special tokens".into()));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub ln1_gain: Vec<f64>,
    pub ln1_bias: Vec<f64>,
    pub wq: Vec<f64>,
    pub bq: Vec<f64>,
    pub wk: Vec<f64>,
    pub bk: Vec<f64>,
    pub wv: Vec<f64>,
    pub bv: Vec<f64>,
    pub wo: Vec<f64>,
    pub bo: Vec<f64>,
    pub ln2_gain: Vec<f64>,
    pub ln2_bias: Vec<f64>,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

/// All trainable tensors. The same layout holds gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub token_emb: Vec<f64>,
    pub pos_emb: Vec<f64>,
    /// Added to context tokens that also appear in the question.
    pub match_emb: Vec<f64>,
    /// Added to context tokens that directly follow a question match.
    pub after_match_emb: Vec<f64>,
    pub layers: Vec<LayerParams>,
    pub lnf_gain: Vec<f64>,
    pub lnf_bias: Vec<f64>,
    /// `d_model × 2`: column 0 scores starts, column 1 ends.
    pub out_w: Vec<f64>,
    pub out_b: Vec<f64>,
}

impl Params {
    pub fn zeros(cfg: &ModelConfig) -> Self {
        let (d, f) = (cfg.d_model, cfg.ffn_dim);
        let z = |n: usize| vec![0.0; n];
        Params {
            token_emb: z(cfg.vocab.len() * d),
            pos_emb: z(cfg.max_seq_len * d),
            match_emb: z(d),
            after_match_emb: z(d),
            layers: (0..cfg.n_layers)
                .map(|_| LayerParams {
                    ln1_gain: z(d),
                    ln1_bias: z(d),
                    wq: z(d * d),
                    bq: z(d),
                    wk: z(d * d),
                    bk: z(d),
                    wv: z(d * d),
                    bv: z(d),
                    wo: z(d * d),
                    bo: z(d),
                    ln2_gain: z(d),
                    ln2_bias: z(d),
                    w1: z(d * f),
                    b1: z(f),
                    w2: z(f * d),
                    b2: z(d),
                })
                .collect(),
            lnf_gain: z(d),
            lnf_bias: z(d),
            out_w: z(d * 2),
            out_b: z(2),
        }
    }

    /// Named tensors in a fixed order.
    pub fn named(&self) -> Vec<(String, &Vec<f64>)> {
        let mut v: Vec<(String, &Vec<f64>)> = vec![
            ("token_emb".into(), &self.token_emb),
            ("pos_emb".into(), &self.pos_emb),
            ("match_emb".into(), &self.match_emb),
            ("after_match_emb".into(), &self.after_match_emb),
        ];
        for (i, l) in self.layers.iter().enumerate() {
            for (name, t) in [
                ("ln1_gain", &l.ln1_gain),
                ("ln1_bias", &l.ln1_bias),
                ("wq", &l.wq),
                ("bq", &l.bq),
                ("wk", &l.wk),
                ("bk", &l.bk),
                ("wv", &l.wv),
                ("bv", &l.bv),
                ("wo", &l.wo),
                ("bo", &l.bo),
                ("ln2_gain", &l.ln2_gain),
                ("ln2_bias", &l.ln2_bias),
                ("w1", &l.w1),
                ("b1", &l.b1),
                ("w2", &l.w2),
                ("b2", &l.b2),
            ] {
                v.push((format!("layer{i}.{name}"), t));
            }
        }
        v.push(("lnf_gain".into(), &self.lnf_gain));
        v.push(("lnf_bias".into(), &self.lnf_bias));
        v.push(("out_w".into(), &self.out_w));
        v.push(("out_b".into(), &self.out_b));
        v
    }

    /// Mutable tensors in the same order as [`Params::named`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut v: Vec<&mut Vec<f64>> = vec![&mut self.token_emb, &mut self.pos_emb, &mut self.match_emb, &mut self.after_match_emb];
        for l in &mut self.layers {
            v.extend([
                &mut l.ln1_gain,
                &mut l.ln1_bias,
                &mut l.wq,
                &mut l.bq,
                &mut l.wk,
                &mut l.bk,
                &mut l.wv,
                &mut l.bv,
                &mut l.wo,
                &mut l.bo,
                &mut l.ln2_gain,
                &mut l.ln2_bias,
                &mut l.w1,
                &mut l.b1,
                &mut l.w2,
                &mut l.b2,
            ]);
        }
        v.extend([&mut self.lnf_gain, &mut self.lnf_bias, &mut self.out_w, &mut self.out_b]);
        v
    }

    pub fn n_params(&self) -> usize {
        self.named().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.named().iter().all(|(_, t)| t.iter().all(|x| x.is_finite()))
    }

    pub fn sq_norm(&self) -> f64 {
        self.named().iter().flat_map(|(_, t)| t.iter()).map(|x| x * x).sum()
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= factor);
        }
    }

    /// `self += factor * other`
    pub fn add_scaled(&mut self, other: &Params, factor: f64) {
        let others = other.named();
        for (t, (_, o)) in self.tensors_mut().into_iter().zip(others) {
            for (x, y) in t.iter_mut().zip(o.iter()) {
                *x += factor * y;
            }
        }
    }
}

/// Position of the initialization generator, stored with checkpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    pub word_pos: u128,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QaModel {
    pub config: ModelConfig,
    pub params: Params,
    pub rng: RngState,
}

impl QaModel {
    /// Fresh model: weights and embeddings uniform in `±init_scale`, biases
    /// zero, layer-norm gains one.
    pub fn init(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let dist = Uniform::new_inclusive(-config.init_scale, config.init_scale)
            .map_err(|e| Error::Config(e.to_string()))?;
        let mut params = Params::zeros(&config);
        let mut fill = |t: &mut Vec<f64>| t.iter_mut().for_each(|x| *x = dist.sample(&mut rng));
        fill(&mut params.token_emb);
        match config.position_init {
            PositionInit::Uniform => fill(&mut params.pos_emb),
            PositionInit::Sinusoidal => {
                let d = config.d_model;
                for (k, x) in params.pos_emb.iter_mut().enumerate() {
                    *x = sinusoid(k / d, k % d, d);
                }
            }
        }
        fill(&mut params.match_emb);
        fill(&mut params.after_match_emb);
        for l in &mut params.layers {
            for t in [&mut l.wq, &mut l.wk, &mut l.wv, &mut l.wo, &mut l.w1, &mut l.w2] {
                fill(t);
            }
            l.ln1_gain.iter_mut().for_each(|x| *x = 1.0);
            l.ln2_gain.iter_mut().for_each(|x| *x = 1.0);
        }
        params.lnf_gain.iter_mut().for_each(|x| *x = 1.0);
        fill(&mut params.out_w);
        let state = RngState {
            seed: config.seed,
            word_pos: rng.get_word_pos(),
        };
        Ok(QaModel {
            config,
            params,
            rng: state,
        })
    }

    /// Encodes `pair` and returns the best span's text.
    pub fn predict(&self, pair: &crate::corpus::QaPair) -> Result<SpanPrediction> {
        let ex = encode_example(pair, &self.config);
        let logits = forward(self, std::slice::from_ref(&ex))?;
        let mut span = predict_span(&logits[0], ex.context_span, self.config.max_answer_len)?;
        span.answer_text = decode_answer(&span, pair, &ex.alignment);
        Ok(span)
    }

    /// Predicted answer for every pair, keyed by id.
    pub fn predict_corpus(&self, corpus: &Corpus) -> Result<HashMap<String, String>> {
        corpus
            .iter()
            .map(|p| Ok((p.id.clone(), self.predict(p)?.answer_text)))
            .collect()
    }

    pub fn evaluate(&self, corpus: &Corpus) -> Result<crate::metrics::EvalResult> {
        crate::metrics::evaluate(&self.predict_corpus(corpus)?, corpus)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vocab_specials_first() {
        let v = Vocab::new(["b", "a", "b"]);
        assert_eq!(v.len(), 6);
        assert_eq!(v.id(PAD), PAD_ID);
        assert_eq!(v.id(SEP), SEP_ID);
        assert_eq!(v.id("b"), 4);
        assert_eq!(v.id("zzz"), UNK_ID);
        assert_eq!(v.word_id("A!"), 5);
        assert_eq!(v.word_id("--"), UNK_ID);
    }

    #[test]
    fn config_validation() {
        let mut c = ModelConfig::new(Vocab::new(["x"]));
        c.validate().unwrap();
        c.n_heads = 3;
        assert!(c.validate().is_err());
        c.n_heads = 2;
        c.max_seq_len = 7;
        assert!(c.validate().is_err());
        c.max_seq_len = 8;
        c.vocab = Vocab::from_tokens(vec!["x".into()]);
        assert!(c.validate().is_err());
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let mut c = ModelConfig::new(Vocab::new(["x", "y"]));
        c.seed = 11;
        let a = QaModel::init(c.clone()).unwrap();
        let b = QaModel::init(c.clone()).unwrap();
        assert_eq!(a, b);
        assert!(a.params.token_emb.iter().all(|x| x.abs() <= 0.05));
        assert!(a.params.layers[0].bq.iter().all(|x| *x == 0.0));
        c.seed = 12;
        assert_ne!(QaModel::init(c).unwrap().params, a.params);
    }

    #[test]
    fn sinusoidal_positions() {
        let mut c = ModelConfig::new(Vocab::new(["x"]));
        c.d_model = 4;
        c.n_heads = 1;
        c.position_init = PositionInit::Sinusoidal;
        let m = QaModel::init(c.clone()).unwrap();
        assert_eq!(&m.params.pos_emb[..4], &[0.0, 1.0, 0.0, 1.0]);
        assert_eq!(m.params.pos_emb[4], 1f64.sin());
        assert_eq!(m.params.pos_emb[7], (1.0 / 100.0f64).cos());
        c.position_init = PositionInit::Uniform;
        assert!(QaModel::init(c).unwrap().params.pos_emb.iter().all(|x| x.abs() <= 0.05));
    }

    #[test]
    fn tensor_orders_agree() {
        let c = ModelConfig::new(Vocab::new(["x"]));
        let mut p = Params::zeros(&c);
        let names: Vec<usize> = p.named().iter().map(|(_, t)| t.len()).collect();
        let muts: Vec<usize> = p.tensors_mut().iter().map(|t| t.len()).collect();
        assert_eq!(names, muts);
        assert_eq!(names.len(), 4 + 16 * 2 + 4);
    }
}
