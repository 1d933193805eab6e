use super::ops::{
    col_sum_acc, gelu, gelu_grad, layer_norm, layer_norm_backward, linear, log_sum_exp, matmul_a_bt_acc,
    matmul_at_b_acc, softmax_in_place, LayerNormCache,
};
use super::{EncodedExample, LayerParams, ModelConfig, Params, QaModel, PAD_ID};
use crate::error::{Error, Result};

/// Start and end scores per position; `-inf` outside the context span.
#[derive(Debug, Clone, PartialEq)]
pub struct SpanLogits {
    pub start: Vec<f64>,
    pub end: Vec<f64>,
}

struct LayerCache {
    ln1: LayerNormCache,
    h1: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    /// Attention probabilities, one `n×n` block per head.
    probs: Vec<f64>,
    attn_ctx: Vec<f64>,
    ln2: LayerNormCache,
    h2: Vec<f64>,
    pre_act: Vec<f64>,
    act: Vec<f64>,
}

struct Cache {
    n: usize,
    layers: Vec<LayerCache>,
    lnf: LayerNormCache,
    hf: Vec<f64>,
}

fn check_example(cfg: &ModelConfig, ex: &EncodedExample) -> Result<()> {
    if ex.ids.len() > cfg.max_seq_len {
        return Err(Error::Shape(format!("{} ids exceed max_seq_len {}", ex.ids.len(), cfg.max_seq_len)));
    }
    if ex.question_match.len() != ex.ids.len() || ex.after_match.len() != ex.ids.len() {
        return Err(Error::Shape(format!("{} match flags for {} ids", ex.question_match.len(), ex.ids.len())));
    }
    if ex.seq_len == 0 || ex.seq_len > ex.ids.len() {
        return Err(Error::Shape(format!("seq_len {} with {} ids", ex.seq_len, ex.ids.len())));
    }
    let (first, last) = ex.context_span;
    if first > last || last >= ex.seq_len {
        return Err(Error::Shape(format!("context span ({first}, {last}) with seq_len {}", ex.seq_len)));
    }
    if ex.ids[..ex.seq_len].iter().any(|&t| t as usize >= cfg.vocab.len() || t == PAD_ID) {
        return Err(Error::Shape("token id out of range or padding inside sequence".into()));
    }
    if ex.ids[ex.seq_len..].iter().any(|&t| t != PAD_ID) {
        return Err(Error::Shape("non-padding token after seq_len".into()));
    }
    Ok(())
}

fn attention_forward(cfg: &ModelConfig, q: &[f64], k: &[f64], v: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let d = cfg.d_model;
    let dh = cfg.head_dim();
    let scale = 1.0 / (dh as f64).sqrt();
    let mut probs = vec![0.0; cfg.n_heads * n * n];
    let mut ctx = vec![0.0; n * d];
    for h in 0..cfg.n_heads {
        let p = &mut probs[h * n * n..(h + 1) * n * n];
        for i in 0..n {
            let qi = &q[i * d + h * dh..i * d + (h + 1) * dh];
            let row = &mut p[i * n..(i + 1) * n];
            for j in 0..n {
                row[j] = super::ops::dot(qi, &k[j * d + h * dh..j * d + (h + 1) * dh]) * scale;
            }
            softmax_in_place(row);
            let out = &mut ctx[i * d + h * dh..i * d + (h + 1) * dh];
            for j in 0..n {
                let pij = row[j];
                for (o, vv) in out.iter_mut().zip(&v[j * d + h * dh..j * d + (h + 1) * dh]) {
                    *o += pij * vv;
                }
            }
        }
    }
    (probs, ctx)
}

fn forward_one(model: &QaModel, ex: &EncodedExample) -> (SpanLogits, Cache) {
    let cfg = &model.config;
    let p = &model.params;
    let (n, d, f) = (ex.seq_len, cfg.d_model, cfg.ffn_dim);

    let mut x = vec![0.0; n * d];
    for t in 0..n {
        let tok = ex.ids[t] as usize;
        let row = &mut x[t * d..(t + 1) * d];
        for j in 0..d {
            row[j] = p.token_emb[tok * d + j] + p.pos_emb[t * d + j];
        }
        if ex.question_match[t] {
            row.iter_mut().zip(&p.match_emb).for_each(|(x, m)| *x += m);
        }
        if ex.after_match[t] {
            row.iter_mut().zip(&p.after_match_emb).for_each(|(x, m)| *x += m);
        }
    }

    let mut layers = Vec::with_capacity(cfg.n_layers);
    for lp in &p.layers {
        let (h1, ln1) = layer_norm(&x, &lp.ln1_gain, &lp.ln1_bias, n, d);
        let q = linear(&h1, &lp.wq, &lp.bq, n, d, d);
        let k = linear(&h1, &lp.wk, &lp.bk, n, d, d);
        let v = linear(&h1, &lp.wv, &lp.bv, n, d, d);
        let (probs, attn_ctx) = attention_forward(cfg, &q, &k, &v, n);
        let attn_out = linear(&attn_ctx, &lp.wo, &lp.bo, n, d, d);
        let x_mid: Vec<f64> = x.iter().zip(&attn_out).map(|(a, b)| a + b).collect();

        let (h2, ln2) = layer_norm(&x_mid, &lp.ln2_gain, &lp.ln2_bias, n, d);
        let pre_act = linear(&h2, &lp.w1, &lp.b1, n, d, f);
        let act: Vec<f64> = pre_act.iter().map(|&u| gelu(u)).collect();
        let ffn_out = linear(&act, &lp.w2, &lp.b2, n, f, d);
        x = x_mid.iter().zip(&ffn_out).map(|(a, b)| a + b).collect();

        layers.push(LayerCache {
            ln1,
            h1,
            q,
            k,
            v,
            probs,
            attn_ctx,
            ln2,
            h2,
            pre_act,
            act,
        });
    }

    let (hf, lnf) = layer_norm(&x, &p.lnf_gain, &p.lnf_bias, n, d);
    let raw = linear(&hf, &p.out_w, &p.out_b, n, d, 2);

    let total = ex.ids.len();
    let mut logits = SpanLogits {
        start: vec![f64::NEG_INFINITY; total],
        end: vec![f64::NEG_INFINITY; total],
    };
    let (first, last) = ex.context_span;
    for t in first..=last {
        logits.start[t] = raw[t * 2];
        logits.end[t] = raw[t * 2 + 1];
    }
    (logits, Cache { n, layers, lnf, hf })
}

/// Start/end logits for each example. Only the non-padding prefix is
/// computed; padding is never attended to, so extra padding does not
/// change any logit.
pub fn forward(model: &QaModel, batch: &[EncodedExample]) -> Result<Vec<SpanLogits>> {
    batch
        .iter()
        .map(|ex| {
            check_example(&model.config, ex)?;
            Ok(forward_one(model, ex).0)
        })
        .collect()
}

/// `(-log p(start) - log p(end)) / 2` for one example.
fn example_loss(logits: &SpanLogits, gold: (usize, usize)) -> f64 {
    let ls = log_sum_exp(&logits.start) - logits.start[gold.0];
    let le = log_sum_exp(&logits.end) - logits.end[gold.1];
    0.5 * (ls + le)
}

fn check_gold(ex: &EncodedExample) -> Result<(usize, usize)> {
    let (first, last) = ex.context_span;
    let gold = ex.gold.ok_or(Error::GoldOutsideSpan {
        position: usize::MAX,
        first,
        last,
    })?;
    for position in [gold.0, gold.1] {
        if position < first || position > last {
            return Err(Error::GoldOutsideSpan { position, first, last });
        }
    }
    if gold.0 > gold.1 {
        return Err(Error::Shape(format!("gold start {} after end {}", gold.0, gold.1)));
    }
    Ok(gold)
}

/// Mean span loss over the batch.
pub fn span_loss(logits: &[SpanLogits], golds: &[(usize, usize)]) -> Result<f64> {
    if logits.len() != golds.len() || logits.is_empty() {
        return Err(Error::Shape(format!("{} logits for {} golds", logits.len(), golds.len())));
    }
    let mut total = 0.0;
    for (l, &g) in logits.iter().zip(golds) {
        for (position, row) in [(g.0, &l.start), (g.1, &l.end)] {
            if position >= row.len() || !row[position].is_finite() {
                let first = row.iter().position(|v| v.is_finite()).unwrap_or(0);
                let last = row.iter().rposition(|v| v.is_finite()).unwrap_or(0);
                return Err(Error::GoldOutsideSpan { position, first, last });
            }
        }
        total += example_loss(l, g);
    }
    Ok(total / logits.len() as f64)
}

fn backward_layer(
    cfg: &ModelConfig,
    lp: &LayerParams,
    lg: &mut LayerParams,
    c: &LayerCache,
    dx_out: Vec<f64>,
    n: usize,
) -> Vec<f64> {
    let (d, f) = (cfg.d_model, cfg.ffn_dim);
    let dh = cfg.head_dim();
    let scale = 1.0 / (dh as f64).sqrt();

    // feed-forward branch: x_out = x_mid + W2 gelu(W1 LN2(x_mid))
    let d_ffn = &dx_out;
    matmul_at_b_acc(&c.act, d_ffn, &mut lg.w2, n, f, d);
    col_sum_acc(d_ffn, &mut lg.b2, n, d);
    let mut d_act = vec![0.0; n * f];
    matmul_a_bt_acc(d_ffn, &lp.w2, &mut d_act, n, d, f);
    for (g, &u) in d_act.iter_mut().zip(&c.pre_act) {
        *g *= gelu_grad(u);
    }
    let d_pre = d_act;
    matmul_at_b_acc(&c.h2, &d_pre, &mut lg.w1, n, d, f);
    col_sum_acc(&d_pre, &mut lg.b1, n, f);
    let mut d_h2 = vec![0.0; n * d];
    matmul_a_bt_acc(&d_pre, &lp.w1, &mut d_h2, n, f, d);
    let d_mid_ln = layer_norm_backward(&d_h2, &c.ln2, &lp.ln2_gain, &mut lg.ln2_gain, &mut lg.ln2_bias, n, d);
    let d_mid: Vec<f64> = dx_out.iter().zip(&d_mid_ln).map(|(a, b)| a + b).collect();

    // attention branch: x_mid = x_in + Wo attn(LN1(x_in))
    matmul_at_b_acc(&c.attn_ctx, &d_mid, &mut lg.wo, n, d, d);
    col_sum_acc(&d_mid, &mut lg.bo, n, d);
    let mut d_ctx = vec![0.0; n * d];
    matmul_a_bt_acc(&d_mid, &lp.wo, &mut d_ctx, n, d, d);

    let mut dq = vec![0.0; n * d];
    let mut dk = vec![0.0; n * d];
    let mut dv = vec![0.0; n * d];
    let mut d_probs = vec![0.0; n];
    for h in 0..cfg.n_heads {
        let p = &c.probs[h * n * n..(h + 1) * n * n];
        let hs = h * dh..(h + 1) * dh;
        for i in 0..n {
            let d_out = &d_ctx[i * d + hs.start..i * d + hs.end];
            let prow = &p[i * n..(i + 1) * n];
            // dP = dO Vᵀ, dV += Pᵀ dO
            for j in 0..n {
                let vj = &c.v[j * d + hs.start..j * d + hs.end];
                d_probs[j] = super::ops::dot(d_out, vj);
                let pij = prow[j];
                if pij != 0.0 {
                    for (g, o) in dv[j * d + hs.start..j * d + hs.end].iter_mut().zip(d_out) {
                        *g += pij * o;
                    }
                }
            }
            // softmax backward
            let s: f64 = prow.iter().zip(&d_probs).map(|(a, b)| a * b).sum();
            let qi = &c.q[i * d + hs.start..i * d + hs.end];
            for j in 0..n {
                let ds = prow[j] * (d_probs[j] - s) * scale;
                if ds == 0.0 {
                    continue;
                }
                let kj = &c.k[j * d + hs.start..j * d + hs.end];
                for (g, kv) in dq[i * d + hs.start..i * d + hs.end].iter_mut().zip(kj) {
                    *g += ds * kv;
                }
                for (g, qv) in dk[j * d + hs.start..j * d + hs.end].iter_mut().zip(qi) {
                    *g += ds * qv;
                }
            }
        }
    }

    let mut d_h1 = vec![0.0; n * d];
    for (dproj, w, gw, gb) in [
        (&dq, &lp.wq, &mut lg.wq, &mut lg.bq),
        (&dk, &lp.wk, &mut lg.wk, &mut lg.bk),
        (&dv, &lp.wv, &mut lg.wv, &mut lg.bv),
    ] {
        matmul_at_b_acc(&c.h1, dproj, gw, n, d, d);
        col_sum_acc(dproj, gb, n, d);
        matmul_a_bt_acc(dproj, w, &mut d_h1, n, d, d);
    }
    let d_in_ln = layer_norm_backward(&d_h1, &c.ln1, &lp.ln1_gain, &mut lg.ln1_gain, &mut lg.ln1_bias, n, d);
    d_mid.iter().zip(&d_in_ln).map(|(a, b)| a + b).collect()
}

/// Accumulates into `grads` the gradient of `Σ dlogit · logit` for one example.
fn backward_one(
    model: &QaModel,
    ex: &EncodedExample,
    cache: &Cache,
    d_start: &[f64],
    d_end: &[f64],
    grads: &mut Params,
) {
    let cfg = &model.config;
    let p = &model.params;
    let (n, d) = (cache.n, cfg.d_model);

    let mut d_raw = vec![0.0; n * 2];
    for t in 0..n {
        d_raw[t * 2] = d_start[t];
        d_raw[t * 2 + 1] = d_end[t];
    }
    matmul_at_b_acc(&cache.hf, &d_raw, &mut grads.out_w, n, d, 2);
    col_sum_acc(&d_raw, &mut grads.out_b, n, 2);
    let mut d_hf = vec![0.0; n * d];
    matmul_a_bt_acc(&d_raw, &p.out_w, &mut d_hf, n, 2, d);
    let mut dx = layer_norm_backward(&d_hf, &cache.lnf, &p.lnf_gain, &mut grads.lnf_gain, &mut grads.lnf_bias, n, d);

    for (l, c) in cache.layers.iter().enumerate().rev() {
        dx = backward_layer(cfg, &p.layers[l], &mut grads.layers[l], c, dx, n);
    }

    for t in 0..n {
        let tok = ex.ids[t] as usize;
        let g = &dx[t * d..(t + 1) * d];
        for j in 0..d {
            grads.token_emb[tok * d + j] += g[j];
            grads.pos_emb[t * d + j] += g[j];
        }
        if ex.question_match[t] {
            grads.match_emb.iter_mut().zip(g).for_each(|(m, x)| *m += x);
        }
        if ex.after_match[t] {
            grads.after_match_emb.iter_mut().zip(g).for_each(|(m, x)| *m += x);
        }
    }
}

/// Weighted mean loss `Σ wᵢ lossᵢ / B` and its gradient. Each sample's
/// gradient is scaled by its weight inside the sum; omitted weights are 1.
pub fn loss_and_gradients(
    model: &QaModel,
    batch: &[EncodedExample],
    weights: Option<&[f64]>,
) -> Result<(f64, Params)> {
    if batch.is_empty() {
        return Err(Error::Shape("empty batch".into()));
    }
    if let Some(w) = weights {
        if w.len() != batch.len() {
            return Err(Error::WeightLength {
                expected: batch.len(),
                got: w.len(),
            });
        }
    }
    let mut grads = Params::zeros(&model.config);
    let inv_b = 1.0 / batch.len() as f64;
    let mut total = 0.0;
    for (i, ex) in batch.iter().enumerate() {
        check_example(&model.config, ex)?;
        let gold = check_gold(ex)?;
        let w = weights.map_or(1.0, |w| w[i]);
        if w == 0.0 {
            continue;
        }
        let (logits, cache) = forward_one(model, ex);
        total += w * example_loss(&logits, gold);
        let coef = 0.5 * w * inv_b;
        let grad_row = |row: &[f64], g: usize| -> Vec<f64> {
            let mut probs = row[..cache.n].to_vec();
            softmax_in_place(&mut probs);
            probs[g] -= 1.0;
            probs.iter().map(|p| p * coef).collect()
        };
        let d_start = grad_row(&logits.start, gold.0);
        let d_end = grad_row(&logits.end, gold.1);
        backward_one(model, ex, &cache, &d_start, &d_end, &mut grads);
    }
    Ok((total * inv_b, grads))
}
