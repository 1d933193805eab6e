//! Weighted SGD training, fine-tuning, and subset sampling.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::model::{encode_example, loss_and_gradients, EncodedExample, Params, QaModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Optimizer {
    Sgd,
    SgdMomentum { momentum: f64 },
    /// Adaptive moments. Not a default: per-sample weights no longer act as
    /// exact learning-rate factors under it.
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

/// How per-sample weights enter the update. Only gradient scaling exists.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    GradScale,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub weight_mode: WeightMode,
    pub seed: u64,
    pub shuffle: bool,
    /// Maximum global gradient norm per step.
    pub gradient_clip: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 5,
            batch_size: 16,
            learning_rate: 0.05,
            optimizer: Optimizer::Sgd,
            weight_mode: WeightMode::GradScale,
            seed: 0,
            shuffle: true,
            gradient_clip: Some(1.0),
        }
    }
}

impl TrainConfig {
    /// Defaults with the two-epoch fine-tuning budget.
    pub fn finetune() -> Self {
        TrainConfig {
            epochs: 2,
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::TrainConfig("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::TrainConfig("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::TrainConfig(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        match self.optimizer {
            Optimizer::SgdMomentum { momentum } if !(0.0..1.0).contains(&momentum) => {
                return Err(Error::TrainConfig(format!("momentum must be in [0, 1), got {momentum}")));
            }
            Optimizer::Adam { beta1, beta2, eps }
                if !((0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && eps > 0.0) =>
            {
                return Err(Error::TrainConfig("adam needs betas in [0, 1) and eps > 0".into()));
            }
            _ => {}
        }
        if let Some(c) = self.gradient_clip {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::TrainConfig(format!("gradient_clip must be positive, got {c}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    /// Weighted mean loss per epoch.
    pub epoch_losses: Vec<f64>,
    pub steps: usize,
    pub examples_seen: usize,
    pub unusable: usize,
    pub wall_time_secs: f64,
}

/// Training order for one epoch: the identity, or a shuffle that depends
/// only on `(seed, epoch)`.
pub fn epoch_order(n: usize, seed: u64, epoch: usize, shuffle: bool) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    if shuffle {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(epoch as u64);
        order.shuffle(&mut rng);
    }
    order
}

fn check_weights(weights: &[f64], n: usize) -> Result<()> {
    if weights.len() != n {
        return Err(Error::WeightLength {
            expected: n,
            got: weights.len(),
        });
    }
    if let Some((index, &value)) = weights.iter().enumerate().find(|(_, w)| !(w.is_finite() && **w >= 0.0)) {
        return Err(Error::InvalidWeight { index, value });
    }
    Ok(())
}

/// Trains `model` on `corpus`. Each sample's gradient is multiplied by its
/// weight before the batch update, so under plain SGD a weight acts as a
/// per-sample learning-rate factor. Unusable (truncated) pairs are skipped
/// and counted.
pub fn train(
    mut model: QaModel,
    corpus: &Corpus,
    config: &TrainConfig,
    weights: Option<&[f64]>,
) -> Result<(QaModel, TrainLog)> {
    config.validate()?;
    if let Some(w) = weights {
        check_weights(w, corpus.len())?;
    }
    let started = Instant::now();

    let mut examples: Vec<EncodedExample> = Vec::with_capacity(corpus.len());
    let mut example_weights: Vec<f64> = Vec::with_capacity(corpus.len());
    let mut unusable = 0;
    for (i, pair) in corpus.iter().enumerate() {
        let ex = encode_example(pair, &model.config);
        if ex.usable() {
            examples.push(ex);
            example_weights.push(weights.map_or(1.0, |w| w[i]));
        } else {
            unusable += 1;
        }
    }
    if unusable > 0 {
        log::info!("{}: skipping {unusable} unusable pairs", corpus.name);
    }
    if examples.is_empty() {
        return Err(Error::NoUsableExamples);
    }

    let lr = config.learning_rate;
    let mut velocity = match config.optimizer {
        Optimizer::Sgd => None,
        _ => Some(Params::zeros(&model.config)),
    };
    let mut second = match config.optimizer {
        Optimizer::Adam { .. } => Some(Params::zeros(&model.config)),
        _ => None,
    };
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut steps = 0;
    let mut batch: Vec<EncodedExample> = Vec::with_capacity(config.batch_size);
    let mut batch_w: Vec<f64> = Vec::with_capacity(config.batch_size);

    for epoch in 0..config.epochs {
        let order = epoch_order(examples.len(), config.seed, epoch, config.shuffle);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            batch.clear();
            batch_w.clear();
            for &i in chunk {
                batch.push(examples[i].clone());
                batch_w.push(example_weights[i]);
            }
            let (loss, mut grads) = loss_and_gradients(&model, &batch, Some(&batch_w))?;
            if !loss.is_finite() || !grads.is_finite() {
                return Err(Error::NonFiniteLoss { step: steps });
            }
            total += loss * chunk.len() as f64;

            if let Some(max) = config.gradient_clip {
                let norm = grads.sq_norm().sqrt();
                if norm > max {
                    grads.scale(max / norm);
                }
            }
            match (&mut velocity, config.optimizer) {
                (Some(v), Optimizer::SgdMomentum { momentum }) => {
                    v.scale(momentum);
                    v.add_scaled(&grads, 1.0);
                    model.params.add_scaled(v, -lr);
                }
                (Some(m1), Optimizer::Adam { beta1, beta2, eps }) => {
                    let m2 = second.as_mut().expect("second moments exist for adam");
                    let t = (steps + 1) as i32;
                    let step = lr * (1.0 - beta2.powi(t)).sqrt() / (1.0 - beta1.powi(t));
                    let g_all = grads.named();
                    let m1_all = m1.tensors_mut();
                    let m2_all = m2.tensors_mut();
                    for (((p, g), a), b) in model.params.tensors_mut().into_iter().zip(g_all).zip(m1_all).zip(m2_all) {
                        for i in 0..p.len() {
                            let gi = g.1[i];
                            a[i] = beta1 * a[i] + (1.0 - beta1) * gi;
                            b[i] = beta2 * b[i] + (1.0 - beta2) * gi * gi;
                            p[i] -= step * a[i] / (b[i].sqrt() + eps);
                        }
                    }
                }
                _ => model.params.add_scaled(&grads, -lr),
            }
            steps += 1;
        }
        let mean = total / examples.len() as f64;
        log::debug!("{}: epoch {} loss {mean:.4}", corpus.name, epoch + 1);
        epoch_losses.push(mean);
    }

    let log = TrainLog {
        epoch_losses,
        steps,
        examples_seen: examples.len() * config.epochs,
        unusable,
        wall_time_secs: started.elapsed().as_secs_f64(),
    };
    Ok((model, log))
}

/// Continues training `base` on a target-domain sample.
pub fn finetune(base: &QaModel, target_sample: &Corpus, config: &TrainConfig) -> Result<(QaModel, TrainLog)> {
    if target_sample.is_empty() {
        return Err(Error::TrainConfig("fine-tuning sample is empty".into()));
    }
    train(base.clone(), target_sample, config, None)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetPlan {
    /// Percentages of the corpus, each in (0, 100].
    pub fractions: Vec<f64>,
    pub n_draws: usize,
    pub master_seed: u64,
}

impl SubsetPlan {
    pub fn validate(&self) -> Result<()> {
        if self.n_draws == 0 {
            return Err(Error::Plan("n_draws must be at least 1".into()));
        }
        if self.fractions.is_empty() {
            return Err(Error::Plan("no fractions".into()));
        }
        if let Some(f) = self.fractions.iter().find(|f| !(**f > 0.0 && **f <= 100.0)) {
            return Err(Error::Plan(format!("fraction {f} outside (0, 100]")));
        }
        Ok(())
    }
}

/// Stable 64-bit seed from a master seed and a cell description.
pub fn derive_seed(master_seed: u64, label: &str, fraction: Option<f64>, draw: Option<usize>) -> u64 {
    let mut h = Sha256::new();
    h.update(master_seed.to_le_bytes());
    h.update((label.len() as u64).to_le_bytes());
    h.update(label.as_bytes());
    h.update(fraction.map_or(u64::MAX, f64::to_bits).to_le_bytes());
    h.update(draw.map_or(u64::MAX, |d| d as u64).to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// `floor(fraction / 100 × n)`.
pub fn subset_size(fraction: f64, n: usize) -> usize {
    // the epsilon absorbs representation error such as 0.07 * 100
    ((fraction * n as f64) / 100.0 + 1e-9).floor() as usize
}

/// Subsets drawn per fraction, in plan order.
#[derive(Debug, Clone, PartialEq)]
pub struct Subsets {
    pub fraction: f64,
    pub draws: Vec<Corpus>,
}

/// Independent draws without replacement for every fraction of the plan.
/// Draw `i` of fraction `f` depends only on `(master_seed, f, i)`.
pub fn sample_subsets(corpus: &Corpus, plan: &SubsetPlan) -> Result<Vec<Subsets>> {
    plan.validate()?;
    let n = corpus.len();
    plan.fractions
        .iter()
        .map(|&fraction| {
            let k = subset_size(fraction, n);
            if k == 0 {
                return Err(Error::EmptySubset { fraction, n });
            }
            let draws = (0..plan.n_draws)
                .map(|draw| {
                    let seed = derive_seed(plan.master_seed, "subset", Some(fraction), Some(draw));
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    let mut idx = rand::seq::index::sample(&mut rng, n, k).into_vec();
                    idx.sort_unstable();
                    corpus.select(format!("{}-{fraction}pct-{draw}", corpus.name), &idx)
                })
                .collect();
            Ok(Subsets { fraction, draws })
        })
        .collect()
}
