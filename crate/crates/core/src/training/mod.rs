//! Contrastive training: batching with in-batch negatives, the InfoNCE
//! objective, Adam, the adjacent-sentence initializer and supervised
//! fine-tuning on labeled document/item pairs.

mod adam;
mod batch;
mod loss;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, LabeledPair};
use crate::encoder::EncoderModel;
use crate::error::{Error, Result};
use crate::idc::{PositivePair, PositivePairSet};

pub use adam::{adam_step, AdamState};
pub use batch::{make_batches, Batch, Unit};
pub use loss::{infonce_loss, infonce_loss_and_grads, Direction, Gradients, LossReport};

use batch::{distinct_docs, pack, pair_examples, Example};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs_per_iteration: usize,
    pub finetune_epochs: usize,
    /// Step size for supervised fine-tuning; `learning_rate` when unset.
    pub finetune_learning_rate: Option<f64>,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub direction: Direction,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 64,
            epochs_per_iteration: 3,
            finetune_epochs: 20,
            finetune_learning_rate: None,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            direction: Direction::AnchorToPositive,
            seed: 0,
        }
    }
}

/// SplitMix64 finalizer, used to derive independent sub-seeds.
pub(crate) fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, reason: String| {
            Err(Error::Config {
                key: format!("train.{key}"),
                reason,
            })
        };
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate", format!("must be positive, got {}", self.learning_rate));
        }
        if let Some(lr) = self.finetune_learning_rate {
            if !(lr > 0.0 && lr.is_finite()) {
                return bad("finetune_learning_rate", format!("must be positive, got {lr}"));
            }
        }
        if self.batch_size < 2 {
            return bad("batch_size", format!("must be at least 2, got {}", self.batch_size));
        }
        if self.epochs_per_iteration == 0 {
            return bad("epochs_per_iteration", "must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.adam_beta1) {
            return bad("adam_beta1", "must lie in [0, 1)".into());
        }
        if !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("adam_beta2", "must lie in [0, 1)".into());
        }
        if !(self.adam_eps > 0.0) {
            return bad("adam_eps", "must be positive".into());
        }
        Ok(())
    }

    /// Copy with a seed derived for round `round`, so successive rounds
    /// shuffle differently.
    pub fn for_round(&self, round: u64) -> Self {
        Self {
            seed: mix_seed(self.seed, round.wrapping_add(1)),
            ..self.clone()
        }
    }

    fn epoch_seed(&self, epoch: usize) -> u64 {
        mix_seed(self.seed, 0xE90C_0000 + epoch as u64)
    }
}

/// Adjacent sentences `(i, i + 1)` of every document as positives.
pub fn init_neighbor_positives(corpus: &Corpus) -> PositivePairSet {
    let pairs = corpus
        .documents()
        .iter()
        .flat_map(|d| {
            (1..d.len()).map(move |j| PositivePair {
                doc_id: d.doc_id.clone(),
                sent_i: j - 1,
                sent_j: j,
                cluster: j - 1,
            })
        })
        .collect();
    PositivePairSet { pairs }
}

fn run_epochs(
    model: &mut EncoderModel,
    examples: Vec<Example>,
    epochs: usize,
    cfg: &TrainConfig,
) -> Result<Vec<LossReport>> {
    cfg.validate()?;
    if examples.is_empty() {
        return Err(Error::NoBatches);
    }
    let mut state = AdamState::new(model);
    let mut reports = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        let batches = pack(examples.clone(), cfg.batch_size, cfg.epoch_seed(epoch))?;
        if batches.is_empty() {
            return Err(Error::NoBatches);
        }
        let (mut loss_sum, mut norm_sum) = (0.0, 0.0);
        for b in &batches {
            let (report, grads) = infonce_loss_and_grads(model, b, cfg.direction)?;
            adam_step(model, &grads, &mut state, cfg)?;
            loss_sum += report.mean_loss;
            norm_sum += report.grad_norm;
        }
        let n = batches.len() as f64;
        reports.push(LossReport {
            mean_loss: loss_sum / n,
            batch_count: batches.len(),
            grad_norm: norm_sum / n,
        });
    }
    Ok(reports)
}

/// `epochs_per_iteration` passes over `pairs` with a fresh optimizer state.
/// Returns one report per epoch.
pub fn train_iteration(
    model: &mut EncoderModel,
    pairs: &PositivePairSet,
    corpus: &Corpus,
    cfg: &TrainConfig,
) -> Result<Vec<LossReport>> {
    let examples = pair_examples(pairs, corpus)?;
    run_epochs(model, examples, cfg.epochs_per_iteration, cfg)
}

/// Mean batch loss of `pairs` under `model`, batched as epoch 0 of
/// `train_iteration` would batch them.
pub fn evaluate_pair_loss(
    model: &EncoderModel,
    pairs: &PositivePairSet,
    corpus: &Corpus,
    cfg: &TrainConfig,
) -> Result<f64> {
    let batches = pack(pair_examples(pairs, corpus)?, cfg.batch_size, cfg.epoch_seed(0))?;
    if batches.is_empty() {
        return Err(Error::NoBatches);
    }
    let mut total = 0.0;
    for b in &batches {
        total += infonce_loss(model, b, cfg.direction)?;
    }
    Ok(total / batches.len() as f64)
}

pub(crate) fn labeled_examples(labeled: &[LabeledPair], corpus: &Corpus) -> Result<Vec<Example>> {
    let mut out = Vec::with_capacity(labeled.len());
    for p in labeled {
        let doc = corpus
            .doc(&p.doc_id)
            .ok_or_else(|| Error::UnknownDocId(p.doc_id.clone()))?;
        if doc.is_empty() || p.item_tokens.is_empty() {
            log::warn!("skipping labeled pair for `{}`: empty document or item", p.doc_id);
            continue;
        }
        out.push(Example {
            doc_id: p.doc_id.clone(),
            anchor: doc.sentences.iter().map(|s| s.tokens.clone()).collect(),
            positive: vec![p.item_tokens.clone()],
        });
    }
    let docs = distinct_docs(&out);
    if docs < 2 {
        return Err(Error::TooFewDocuments(docs));
    }
    Ok(out)
}

/// Supervised contrastive fine-tuning: the pooled document embedding is the
/// anchor and its item the positive; other items in the batch are negatives.
pub fn fine_tune(
    model: &mut EncoderModel,
    labeled: &[LabeledPair],
    corpus: &Corpus,
    cfg: &TrainConfig,
) -> Result<Vec<LossReport>> {
    let examples = labeled_examples(labeled, corpus)?;
    let cfg = TrainConfig {
        learning_rate: cfg.finetune_learning_rate.unwrap_or(cfg.learning_rate),
        ..cfg.clone()
    };
    run_epochs(model, examples, cfg.finetune_epochs.max(1), &cfg)
}

/// Mean fine-tuning loss of `labeled` under `model`.
pub fn evaluate_labeled_loss(
    model: &EncoderModel,
    labeled: &[LabeledPair],
    corpus: &Corpus,
    cfg: &TrainConfig,
) -> Result<f64> {
    let batches = pack(labeled_examples(labeled, corpus)?, cfg.batch_size, cfg.epoch_seed(0))?;
    let mut total = 0.0;
    for b in &batches {
        total += infonce_loss(model, b, cfg.direction)?;
    }
    Ok(total / batches.len() as f64)
}
