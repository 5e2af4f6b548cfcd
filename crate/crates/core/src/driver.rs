//! The self-supervision loop: annotate the training corpus with the current
//! model, train on the mined pairs, validate, and stop once validation
//! Recall@5 stops improving. The outer "plus" loop alternates that with
//! supervised fine-tuning, feeding the fine-tuned model back in.
//!
//! Checkpoint directory layout, when an output directory is given:
//!
//! ```text
//! ckpt/iter_<t>.idc1   model after iteration t (t = 0 is neighbor initialization)
//! ckpt/best.idc1       best model by validation Recall@5
//! history.jsonl        {"t", "recall_at_5", "pairs", "stopped"} per iteration
//! train_log.jsonl      {"iteration", "epoch", "mean_loss", "grad_norm", "pairs"} per epoch
//! ```
//!
//! The plus loop writes each inner run to `round_<r>/` and its own per-round
//! history, log and best checkpoint at the top level.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, LabeledPair};
use crate::encoder::{save_checkpoint, EncoderConfig, EncoderModel};
use crate::error::{Error, Result};
use crate::eval::{evaluate_split, pair_quality};
use crate::idc::{annotate_corpus, IdcConfig};
use crate::training::{fine_tune, init_neighbor_positives, labeled_examples, train_iteration, LossReport, TrainConfig};

/// An improvement must exceed this to reset patience.
pub const MIN_IMPROVEMENT: f64 = 1e-6;

/// Validation metric cutoff.
pub const VALIDATION_K: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LoopConfig {
    /// Maximum number of annotate-and-train iterations after initialization.
    pub max_iterations: usize,
    /// Non-improving iterations tolerated before stopping.
    pub patience: usize,
    /// Outer rounds of the fine-tune feedback loop; 1 means a single
    /// self-supervised pass followed by one fine-tune.
    pub plus_rounds: usize,
    #[serde(skip)]
    pub idc: IdcConfig,
    #[serde(skip)]
    pub train: TrainConfig,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            max_iterations: 10,
            patience: 2,
            plus_rounds: 3,
            idc: IdcConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

impl LoopConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str| {
            Err(Error::Config {
                key: format!("loop.{key}"),
                reason: "must be at least 1".into(),
            })
        };
        if self.max_iterations == 0 {
            return bad("max_iterations");
        }
        if self.patience == 0 {
            return bad("patience");
        }
        if self.plus_rounds == 0 {
            return bad("plus_rounds");
        }
        self.idc.validate()?;
        self.train.validate()
    }
}

/// One line of `history.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub t: usize,
    pub recall_at_5: f64,
    pub pairs: usize,
    pub stopped: bool,
    /// Precision of the pairs trained on at this step, when the training
    /// corpus carries topic labels. Not part of the on-disk history.
    #[serde(skip)]
    pub pair_precision: Option<f64>,
}

/// One line of `train_log.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLogEntry {
    pub iteration: usize,
    pub epoch: usize,
    pub mean_loss: f64,
    pub grad_norm: f64,
    pub pairs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationState {
    pub t: usize,
    pub best_metric: f64,
    pub best_t: Option<usize>,
    pub best_checkpoint_path: Option<PathBuf>,
    pub patience: usize,
    pub patience_left: usize,
    pub history: Vec<HistoryEntry>,
}

impl IterationState {
    pub fn new(patience: usize) -> Self {
        Self {
            t: 0,
            best_metric: f64::NEG_INFINITY,
            best_t: None,
            best_checkpoint_path: None,
            patience,
            patience_left: patience,
            history: Vec::new(),
        }
    }

    /// Whether the last recorded entry ended the loop early.
    pub fn stopped_early(&self) -> bool {
        self.history.last().is_some_and(|h| h.stopped)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Convergence {
    Continue { improved: bool },
    Stop,
}

/// Folds a new validation metric into `state`. A gain above
/// [`MIN_IMPROVEMENT`] over the best so far resets patience; anything else
/// spends one unit of patience, and the loop stops when none is left.
pub fn check_convergence(state: &mut IterationState, new_metric: f64) -> Result<Convergence> {
    if new_metric.is_nan() {
        return Err(Error::NanMetric);
    }
    if state.best_t.is_none() || new_metric > state.best_metric + MIN_IMPROVEMENT {
        state.best_metric = new_metric;
        state.best_t = Some(state.t);
        state.patience_left = state.patience;
        return Ok(Convergence::Continue { improved: true });
    }
    state.patience_left = state.patience_left.saturating_sub(1);
    if state.patience_left == 0 {
        Ok(Convergence::Stop)
    } else {
        Ok(Convergence::Continue { improved: false })
    }
}

/// The corpora a loop reads. The validation corpus must be tokenized with the
/// training vocabulary.
#[derive(Debug, Clone, Copy)]
pub struct LoopData<'a> {
    pub train: &'a Corpus,
    pub valid: &'a Corpus,
    pub valid_pairs: &'a [LabeledPair],
}

#[derive(Debug, Clone)]
pub struct LoopOutcome {
    /// Best model by validation Recall@5.
    pub model: EncoderModel,
    /// Model after the first step (neighbor initialization, or the model the
    /// loop was started from).
    pub init_model: EncoderModel,
    pub state: IterationState,
    pub train_log: Vec<TrainLogEntry>,
}

/// Validation Recall@5 of `model`.
pub fn validation_recall(model: &EncoderModel, data: &LoopData) -> Result<f64> {
    let report = evaluate_split(model, data.valid, data.valid_pairs, &[VALIDATION_K])?;
    Ok(report.recall(VALIDATION_K).expect("requested cutoff"))
}

struct Artifacts {
    root: PathBuf,
}

impl Artifacts {
    fn new(root: &Path) -> Result<Self> {
        let ckpt = root.join("ckpt");
        fs::create_dir_all(&ckpt).map_err(|e| Error::io(&ckpt, e))?;
        Ok(Self { root: root.into() })
    }

    fn checkpoint(&self, name: &str) -> PathBuf {
        self.root.join("ckpt").join(name)
    }

    fn write_jsonl<T: Serialize>(&self, name: &str, rows: &[T]) -> Result<()> {
        let path = self.root.join(name);
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = BufWriter::new(file);
        for row in rows {
            let line = serde_json::to_string(row).expect("row serializes");
            writeln!(w, "{line}").map_err(|e| Error::io(&path, e))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))
    }
}

fn check_data(model: &EncoderModel, data: &LoopData) -> Result<()> {
    if data.train.is_empty() {
        return Err(Error::InvalidArgument("training corpus is empty".into()));
    }
    if data.valid_pairs.is_empty() {
        return Err(Error::InvalidArgument("no validation pairs".into()));
    }
    for corpus in [data.train, data.valid] {
        if corpus.vocab().len() != model.vocab_size() {
            return Err(Error::VocabMismatch {
                model: model.vocab_size(),
                corpus: corpus.vocab().len(),
            });
        }
    }
    Ok(())
}

fn log_epochs(log: &mut Vec<TrainLogEntry>, iteration: usize, pairs: usize, reports: &[LossReport]) {
    log.extend(reports.iter().enumerate().map(|(epoch, r)| TrainLogEntry {
        iteration,
        epoch,
        mean_loss: r.mean_loss,
        grad_norm: r.grad_norm,
        pairs,
    }));
}

/// Bookkeeping shared by every step of a loop: history, patience, the
/// in-memory best model and the optional on-disk artifacts.
struct Tracker {
    state: IterationState,
    best: Option<EncoderModel>,
    artifacts: Option<Artifacts>,
    train_log: Vec<TrainLogEntry>,
}

impl Tracker {
    fn new(patience: usize, out: Option<&Path>) -> Result<Self> {
        Ok(Self {
            state: IterationState::new(patience),
            best: None,
            artifacts: out.map(Artifacts::new).transpose()?,
            train_log: Vec::new(),
        })
    }

    /// Records step `t` and returns whether the loop should stop.
    fn record(
        &mut self,
        t: usize,
        model: &EncoderModel,
        vocab: &crate::corpus::Vocab,
        metric: f64,
        pairs: usize,
        pair_precision: Option<f64>,
    ) -> Result<bool> {
        self.state.t = t;
        let decision = check_convergence(&mut self.state, metric)?;
        let stop = decision == Convergence::Stop;
        self.state.history.push(HistoryEntry {
            t,
            recall_at_5: metric,
            pairs,
            stopped: stop,
            pair_precision,
        });
        if let Some(a) = &self.artifacts {
            save_checkpoint(&a.checkpoint(&format!("iter_{t}.idc1")), model, vocab)?;
        }
        if decision == (Convergence::Continue { improved: true }) {
            self.best = Some(model.clone());
            if let Some(a) = &self.artifacts {
                let path = a.checkpoint("best.idc1");
                save_checkpoint(&path, model, vocab)?;
                self.state.best_checkpoint_path = Some(path);
            }
        }
        if let Some(a) = &self.artifacts {
            a.write_jsonl("history.jsonl", &self.state.history)?;
            a.write_jsonl("train_log.jsonl", &self.train_log)?;
        }
        log::info!(
            "t={t} recall@5={metric:.4} pairs={pairs}{}{}",
            pair_precision.map(|p| format!(" precision={p:.4}")).unwrap_or_default(),
            if stop { " (stopping)" } else { "" }
        );
        Ok(stop)
    }
}

fn run_from(
    mut model: EncoderModel,
    neighbor_init: bool,
    data: &LoopData,
    cfg: &LoopConfig,
    out: Option<&Path>,
) -> Result<LoopOutcome> {
    cfg.validate()?;
    check_data(&model, data)?;
    let train = data.train;
    let labeled = train.has_topic_labels();
    let mut tracker = Tracker::new(cfg.patience, out)?;

    // t = 0: neighbor initialization, or the incoming model as-is
    let (pairs, precision) = if neighbor_init {
        let pairs = init_neighbor_positives(train);
        let reports = train_iteration(&mut model, &pairs, train, &cfg.train.for_round(0))?;
        log_epochs(&mut tracker.train_log, 0, pairs.len(), &reports);
        let precision = labeled.then(|| pair_quality(&pairs, train)).transpose()?;
        (pairs.len(), precision.map(|q| q.precision))
    } else {
        (0, None)
    };
    let metric = validation_recall(&model, data)?;
    let init_model = model.clone();
    let mut stop = tracker.record(0, &model, train.vocab(), metric, pairs, precision)?;

    let mut t = 1;
    while !stop && t <= cfg.max_iterations {
        let pairs = annotate_corpus(&model, train, &cfg.idc)?;
        let precision = labeled.then(|| pair_quality(&pairs, train)).transpose()?;
        let reports = train_iteration(&mut model, &pairs, train, &cfg.train.for_round(t as u64))?;
        log_epochs(&mut tracker.train_log, t, pairs.len(), &reports);
        let metric = validation_recall(&model, data)?;
        stop = tracker.record(t, &model, train.vocab(), metric, pairs.len(), precision.map(|q| q.precision))?;
        t += 1;
    }

    Ok(LoopOutcome {
        model: tracker.best.expect("step 0 always improves"),
        init_model,
        state: tracker.state,
        train_log: tracker.train_log,
    })
}

/// Initializes a model from `encoder`, trains it on adjacent-sentence
/// positives, then iterates annotation and training until validation
/// Recall@5 stops improving. Returns the best model.
pub fn run_infocse(
    data: &LoopData,
    encoder: &EncoderConfig,
    cfg: &LoopConfig,
    out: Option<&Path>,
) -> Result<LoopOutcome> {
    let encoder = EncoderConfig {
        vocab_size: data.train.vocab().len(),
        ..encoder.clone()
    };
    run_from(EncoderModel::new(encoder)?, true, data, cfg, out)
}

/// Like [`run_infocse`], but continues from an existing model and skips
/// neighbor initialization.
pub fn continue_infocse(
    model: EncoderModel,
    data: &LoopData,
    cfg: &LoopConfig,
    out: Option<&Path>,
) -> Result<LoopOutcome> {
    run_from(model, false, data, cfg, out)
}

/// Training settings for the fine-tuning step of plus round `round`. A
/// one-pass baseline that fine-tunes with round 0's settings is exactly the
/// first plus round.
pub fn finetune_config(train: &TrainConfig, round: usize) -> TrainConfig {
    train.for_round(0xF1_0000 + round as u64)
}

/// Outer loop: a self-supervised run (from scratch in round 0, from the
/// current fine-tuned model afterwards), then fine-tuning on `train_pairs`,
/// then validation of the fine-tuned model. Stops on the same patience rule
/// and returns the best fine-tuned model.
pub fn run_infocse_plus(
    data: &LoopData,
    train_pairs: &[LabeledPair],
    encoder: &EncoderConfig,
    cfg: &LoopConfig,
    out: Option<&Path>,
) -> Result<LoopOutcome> {
    cfg.validate()?;
    labeled_examples(train_pairs, data.train)?;
    let mut tracker = Tracker::new(cfg.patience, out)?;
    let mut current: Option<EncoderModel> = None;
    let mut first_inner: Option<EncoderModel> = None;

    for round in 0..cfg.plus_rounds {
        let inner_out = out.map(|o| o.join(format!("round_{round}")));
        let inner = match current.take() {
            None => run_infocse(data, encoder, cfg, inner_out.as_deref())?,
            Some(m) => continue_infocse(m, data, cfg, inner_out.as_deref())?,
        };
        first_inner.get_or_insert_with(|| inner.init_model.clone());
        let mut model = inner.model;
        let ft_cfg = finetune_config(&cfg.train, round);
        let reports = fine_tune(&mut model, train_pairs, data.train, &ft_cfg)?;
        log_epochs(&mut tracker.train_log, round, train_pairs.len(), &reports);
        let metric = validation_recall(&model, data)?;
        let stop = tracker.record(round, &model, data.train.vocab(), metric, train_pairs.len(), None)?;
        current = Some(model);
        if stop {
            break;
        }
    }

    Ok(LoopOutcome {
        model: tracker.best.expect("round 0 always improves"),
        init_model: first_inner.expect("at least one round"),
        state: tracker.state,
        train_log: tracker.train_log,
    })
}
