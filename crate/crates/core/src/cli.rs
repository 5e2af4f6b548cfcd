//! Command-line entry point.
//!
//! Every subcommand resolves its configuration (file, then flag overrides),
//! takes a lock on the output directory, writes `resolved_config.json` there,
//! and prints a one-line JSON summary on success. Usage errors exit with 2,
//! every other failure with 1 after a one-line diagnostic on stderr.

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::config::{load_config, prepare_splits, RunConfig};
use crate::corpus::{generate_synthetic, write_corpus, write_labeled_pairs, LabeledPair, Split};
use crate::driver::{run_infocse, run_infocse_plus, LoopData, LoopOutcome, TrainLogEntry};
use crate::encoder::{load_checkpoint, save_checkpoint, EncoderConfig, EncoderModel};
use crate::error::{Error, Result};
use crate::eval::{evaluate_split, gradient_check, pair_quality, RECALL_KS};
use crate::idc::annotate_corpus;
use crate::training::{fine_tune, init_neighbor_positives, train_iteration};

/// Environment variable capping the worker threads used for annotation and
/// evaluation.
pub const THREADS_ENV: &str = "CORRMINE_THREADS";

const LOCK_FILE: &str = ".lock";

#[derive(Debug, Parser)]
#[command(name = "corrmine", version, about = "Self-reinforcing positive-pair mining for contrastive encoders")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
struct Common {
    /// JSON run configuration; defaults apply to anything it omits.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed for model initialization, batching and corpus generation.
    #[arg(long)]
    seed: Option<u64>,
    /// Top-K partners kept per sentence when pruning.
    #[arg(long)]
    k: Option<usize>,
    /// Maximum annotate-and-train iterations.
    #[arg(long)]
    iterations: Option<usize>,
    /// Non-improving iterations tolerated before stopping.
    #[arg(long)]
    patience: Option<usize>,
    /// Output directory for checkpoints, logs and reports.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
struct ModelArg {
    /// Checkpoint to start from instead of a freshly initialized model.
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Valid,
    Test,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic corpus and its labeled pairs as JSONL.
    GenCorpus {
        #[command(flatten)]
        common: Common,
    },
    /// Train a fresh model on adjacent-sentence positives.
    Init {
        #[command(flatten)]
        common: Common,
    },
    /// One annotation pass over the training split; dumps the mined pairs.
    Annotate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: ModelArg,
    },
    /// The full self-supervised loop.
    Run {
        #[command(flatten)]
        common: Common,
    },
    /// The self-supervised loop alternated with fine-tuning.
    RunPlus {
        #[command(flatten)]
        common: Common,
    },
    /// Supervised fine-tuning on the labeled training pairs.
    Finetune {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: ModelArg,
    },
    /// Recall@K of a checkpoint on one split.
    Eval {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: ModelArg,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
    },
    /// Precision and recall of mined pairs against topic labels. Without a
    /// model, scores the adjacent-sentence heuristic.
    PairQuality {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: ModelArg,
    },
    /// Compare analytic gradients with central finite differences.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        tolerance: Option<f64>,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::GenCorpus { common }
            | Command::Init { common }
            | Command::Annotate { common, .. }
            | Command::Run { common }
            | Command::RunPlus { common }
            | Command::Finetune { common, .. }
            | Command::Eval { common, .. }
            | Command::PairQuality { common, .. }
            | Command::Gradcheck { common, .. } => common,
        }
    }
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn resolve_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => load_config(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.set_seed(seed);
    }
    if let Some(k) = common.k {
        cfg.idc.k = k;
    }
    if let Some(n) = common.iterations {
        cfg.loop_cfg.max_iterations = n;
    }
    if let Some(p) = common.patience {
        cfg.loop_cfg.patience = p;
    }
    if let Some(out) = &common.out {
        cfg.paths.checkpoint_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| Error::Config {
        key: THREADS_ENV.into(),
        reason: format!("must be a positive integer, got `{raw}`"),
    })?;
    // a pool may already exist when dispatch runs more than once in-process
    if rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_err() {
        log::debug!("global thread pool already initialized; {THREADS_ENV} ignored");
    }
    Ok(())
}

/// Exclusive hold on an output directory, released on drop.
struct DirLock {
    path: PathBuf,
}

impl DirLock {
    fn acquire(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(Self { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Locked(path)),
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let text = serde_json::to_string_pretty(value).expect("report serializes") + "\n";
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
    for row in rows {
        let line = serde_json::to_string(row).expect("row serializes");
        writeln!(file, "{line}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

fn print_summary(value: serde_json::Value) {
    println!("{value}");
}

fn fresh_model(cfg: &RunConfig, train: &Split) -> Result<EncoderModel> {
    EncoderModel::new(EncoderConfig {
        vocab_size: train.corpus.vocab().len(),
        ..cfg.encoder.clone()
    })
}

fn model_for(cfg: &RunConfig, arg: &ModelArg, train: &Split) -> Result<EncoderModel> {
    let Some(path) = &arg.model else {
        return fresh_model(cfg, train);
    };
    let (model, vocab) = load_checkpoint(path)?;
    if &vocab != train.corpus.vocab() {
        return Err(Error::VocabMismatch {
            model: vocab.len(),
            corpus: train.corpus.vocab().len(),
        });
    }
    Ok(model)
}

fn labeled_train_pairs(cfg: &RunConfig, train: &Split) -> Vec<LabeledPair> {
    let n = cfg.labeled_limit.unwrap_or(usize::MAX).min(train.pairs.len());
    train.pairs[..n].to_vec()
}

fn execute(command: Command) -> Result<()> {
    let cfg = resolve_config(command.common())?;
    configure_threads()?;
    let out = cfg.paths.checkpoint_dir.clone();
    let _lock = DirLock::acquire(&out)?;
    cfg.write_resolved(&out)?;
    let reports = cfg.report_dir().to_path_buf();

    match command {
        Command::GenCorpus { .. } => {
            let (corpus, pairs) = generate_synthetic(&cfg.synthetic)?;
            write_corpus(&corpus, &out.join("corpus.jsonl"))?;
            write_labeled_pairs(&pairs, &out.join("pairs.jsonl"))?;
            print_summary(json!({
                "documents": corpus.len(),
                "pairs": pairs.len(),
                "vocab": corpus.vocab().len(),
            }));
        }
        Command::Init { .. } => {
            let [train, valid, _] = prepare_splits(&cfg)?;
            let mut model = fresh_model(&cfg, &train)?;
            let pairs = init_neighbor_positives(&train.corpus);
            let epochs = train_iteration(&mut model, &pairs, &train.corpus, &cfg.train.for_round(0))?;
            let log: Vec<_> = epochs
                .iter()
                .enumerate()
                .map(|(epoch, r)| TrainLogEntry {
                    iteration: 0,
                    epoch,
                    mean_loss: r.mean_loss,
                    grad_norm: r.grad_norm,
                    pairs: pairs.len(),
                })
                .collect();
            write_jsonl(&out.join("train_log.jsonl"), &log)?;
            let ckpt = out.join("ckpt").join("init.idc1");
            fs::create_dir_all(out.join("ckpt")).map_err(|e| Error::io(&out, e))?;
            save_checkpoint(&ckpt, &model, train.corpus.vocab())?;
            let report = evaluate_split(&model, &valid.corpus, &valid.pairs, &RECALL_KS)?;
            write_json(&reports.join("eval_valid.json"), &report)?;
            print_summary(json!({ "checkpoint": ckpt, "pairs": pairs.len(), "valid": report }));
        }
        Command::Annotate { model, .. } => {
            let [train, _, _] = prepare_splits(&cfg)?;
            let m = model_for(&cfg, &model, &train)?;
            let pairs = annotate_corpus(&m, &train.corpus, &cfg.idc)?;
            let path = out.join("mined_pairs.jsonl");
            pairs.write_jsonl(&path)?;
            let quality = if train.corpus.has_topic_labels() {
                Some(pair_quality(&pairs, &train.corpus)?)
            } else {
                None
            };
            print_summary(json!({ "pairs": pairs.len(), "output": path, "quality": quality }));
        }
        Command::Run { .. } => {
            let [train, valid, test] = prepare_splits(&cfg)?;
            let data = LoopData {
                train: &train.corpus,
                valid: &valid.corpus,
                valid_pairs: &valid.pairs,
            };
            let outcome = run_infocse(&data, &cfg.encoder, &cfg.loop_config(), Some(&out))?;
            finish_loop(&outcome, &test, &reports)?;
        }
        Command::RunPlus { .. } => {
            let [train, valid, test] = prepare_splits(&cfg)?;
            let data = LoopData {
                train: &train.corpus,
                valid: &valid.corpus,
                valid_pairs: &valid.pairs,
            };
            let labeled = labeled_train_pairs(&cfg, &train);
            let outcome = run_infocse_plus(&data, &labeled, &cfg.encoder, &cfg.loop_config(), Some(&out))?;
            finish_loop(&outcome, &test, &reports)?;
        }
        Command::Finetune { model, .. } => {
            let [train, valid, _] = prepare_splits(&cfg)?;
            let mut m = model_for(&cfg, &model, &train)?;
            let labeled = labeled_train_pairs(&cfg, &train);
            let epochs = fine_tune(&mut m, &labeled, &train.corpus, &cfg.train)?;
            let log: Vec<_> = epochs
                .iter()
                .enumerate()
                .map(|(epoch, r)| TrainLogEntry {
                    iteration: 0,
                    epoch,
                    mean_loss: r.mean_loss,
                    grad_norm: r.grad_norm,
                    pairs: labeled.len(),
                })
                .collect();
            write_jsonl(&out.join("train_log.jsonl"), &log)?;
            fs::create_dir_all(out.join("ckpt")).map_err(|e| Error::io(&out, e))?;
            let ckpt = out.join("ckpt").join("finetuned.idc1");
            save_checkpoint(&ckpt, &m, train.corpus.vocab())?;
            let report = evaluate_split(&m, &valid.corpus, &valid.pairs, &RECALL_KS)?;
            write_json(&reports.join("eval_valid.json"), &report)?;
            print_summary(json!({ "checkpoint": ckpt, "labeled": labeled.len(), "valid": report }));
        }
        Command::Eval { model, split, .. } => {
            if model.model.is_none() {
                return Err(Error::InvalidArgument("eval needs --model <checkpoint>".into()));
            }
            let [train, valid, test] = prepare_splits(&cfg)?;
            let m = model_for(&cfg, &model, &train)?;
            let (name, s) = match split {
                SplitArg::Train => ("train", &train),
                SplitArg::Valid => ("valid", &valid),
                SplitArg::Test => ("test", &test),
            };
            let report = evaluate_split(&m, &s.corpus, &s.pairs, &RECALL_KS)?;
            write_json(&reports.join(format!("eval_{name}.json")), &report)?;
            print_summary(serde_json::to_value(&report).expect("report serializes"));
        }
        Command::PairQuality { model, .. } => {
            let [train, _, _] = prepare_splits(&cfg)?;
            let pairs = match &model.model {
                Some(_) => annotate_corpus(&model_for(&cfg, &model, &train)?, &train.corpus, &cfg.idc)?,
                None => init_neighbor_positives(&train.corpus),
            };
            let report = pair_quality(&pairs, &train.corpus)?;
            write_json(&reports.join("pair_quality.json"), &report)?;
            print_summary(serde_json::to_value(report).expect("report serializes"));
        }
        Command::Gradcheck { trials, tolerance, .. } => {
            let mut gc = cfg.gradcheck;
            gc.trials = trials.unwrap_or(gc.trials);
            gc.tolerance = tolerance.unwrap_or(gc.tolerance);
            if gc.trials == 0 {
                return Err(Error::Config {
                    key: "gradcheck.trials".into(),
                    reason: "must be at least 1".into(),
                });
            }
            let report = gradient_check(&gc)?;
            write_json(&reports.join("gradcheck.json"), &report)?;
            print_summary(json!({
                "trials": report.trials.len(),
                "tolerance": report.tolerance,
                "max_rel_error": report.max_rel_error,
                "failures": report.failures,
                "passed": report.passed,
            }));
            if !report.passed {
                return Err(Error::InvalidArgument(format!(
                    "gradient check failed: {} of {} trials above tolerance {} (max relative error {:.3e})",
                    report.failures,
                    report.trials.len(),
                    report.tolerance,
                    report.max_rel_error
                )));
            }
        }
    }
    Ok(())
}

fn finish_loop(outcome: &LoopOutcome, test: &Split, reports: &Path) -> Result<()> {
    let report = evaluate_split(&outcome.model, &test.corpus, &test.pairs, &RECALL_KS)?;
    write_json(&reports.join("eval_test.json"), &report)?;
    let state = &outcome.state;
    print_summary(json!({
        "iterations": state.history.len(),
        "best_t": state.best_t,
        "best_valid_recall_at_5": state.best_metric,
        "stopped_early": state.stopped_early(),
        "test": report,
    }));
    Ok(())
}
