use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::TokenId;
use crate::encoder::{EncoderConfig, EncoderModel};
use crate::error::{Error, Result};
use crate::training::{infonce_loss, infonce_loss_and_grads, Batch, Direction, Unit};

/// Denominator floor for the relative error, so that two gradients that are
/// both numerically zero do not produce a spurious failure.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

/// Upper bounds for the random models and batches drawn per trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GradCheckConfig {
    pub max_vocab: usize,
    pub max_embed_dim: usize,
    pub max_out_dim: usize,
    pub max_batch: usize,
    /// Central-difference half step.
    pub step: f64,
    pub trials: usize,
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            max_vocab: 50,
            max_embed_dim: 16,
            max_out_dim: 8,
            max_batch: 8,
            step: 1e-4,
            trials: 100,
            tolerance: 1e-4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: usize,
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub out_dim: usize,
    pub batch_size: usize,
    pub params_checked: usize,
    pub max_rel_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub max_rel_error: f64,
    pub failures: usize,
    pub passed: bool,
    pub trials: Vec<TrialResult>,
}

/// `|a - n| / max(|a|, |n|, REL_ERROR_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

fn param_mut(m: &mut EncoderModel, tensor: usize, i: usize) -> &mut f32 {
    match tensor {
        0 => &mut m.token_table[i],
        1 => &mut m.projection[i],
        _ => &mut m.proj_bias[i],
    }
}

/// Largest relative error between the analytic gradient and a central
/// difference of the loss over every parameter. The difference quotient uses
/// the step actually realized after rounding the perturbed parameter to `f32`.
pub fn check_batch(model: &EncoderModel, batch: &Batch, direction: Direction, step: f64) -> Result<f64> {
    let (_, grads) = infonce_loss_and_grads(model, batch, direction)?;
    let analytic: Vec<f64> = grads.iter().collect();
    let mut probe = model.clone();
    let mut worst = 0.0f64;
    let sizes = [probe.token_table.len(), probe.projection.len(), probe.proj_bias.len()];
    let mut idx = 0;
    for (tensor, len) in sizes.into_iter().enumerate() {
        for i in 0..len {
            let orig = *param_mut(&mut probe, tensor, i);
            let plus = (orig as f64 + step) as f32;
            let minus = (orig as f64 - step) as f32;
            *param_mut(&mut probe, tensor, i) = plus;
            let l_plus = infonce_loss(&probe, batch, direction)?;
            *param_mut(&mut probe, tensor, i) = minus;
            let l_minus = infonce_loss(&probe, batch, direction)?;
            *param_mut(&mut probe, tensor, i) = orig;
            let numeric = (l_plus - l_minus) / (plus as f64 - minus as f64);
            worst = worst.max(relative_error(analytic[idx], numeric));
            idx += 1;
        }
    }
    Ok(worst)
}

fn random_unit(rng: &mut ChaCha8Rng, vocab: usize, sentences: usize) -> Unit {
    (0..sentences)
        .map(|_| {
            let len = rng.random_range(1..=5);
            (0..len).map(|_| rng.random_range(0..vocab) as TokenId).collect()
        })
        .collect()
}

/// Runs `cfg.trials` independent checks on random models and batches. Odd
/// trials use multi-sentence (document) anchors; even trials use single
/// sentences.
pub fn gradient_check(cfg: &GradCheckConfig) -> Result<GradCheckReport> {
    let (trials, tolerance) = (cfg.trials, cfg.tolerance);
    if trials == 0 {
        return Err(Error::InvalidArgument("gradient check needs at least one trial".into()));
    }
    if cfg.max_vocab < 2 || cfg.max_embed_dim == 0 || cfg.max_out_dim < 2 || cfg.max_batch < 2 {
        return Err(Error::InvalidArgument(
            "gradient check bounds need vocab >= 2, embed_dim >= 1, out_dim >= 2, batch >= 2".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut results = Vec::with_capacity(trials);
    for trial in 0..trials {
        let vocab_size = rng.random_range(2..=cfg.max_vocab);
        let embed_dim = rng.random_range(1..=cfg.max_embed_dim);
        // a one-dimensional normalized output is a sign function with zero
        // gradient almost everywhere, so start at two
        let out_dim = rng.random_range(2..=cfg.max_out_dim);
        let batch_size = rng.random_range(2..=cfg.max_batch);
        let model = EncoderModel::new(EncoderConfig {
            vocab_size,
            embed_dim,
            out_dim,
            normalize: rng.random_bool(0.75),
            temperature: rng.random_range(0.05..1.0),
            init_scale: rng.random_range(0.3..1.0),
            seed: rng.random(),
        })?;
        let doc_anchors = trial % 2 == 1;
        let mut batch = Batch {
            doc_ids: Vec::with_capacity(batch_size),
            anchors: Vec::with_capacity(batch_size),
            positives: Vec::with_capacity(batch_size),
        };
        for b in 0..batch_size {
            let n = if doc_anchors { rng.random_range(1..=3) } else { 1 };
            batch.doc_ids.push(format!("g{b}"));
            batch.anchors.push(random_unit(&mut rng, vocab_size, n));
            batch.positives.push(random_unit(&mut rng, vocab_size, 1));
        }
        let direction = if rng.random_bool(0.5) {
            Direction::AnchorToPositive
        } else {
            Direction::Symmetric
        };
        let max_rel_error = check_batch(&model, &batch, direction, cfg.step)?;
        results.push(TrialResult {
            trial,
            vocab_size,
            embed_dim,
            out_dim,
            batch_size,
            params_checked: model.param_count(),
            max_rel_error,
            passed: max_rel_error < tolerance,
        });
    }
    let max_rel_error = results.iter().map(|r| r.max_rel_error).fold(0.0, f64::max);
    let failures = results.iter().filter(|r| !r.passed).count();
    Ok(GradCheckReport {
        tolerance,
        max_rel_error,
        failures,
        passed: failures == 0,
        trials: results,
    })
}
