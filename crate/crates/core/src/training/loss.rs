//! In-batch InfoNCE with hand-derived gradients.
//!
//! For a batch of B anchors `a_b` and positives `p_c` the logits are
//! `S[b][c] = <a_b, p_c> / tau` and the loss is
//! `mean_b ( logsumexp_c S[b][c] - S[b][b] )`.
//! With `dL/dS[b][c] = (softmax_c S[b] - [b == c]) / B`, gradients flow back
//! through the optional normalization of pooled document embeddings, the
//! per-sentence normalization, the affine projection and the mean pooling
//! into the token table.

use serde::{Deserialize, Serialize};

use super::batch::{Batch, Unit};
use crate::corpus::TokenId;
use crate::encoder::{dot, EmbeddingVector, EncoderModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Each anchor scored against every positive in the batch.
    #[default]
    AnchorToPositive,
    /// Average of the anchor-to-positive and positive-to-anchor losses.
    Symmetric,
}

/// Gradient buffers laid out like the model's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub token_table: Vec<f64>,
    pub projection: Vec<f64>,
    pub proj_bias: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(model: &EncoderModel) -> Self {
        Self {
            token_table: vec![0.0; model.token_table.len()],
            projection: vec![0.0; model.projection.len()],
            proj_bias: vec![0.0; model.proj_bias.len()],
        }
    }

    pub fn norm(&self) -> f64 {
        self.iter().map(|g| g * g).sum::<f64>().sqrt()
    }

    /// All entries in parameter order: token table, projection, bias.
    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.token_table
            .iter()
            .chain(&self.projection)
            .chain(&self.proj_bias)
            .copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub mean_loss: f64,
    pub batch_count: usize,
    pub grad_norm: f64,
}

struct SentenceForward<'a> {
    tokens: &'a [TokenId],
    pooled: Vec<f64>,
    /// Norm of the projected vector before normalization.
    z_norm: f64,
    out: Vec<f64>,
}

struct UnitForward<'a> {
    sentences: Vec<SentenceForward<'a>>,
    mean_norm: f64,
    out: Vec<f64>,
}

fn forward_sentence<'a>(model: &EncoderModel, tokens: &'a [TokenId]) -> Result<SentenceForward<'a>> {
    model.check_tokens(tokens)?;
    let pooled = model.pool(tokens);
    let mut out = model.project(&pooled);
    let z_norm = dot(&out, &out).sqrt();
    if model.config.normalize && z_norm > 0.0 {
        out.iter_mut().for_each(|x| *x /= z_norm);
    }
    Ok(SentenceForward {
        tokens,
        pooled,
        z_norm,
        out,
    })
}

fn forward_unit<'a>(model: &EncoderModel, unit: &'a Unit) -> Result<UnitForward<'a>> {
    let sentences = unit
        .iter()
        .map(|t| forward_sentence(model, t))
        .collect::<Result<Vec<_>>>()?;
    if sentences.is_empty() {
        return Err(Error::EmptySequence);
    }
    if sentences.len() == 1 {
        let out = sentences[0].out.clone();
        return Ok(UnitForward {
            sentences,
            mean_norm: 1.0,
            out,
        });
    }
    let mut out = vec![0.0; model.out_dim()];
    for s in &sentences {
        out.iter_mut().zip(&s.out).for_each(|(a, x)| *a += x);
    }
    let inv = 1.0 / sentences.len() as f64;
    out.iter_mut().for_each(|x| *x *= inv);
    let mean_norm = dot(&out, &out).sqrt();
    if model.config.normalize && mean_norm > 0.0 {
        out.iter_mut().for_each(|x| *x /= mean_norm);
    }
    Ok(UnitForward {
        sentences,
        mean_norm,
        out,
    })
}

/// Backward through `y = x / |x|`: `dx = (g - y <y, g>) / |x|`.
fn normalize_backward(normalize: bool, y: &[f64], x_norm: f64, g: &[f64]) -> Vec<f64> {
    if !normalize || x_norm <= 0.0 {
        return g.to_vec();
    }
    let yg = dot(y, g);
    y.iter().zip(g).map(|(yi, gi)| (gi - yi * yg) / x_norm).collect()
}

fn backward_sentence(model: &EncoderModel, fwd: &SentenceForward, g_out: &[f64], grads: &mut Gradients) {
    let k = model.out_dim();
    let d = model.config.embed_dim;
    let gz = normalize_backward(model.config.normalize, &fwd.out, fwd.z_norm, g_out);
    for (b, g) in grads.proj_bias.iter_mut().zip(&gz) {
        *b += g;
    }
    let mut gh = vec![0.0; d];
    for i in 0..d {
        let hi = fwd.pooled[i];
        let w_row = &model.projection[i * k..(i + 1) * k];
        let g_row = &mut grads.projection[i * k..(i + 1) * k];
        let mut acc = 0.0;
        for o in 0..k {
            g_row[o] += hi * gz[o];
            acc += w_row[o] as f64 * gz[o];
        }
        gh[i] = acc;
    }
    let inv = 1.0 / fwd.tokens.len() as f64;
    for &t in fwd.tokens {
        let row = &mut grads.token_table[t as usize * d..(t as usize + 1) * d];
        for (r, g) in row.iter_mut().zip(&gh) {
            *r += g * inv;
        }
    }
}

fn backward_unit(model: &EncoderModel, fwd: &UnitForward, g_out: &[f64], grads: &mut Gradients) {
    if fwd.sentences.len() == 1 {
        backward_sentence(model, &fwd.sentences[0], g_out, grads);
        return;
    }
    let mut g_mean = normalize_backward(model.config.normalize, &fwd.out, fwd.mean_norm, g_out);
    let inv = 1.0 / fwd.sentences.len() as f64;
    g_mean.iter_mut().for_each(|x| *x *= inv);
    for s in &fwd.sentences {
        backward_sentence(model, s, &g_mean, grads);
    }
}

fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Loss from a matrix of logits, plus `dL/dS` when requested.
fn loss_from_logits(logits: &[Vec<f64>], direction: Direction, want_grad: bool) -> (f64, Vec<Vec<f64>>) {
    let b = logits.len();
    let scale = match direction {
        Direction::AnchorToPositive => 1.0 / b as f64,
        Direction::Symmetric => 0.5 / b as f64,
    };
    let mut g = if want_grad { vec![vec![0.0; b]; b] } else { Vec::new() };
    let mut total = 0.0;
    for r in 0..b {
        let lse = log_sum_exp(logits[r].iter().copied());
        total += lse - logits[r][r];
        if want_grad {
            for c in 0..b {
                g[r][c] += scale * ((logits[r][c] - lse).exp() - (r == c) as u8 as f64);
            }
        }
    }
    if direction == Direction::Symmetric {
        for c in 0..b {
            let lse = log_sum_exp((0..b).map(|r| logits[r][c]));
            total += lse - logits[c][c];
            if want_grad {
                for r in 0..b {
                    g[r][c] += scale * ((logits[r][c] - lse).exp() - (r == c) as u8 as f64);
                }
            }
        }
    }
    (total * scale, g)
}

fn logits(anchors: &[&[f64]], positives: &[&[f64]], tau: f64) -> Vec<Vec<f64>> {
    anchors
        .iter()
        .map(|a| positives.iter().map(|p| dot(a, p) / tau).collect())
        .collect()
}

fn check_finite(loss: f64, batch: &Batch) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFiniteLoss {
            doc_ids: batch.doc_ids.clone(),
        })
    }
}

/// Batch loss and its analytic gradient with respect to every parameter.
pub fn infonce_loss_and_grads(
    model: &EncoderModel,
    batch: &Batch,
    direction: Direction,
) -> Result<(LossReport, Gradients)> {
    batch.validate()?;
    let tau = model.config.temperature;
    let anchors = batch
        .anchors
        .iter()
        .map(|u| forward_unit(model, u))
        .collect::<Result<Vec<_>>>()?;
    let positives = batch
        .positives
        .iter()
        .map(|u| forward_unit(model, u))
        .collect::<Result<Vec<_>>>()?;
    let a_out: Vec<&[f64]> = anchors.iter().map(|f| f.out.as_slice()).collect();
    let p_out: Vec<&[f64]> = positives.iter().map(|f| f.out.as_slice()).collect();
    let s = logits(&a_out, &p_out, tau);
    let (loss, g_logits) = loss_from_logits(&s, direction, true);
    check_finite(loss, batch)?;

    let b = batch.len();
    let k = model.out_dim();
    let mut grads = Gradients::zeros_like(model);
    for r in 0..b {
        let mut g = vec![0.0; k];
        for c in 0..b {
            let w = g_logits[r][c] / tau;
            g.iter_mut().zip(p_out[c]).for_each(|(gi, pi)| *gi += w * pi);
        }
        backward_unit(model, &anchors[r], &g, &mut grads);
    }
    for c in 0..b {
        let mut g = vec![0.0; k];
        for r in 0..b {
            let w = g_logits[r][c] / tau;
            g.iter_mut().zip(a_out[r]).for_each(|(gi, ai)| *gi += w * ai);
        }
        backward_unit(model, &positives[c], &g, &mut grads);
    }
    let report = LossReport {
        mean_loss: loss,
        batch_count: 1,
        grad_norm: grads.norm(),
    };
    Ok((report, grads))
}

/// Batch loss through the public encoding path only, without gradients.
pub fn infonce_loss(model: &EncoderModel, batch: &Batch, direction: Direction) -> Result<f64> {
    batch.validate()?;
    let encode = |units: &[Unit]| -> Result<Vec<EmbeddingVector>> {
        units
            .iter()
            .map(|u| {
                let seqs: Vec<&[TokenId]> = u.iter().map(Vec::as_slice).collect();
                model.encode_pooled(&seqs)
            })
            .collect()
    };
    let a = encode(&batch.anchors)?;
    let p = encode(&batch.positives)?;
    let a_out: Vec<&[f64]> = a.iter().map(|e| e.as_slice()).collect();
    let p_out: Vec<&[f64]> = p.iter().map(|e| e.as_slice()).collect();
    let (loss, _) = loss_from_logits(&logits(&a_out, &p_out, model.config.temperature), direction, false);
    check_finite(loss, batch)?;
    Ok(loss)
}
