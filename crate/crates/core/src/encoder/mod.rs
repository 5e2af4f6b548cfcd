//! The sentence encoder: token embedding table, mean pooling, one affine
//! projection and optional L2 normalization.
//!
//! Parameters are stored as `f32` (the checkpoint precision); all arithmetic
//! is carried out in `f64`.

mod checkpoint;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Document, TokenId};
use crate::error::{Error, Result};

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, MAGIC, VERSION};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub out_dim: usize,
    pub normalize: bool,
    pub temperature: f64,
    pub init_scale: f64,
    pub seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            vocab_size: 0,
            embed_dim: 64,
            out_dim: 32,
            normalize: true,
            temperature: 0.1,
            init_scale: 0.02,
            seed: 0,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, reason: &str| {
            Err(Error::Config {
                key: format!("encoder.{key}"),
                reason: reason.into(),
            })
        };
        if self.embed_dim == 0 {
            return bad("embed_dim", "must be at least 1");
        }
        if self.out_dim == 0 {
            return bad("out_dim", "must be at least 1");
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return bad("temperature", "must be a positive finite number");
        }
        if !(self.init_scale > 0.0 && self.init_scale.is_finite()) {
            return bad("init_scale", "must be a positive finite number");
        }
        Ok(())
    }
}

/// An encoder output. Unit norm when the producing model normalizes.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector(pub Vec<f64>);

impl EmbeddingVector {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderModel {
    pub config: EncoderConfig,
    /// `vocab_size x embed_dim`, row-major.
    pub token_table: Vec<f32>,
    /// `embed_dim x out_dim`, row-major: output `k` is `sum_i h[i] * projection[i * out_dim + k]`.
    pub projection: Vec<f32>,
    pub proj_bias: Vec<f32>,
}

impl EncoderModel {
    /// Builds a model with parameters drawn i.i.d. from
    /// `U(-init_scale, init_scale)`, seeded by `config.seed`.
    pub fn new(config: EncoderConfig) -> Result<Self> {
        config.validate()?;
        if config.vocab_size == 0 {
            return Err(Error::Config {
                key: "encoder.vocab_size".into(),
                reason: "must be at least 1".into(),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let s = config.init_scale;
        let mut draw = |n: usize| -> Vec<f32> {
            (0..n).map(|_| rng.random_range(-s..=s) as f32).collect()
        };
        let token_table = draw(config.vocab_size * config.embed_dim);
        let projection = draw(config.embed_dim * config.out_dim);
        let proj_bias = draw(config.out_dim);
        Ok(Self {
            config,
            token_table,
            projection,
            proj_bias,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.config.vocab_size
    }

    pub fn out_dim(&self) -> usize {
        self.config.out_dim
    }

    pub fn param_count(&self) -> usize {
        self.token_table.len() + self.projection.len() + self.proj_bias.len()
    }

    pub fn all_finite(&self) -> bool {
        self.token_table
            .iter()
            .chain(&self.projection)
            .chain(&self.proj_bias)
            .all(|x| x.is_finite())
    }

    pub(crate) fn check_tokens(&self, tokens: &[TokenId]) -> Result<()> {
        if tokens.is_empty() {
            return Err(Error::EmptySequence);
        }
        if let Some(&id) = tokens.iter().find(|&&id| id as usize >= self.config.vocab_size) {
            return Err(Error::TokenOutOfRange {
                id,
                vocab_size: self.config.vocab_size,
            });
        }
        Ok(())
    }

    /// Mean of the token rows. Tokens must already be validated.
    pub(crate) fn pool(&self, tokens: &[TokenId]) -> Vec<f64> {
        let d = self.config.embed_dim;
        let mut h = vec![0.0; d];
        for &t in tokens {
            let row = &self.token_table[t as usize * d..(t as usize + 1) * d];
            for (acc, &x) in h.iter_mut().zip(row) {
                *acc += x as f64;
            }
        }
        let inv = 1.0 / tokens.len() as f64;
        h.iter_mut().for_each(|x| *x *= inv);
        h
    }

    /// `projection^T h + bias`.
    pub(crate) fn project(&self, h: &[f64]) -> Vec<f64> {
        let k = self.config.out_dim;
        let mut z: Vec<f64> = self.proj_bias.iter().map(|&b| b as f64).collect();
        for (i, &hi) in h.iter().enumerate() {
            let row = &self.projection[i * k..(i + 1) * k];
            for (acc, &w) in z.iter_mut().zip(row) {
                *acc += hi * w as f64;
            }
        }
        z
    }

    fn finish(&self, mut v: Vec<f64>) -> EmbeddingVector {
        if self.config.normalize {
            let n = norm(&v);
            if n > 0.0 {
                v.iter_mut().for_each(|x| *x /= n);
            }
        }
        EmbeddingVector(v)
    }

    pub fn encode_sentence(&self, tokens: &[TokenId]) -> Result<EmbeddingVector> {
        self.check_tokens(tokens)?;
        let h = self.pool(tokens);
        Ok(self.finish(self.project(&h)))
    }

    /// Average of sentence embeddings, re-normalized when configured. A single
    /// sentence is returned as encoded.
    pub fn encode_pooled(&self, sentences: &[&[TokenId]]) -> Result<EmbeddingVector> {
        match sentences {
            [] => Err(Error::EmptySequence),
            [only] => self.encode_sentence(only),
            _ => {
                let mut acc = vec![0.0; self.config.out_dim];
                for s in sentences {
                    let e = self.encode_sentence(s)?;
                    acc.iter_mut().zip(&e.0).for_each(|(a, x)| *a += x);
                }
                let inv = 1.0 / sentences.len() as f64;
                acc.iter_mut().for_each(|x| *x *= inv);
                Ok(self.finish(acc))
            }
        }
    }

    pub fn encode_document(&self, doc: &Document) -> Result<EmbeddingVector> {
        self.encode_pooled(&doc.token_seqs())
    }

    /// Inner product of two embeddings. Temperature is not applied here.
    pub fn similarity(&self, a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
        for v in [a, b] {
            if v.dim() != self.config.out_dim {
                return Err(Error::DimensionMismatch {
                    what: "embedding",
                    expected: self.config.out_dim,
                    actual: v.dim(),
                });
            }
        }
        Ok(dot(&a.0, &b.0))
    }
}
