use std::collections::{HashSet, VecDeque};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::TrainConfig;
use crate::corpus::{Corpus, TokenId};
use crate::error::{Error, Result};
use crate::idc::PositivePairSet;

/// A pooled input: one token sequence for a sentence, several for a document.
pub type Unit = Vec<Vec<TokenId>>;

/// Parallel anchors and positives, all from distinct documents. Every other
/// entry's positive serves as a negative for a given anchor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub doc_ids: Vec<String>,
    pub anchors: Vec<Unit>,
    pub positives: Vec<Unit>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let b = self.anchors.len();
        if b == 0 || self.positives.len() != b || self.doc_ids.len() != b {
            return Err(Error::InvalidArgument(format!(
                "batch lists must be non-empty and parallel (anchors {b}, positives {}, doc_ids {})",
                self.positives.len(),
                self.doc_ids.len()
            )));
        }
        let mut seen = HashSet::with_capacity(b);
        if let Some(dup) = self.doc_ids.iter().find(|d| !seen.insert(d.as_str())) {
            return Err(Error::InvalidArgument(format!(
                "document `{dup}` appears twice in one batch"
            )));
        }
        if self.anchors.iter().chain(&self.positives).any(|u| u.is_empty()) {
            return Err(Error::EmptySequence);
        }
        Ok(())
    }
}

/// One training example before batching.
#[derive(Debug, Clone)]
pub(crate) struct Example {
    pub doc_id: String,
    pub anchor: Unit,
    pub positive: Unit,
}

pub(crate) fn distinct_docs(examples: &[Example]) -> usize {
    examples.iter().map(|e| e.doc_id.as_str()).collect::<HashSet<_>>().len()
}

/// Shuffles by `seed`, then packs greedily: a pair whose document is already in
/// the open batch is deferred to the front of the next one. A trailing batch
/// with fewer than two entries is discarded.
pub(crate) fn pack(examples: Vec<Example>, batch_size: usize, seed: u64) -> Result<Vec<Batch>> {
    let docs = distinct_docs(&examples);
    if docs < 2 {
        return Err(Error::TooFewDocuments(docs));
    }
    let mut shuffled = examples;
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut queue: VecDeque<Example> = shuffled.into();
    let mut batches = Vec::new();
    loop {
        let mut used = HashSet::new();
        let mut taken = Vec::with_capacity(batch_size);
        let mut deferred = Vec::new();
        while taken.len() < batch_size {
            let Some(ex) = queue.pop_front() else { break };
            if used.contains(&ex.doc_id) {
                deferred.push(ex);
            } else {
                used.insert(ex.doc_id.clone());
                taken.push(ex);
            }
        }
        for ex in deferred.into_iter().rev() {
            queue.push_front(ex);
        }
        if taken.len() < 2 {
            break;
        }
        let mut batch = Batch {
            doc_ids: Vec::with_capacity(taken.len()),
            anchors: Vec::with_capacity(taken.len()),
            positives: Vec::with_capacity(taken.len()),
        };
        for ex in taken {
            batch.doc_ids.push(ex.doc_id);
            batch.anchors.push(ex.anchor);
            batch.positives.push(ex.positive);
        }
        batches.push(batch);
    }
    Ok(batches)
}

pub(crate) fn pair_examples(pairs: &PositivePairSet, corpus: &Corpus) -> Result<Vec<Example>> {
    pairs
        .iter()
        .map(|p| {
            let doc = corpus
                .doc(&p.doc_id)
                .ok_or_else(|| Error::UnknownDocId(p.doc_id.clone()))?;
            let sentence = |i: usize| {
                doc.sentences.get(i).map(|s| vec![s.tokens.clone()]).ok_or_else(|| {
                    Error::InvalidArgument(format!("document `{}` has no sentence {i}", p.doc_id))
                })
            };
            Ok(Example {
                doc_id: p.doc_id.clone(),
                anchor: sentence(p.sent_i)?,
                positive: sentence(p.sent_j)?,
            })
        })
        .collect()
}

/// Batches a positive-pair set: the lower-index sentence is the anchor, the
/// other the positive. No batch holds two pairs from the same document.
pub fn make_batches(
    pairs: &PositivePairSet,
    corpus: &Corpus,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<Vec<Batch>> {
    pack(pair_examples(pairs, corpus)?, cfg.batch_size, seed)
}
