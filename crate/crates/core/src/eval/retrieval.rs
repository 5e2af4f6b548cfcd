use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Document, LabeledPair};
use crate::encoder::{dot, EmbeddingVector, EncoderModel};
use crate::error::{Error, Result};

/// Candidate items keyed by their text; item id is the row index.
#[derive(Debug, Clone)]
pub struct RetrievalIndex {
    pub item_texts: Vec<String>,
    pub embeddings: Vec<EmbeddingVector>,
    by_text: HashMap<String, usize>,
}

impl RetrievalIndex {
    pub fn len(&self) -> usize {
        self.item_texts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.item_texts.is_empty()
    }

    pub fn id_of(&self, item_text: &str) -> Option<usize> {
        self.by_text.get(item_text).copied()
    }

    /// Index over precomputed rows. Used to evaluate rankings independently of
    /// any model.
    pub fn from_rows(item_texts: Vec<String>, embeddings: Vec<EmbeddingVector>) -> Result<Self> {
        if item_texts.len() != embeddings.len() {
            return Err(Error::DimensionMismatch {
                what: "index rows",
                expected: item_texts.len(),
                actual: embeddings.len(),
            });
        }
        let mut by_text = HashMap::with_capacity(item_texts.len());
        for (i, t) in item_texts.iter().enumerate() {
            if by_text.insert(t.clone(), i).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate item `{t}`")));
            }
        }
        Ok(Self {
            item_texts,
            embeddings,
            by_text,
        })
    }
}

/// Encodes the distinct items of `items`, in order of first appearance.
/// Items that tokenized to nothing are skipped.
pub fn build_index(model: &EncoderModel, items: &[LabeledPair]) -> Result<RetrievalIndex> {
    let mut texts = Vec::new();
    let mut embeddings = Vec::new();
    let mut by_text = HashMap::new();
    let mut dropped = 0;
    for item in items {
        if by_text.contains_key(&item.item_text) {
            continue;
        }
        if item.item_tokens.is_empty() {
            dropped += 1;
            continue;
        }
        by_text.insert(item.item_text.clone(), texts.len());
        texts.push(item.item_text.clone());
        embeddings.push(model.encode_sentence(&item.item_tokens)?);
    }
    if dropped > 0 {
        log::warn!("dropped {dropped} item(s) with no tokens from the index");
    }
    if texts.is_empty() {
        return Err(Error::InvalidArgument("retrieval index has no usable items".into()));
    }
    Ok(RetrievalIndex {
        item_texts: texts,
        embeddings,
        by_text,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(rename = "recall")]
    pub recall_at: BTreeMap<usize, f64>,
    pub queries: usize,
}

impl EvalReport {
    pub fn recall(&self, k: usize) -> Option<f64> {
        self.recall_at.get(&k).copied()
    }
}

/// 0-based rank of `truth`: items scoring higher, or equal with a smaller id,
/// come first.
fn rank_of(query: &EmbeddingVector, index: &RetrievalIndex, truth: usize) -> usize {
    let scores: Vec<f64> = index.embeddings.iter().map(|e| dot(&query.0, &e.0)).collect();
    let s = scores[truth];
    scores
        .iter()
        .enumerate()
        .filter(|&(i, &x)| x > s || (x == s && i < truth))
        .count()
}

/// Fraction of queries whose ground-truth item ranks within the top K, for
/// every K in `ks`.
pub fn recall_at_k(
    model: &EncoderModel,
    queries: &[(&Document, usize)],
    index: &RetrievalIndex,
    ks: &[usize],
) -> Result<EvalReport> {
    if queries.is_empty() {
        return Err(Error::InvalidArgument("no queries to evaluate".into()));
    }
    if let Some(&(doc, truth)) = queries.iter().find(|(_, t)| *t >= index.len()) {
        return Err(Error::InvalidArgument(format!(
            "ground-truth item {truth} for `{}` is not in the index ({} items)",
            doc.doc_id,
            index.len()
        )));
    }
    let ranks: Vec<usize> = queries
        .par_iter()
        .map(|&(doc, truth)| Ok(rank_of(&model.encode_document(doc)?, index, truth)))
        .collect::<Result<_>>()?;
    let n = ranks.len() as f64;
    let recall_at = ks
        .iter()
        .map(|&k| (k, ranks.iter().filter(|&&r| r < k).count() as f64 / n))
        .collect();
    Ok(EvalReport {
        recall_at,
        queries: ranks.len(),
    })
}

/// Queries for every labeled pair whose document exists and is non-empty.
pub fn queries_for<'a>(
    corpus: &'a Corpus,
    pairs: &[LabeledPair],
    index: &RetrievalIndex,
) -> Result<Vec<(&'a Document, usize)>> {
    let mut out = Vec::with_capacity(pairs.len());
    for p in pairs {
        let doc = corpus
            .doc(&p.doc_id)
            .ok_or_else(|| Error::UnknownDocId(p.doc_id.clone()))?;
        if doc.is_empty() {
            continue;
        }
        let Some(truth) = index.id_of(&p.item_text) else {
            continue;
        };
        out.push((doc, truth));
    }
    Ok(out)
}

/// Builds the index from `pairs` and evaluates every labeled document.
pub fn evaluate_split(
    model: &EncoderModel,
    corpus: &Corpus,
    pairs: &[LabeledPair],
    ks: &[usize],
) -> Result<EvalReport> {
    let index = build_index(model, pairs)?;
    let queries = queries_for(corpus, pairs, &index)?;
    recall_at_k(model, &queries, &index, ks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{SplitTag, Vocab};
    use crate::encoder::EncoderConfig;

    fn vocab(n: usize) -> Vocab {
        let mut v = Vocab::new();
        for i in 0..n {
            v.intern(&format!("w{i}"));
        }
        v
    }

    fn model(vocab_size: usize, seed: u64) -> EncoderModel {
        EncoderModel::new(EncoderConfig {
            vocab_size,
            embed_dim: 16,
            out_dim: 8,
            seed,
            ..Default::default()
        })
        .unwrap()
    }

    fn doc(id: &str, tokens: Vec<u32>) -> Document {
        Document::from_sentences(id, [(String::new(), tokens, None)]).0
    }

    #[test]
    fn dedups_by_text() {
        let v = vocab(5);
        let items = [
            LabeledPair::new("a", "w1 w2", &v),
            LabeledPair::new("b", "w3", &v),
            LabeledPair::new("c", "w1 w2", &v),
        ];
        let idx = build_index(&model(v.len(), 0), &items).unwrap();
        assert_eq!(idx.len(), 2);
        assert_eq!(idx.id_of("w3"), Some(1));
    }

    #[test]
    fn empty_items_error() {
        let v = vocab(2);
        assert!(build_index(&model(v.len(), 0), &[]).is_err());
        let blank = [LabeledPair::new("a", "!!", &v)];
        assert!(build_index(&model(v.len(), 0), &blank).is_err());
    }

    #[test]
    fn rows_match_direct_encoding() {
        let v = vocab(9);
        let m = model(v.len(), 2);
        let items = [LabeledPair::new("a", "w1 w5", &v), LabeledPair::new("b", "w8 w8 w0", &v)];
        let idx = build_index(&m, &items).unwrap();
        for (row, item) in idx.embeddings.iter().zip(&items) {
            assert_eq!(row, &m.encode_sentence(&item.item_tokens).unwrap());
        }
    }

    #[test]
    fn identical_truth_and_orthogonal_rest() {
        // normalize=false, identity-like geometry via hand-built rows
        let m = model(5, 0);
        let q = doc("q", vec![1, 2]);
        let qe = m.encode_document(&q).unwrap();
        let mut rows = vec![qe.clone()];
        let mut texts = vec!["truth".to_string()];
        for i in 0..9 {
            // orthogonal to qe: project a random vector off qe
            let mut v: Vec<f64> = (0..8).map(|j| ((i * 8 + j) as f64).sin()).collect();
            let c = dot(&v, &qe.0) / dot(&qe.0, &qe.0);
            v.iter_mut().zip(&qe.0).for_each(|(x, y)| *x -= c * y);
            rows.push(EmbeddingVector(v));
            texts.push(format!("other{i}"));
        }
        let idx = RetrievalIndex::from_rows(texts, rows).unwrap();
        let r = recall_at_k(&m, &[(&q, 0)], &idx, &[1, 5]).unwrap();
        assert_eq!(r.recall(5), Some(1.0));
        assert_eq!(r.recall(1), Some(1.0));
    }

    #[test]
    fn index_of_exactly_k_items_is_perfect() {
        let v = vocab(30);
        let m = model(v.len(), 1);
        let items: Vec<_> = (0..5).map(|i| LabeledPair::new(format!("d{i}"), format!("w{i} w{}", i + 10), &v)).collect();
        let docs: Vec<_> = (0..5).map(|i| doc(&format!("d{i}"), vec![20 + i as u32])).collect();
        let c = Corpus::new(docs, v, SplitTag::Test).unwrap();
        let r = evaluate_split(&m, &c, &items, &[5]).unwrap();
        assert_eq!(r.recall(5), Some(1.0));
        assert_eq!(r.queries, 5);
    }

    #[test]
    fn ties_rank_by_item_id() {
        let m = model(3, 0);
        let q = doc("q", vec![1]);
        let zero = EmbeddingVector(vec![0.0; 8]);
        let idx = RetrievalIndex::from_rows(
            (0..4).map(|i| i.to_string()).collect(),
            vec![zero.clone(), zero.clone(), zero.clone(), zero],
        )
        .unwrap();
        let r = recall_at_k(&m, &[(&q, 0), (&q, 2)], &idx, &[1, 2, 3]).unwrap();
        assert_eq!(r.recall(1), Some(0.5));
        assert_eq!(r.recall(2), Some(0.5));
        assert_eq!(r.recall(3), Some(1.0));
    }

    #[test]
    fn missing_truth_is_an_error() {
        let m = model(3, 0);
        let q = doc("q", vec![1]);
        let idx = RetrievalIndex::from_rows(vec!["a".into()], vec![EmbeddingVector(vec![0.0; 8])]).unwrap();
        assert!(recall_at_k(&m, &[(&q, 1)], &idx, &[5]).is_err());
    }

    #[test]
    fn report_json_shape() {
        let r = EvalReport {
            recall_at: [(5, 0.5), (10, 0.75), (20, 1.0)].into_iter().collect(),
            queries: 4,
        };
        assert_eq!(
            serde_json::to_string(&r).unwrap(),
            r#"{"recall":{"5":0.5,"10":0.75,"20":1.0},"queries":4}"#
        );
    }
}
